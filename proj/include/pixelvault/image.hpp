#ifndef PIXELVAULT_IMAGE_HPP
#define PIXELVAULT_IMAGE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace pixelvault {

// Planar image with values nominally in [0,1].
// Layout: channel-major, then rows, then columns:
//   data[(c * height + y) * width + x]
struct Image {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int64_t c, int64_t h, int64_t w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c * h * w), fill) {}

  int64_t size() const { return channels * height * width; }

  double& at(int64_t c, int64_t y, int64_t x) {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
  double at(int64_t c, int64_t y, int64_t x) const {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }

  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height &&
           width == other.width;
  }

  void clamp01();
};

// 8-bit PNG export: value = round(pixel * 255). 1 channel -> grayscale,
// 3 channels -> RGB. Throws std::runtime_error on I/O failure.
void write_png(const Image& img, const std::string& path);

// CRC32 (zlib) over the 8-bit quantized row-major pixel bytes, as 8 lowercase
// hex chars. Quantizing first keeps the checksum stable across float jitter.
std::string pixel_crc32(const Image& img);

// Wire format of the deployment server: nested [channel][row][col] floats.
nlohmann::json to_wire(const Image& img);
Image from_wire(const nlohmann::json& j);

// Archive of (k, i)-keyed images: memorization targets, reconstructions.
struct KeyedImage {
  int64_t k = 0;
  int64_t i = 0;
  Image image;
};

// Binary archive, little-endian: magic "PVIMG001", u64 count, then per record
// i64 k, i64 i, i64 channels, i64 height, i64 width, f64 data.
void write_image_archive(const std::vector<KeyedImage>& images,
                         const std::string& path);
std::vector<KeyedImage> read_image_archive(const std::string& path);

}  // namespace pixelvault

#endif  // PIXELVAULT_IMAGE_HPP
