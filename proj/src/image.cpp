#include "pixelvault/image.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pixelvault {

void Image::clamp01() {
  for (double& v : data) v = std::clamp(v, 0.0, 1.0);
}

namespace {

uint8_t quantize(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Interleaved 8-bit rows as libpng wants them (and as the checksum hashes).
std::vector<uint8_t> quantized_interleaved(const Image& img) {
  std::vector<uint8_t> out(
      static_cast<size_t>(img.height * img.width * img.channels));
  size_t p = 0;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < img.channels; ++c)
        out[p++] = quantize(img.at(c, y, x));
  return out;
}

}  // namespace

void write_png(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: channels must be 1 or 3");
  if (img.height <= 0 || img.width <= 0)
    throw std::invalid_argument("write_png: empty image");

  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("write_png: libpng error writing " + path);
  }

  png_init_io(png, fp);
  const int color_type =
      img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> bytes = quantized_interleaved(img);
  const size_t stride = static_cast<size_t>(img.width * img.channels);
  for (int64_t y = 0; y < img.height; ++y)
    png_write_row(png, bytes.data() + static_cast<size_t>(y) * stride);

  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::string pixel_crc32(const Image& img) {
  std::vector<uint8_t> bytes = quantized_interleaved(img);
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

nlohmann::json to_wire(const Image& img) {
  nlohmann::json channels = nlohmann::json::array();
  for (int64_t c = 0; c < img.channels; ++c) {
    nlohmann::json rows = nlohmann::json::array();
    for (int64_t y = 0; y < img.height; ++y) {
      nlohmann::json row = nlohmann::json::array();
      for (int64_t x = 0; x < img.width; ++x) row.push_back(img.at(c, y, x));
      rows.push_back(std::move(row));
    }
    channels.push_back(std::move(rows));
  }
  return channels;
}

Image from_wire(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty() ||
      !j[0][0].is_array())
    throw std::invalid_argument(
        "input must be a [channel][row][col] array of floats");
  const int64_t c = static_cast<int64_t>(j.size());
  const int64_t h = static_cast<int64_t>(j[0].size());
  const int64_t w = static_cast<int64_t>(j[0][0].size());
  Image img(c, h, w);
  for (int64_t ci = 0; ci < c; ++ci) {
    if (!j[ci].is_array() || static_cast<int64_t>(j[ci].size()) != h)
      throw std::invalid_argument("ragged channel array");
    for (int64_t y = 0; y < h; ++y) {
      const auto& row = j[ci][y];
      if (!row.is_array() || static_cast<int64_t>(row.size()) != w)
        throw std::invalid_argument("ragged row array");
      for (int64_t x = 0; x < w; ++x) {
        if (!row[x].is_number())
          throw std::invalid_argument("non-numeric pixel value");
        img.at(ci, y, x) = row[x].get<double>();
      }
    }
  }
  return img;
}

namespace {

constexpr char kArchiveMagic[9] = "PVIMG001";

template <typename T>
void write_le(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_le(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  return value;
}

}  // namespace

void write_image_archive(const std::vector<KeyedImage>& images,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kArchiveMagic, 8);
  write_le<uint64_t>(out, images.size());
  for (const KeyedImage& rec : images) {
    write_le<int64_t>(out, rec.k);
    write_le<int64_t>(out, rec.i);
    write_le<int64_t>(out, rec.image.channels);
    write_le<int64_t>(out, rec.image.height);
    write_le<int64_t>(out, rec.image.width);
    out.write(reinterpret_cast<const char*>(rec.image.data.data()),
              static_cast<std::streamsize>(rec.image.data.size() *
                                           sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<KeyedImage> read_image_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kArchiveMagic, 8) != 0)
    throw std::runtime_error(path + " is not an image archive");
  const uint64_t count = read_le<uint64_t>(in);
  std::vector<KeyedImage> images;
  images.reserve(count);
  for (uint64_t r = 0; r < count; ++r) {
    KeyedImage rec;
    rec.k = read_le<int64_t>(in);
    rec.i = read_le<int64_t>(in);
    const int64_t c = read_le<int64_t>(in);
    const int64_t h = read_le<int64_t>(in);
    const int64_t w = read_le<int64_t>(in);
    if (!in || c <= 0 || h <= 0 || w <= 0)
      throw std::runtime_error("corrupt image archive: " + path);
    rec.image = Image(c, h, w);
    in.read(reinterpret_cast<char*>(rec.image.data.data()),
            static_cast<std::streamsize>(rec.image.data.size() *
                                         sizeof(double)));
    if (!in) throw std::runtime_error("truncated image archive: " + path);
    images.push_back(std::move(rec));
  }
  return images;
}

}  // namespace pixelvault
