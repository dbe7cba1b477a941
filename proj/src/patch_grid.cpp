#include "pixelvault/patch_grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace pixelvault {

PatchGridSpec PatchGridSpec::from_space(const IndexSpace& space) {
  PatchGridSpec spec;
  spec.patch_side = space.patch_side;
  spec.grid_dim = space.grid_dim();
  spec.channels = space.num_channels;
  return spec;
}

namespace {

// src = (dst + 0.5) * scale - 0.5, clamped; standard align_corners=false
// bilinear sampling.
double sample_bilinear(const Image& img, int64_t c, double sy, double sx) {
  const int64_t y0 = static_cast<int64_t>(std::floor(sy));
  const int64_t x0 = static_cast<int64_t>(std::floor(sx));
  const double fy = sy - static_cast<double>(y0);
  const double fx = sx - static_cast<double>(x0);
  auto clampy = [&](int64_t y) {
    return std::clamp<int64_t>(y, 0, img.height - 1);
  };
  auto clampx = [&](int64_t x) {
    return std::clamp<int64_t>(x, 0, img.width - 1);
  };
  const double v00 = img.at(c, clampy(y0), clampx(x0));
  const double v01 = img.at(c, clampy(y0), clampx(x0 + 1));
  const double v10 = img.at(c, clampy(y0 + 1), clampx(x0));
  const double v11 = img.at(c, clampy(y0 + 1), clampx(x0 + 1));
  return v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx +
         v10 * fy * (1 - fx) + v11 * fy * fx;
}

}  // namespace

Image resize_bilinear(const Image& image, int64_t height, int64_t width) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("resize: target dims must be positive");
  if (image.height == height && image.width == width) return image;
  Image out(image.channels, height, width);
  const double scale_y = static_cast<double>(image.height) / height;
  const double scale_x = static_cast<double>(image.width) / width;
  for (int64_t c = 0; c < image.channels; ++c)
    for (int64_t y = 0; y < height; ++y)
      for (int64_t x = 0; x < width; ++x) {
        const double sy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
        const double sx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
        out.at(c, y, x) = sample_bilinear(image, c, sy, sx);
      }
  return out;
}

Image canonicalize(const Image& image, const PatchGridSpec& spec) {
  const int64_t side = spec.canonical_side();
  if (image.channels != spec.channels)
    throw std::invalid_argument("canonicalize: channel count mismatch");
  if (std::min(image.width, image.height) < spec.patch_side)
    throw std::invalid_argument("canonicalize: image smaller than one patch");
  return resize_bilinear(image, side, side);
}

std::vector<Patch> partition(const Image& canonical,
                             const PatchGridSpec& spec) {
  const int64_t side = spec.canonical_side();
  if (canonical.channels != spec.channels || canonical.height != side ||
      canonical.width != side)
    throw std::invalid_argument("partition: image is not canonical");

  const int64_t s = spec.patch_side;
  const int64_t g = spec.grid_dim;
  std::vector<Patch> patches;
  patches.reserve(static_cast<size_t>(spec.channels * spec.patch_count()));
  for (int64_t c = 0; c < spec.channels; ++c)
    for (int64_t l = 0; l < spec.patch_count(); ++l) {
      Patch patch;
      patch.index = IndexTuple{0, 0, l, c};
      patch.values.resize(static_cast<size_t>(s * s));
      const int64_t row0 = (l / g) * s;
      const int64_t col0 = (l % g) * s;
      for (int64_t dy = 0; dy < s; ++dy)
        for (int64_t dx = 0; dx < s; ++dx)
          patch.values[static_cast<size_t>(dy * s + dx)] =
              canonical.at(c, row0 + dy, col0 + dx);
      patches.push_back(std::move(patch));
    }
  return patches;
}

ReassembleResult reassemble(const std::vector<Patch>& patches,
                            const PatchGridSpec& spec) {
  const int64_t side = spec.canonical_side();
  const int64_t s = spec.patch_side;
  const int64_t g = spec.grid_dim;

  ReassembleResult result;
  result.image = Image(spec.channels, side, side, 0.5);

  std::set<std::pair<int64_t, int64_t>> seen;
  for (const Patch& patch : patches) {
    const int64_t l = patch.index.l;
    const int64_t c = patch.index.c;
    if (l < 0 || l >= spec.patch_count() || c < 0 || c >= spec.channels)
      throw std::invalid_argument("reassemble: patch (l,c) outside the grid");
    if (patch.values.size() != static_cast<size_t>(s * s))
      throw std::invalid_argument("reassemble: patch has wrong size");
    if (!seen.insert({l, c}).second)
      throw std::invalid_argument("reassemble: duplicate patch (l=" +
                                  std::to_string(l) +
                                  ",c=" + std::to_string(c) + ")");
    const int64_t row0 = (l / g) * s;
    const int64_t col0 = (l % g) * s;
    for (int64_t dy = 0; dy < s; ++dy)
      for (int64_t dx = 0; dx < s; ++dx)
        result.image.at(c, row0 + dy, col0 + dx) =
            patch.values[static_cast<size_t>(dy * s + dx)];
  }

  for (int64_t c = 0; c < spec.channels; ++c)
    for (int64_t l = 0; l < spec.patch_count(); ++l)
      if (!seen.count({l, c})) result.missing.push_back({l, c});
  return result;
}

}  // namespace pixelvault
