#include "pixelvault/index_codec.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace pixelvault {

std::string to_string(TriggerKind kind) {
  return kind == TriggerKind::kPattern ? "pattern" : "code";
}

TriggerKind trigger_kind_from_string(const std::string& s) {
  if (s == "pattern") return TriggerKind::kPattern;
  if (s == "code") return TriggerKind::kCode;
  throw std::invalid_argument("unknown trigger kind: " + s);
}

namespace {

int64_t isqrt_floor(int64_t n) {
  int64_t r = static_cast<int64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

}  // namespace

IndexSpace IndexSpace::uniform(int64_t num_classes, int64_t samples_per_class,
                               int64_t channels, int64_t width, int64_t height,
                               int64_t symbol_side) {
  IndexSpace space;
  space.num_classes = num_classes;
  space.samples_per_class.assign(static_cast<size_t>(num_classes),
                                 samples_per_class);
  space.patch_side = isqrt_floor(num_classes);
  space.num_channels = channels;
  space.image_width = width;
  space.image_height = height;
  space.symbol_side = symbol_side;
  const int64_t g = std::min(width, height) / std::max<int64_t>(1, space.patch_side);
  space.grid_count = g * g;
  space.validate();
  return space;
}

void IndexSpace::validate() const {
  if (num_classes <= 0) throw std::invalid_argument("num_classes must be > 0");
  if (samples_per_class.size() != static_cast<size_t>(num_classes))
    throw std::invalid_argument("samples_per_class must have one entry per class");
  for (int64_t n : samples_per_class)
    if (n <= 0) throw std::invalid_argument("samples_per_class entries must be > 0");
  if (num_channels != 1 && num_channels != 3)
    throw std::invalid_argument("num_channels must be 1 or 3");
  if (image_width <= 0 || image_height <= 0)
    throw std::invalid_argument("image dims must be > 0");
  if (symbol_side <= 0) throw std::invalid_argument("symbol_side must be > 0");
  if (patch_side <= 0) throw std::invalid_argument("patch_side must be > 0");
  if (patch_side > isqrt_floor(num_classes))
    throw std::invalid_argument(
        "patch_side exceeds floor(sqrt(num_classes)): patch will not fit in "
        "one output vector");
  const int64_t g = std::min(image_width, image_height) / patch_side;
  if (g < 1) throw std::invalid_argument("image smaller than one patch");
  if (grid_count != g * g)
    throw std::invalid_argument("grid_count must equal grid_dim^2 = " +
                                std::to_string(g * g));
}

int64_t IndexSpace::grid_dim() const {
  return std::min(image_width, image_height) / patch_side;
}

int64_t IndexSpace::canonical_side() const { return grid_dim() * patch_side; }

int64_t IndexSpace::total_patches() const {
  int64_t total = 0;
  for (int64_t n : samples_per_class) total += n * grid_count * num_channels;
  return total;
}

nlohmann::json IndexSpace::to_json() const {
  nlohmann::json j;
  j["num_classes"] = num_classes;
  const bool is_uniform =
      std::all_of(samples_per_class.begin(), samples_per_class.end(),
                  [&](int64_t n) { return n == samples_per_class.front(); });
  if (is_uniform && !samples_per_class.empty())
    j["samples_per_class"] = samples_per_class.front();
  else
    j["samples_per_class"] = samples_per_class;
  j["patch_side"] = patch_side;
  j["grid_count"] = grid_count;
  j["num_channels"] = num_channels;
  j["image_width"] = image_width;
  j["image_height"] = image_height;
  j["symbol_side"] = symbol_side;
  return j;
}

IndexSpace IndexSpace::from_json(const nlohmann::json& j) {
  IndexSpace space;
  space.num_classes = j.at("num_classes").get<int64_t>();
  const auto& spc = j.at("samples_per_class");
  if (spc.is_number())
    space.samples_per_class.assign(static_cast<size_t>(space.num_classes),
                                   spc.get<int64_t>());
  else
    space.samples_per_class = spc.get<std::vector<int64_t>>();
  space.patch_side = j.at("patch_side").get<int64_t>();
  space.grid_count = j.at("grid_count").get<int64_t>();
  space.num_channels = j.at("num_channels").get<int64_t>();
  space.image_width = j.at("image_width").get<int64_t>();
  space.image_height = j.at("image_height").get<int64_t>();
  space.symbol_side = j.value("symbol_side", int64_t{3});
  space.validate();
  return space;
}

void IndexSpace::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json().dump(2) << "\n";
}

IndexSpace IndexSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

bool IndexTuple::in_bounds(const IndexSpace& space) const {
  if (k < 0 || k >= space.num_classes) return false;
  if (i < 0 || i >= space.samples_per_class[static_cast<size_t>(k)])
    return false;
  if (l < 0 || l >= space.grid_count) return false;
  if (c < 0 || c >= space.num_channels) return false;
  return true;
}

std::vector<uint8_t> gray_code(uint64_t n) {
  const uint64_t g = n ^ (n >> 1);
  std::vector<uint8_t> bits;
  uint64_t rest = n;
  do {
    bits.push_back(static_cast<uint8_t>((g >> bits.size()) & 1));
    rest >>= 1;
  } while (rest != 0);
  return bits;
}

uint64_t gray_decode(const std::vector<uint8_t>& bits_lsb_first) {
  uint64_t g = 0;
  for (size_t b = 0; b < bits_lsb_first.size(); ++b)
    if (bits_lsb_first[b]) g |= (uint64_t{1} << b);
  uint64_t n = g;
  for (uint64_t shift = g >> 1; shift != 0; shift >>= 1) n ^= shift;
  return n;
}

int64_t flatten_index(int64_t i, int64_t l, int64_t c, int64_t L, int64_t C) {
  if (l < 0 || l >= L) throw std::invalid_argument("flatten: l out of range");
  if (c < 0 || c >= C) throw std::invalid_argument("flatten: c out of range");
  if (i < 0) throw std::invalid_argument("flatten: i must be >= 0");
  return l + c * L + i * L * C;
}

namespace {

// One-hot / Gray squares live on a slot grid of symbol_side cells, row-major
// from the top-left. With three channels the bottom image row is the channel
// marker, so the slot grid stops above it.
struct SlotGrid {
  int64_t side;  // symbol_side
  int64_t cols;
  int64_t rows;

  int64_t capacity() const { return cols * rows; }
  int64_t row0(int64_t slot) const { return (slot / cols) * side; }
  int64_t col0(int64_t slot) const { return (slot % cols) * side; }
};

SlotGrid slot_grid(const IndexSpace& space) {
  const int64_t usable_h =
      space.num_channels == 3 ? space.image_height - 1 : space.image_height;
  return SlotGrid{space.symbol_side, space.image_width / space.symbol_side,
                  usable_h / space.symbol_side};
}

struct PatchBlock {
  int64_t row0, col0, side;
};

PatchBlock patch_block(const IndexSpace& space, int64_t l) {
  const int64_t g = space.grid_dim();
  return PatchBlock{(l / g) * space.patch_side, (l % g) * space.patch_side,
                    space.patch_side};
}

void paint_slot(Image& img, int64_t channel, const SlotGrid& grid,
                int64_t slot, double value) {
  for (int64_t dy = 0; dy < grid.side; ++dy)
    for (int64_t dx = 0; dx < grid.side; ++dx)
      img.at(channel, grid.row0(slot) + dy, grid.col0(slot) + dx) += value;
}

void paint_block(Image& img, int64_t channel, const PatchBlock& block,
                 double value) {
  for (int64_t dy = 0; dy < block.side; ++dy)
    for (int64_t dx = 0; dx < block.side; ++dx)
      img.at(channel, block.row0 + dy, block.col0 + dx) += value;
}

// C=1 sub-trigger brightness weights: sums are exact multiples of 1/7 in
// [0,1], so encode never clamps and decode separates the three masks exactly.
constexpr double kMonoClassWeight = 4.0 / 7.0;
constexpr double kMonoSampleWeight = 2.0 / 7.0;
constexpr double kMonoMaskWeight = 1.0 / 7.0;

}  // namespace

TriggerImage build_pattern_trigger(const IndexTuple& tuple,
                                   const IndexSpace& space) {
  space.validate();
  if (tuple.k < 0 || tuple.i < 0 || tuple.l < 0 || tuple.c < 0)
    throw std::invalid_argument("pattern trigger: index components must be >= 0");
  if (tuple.c >= space.num_channels)
    throw CodecError("pattern trigger: channel " + std::to_string(tuple.c) +
                     " does not exist in a " +
                     std::to_string(space.num_channels) + "-channel image");

  const SlotGrid grid = slot_grid(space);
  if (tuple.k >= grid.capacity())
    throw CodecError("pattern trigger: one-hot position " +
                     std::to_string(tuple.k) + " exceeds the image area (" +
                     std::to_string(grid.capacity()) + " slots)");
  const std::vector<uint8_t> bits = gray_code(static_cast<uint64_t>(tuple.i));
  if (static_cast<int64_t>(bits.size()) > grid.capacity())
    throw CodecError("pattern trigger: highest Gray bit of sample index " +
                     std::to_string(tuple.i) + " exceeds the image area");
  const int64_t g = space.grid_dim();
  if (tuple.l >= g * g)
    throw CodecError("pattern trigger: patch location " +
                     std::to_string(tuple.l) + " outside the physical " +
                     std::to_string(g) + "x" + std::to_string(g) + " grid");
  if (space.num_channels == 3 && g == 1)
    throw CodecError(
        "pattern trigger: single-patch grids are ambiguous with a channel "
        "marker (mask would cover the bottom row)");

  TriggerImage trigger;
  trigger.kind = TriggerKind::kPattern;
  trigger.source = tuple;
  trigger.pixels =
      Image(space.num_channels, space.image_height, space.image_width);
  Image& img = trigger.pixels;

  if (space.num_channels == 3) {
    for (size_t b = 0; b < bits.size(); ++b)
      if (bits[b]) paint_slot(img, 0, grid, static_cast<int64_t>(b), 1.0);
    paint_slot(img, 1, grid, tuple.k, 1.0);
    paint_block(img, 2, patch_block(space, tuple.l), 1.0);
    const double marker = 1.0 / static_cast<double>(tuple.c + 1);
    for (int64_t x = 0; x < space.image_width; ++x)
      img.at(tuple.c, space.image_height - 1, x) += marker;
    img.clamp01();
  } else {
    for (size_t b = 0; b < bits.size(); ++b)
      if (bits[b])
        paint_slot(img, 0, grid, static_cast<int64_t>(b), kMonoSampleWeight);
    paint_slot(img, 0, grid, tuple.k, kMonoClassWeight);
    paint_block(img, 0, patch_block(space, tuple.l), kMonoMaskWeight);
  }
  return trigger;
}

namespace {

// Lit-slot extraction with an exactness requirement: the mask must be the
// union of complete slots, otherwise the trigger is malformed.
std::vector<int64_t> lit_slots(int64_t height, int64_t width,
                               const SlotGrid& grid,
                               const std::vector<bool>& mask) {
  std::vector<int64_t> lit;
  auto idx = [&](int64_t y, int64_t x) {
    return static_cast<size_t>(y * width + x);
  };
  for (int64_t slot = 0; slot < grid.capacity(); ++slot) {
    int64_t on = 0;
    for (int64_t dy = 0; dy < grid.side; ++dy)
      for (int64_t dx = 0; dx < grid.side; ++dx)
        on += mask[idx(grid.row0(slot) + dy, grid.col0(slot) + dx)] ? 1 : 0;
    if (on == grid.side * grid.side)
      lit.push_back(slot);
    else if (on != 0)
      throw CodecError("malformed trigger: partially lit symbol square");
  }
  const int64_t covered =
      static_cast<int64_t>(lit.size()) * grid.side * grid.side;
  int64_t total = 0;
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x) total += mask[idx(y, x)] ? 1 : 0;
  if (total != covered)
    throw CodecError("malformed trigger: lit pixels outside the symbol grid");
  return lit;
}

int64_t decode_patch_mask(int64_t height, int64_t width,
                          const IndexSpace& space,
                          const std::vector<bool>& mask) {
  auto idx = [&](int64_t y, int64_t x) {
    return static_cast<size_t>(y * width + x);
  };
  int64_t ymin = height, ymax = -1, xmin = width, xmax = -1, count = 0;
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x)
      if (mask[idx(y, x)]) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ++count;
      }
  const int64_t s = space.patch_side;
  if (count == 0) throw CodecError("malformed trigger: no patch mask");
  if (ymax - ymin + 1 != s || xmax - xmin + 1 != s || count != s * s ||
      ymin % s != 0 || xmin % s != 0)
    throw CodecError("malformed trigger: patch mask is not one grid-aligned " +
                     std::to_string(s) + "x" + std::to_string(s) + " block");
  const int64_t grid = space.grid_dim();
  const int64_t row = ymin / s, col = xmin / s;
  if (row >= grid || col >= grid)
    throw CodecError("malformed trigger: patch mask outside the grid");
  return row * grid + col;
}

int64_t decode_sample_bits(const std::vector<int64_t>& slots) {
  if (slots.empty()) return 0;
  std::vector<uint8_t> bits(static_cast<size_t>(slots.back()) + 1, 0);
  for (int64_t slot : slots) bits[static_cast<size_t>(slot)] = 1;
  return static_cast<int64_t>(gray_decode(bits));
}

}  // namespace

IndexTuple decode_pattern_trigger(const Image& trigger,
                                  const IndexSpace& space) {
  space.validate();
  if (trigger.channels != space.num_channels ||
      trigger.height != space.image_height ||
      trigger.width != space.image_width)
    throw std::invalid_argument("trigger shape does not match the index space");

  const SlotGrid grid = slot_grid(space);
  IndexTuple tuple;

  if (space.num_channels == 3) {
    // Channel marker: the only sub-trigger that lights an entire bottom row.
    int64_t marker = -1;
    for (int64_t c = 0; c < 3; ++c) {
      double row_min = 1.0;
      for (int64_t x = 0; x < space.image_width; ++x)
        row_min = std::min(row_min,
                           trigger.at(c, space.image_height - 1, x));
      if (row_min > 0.05) {
        if (marker >= 0)
          throw CodecError("malformed trigger: two channel markers");
        marker = c;
      }
    }
    if (marker < 0)
      throw CodecError("malformed trigger: no channel marker row");
    tuple.c = marker;

    // Binarize one channel. On the marker channel the bottom row needs care:
    // the symbol channels (0, 1) never place content there (the slot grid is
    // reserved away from it), so it is cleared outright; on the mask channel
    // (2) a bottom patch overlaps the 1/3-bright marker and clamps to 1, so
    // thresholding at 0.9 separates mask pixels from marker-only pixels
    // exactly.
    auto binarize = [&](int64_t channel) {
      std::vector<bool> mask(
          static_cast<size_t>(trigger.height * trigger.width), false);
      for (int64_t y = 0; y < trigger.height; ++y)
        for (int64_t x = 0; x < trigger.width; ++x)
          mask[static_cast<size_t>(y * trigger.width + x)] =
              trigger.at(channel, y, x) >= 0.5;
      if (channel == marker) {
        const int64_t y = trigger.height - 1;
        for (int64_t x = 0; x < trigger.width; ++x)
          mask[static_cast<size_t>(y * trigger.width + x)] =
              channel == 2 && trigger.at(channel, y, x) >= 0.9;
      }
      return mask;
    };

    const std::vector<bool> sample_mask = binarize(0);
    const std::vector<bool> class_mask = binarize(1);
    const std::vector<bool> patch_mask = binarize(2);

    const std::vector<int64_t> class_slots =
        lit_slots(trigger.height, trigger.width, grid, class_mask);
    if (class_slots.size() != 1)
      throw CodecError("malformed trigger: expected exactly one class square");
    tuple.k = class_slots.front();
    tuple.i = decode_sample_bits(
        lit_slots(trigger.height, trigger.width, grid, sample_mask));
    tuple.l =
        decode_patch_mask(trigger.height, trigger.width, space, patch_mask);
  } else {
    // Brightness-multiplexed single channel: every pixel is an exact
    // multiple of 1/7 encoding (class, sample, mask) membership bits.
    std::vector<bool> class_mask(
        static_cast<size_t>(trigger.height * trigger.width), false);
    std::vector<bool> sample_mask = class_mask;
    std::vector<bool> patch_mask = class_mask;
    for (int64_t y = 0; y < trigger.height; ++y)
      for (int64_t x = 0; x < trigger.width; ++x) {
        const double v = trigger.at(0, y, x);
        const long level = std::lround(v * 7.0);
        if (level < 0 || level > 7 || std::abs(v * 7.0 - level) > 0.2)
          throw CodecError("malformed trigger: pixel is not a valid "
                           "brightness level");
        const size_t p = static_cast<size_t>(y * trigger.width + x);
        class_mask[p] = (level & 4) != 0;
        sample_mask[p] = (level & 2) != 0;
        patch_mask[p] = (level & 1) != 0;
      }
    const std::vector<int64_t> class_slots =
        lit_slots(trigger.height, trigger.width, grid, class_mask);
    if (class_slots.size() != 1)
      throw CodecError("malformed trigger: expected exactly one class square");
    tuple.k = class_slots.front();
    tuple.i = decode_sample_bits(
        lit_slots(trigger.height, trigger.width, grid, sample_mask));
    tuple.l =
        decode_patch_mask(trigger.height, trigger.width, space, patch_mask);
    tuple.c = 0;
  }
  return tuple;
}

int64_t default_code_length(const IndexSpace& space) {
  const int64_t max_n =
      *std::max_element(space.samples_per_class.begin(),
                        space.samples_per_class.end());
  const int64_t max_flatten =
      max_n * space.grid_count * space.num_channels - 1;
  const int64_t gray_len =
      static_cast<int64_t>(gray_code(static_cast<uint64_t>(max_flatten)).size());
  return std::max(space.num_classes, gray_len);
}

TriggerImage build_code_trigger(const IndexTuple& tuple, const Image& base,
                                const IndexSpace& space, int64_t code_length) {
  space.validate();
  if (base.channels != space.num_channels ||
      base.height != space.image_height || base.width != space.image_width)
    throw std::invalid_argument("code trigger: base image shape mismatch");
  if (code_length > space.image_width * space.image_height)
    throw CodecError("code trigger: code length " +
                     std::to_string(code_length) + " exceeds the image area");
  if (tuple.k < 0 || tuple.k >= code_length)
    throw CodecError("code trigger: one-hot position " +
                     std::to_string(tuple.k) + " does not fit in " +
                     std::to_string(code_length) + " code pixels");
  const int64_t flat = flatten_index(tuple.i, tuple.l, tuple.c,
                                     space.grid_count, space.num_channels);
  const std::vector<uint8_t> bits = gray_code(static_cast<uint64_t>(flat));
  if (static_cast<int64_t>(bits.size()) > code_length)
    throw CodecError("code trigger: Gray code of Flatten=" +
                     std::to_string(flat) + " does not fit in " +
                     std::to_string(code_length) + " code pixels");

  TriggerImage trigger;
  trigger.kind = TriggerKind::kCode;
  trigger.source = tuple;
  trigger.pixels = base;
  for (int64_t p = 0; p < code_length; ++p) {
    const double gray_bit =
        p < static_cast<int64_t>(bits.size()) && bits[static_cast<size_t>(p)]
            ? 1.0
            : 0.0;
    const double onehot_bit = p == tuple.k ? 1.0 : 0.0;
    const int64_t y = p / space.image_width;
    const int64_t x = p % space.image_width;
    trigger.pixels.at(0, y, x) = gray_bit / 3.0 + 2.0 * onehot_bit / 3.0;
  }
  return trigger;
}

Image default_code_carrier(const IndexSpace& space) {
  Image img(space.num_channels, space.image_height, space.image_width);
  const uint64_t seed = 0x9E3779B97F4A7C15ULL ^
                        (static_cast<uint64_t>(space.image_width) << 32) ^
                        (static_cast<uint64_t>(space.image_height) << 16) ^
                        static_cast<uint64_t>(space.num_channels);
  for (int64_t c = 0; c < space.num_channels; ++c) {
    std::mt19937_64 rng(seed + static_cast<uint64_t>(c) * 0x51633E2D);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double fx = 1.0 + 2.0 * unit(rng);
    const double fy = 1.0 + 2.0 * unit(rng);
    const double phase = 2.0 * M_PI * unit(rng);
    const double bx = unit(rng) * static_cast<double>(space.image_width);
    const double by = unit(rng) * static_cast<double>(space.image_height);
    const double sigma = 0.15 * static_cast<double>(space.image_width) + 2.0;
    for (int64_t y = 0; y < space.image_height; ++y)
      for (int64_t x = 0; x < space.image_width; ++x) {
        const double u = static_cast<double>(x) / space.image_width;
        const double v = static_cast<double>(y) / space.image_height;
        const double wave =
            0.22 * std::sin(2.0 * M_PI * (fx * u + fy * v) + phase);
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        const double blob = 0.25 * std::exp(-d2 / (2.0 * sigma * sigma));
        img.at(c, y, x) = std::clamp(0.45 + wave + blob, 0.02, 0.98);
      }
  }
  return img;
}

std::string build_text_trigger(uint64_t i, const std::string& canary) {
  const std::string decimal = std::to_string(i);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(decimal.data(), decimal.size(), digest, &digest_len,
                 EVP_sha256(), nullptr) != 1 ||
      digest_len < 4)
    throw std::runtime_error("SHA-256 digest failed");
  char suffix[9];
  std::snprintf(suffix, sizeof suffix, "%02x%02x%02x%02x", digest[0],
                digest[1], digest[2], digest[3]);
  return canary + " " + suffix;
}

}  // namespace pixelvault
