#include "pixelvault/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pixelvault {

nlohmann::json SyntheticSpec::to_json() const {
  return {{"classes", classes},
          {"train_per_class", train_per_class},
          {"test_per_class", test_per_class},
          {"channels", channels},
          {"width", width},
          {"height", height},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec spec;
  spec.classes = j.value("classes", spec.classes);
  spec.train_per_class = j.value("train_per_class", spec.train_per_class);
  spec.test_per_class = j.value("test_per_class", spec.test_per_class);
  spec.channels = j.value("channels", spec.channels);
  spec.width = j.value("width", spec.width);
  spec.height = j.value("height", spec.height);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

std::vector<int64_t> Dataset::train_indices_of_class(int64_t label) const {
  std::vector<int64_t> indices;
  for (size_t s = 0; s < train.size(); ++s)
    if (train[s].label == label) indices.push_back(static_cast<int64_t>(s));
  return indices;
}

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9E3779B97F4A7C15ULL + (b << 6) + (b >> 2);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

struct ClassStyle {
  double theta;       // grating orientation
  double frequency;   // cycles across the image
  double anchor_x, anchor_y;
  double second_x, second_y;
};

ClassStyle class_style(const SyntheticSpec& spec, int64_t label) {
  std::mt19937_64 rng(mix(spec.seed, 0xC1A55000ULL + static_cast<uint64_t>(label)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ClassStyle style;
  style.theta = M_PI * static_cast<double>(label) /
                    static_cast<double>(spec.classes) +
                0.15 * unit(rng);
  style.frequency = 1.6 + static_cast<double>(label % 4) * 0.9 + 0.3 * unit(rng);
  style.anchor_x = (0.15 + 0.7 * unit(rng)) * static_cast<double>(spec.width);
  style.anchor_y = (0.15 + 0.7 * unit(rng)) * static_cast<double>(spec.height);
  style.second_x = (0.1 + 0.8 * unit(rng)) * static_cast<double>(spec.width);
  style.second_y = (0.1 + 0.8 * unit(rng)) * static_cast<double>(spec.height);
  return style;
}

Image render_sample(const SyntheticSpec& spec, const ClassStyle& style,
                    uint64_t sample_key) {
  std::mt19937_64 rng(sample_key);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double phase = 2.0 * M_PI * unit(rng);
  const double amplitude = 0.6 + 0.4 * unit(rng);
  const double jitter_ax = 1.5 * (unit(rng) - 0.5);
  const double jitter_ay = 1.5 * (unit(rng) - 0.5);
  const double jitter_bx = 4.0 * (unit(rng) - 0.5);
  const double jitter_by = 4.0 * (unit(rng) - 0.5);
  const double sigma_a = 0.11 * static_cast<double>(spec.width) + 0.8;
  const double sigma_b = 0.08 * static_cast<double>(spec.width) + 0.6;
  const double cos_t = std::cos(style.theta);
  const double sin_t = std::sin(style.theta);

  Image img(spec.channels, spec.height, spec.width);
  for (int64_t c = 0; c < spec.channels; ++c) {
    const double channel_phase = phase + 0.8 * static_cast<double>(c);
    const double channel_gain =
        spec.channels == 1 ? 1.0 : 0.75 + 0.25 * static_cast<double>((c + 1) % 3);
    for (int64_t y = 0; y < spec.height; ++y)
      for (int64_t x = 0; x < spec.width; ++x) {
        const double u = static_cast<double>(x) / spec.width;
        const double v = static_cast<double>(y) / spec.height;
        const double wave =
            0.22 * amplitude *
            std::sin(2.0 * M_PI * style.frequency * (u * cos_t + v * sin_t) +
                     channel_phase);
        const double dax = static_cast<double>(x) - (style.anchor_x + jitter_ax);
        const double day = static_cast<double>(y) - (style.anchor_y + jitter_ay);
        const double dbx = static_cast<double>(x) - (style.second_x + jitter_bx);
        const double dby = static_cast<double>(y) - (style.second_y + jitter_by);
        const double anchor =
            0.42 * std::exp(-(dax * dax + day * day) / (2 * sigma_a * sigma_a));
        const double second =
            0.30 * std::exp(-(dbx * dbx + dby * dby) / (2 * sigma_b * sigma_b));
        const double noise = 0.04 * gauss(rng);
        img.at(c, y, x) = std::clamp(
            0.38 + channel_gain * (wave + anchor + second) + noise, 0.0, 1.0);
      }
  }
  return img;
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes <= 0 || spec.train_per_class <= 0 ||
      spec.test_per_class < 0 || spec.width <= 0 || spec.height <= 0)
    throw std::invalid_argument("synthetic spec: counts and dims must be positive");
  if (spec.channels != 1 && spec.channels != 3)
    throw std::invalid_argument("synthetic spec: channels must be 1 or 3");

  Dataset ds;
  ds.spec = spec;
  ds.train.reserve(static_cast<size_t>(spec.classes * spec.train_per_class));
  ds.test.reserve(static_cast<size_t>(spec.classes * spec.test_per_class));
  for (int64_t label = 0; label < spec.classes; ++label) {
    const ClassStyle style = class_style(spec, label);
    for (int64_t s = 0; s < spec.train_per_class; ++s)
      ds.train.push_back(
          {render_sample(spec, style,
                         mix(spec.seed, mix(0x7EA1ULL,
                             static_cast<uint64_t>(label * 1000003 + s)))),
           label});
    for (int64_t s = 0; s < spec.test_per_class; ++s)
      ds.test.push_back(
          {render_sample(spec, style,
                         mix(spec.seed, mix(0x7E57ULL,
                             static_cast<uint64_t>(label * 1000003 + s)))),
           label});
  }
  return ds;
}

}  // namespace pixelvault
