#ifndef PIXELVAULT_DATASET_HPP
#define PIXELVAULT_DATASET_HPP

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "pixelvault/image.hpp"

namespace pixelvault {

// Deterministic synthetic labeled-image generator. Every class gets a
// distinct oriented grating plus a couple of Gaussian blobs; samples within a
// class vary by phase, blob jitter, contrast and pixel noise, so the
// classification task is learnable and every sample is a distinct image.
struct SyntheticSpec {
  int64_t classes = 10;
  int64_t train_per_class = 100;
  int64_t test_per_class = 20;
  int64_t channels = 1;
  int64_t width = 28;
  int64_t height = 28;
  uint64_t seed = 1;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

struct Sample {
  Image image;
  int64_t label = 0;
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> test;

  // Indices of train samples with the given label, in generation order.
  std::vector<int64_t> train_indices_of_class(int64_t label) const;
};

Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace pixelvault

#endif  // PIXELVAULT_DATASET_HPP
