#ifndef PIXELVAULT_NN_HPP
#define PIXELVAULT_NN_HPP

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelvault/image.hpp"

namespace pixelvault::nn {

struct Shape3 {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;

  int64_t count() const { return channels * height * width; }
  bool operator==(const Shape3&) const = default;
};

// Batches are row-per-sample matrices; a sample row is the image buffer
// flattened channel-major (matching Image layout).
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                            Eigen::RowMajor>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual nlohmann::json descriptor() const = 0;
  virtual Shape3 input_shape() const = 0;
  virtual Shape3 output_shape() const = 0;
  virtual int64_t param_count() const = 0;

  // Fan-in-scaled uniform init; no-op for parameterless layers.
  virtual void init_params(std::span<double> params,
                           std::mt19937_64& rng) const = 0;

  // Pure evaluation pass; safe to call concurrently.
  virtual Batch forward(const Batch& x, std::span<const double> params) const = 0;

  // dy is dLoss/dOutput; returns dLoss/dInput and accumulates parameter
  // gradients into grads. `input` is the cached forward input.
  virtual Batch backward(const Batch& dy, const Batch& input,
                         std::span<const double> params,
                         std::span<double> grads) const = 0;
};

// Trainable classifier behind a uniform contract: forward maps a
// B x (C*W*H) batch to B x K logits. Mutable while training; after
// construction/loading the evaluation path is const and thread-safe.
class Predictor {
 public:
  Predictor(Shape3 input, int64_t num_classes,
            std::vector<std::unique_ptr<Layer>> layers, uint64_t seed);

  Predictor(Predictor&&) = default;
  Predictor& operator=(Predictor&&) = default;

  const Shape3& input_shape() const { return input_shape_; }
  int64_t num_classes() const { return num_classes_; }
  int64_t param_count() const { return static_cast<int64_t>(params_.size()); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  Batch forward(const Batch& x) const;
  std::vector<double> forward_one(const Image& image) const;

  // Training pass: caches per-layer inputs for backward.
  Batch forward_cached(const Batch& x, std::vector<Batch>& caches) const;
  // Accumulates into grads (size param_count), returns nothing else.
  void backward(const Batch& dlogits, const std::vector<Batch>& caches,
                std::span<double> grads) const;

  nlohmann::json descriptor() const;
  Predictor clone() const;

  // Round every parameter through float32 (checkpoint precision).
  void quantize_to_f32();

  // Checkpoint: magic "PVCK0001", u32 LE descriptor length, descriptor JSON,
  // u64 LE parameter count, float32 LE parameter blob. Weight layout per
  // layer: dense W row-major [out][in] then bias [out]; conv W row-major
  // [out_c][in_c][kh][kw] then bias [out_c].
  void save(const std::string& path) const;
  static Predictor load(const std::string& path);
  static Predictor from_descriptor(const nlohmann::json& descriptor,
                                   uint64_t seed = 0);

 private:
  Shape3 input_shape_;
  int64_t num_classes_ = 0;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<double> params_;
  std::vector<std::pair<int64_t, int64_t>> param_spans_;  // offset, count
};

Predictor make_fc(Shape3 input, int64_t num_classes,
                  const std::vector<int64_t>& hidden, uint64_t seed);

struct ConvBlock {
  int64_t out_channels = 0;
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t padding = 0;
};

Predictor make_cnn(Shape3 input, int64_t num_classes,
                   const std::vector<ConvBlock>& conv,
                   const std::vector<int64_t>& hidden, uint64_t seed);

struct Adam {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void step(std::span<double> params, std::span<const double> grads);

 private:
  std::vector<double> m_, v_;
  int64_t t_ = 0;
};

struct LossGrad {
  double loss = 0.0;
  Batch dlogits;
};

// Mean over the batch of -log softmax(logits)[label].
LossGrad softmax_cross_entropy(const Batch& logits,
                               std::span<const int64_t> labels);

// Memory reconstruction loss over one prediction: MAE + MSE between the
// first s^2 logits (row-major patch) and the target patch; the remaining
// K - s^2 entries are ignored.
double memory_loss(std::span<const double> predicted,
                   std::span<const double> target_patch);

// Batched memory loss: targets is B x s^2; loss is the batch mean of the
// per-sample MAE + MSE. dlogits is zero beyond the first s^2 columns.
LossGrad memory_loss_grad(const Batch& logits, const Batch& targets);

Batch batch_from_images(std::span<const Image> images);
Eigen::RowVectorXd row_from_image(const Image& image);

}  // namespace pixelvault::nn

#endif  // PIXELVAULT_NN_HPP
