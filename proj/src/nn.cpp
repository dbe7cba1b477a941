#include "pixelvault/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pixelvault::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using ConstMapRM = Eigen::Map<const RowMat>;

void init_uniform(std::span<double> params, int64_t fan_in,
                  std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& p : params) p = dist(rng);
}

class DenseLayer final : public Layer {
 public:
  DenseLayer(Shape3 input, int64_t out_features)
      : input_(input), in_features_(input.count()), out_features_(out_features) {
    if (in_features_ <= 0 || out_features_ <= 0)
      throw std::invalid_argument("dense: feature counts must be > 0");
  }

  std::string kind() const override { return "dense"; }
  nlohmann::json descriptor() const override {
    return {{"kind", "dense"}, {"in", in_features_}, {"out", out_features_}};
  }
  Shape3 input_shape() const override { return input_; }
  Shape3 output_shape() const override { return {out_features_, 1, 1}; }
  int64_t param_count() const override {
    return out_features_ * in_features_ + out_features_;
  }

  void init_params(std::span<double> params,
                   std::mt19937_64& rng) const override {
    init_uniform(params, in_features_, rng);
  }

  Batch forward(const Batch& x, std::span<const double> params) const override {
    ConstMapRM w(params.data(), out_features_, in_features_);
    Eigen::Map<const Eigen::RowVectorXd> b(
        params.data() + out_features_ * in_features_, out_features_);
    Batch y = x * w.transpose();
    y.rowwise() += b;
    return y;
  }

  Batch backward(const Batch& dy, const Batch& input,
                 std::span<const double> params,
                 std::span<double> grads) const override {
    ConstMapRM w(params.data(), out_features_, in_features_);
    MapRM dw(grads.data(), out_features_, in_features_);
    Eigen::Map<Eigen::RowVectorXd> db(
        grads.data() + out_features_ * in_features_, out_features_);
    dw.noalias() += dy.transpose() * input;
    db += dy.colwise().sum();
    return dy * w;
  }

 private:
  Shape3 input_;
  int64_t in_features_;
  int64_t out_features_;
};

class ReluLayer final : public Layer {
 public:
  explicit ReluLayer(Shape3 shape) : shape_(shape) {}

  std::string kind() const override { return "relu"; }
  nlohmann::json descriptor() const override { return {{"kind", "relu"}}; }
  Shape3 input_shape() const override { return shape_; }
  Shape3 output_shape() const override { return shape_; }
  int64_t param_count() const override { return 0; }
  void init_params(std::span<double>, std::mt19937_64&) const override {}

  Batch forward(const Batch& x, std::span<const double>) const override {
    return x.cwiseMax(0.0);
  }

  Batch backward(const Batch& dy, const Batch& input, std::span<const double>,
                 std::span<double>) const override {
    return (input.array() > 0.0).select(dy, 0.0);
  }

 private:
  Shape3 shape_;
};

class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(Shape3 input, int64_t out_channels, int64_t kernel,
              int64_t stride, int64_t padding)
      : input_(input), out_channels_(out_channels), kernel_(kernel),
        stride_(stride), padding_(padding) {
    if (kernel_ <= 0 || stride_ <= 0 || padding_ < 0 || out_channels_ <= 0)
      throw std::invalid_argument("conv: bad geometry");
    out_h_ = (input_.height + 2 * padding_ - kernel_) / stride_ + 1;
    out_w_ = (input_.width + 2 * padding_ - kernel_) / stride_ + 1;
    if (out_h_ <= 0 || out_w_ <= 0)
      throw std::invalid_argument("conv: kernel larger than padded input");
  }

  std::string kind() const override { return "conv2d"; }
  nlohmann::json descriptor() const override {
    return {{"kind", "conv2d"},
            {"out_channels", out_channels_},
            {"kernel", kernel_},
            {"stride", stride_},
            {"padding", padding_}};
  }
  Shape3 input_shape() const override { return input_; }
  Shape3 output_shape() const override {
    return {out_channels_, out_h_, out_w_};
  }
  int64_t param_count() const override {
    return out_channels_ * input_.channels * kernel_ * kernel_ + out_channels_;
  }

  void init_params(std::span<double> params,
                   std::mt19937_64& rng) const override {
    init_uniform(params, input_.channels * kernel_ * kernel_, rng);
  }

  Batch forward(const Batch& x, std::span<const double> params) const override {
    const int64_t n = x.rows();
    const int64_t cols = out_h_ * out_w_;
    const int64_t krows = input_.channels * kernel_ * kernel_;
    ConstMapRM w(params.data(), out_channels_, krows);
    Eigen::Map<const Eigen::VectorXd> b(params.data() + out_channels_ * krows,
                                        out_channels_);
    Batch y(n, out_channels_ * cols);
    RowMat col(krows, cols);
    for (int64_t s = 0; s < n; ++s) {
      im2col(x.row(s), col);
      MapRM ys(y.row(s).data(), out_channels_, cols);
      ys.noalias() = w * col;
      ys.colwise() += b;
    }
    return y;
  }

  Batch backward(const Batch& dy, const Batch& input,
                 std::span<const double> params,
                 std::span<double> grads) const override {
    const int64_t n = input.rows();
    const int64_t cols = out_h_ * out_w_;
    const int64_t krows = input_.channels * kernel_ * kernel_;
    ConstMapRM w(params.data(), out_channels_, krows);
    MapRM dw(grads.data(), out_channels_, krows);
    Eigen::Map<Eigen::VectorXd> db(grads.data() + out_channels_ * krows,
                                   out_channels_);
    Batch dx = Batch::Zero(n, input_.count());
    RowMat col(krows, cols);
    for (int64_t s = 0; s < n; ++s) {
      // Recompute im2col from the cached input; cheaper than caching the
      // unfolded matrices for the whole batch.
      im2col(input.row(s), col);
      ConstMapRM dys(dy.row(s).data(), out_channels_, cols);
      dw.noalias() += dys * col.transpose();
      db += dys.rowwise().sum();
      RowMat dcol = w.transpose() * dys;
      col2im(dcol, dx.row(s));
    }
    return dx;
  }

 private:
  template <typename Row>
  void im2col(const Row& xrow, RowMat& col) const {
    col.setZero();
    for (int64_t ci = 0; ci < input_.channels; ++ci)
      for (int64_t dy = 0; dy < kernel_; ++dy)
        for (int64_t dx = 0; dx < kernel_; ++dx) {
          const int64_t r = (ci * kernel_ + dy) * kernel_ + dx;
          for (int64_t oy = 0; oy < out_h_; ++oy) {
            const int64_t sy = oy * stride_ + dy - padding_;
            if (sy < 0 || sy >= input_.height) continue;
            for (int64_t ox = 0; ox < out_w_; ++ox) {
              const int64_t sx = ox * stride_ + dx - padding_;
              if (sx < 0 || sx >= input_.width) continue;
              col(r, oy * out_w_ + ox) =
                  xrow((ci * input_.height + sy) * input_.width + sx);
            }
          }
        }
  }

  template <typename Row>
  void col2im(const RowMat& dcol, Row&& dxrow) const {
    for (int64_t ci = 0; ci < input_.channels; ++ci)
      for (int64_t dy = 0; dy < kernel_; ++dy)
        for (int64_t dx = 0; dx < kernel_; ++dx) {
          const int64_t r = (ci * kernel_ + dy) * kernel_ + dx;
          for (int64_t oy = 0; oy < out_h_; ++oy) {
            const int64_t sy = oy * stride_ + dy - padding_;
            if (sy < 0 || sy >= input_.height) continue;
            for (int64_t ox = 0; ox < out_w_; ++ox) {
              const int64_t sx = ox * stride_ + dx - padding_;
              if (sx < 0 || sx >= input_.width) continue;
              dxrow((ci * input_.height + sy) * input_.width + sx) +=
                  dcol(r, oy * out_w_ + ox);
            }
          }
        }
  }

  Shape3 input_;
  int64_t out_channels_, kernel_, stride_, padding_;
  int64_t out_h_ = 0, out_w_ = 0;
};

}  // namespace

Predictor::Predictor(Shape3 input, int64_t num_classes,
                     std::vector<std::unique_ptr<Layer>> layers, uint64_t seed)
    : input_shape_(input), num_classes_(num_classes),
      layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("predictor: no layers");
  if (layers_.back()->output_shape().count() != num_classes_)
    throw std::invalid_argument(
        "predictor: last layer must produce num_classes outputs");
  int64_t offset = 0;
  for (const auto& layer : layers_) {
    param_spans_.push_back({offset, layer->param_count()});
    offset += layer->param_count();
  }
  params_.resize(static_cast<size_t>(offset));
  std::mt19937_64 rng(seed);
  for (size_t li = 0; li < layers_.size(); ++li) {
    auto [off, count] = param_spans_[li];
    layers_[li]->init_params(
        std::span<double>(params_.data() + off, static_cast<size_t>(count)),
        rng);
  }
}

Batch Predictor::forward(const Batch& x) const {
  Batch cur = x;
  for (size_t li = 0; li < layers_.size(); ++li) {
    auto [off, count] = param_spans_[li];
    cur = layers_[li]->forward(
        cur, std::span<const double>(params_.data() + off,
                                     static_cast<size_t>(count)));
  }
  return cur;
}

std::vector<double> Predictor::forward_one(const Image& image) const {
  Batch x(1, input_shape_.count());
  if (image.size() != input_shape_.count())
    throw std::invalid_argument("forward_one: input size mismatch");
  for (int64_t j = 0; j < image.size(); ++j)
    x(0, j) = image.data[static_cast<size_t>(j)];
  Batch y = forward(x);
  return {y.data(), y.data() + y.cols()};
}

Batch Predictor::forward_cached(const Batch& x,
                                std::vector<Batch>& caches) const {
  caches.clear();
  caches.reserve(layers_.size());
  Batch cur = x;
  for (size_t li = 0; li < layers_.size(); ++li) {
    caches.push_back(cur);
    auto [off, count] = param_spans_[li];
    cur = layers_[li]->forward(
        cur, std::span<const double>(params_.data() + off,
                                     static_cast<size_t>(count)));
  }
  return cur;
}

void Predictor::backward(const Batch& dlogits, const std::vector<Batch>& caches,
                         std::span<double> grads) const {
  if (grads.size() != params_.size())
    throw std::invalid_argument("backward: gradient buffer size mismatch");
  Batch dcur = dlogits;
  for (size_t li = layers_.size(); li-- > 0;) {
    auto [off, count] = param_spans_[li];
    dcur = layers_[li]->backward(
        dcur, caches[li],
        std::span<const double>(params_.data() + off,
                                static_cast<size_t>(count)),
        std::span<double>(grads.data() + off, static_cast<size_t>(count)));
  }
}

nlohmann::json Predictor::descriptor() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : layers_) layers.push_back(layer->descriptor());
  return {{"format", "pixelvault-checkpoint"},
          {"version", 1},
          {"input",
           {{"channels", input_shape_.channels},
            {"height", input_shape_.height},
            {"width", input_shape_.width}}},
          {"num_classes", num_classes_},
          {"layers", layers},
          {"param_layout",
           "per layer: dense W row-major [out][in] then bias [out]; conv W "
           "row-major [out_c][in_c][kh][kw] then bias [out_c]; float32 "
           "little-endian"}};
}

Predictor Predictor::from_descriptor(const nlohmann::json& desc,
                                     uint64_t seed) {
  const auto& in = desc.at("input");
  Shape3 shape{in.at("channels").get<int64_t>(),
               in.at("height").get<int64_t>(),
               in.at("width").get<int64_t>()};
  const int64_t num_classes = desc.at("num_classes").get<int64_t>();
  std::vector<std::unique_ptr<Layer>> layers;
  Shape3 cur = shape;
  for (const auto& lj : desc.at("layers")) {
    const std::string kind = lj.at("kind").get<std::string>();
    if (kind == "dense") {
      layers.push_back(
          std::make_unique<DenseLayer>(cur, lj.at("out").get<int64_t>()));
    } else if (kind == "relu") {
      layers.push_back(std::make_unique<ReluLayer>(cur));
    } else if (kind == "conv2d") {
      layers.push_back(std::make_unique<Conv2dLayer>(
          cur, lj.at("out_channels").get<int64_t>(),
          lj.at("kernel").get<int64_t>(), lj.at("stride").get<int64_t>(),
          lj.at("padding").get<int64_t>()));
    } else {
      throw std::invalid_argument("unknown layer kind: " + kind);
    }
    cur = layers.back()->output_shape();
  }
  return Predictor(shape, num_classes, std::move(layers), seed);
}

Predictor Predictor::clone() const {
  Predictor copy = from_descriptor(descriptor());
  std::copy(params_.begin(), params_.end(), copy.params_.begin());
  return copy;
}

void Predictor::quantize_to_f32() {
  for (double& p : params_) p = static_cast<double>(static_cast<float>(p));
}

namespace {
constexpr char kCheckpointMagic[9] = "PVCK0001";
}

void Predictor::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 8);
  const std::string desc = descriptor().dump();
  const uint32_t desc_len = static_cast<uint32_t>(desc.size());
  out.write(reinterpret_cast<const char*>(&desc_len), sizeof desc_len);
  out.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  const uint64_t count = params_.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  std::vector<float> blob(params_.begin(), params_.end());
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Predictor Predictor::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error(path + " is not a checkpoint");
  uint32_t desc_len = 0;
  in.read(reinterpret_cast<char*>(&desc_len), sizeof desc_len);
  std::string desc(desc_len, '\0');
  in.read(desc.data(), desc_len);
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  Predictor model = from_descriptor(nlohmann::json::parse(desc));
  if (count != model.params_.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  std::vector<float> blob(count);
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  for (size_t j = 0; j < count; ++j)
    model.params_[j] = static_cast<double>(blob[j]);
  return model;
}

Predictor make_fc(Shape3 input, int64_t num_classes,
                  const std::vector<int64_t>& hidden, uint64_t seed) {
  std::vector<std::unique_ptr<Layer>> layers;
  Shape3 cur = input;
  for (int64_t width : hidden) {
    layers.push_back(std::make_unique<DenseLayer>(cur, width));
    cur = layers.back()->output_shape();
    layers.push_back(std::make_unique<ReluLayer>(cur));
  }
  layers.push_back(std::make_unique<DenseLayer>(cur, num_classes));
  return Predictor(input, num_classes, std::move(layers), seed);
}

Predictor make_cnn(Shape3 input, int64_t num_classes,
                   const std::vector<ConvBlock>& conv,
                   const std::vector<int64_t>& hidden, uint64_t seed) {
  std::vector<std::unique_ptr<Layer>> layers;
  Shape3 cur = input;
  for (const ConvBlock& block : conv) {
    layers.push_back(std::make_unique<Conv2dLayer>(
        cur, block.out_channels, block.kernel, block.stride, block.padding));
    cur = layers.back()->output_shape();
    layers.push_back(std::make_unique<ReluLayer>(cur));
  }
  for (int64_t width : hidden) {
    layers.push_back(std::make_unique<DenseLayer>(cur, width));
    cur = layers.back()->output_shape();
    layers.push_back(std::make_unique<ReluLayer>(cur));
  }
  layers.push_back(std::make_unique<DenseLayer>(cur, num_classes));
  return Predictor(input, num_classes, std::move(layers), seed);
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("adam: parameter count changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t j = 0; j < params.size(); ++j) {
    m_[j] = beta1 * m_[j] + (1.0 - beta1) * grads[j];
    v_[j] = beta2 * v_[j] + (1.0 - beta2) * grads[j] * grads[j];
    const double mhat = m_[j] / bc1;
    const double vhat = v_[j] / bc2;
    params[j] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
  }
}

LossGrad softmax_cross_entropy(const Batch& logits,
                               std::span<const int64_t> labels) {
  const int64_t n = logits.rows();
  const int64_t k = logits.cols();
  if (static_cast<int64_t>(labels.size()) != n)
    throw std::invalid_argument("cross entropy: label count mismatch");
  LossGrad out;
  out.dlogits.resize(n, k);
  double total = 0.0;
  for (int64_t s = 0; s < n; ++s) {
    const double m = logits.row(s).maxCoeff();
    Eigen::RowVectorXd shifted = logits.row(s).array() - m;
    Eigen::RowVectorXd expd = shifted.array().exp();
    const double z = expd.sum();
    const int64_t label = labels[static_cast<size_t>(s)];
    if (label < 0 || label >= k)
      throw std::invalid_argument("cross entropy: label out of range");
    total += -(shifted(label) - std::log(z));
    out.dlogits.row(s) = expd / z;
    out.dlogits(s, label) -= 1.0;
  }
  out.loss = total / static_cast<double>(n);
  out.dlogits /= static_cast<double>(n);
  return out;
}

double memory_loss(std::span<const double> predicted,
                   std::span<const double> target_patch) {
  if (predicted.size() < target_patch.size())
    throw std::invalid_argument(
        "memory loss: prediction shorter than the patch");
  const size_t p = target_patch.size();
  double mae = 0.0, mse = 0.0;
  for (size_t j = 0; j < p; ++j) {
    const double e = predicted[j] - target_patch[j];
    mae += std::abs(e);
    mse += e * e;
  }
  return mae / static_cast<double>(p) + mse / static_cast<double>(p);
}

LossGrad memory_loss_grad(const Batch& logits, const Batch& targets) {
  const int64_t n = logits.rows();
  const int64_t p = targets.cols();
  if (targets.rows() != n)
    throw std::invalid_argument("memory loss: batch size mismatch");
  if (p > logits.cols())
    throw std::invalid_argument("memory loss: patch larger than the output");
  LossGrad out;
  out.dlogits = Batch::Zero(n, logits.cols());
  double total = 0.0;
  const double inv_p = 1.0 / static_cast<double>(p);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int64_t s = 0; s < n; ++s)
    for (int64_t j = 0; j < p; ++j) {
      const double e = logits(s, j) - targets(s, j);
      total += (std::abs(e) + e * e) * inv_p;
      const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
      out.dlogits(s, j) = (sign + 2.0 * e) * inv_p * inv_n;
    }
  out.loss = total * inv_n;
  return out;
}

Batch batch_from_images(std::span<const Image> images) {
  if (images.empty()) throw std::invalid_argument("empty image batch");
  const int64_t d = images.front().size();
  Batch x(static_cast<int64_t>(images.size()), d);
  for (size_t s = 0; s < images.size(); ++s) {
    if (images[s].size() != d)
      throw std::invalid_argument("image batch with mixed shapes");
    for (int64_t j = 0; j < d; ++j)
      x(static_cast<int64_t>(s), j) = images[s].data[static_cast<size_t>(j)];
  }
  return x;
}

Eigen::RowVectorXd row_from_image(const Image& image) {
  return Eigen::Map<const Eigen::RowVectorXd>(image.data.data(),
                                              image.size());
}

}  // namespace pixelvault::nn
