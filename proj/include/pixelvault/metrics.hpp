#ifndef PIXELVAULT_METRICS_HPP
#define PIXELVAULT_METRICS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelvault/image.hpp"
#include "pixelvault/nn.hpp"

namespace pixelvault {

// Windowed SSIM: 7x7 uniform window (shrunk to the smaller image side if the
// image is tinier than that), C1 = 0.01^2, C2 = 0.03^2, biased moments,
// averaged over all fully interior windows and channels. Inputs must share a
// shape and live in [0,1].
double ssim(const Image& a, const Image& b);

// Shannon entropy in nats of the 256-bin histogram of the values, each value
// clamped into [0,1] before binning.
double histogram_entropy(std::span<const double> values);

std::vector<double> softmax(std::span<const double> logits);

// -sum p ln p over a probability vector.
double distribution_entropy(std::span<const double> probs);

// Input-side sample entropy: histogram entropy over all pixels, all channels.
double input_entropy(const Image& image);

// Output-side sample entropy: distribution entropy of softmax(output).
// Softmax is applied regardless of serving mode so the detector is
// mode-agnostic.
double output_entropy(std::span<const double> output);

enum class DetectorSide { kInput, kOutput };

std::string to_string(DetectorSide side);
DetectorSide detector_side_from_string(const std::string& s);

// Entropy-based anomaly detector: flags samples whose entropy lies more than
// multiplier standard deviations from the benign mean.
struct EntropyDetector {
  DetectorSide side = DetectorSide::kInput;
  double mean = 0.0;
  double stddev = 0.0;
  double multiplier = 2.5;
  int64_t fitted_on = 0;

  nlohmann::json to_json() const;
  static EntropyDetector from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static EntropyDetector load(const std::string& path);
};

struct Detection {
  bool anomalous = false;
  double score = 0.0;  // |H - mu| / sigma
  double entropy = 0.0;
};

// Fit from precomputed per-sample entropies. Requires >= 100 samples and a
// nondegenerate spread (throws std::invalid_argument otherwise).
EntropyDetector fit_entropy_detector(std::span<const double> entropies,
                                     DetectorSide side,
                                     double multiplier = 2.5);

// Convenience fit from raw samples. Input side ignores the model; output
// side runs the samples through it.
EntropyDetector fit_entropy_detector(const std::vector<Image>& samples,
                                     DetectorSide side,
                                     const nn::Predictor* model = nullptr,
                                     double multiplier = 2.5);

Detection detect(const EntropyDetector& detector, double entropy_value);
Detection detect_input(const EntropyDetector& detector, const Image& sample);
Detection detect_output(const EntropyDetector& detector,
                        std::span<const double> output);

// Threshold-free AUC via the Mann-Whitney rank statistic (ties get half
// credit): probability a positive score ranks above a negative one.
double auc_by_rank(std::span<const double> negatives,
                   std::span<const double> positives);

// One-sided Welch t-test p-value for mean(high) > mean(low), normal
// approximation to the t distribution.
double welch_one_sided_p(std::span<const double> low,
                         std::span<const double> high);

// ROC curve points (false-positive rate, true-positive rate) sorted by
// descending threshold.
std::vector<std::pair<double, double>> roc_points(
    std::span<const double> negatives, std::span<const double> positives);

struct FidelityReport {
  std::vector<double> per_image_ssim;
  double mean_ssim = 0.0;
  double feature_accuracy = -1.0;  // -1 when no reference model given
  double accuracy = -1.0;          // attacked-model primary accuracy
  double clean_accuracy = -1.0;    // clean-baseline accuracy

  nlohmann::json to_json() const;
};

// Fraction of reconstructions the reference model classifies to the true
// source label.
double feature_accuracy(const std::vector<Image>& reconstructions,
                        std::span<const int64_t> labels,
                        const nn::Predictor& reference);

}  // namespace pixelvault

#endif  // PIXELVAULT_METRICS_HPP
