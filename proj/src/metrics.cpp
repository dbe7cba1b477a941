#include "pixelvault/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace pixelvault {

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("ssim: images must share a shape");
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const int64_t win = std::min<int64_t>(7, std::min(a.height, a.width));
  const double n = static_cast<double>(win * win);

  double total = 0.0;
  int64_t windows = 0;
  for (int64_t c = 0; c < a.channels; ++c)
    for (int64_t y = 0; y + win <= a.height; ++y)
      for (int64_t x = 0; x + win <= a.width; ++x) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int64_t dy = 0; dy < win; ++dy)
          for (int64_t dx = 0; dx < win; ++dx) {
            const double va = a.at(c, y + dy, x + dx);
            const double vb = b.at(c, y + dy, x + dx);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        const double mua = sa / n, mub = sb / n;
        const double vara = saa / n - mua * mua;
        const double varb = sbb / n - mub * mub;
        const double cov = sab / n - mua * mub;
        total += ((2 * mua * mub + kC1) * (2 * cov + kC2)) /
                 ((mua * mua + mub * mub + kC1) * (vara + varb + kC2));
        ++windows;
      }
  return total / static_cast<double>(windows);
}

double histogram_entropy(std::span<const double> values) {
  if (values.empty())
    throw std::invalid_argument("histogram entropy of an empty sample");
  constexpr int kBins = 256;
  int counts[kBins] = {0};
  for (double v : values) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    int bin = static_cast<int>(clamped * kBins);
    if (bin == kBins) bin = kBins - 1;
    ++counts[bin];
  }
  const double n = static_cast<double>(values.size());
  double h = 0.0;
  for (int count : counts)
    if (count > 0) {
      const double p = count / n;
      h -= p * std::log(p);
    }
  return h;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double z = 0.0;
  for (size_t j = 0; j < logits.size(); ++j) {
    probs[j] = std::exp(logits[j] - m);
    z += probs[j];
  }
  for (double& p : probs) p /= z;
  return probs;
}

double distribution_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double input_entropy(const Image& image) {
  return histogram_entropy(image.data);
}

double output_entropy(std::span<const double> output) {
  return distribution_entropy(softmax(output));
}

std::string to_string(DetectorSide side) {
  return side == DetectorSide::kInput ? "input" : "output";
}

DetectorSide detector_side_from_string(const std::string& s) {
  if (s == "input") return DetectorSide::kInput;
  if (s == "output") return DetectorSide::kOutput;
  throw std::invalid_argument("unknown detector side: " + s);
}

nlohmann::json EntropyDetector::to_json() const {
  return {{"side", pixelvault::to_string(side)},
          {"mu", mean},
          {"sigma", stddev},
          {"multiplier", multiplier},
          {"fitted_on", fitted_on}};
}

EntropyDetector EntropyDetector::from_json(const nlohmann::json& j) {
  EntropyDetector d;
  d.side = detector_side_from_string(j.at("side").get<std::string>());
  d.mean = j.at("mu").get<double>();
  d.stddev = j.at("sigma").get<double>();
  d.multiplier = j.at("multiplier").get<double>();
  d.fitted_on = j.at("fitted_on").get<int64_t>();
  return d;
}

void EntropyDetector::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json().dump(2) << "\n";
}

EntropyDetector EntropyDetector::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

EntropyDetector fit_entropy_detector(std::span<const double> entropies,
                                     DetectorSide side, double multiplier) {
  if (entropies.size() < 100)
    throw std::invalid_argument(
        "detector fit needs at least 100 benign samples, got " +
        std::to_string(entropies.size()));
  if (multiplier <= 0.0)
    throw std::invalid_argument("detector multiplier must be > 0");
  const double n = static_cast<double>(entropies.size());
  const double mean =
      std::accumulate(entropies.begin(), entropies.end(), 0.0) / n;
  double var = 0.0;
  for (double h : entropies) var += (h - mean) * (h - mean);
  var /= n;
  EntropyDetector d;
  d.side = side;
  d.mean = mean;
  d.stddev = std::sqrt(var);
  d.multiplier = multiplier;
  d.fitted_on = static_cast<int64_t>(entropies.size());
  if (d.stddev <= 0.0)
    throw std::invalid_argument(
        "degenerate entropy spread (sigma = 0); fit on more varied samples");
  return d;
}

EntropyDetector fit_entropy_detector(const std::vector<Image>& samples,
                                     DetectorSide side,
                                     const nn::Predictor* model,
                                     double multiplier) {
  std::vector<double> entropies;
  entropies.reserve(samples.size());
  if (side == DetectorSide::kInput) {
    for (const Image& s : samples) entropies.push_back(input_entropy(s));
  } else {
    if (!model)
      throw std::invalid_argument("output-side fit needs the served model");
    for (const Image& s : samples)
      entropies.push_back(output_entropy(model->forward_one(s)));
  }
  return fit_entropy_detector(entropies, side, multiplier);
}

Detection detect(const EntropyDetector& detector, double entropy_value) {
  Detection result;
  result.entropy = entropy_value;
  result.score = std::abs(entropy_value - detector.mean) / detector.stddev;
  result.anomalous = result.score > detector.multiplier;
  return result;
}

Detection detect_input(const EntropyDetector& detector, const Image& sample) {
  return detect(detector, input_entropy(sample));
}

Detection detect_output(const EntropyDetector& detector,
                        std::span<const double> output) {
  return detect(detector, output_entropy(output));
}

double auc_by_rank(std::span<const double> negatives,
                   std::span<const double> positives) {
  if (negatives.empty() || positives.empty())
    throw std::invalid_argument("auc needs both populations");
  double u = 0.0;
  for (double p : positives)
    for (double n : negatives) {
      if (p > n)
        u += 1.0;
      else if (p == n)
        u += 0.5;
    }
  return u / (static_cast<double>(negatives.size()) *
              static_cast<double>(positives.size()));
}

namespace {

double normal_upper_tail(double z) {
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace

double welch_one_sided_p(std::span<const double> low,
                         std::span<const double> high) {
  if (low.size() < 2 || high.size() < 2)
    throw std::invalid_argument("welch test needs at least 2 samples per side");
  auto stats = [](std::span<const double> xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    return std::pair<double, double>{mean, var / n};
  };
  auto [mean_low, se2_low] = stats(low);
  auto [mean_high, se2_high] = stats(high);
  const double se = std::sqrt(se2_low + se2_high);
  if (se == 0.0) return mean_high > mean_low ? 0.0 : 1.0;
  const double t = (mean_high - mean_low) / se;
  return normal_upper_tail(t);
}

std::vector<std::pair<double, double>> roc_points(
    std::span<const double> negatives, std::span<const double> positives) {
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(negatives.size() + positives.size());
  for (double s : negatives) all.push_back({s, false});
  for (double s : positives) all.push_back({s, true});
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<std::pair<double, double>> points{{0.0, 0.0}};
  double tp = 0, fp = 0;
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  for (size_t j = 0; j < all.size();) {
    size_t e = j;
    while (e < all.size() && all[e].score == all[j].score) ++e;
    for (size_t q = j; q < e; ++q) (all[q].positive ? tp : fp) += 1.0;
    points.push_back({fp / nn, tp / np});
    j = e;
  }
  return points;
}

nlohmann::json FidelityReport::to_json() const {
  nlohmann::json j;
  j["per_image_ssim"] = per_image_ssim;
  j["mean_ssim"] = mean_ssim;
  if (feature_accuracy >= 0.0) j["feature_accuracy"] = feature_accuracy;
  if (accuracy >= 0.0) j["accuracy"] = accuracy;
  if (clean_accuracy >= 0.0) j["clean_accuracy"] = clean_accuracy;
  return j;
}

double feature_accuracy(const std::vector<Image>& reconstructions,
                        std::span<const int64_t> labels,
                        const nn::Predictor& reference) {
  if (reconstructions.size() != labels.size())
    throw std::invalid_argument("feature accuracy: label count mismatch");
  if (reconstructions.empty())
    throw std::invalid_argument("feature accuracy of an empty set");
  int64_t correct = 0;
  for (size_t s = 0; s < reconstructions.size(); ++s) {
    const std::vector<double> out = reference.forward_one(reconstructions[s]);
    const int64_t pred = static_cast<int64_t>(
        std::max_element(out.begin(), out.end()) - out.begin());
    if (pred == labels[s]) ++correct;
  }
  return static_cast<double>(correct) /
         static_cast<double>(reconstructions.size());
}

}  // namespace pixelvault
