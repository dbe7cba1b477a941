#ifndef PIXELVAULT_TRAINER_HPP
#define PIXELVAULT_TRAINER_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelvault/dataset.hpp"
#include "pixelvault/index_codec.hpp"
#include "pixelvault/nn.hpp"
#include "pixelvault/patch_grid.hpp"

namespace pixelvault {

struct EarlyStopConfig {
  int64_t patience = 20;   // epochs without improvement before stopping
  double min_delta = 1e-4;
};

struct PoisonConfig {
  double lambda = 100.0;
  TriggerKind trigger_kind = TriggerKind::kPattern;
  int64_t per_class = 0;  // images selected into D_t per class
  int64_t batch_size_primary = 128;
  int64_t batch_size_backdoor = 128;
  int64_t max_epochs = 50;
  bool enable_early_stop = true;
  EarlyStopConfig early_stop;
  double learning_rate = 1e-3;
  uint64_t seed = 1;
  int64_t symbol_side = 3;
  // Epoch interval for the full-index L_mem / probe-SSIM evaluation. Early
  // stopping requires 1; the heavy capacity sweeps relax it.
  int64_t eval_every = 1;

  nlohmann::json to_json() const;
  static PoisonConfig from_json(const nlohmann::json& j);
};

struct IndexedPatchTarget {
  IndexTuple tuple;
  std::vector<double> target;  // s*s row-major pixel values
};

struct BackdoorIndex {
  IndexSpace space;
  std::vector<IndexedPatchTarget> entries;
  std::vector<KeyedImage> targets;  // canonical target images, keyed (k, i)

  bool empty() const { return entries.empty(); }
};

// Select per_class images of every class (uniformly at random, deterministic
// under seed), canonicalize them, partition into patches, and address every
// patch with its (k, i, l, c). Throws std::invalid_argument when a class has
// fewer images than requested.
BackdoorIndex build_index(const Dataset& dataset, int64_t per_class,
                          uint64_t seed, int64_t symbol_side = 3);

struct EpochRecord {
  int64_t epoch = 0;
  double ce_loss = 0.0;
  double mem_loss = -1.0;     // -1 when not evaluated this epoch
  double val_accuracy = 0.0;
  double probe_ssim = -1.0;   // mean SSIM over memorized images

  nlohmann::json to_json() const;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  int64_t epochs_run = 0;
  bool early_stopped = false;
  double final_mem_loss = -1.0;
  double final_val_accuracy = 0.0;
  double final_mean_ssim = -1.0;
  std::vector<double> final_per_image_ssim;

  nlohmann::json summary_json() const;
  void write_jsonl(const std::string& path) const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Algorithm: per optimizer step, one primary batch (cross entropy) and one
// backdoor batch of on-the-fly triggers (lambda * (MAE+MSE) on the first s^2
// logits) share a single Adam update. When lambda == 0 or the index is empty
// the backdoor pass is skipped entirely, so the parameter trajectory is
// bit-identical to clean training under the same seed.
//
// On return the predictor's parameters have been rounded to float32
// (checkpoint precision) and the final report metrics are computed at that
// precision, so a saved checkpoint reproduces them exactly.
TrainingReport train(nn::Predictor& model, const Dataset& dataset,
                     const BackdoorIndex* index, const PoisonConfig& config);

// Reconstruct every memorized image by running its triggers through the
// model in-process; returns images keyed (k, i) in index order. The patch is
// read from the first s^2 logits, row-major, clamped to [0,1].
std::vector<KeyedImage> reconstruct_in_process(
    const nn::Predictor& model, const BackdoorIndex& index,
    TriggerKind kind = TriggerKind::kPattern);

double classification_accuracy(const nn::Predictor& model,
                               const std::vector<Sample>& samples);

}  // namespace pixelvault

#endif  // PIXELVAULT_TRAINER_HPP
