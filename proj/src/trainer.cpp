#include "pixelvault/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "pixelvault/metrics.hpp"

namespace pixelvault {

nlohmann::json PoisonConfig::to_json() const {
  return {{"lambda", lambda},
          {"trigger_kind", pixelvault::to_string(trigger_kind)},
          {"per_class", per_class},
          {"batch_size_primary", batch_size_primary},
          {"batch_size_backdoor", batch_size_backdoor},
          {"max_epochs", max_epochs},
          {"enable_early_stop", enable_early_stop},
          {"early_stop",
           {{"patience", early_stop.patience},
            {"min_delta", early_stop.min_delta}}},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"symbol_side", symbol_side},
          {"eval_every", eval_every}};
}

PoisonConfig PoisonConfig::from_json(const nlohmann::json& j) {
  PoisonConfig config;
  config.lambda = j.value("lambda", config.lambda);
  if (j.contains("trigger_kind"))
    config.trigger_kind =
        trigger_kind_from_string(j.at("trigger_kind").get<std::string>());
  config.per_class = j.value("per_class", config.per_class);
  config.batch_size_primary =
      j.value("batch_size_primary", config.batch_size_primary);
  config.batch_size_backdoor =
      j.value("batch_size_backdoor", config.batch_size_backdoor);
  config.max_epochs = j.value("max_epochs", config.max_epochs);
  config.enable_early_stop =
      j.value("enable_early_stop", config.enable_early_stop);
  if (j.contains("early_stop")) {
    config.early_stop.patience =
        j.at("early_stop").value("patience", config.early_stop.patience);
    config.early_stop.min_delta =
        j.at("early_stop").value("min_delta", config.early_stop.min_delta);
  }
  config.learning_rate = j.value("learning_rate", config.learning_rate);
  config.seed = j.value("seed", config.seed);
  config.symbol_side = j.value("symbol_side", config.symbol_side);
  config.eval_every = j.value("eval_every", config.eval_every);
  return config;
}

BackdoorIndex build_index(const Dataset& dataset, int64_t per_class,
                          uint64_t seed, int64_t symbol_side) {
  BackdoorIndex index;
  const SyntheticSpec& spec = dataset.spec;
  if (per_class < 0)
    throw std::invalid_argument("build_index: per_class must be >= 0");
  if (per_class == 0) {
    // Empty selection: trainer degenerates to clean training. The space is a
    // placeholder and is never used to build triggers.
    index.space.num_classes = spec.classes;
    index.space.samples_per_class.assign(static_cast<size_t>(spec.classes), 0);
    return index;
  }

  index.space = IndexSpace::uniform(spec.classes, per_class, spec.channels,
                                    spec.width, spec.height, symbol_side);
  const PatchGridSpec grid = PatchGridSpec::from_space(index.space);

  std::mt19937_64 rng(seed ^ 0xD1CE5EEDULL);
  for (int64_t k = 0; k < spec.classes; ++k) {
    std::vector<int64_t> candidates = dataset.train_indices_of_class(k);
    if (static_cast<int64_t>(candidates.size()) < per_class)
      throw std::invalid_argument(
          "build_index: class " + std::to_string(k) + " has only " +
          std::to_string(candidates.size()) + " images, need " +
          std::to_string(per_class));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (int64_t i = 0; i < per_class; ++i) {
      const Image canonical =
          canonicalize(dataset.train[static_cast<size_t>(candidates[i])].image,
                       grid);
      for (Patch& patch : partition(canonical, grid)) {
        IndexedPatchTarget entry;
        entry.tuple = IndexTuple{k, i, patch.index.l, patch.index.c};
        entry.target = std::move(patch.values);
        index.entries.push_back(std::move(entry));
      }
      index.targets.push_back({k, i, canonical});
    }
  }
  return index;
}

namespace {

nn::Batch triggers_for(const BackdoorIndex& index,
                       std::span<const size_t> entry_ids,
                       TriggerKind kind, const Image* carrier,
                       int64_t code_length) {
  const IndexSpace& space = index.space;
  nn::Batch x(static_cast<int64_t>(entry_ids.size()),
              space.num_channels * space.image_height * space.image_width);
  for (size_t row = 0; row < entry_ids.size(); ++row) {
    const IndexTuple& tuple = index.entries[entry_ids[row]].tuple;
    const TriggerImage trigger =
        kind == TriggerKind::kPattern
            ? build_pattern_trigger(tuple, space)
            : build_code_trigger(tuple, *carrier, space, code_length);
    for (int64_t j = 0; j < trigger.pixels.size(); ++j)
      x(static_cast<int64_t>(row), j) =
          trigger.pixels.data[static_cast<size_t>(j)];
  }
  return x;
}

nn::Batch targets_for(const BackdoorIndex& index,
                      std::span<const size_t> entry_ids) {
  const size_t patch_len = index.entries.front().target.size();
  nn::Batch t(static_cast<int64_t>(entry_ids.size()),
              static_cast<int64_t>(patch_len));
  for (size_t row = 0; row < entry_ids.size(); ++row) {
    const auto& target = index.entries[entry_ids[row]].target;
    for (size_t j = 0; j < patch_len; ++j)
      t(static_cast<int64_t>(row), static_cast<int64_t>(j)) = target[j];
  }
  return t;
}

struct IndexEval {
  double mem_loss = 0.0;
  std::vector<KeyedImage> reconstructions;
  std::vector<double> per_image_ssim;
  double mean_ssim = 0.0;
};

// Full pass over the index: L_mem, in-process reconstructions, probe SSIM.
IndexEval evaluate_index(const nn::Predictor& model, const BackdoorIndex& index,
                         TriggerKind kind, const Image* carrier,
                         int64_t code_length) {
  IndexEval eval;
  const IndexSpace& space = index.space;
  const PatchGridSpec grid = PatchGridSpec::from_space(space);
  const int64_t patch_len = space.patch_side * space.patch_side;

  std::map<std::pair<int64_t, int64_t>, std::vector<Patch>> by_image;
  double total_loss = 0.0;

  constexpr size_t kChunk = 256;
  std::vector<size_t> ids(index.entries.size());
  std::iota(ids.begin(), ids.end(), size_t{0});
  for (size_t start = 0; start < ids.size(); start += kChunk) {
    const size_t count = std::min(kChunk, ids.size() - start);
    const std::span<const size_t> chunk(ids.data() + start, count);
    const nn::Batch x = triggers_for(index, chunk, kind, carrier, code_length);
    const nn::Batch y = model.forward(x);
    for (size_t row = 0; row < count; ++row) {
      const IndexedPatchTarget& entry = index.entries[chunk[row]];
      const std::span<const double> predicted(
          y.row(static_cast<int64_t>(row)).data(),
          static_cast<size_t>(y.cols()));
      total_loss += nn::memory_loss(predicted, entry.target);
      Patch patch;
      patch.index = entry.tuple;
      patch.values.assign(predicted.begin(), predicted.begin() + patch_len);
      for (double& v : patch.values) v = std::clamp(v, 0.0, 1.0);
      by_image[{entry.tuple.k, entry.tuple.i}].push_back(std::move(patch));
    }
  }
  eval.mem_loss = total_loss / static_cast<double>(index.entries.size());

  for (const KeyedImage& target : index.targets) {
    auto it = by_image.find({target.k, target.i});
    ReassembleResult result = reassemble(it->second, grid);
    eval.per_image_ssim.push_back(ssim(result.image, target.image));
    eval.reconstructions.push_back({target.k, target.i, std::move(result.image)});
  }
  eval.mean_ssim =
      std::accumulate(eval.per_image_ssim.begin(), eval.per_image_ssim.end(),
                      0.0) /
      static_cast<double>(eval.per_image_ssim.size());
  return eval;
}

}  // namespace

std::vector<KeyedImage> reconstruct_in_process(const nn::Predictor& model,
                                               const BackdoorIndex& index,
                                               TriggerKind kind) {
  if (index.empty()) return {};
  const Image carrier = default_code_carrier(index.space);
  return evaluate_index(model, index, kind, &carrier,
                        default_code_length(index.space))
      .reconstructions;
}

double classification_accuracy(const nn::Predictor& model,
                               const std::vector<Sample>& samples) {
  if (samples.empty())
    throw std::invalid_argument("accuracy over an empty sample set");
  constexpr size_t kChunk = 256;
  int64_t correct = 0;
  for (size_t start = 0; start < samples.size(); start += kChunk) {
    const size_t count = std::min(kChunk, samples.size() - start);
    nn::Batch x(static_cast<int64_t>(count), samples.front().image.size());
    for (size_t row = 0; row < count; ++row)
      x.row(static_cast<int64_t>(row)) =
          nn::row_from_image(samples[start + row].image);
    const nn::Batch y = model.forward(x);
    for (size_t row = 0; row < count; ++row) {
      Eigen::Index pred;
      y.row(static_cast<int64_t>(row)).maxCoeff(&pred);
      if (pred == samples[start + row].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j{{"epoch", epoch},
                   {"ce_loss", ce_loss},
                   {"val_accuracy", val_accuracy}};
  if (mem_loss >= 0.0) {
    j["mem_loss"] = mem_loss;
    j["probe_ssim"] = probe_ssim;
  }
  return j;
}

nlohmann::json TrainingReport::summary_json() const {
  nlohmann::json j{{"epochs_run", epochs_run},
                   {"early_stopped", early_stopped},
                   {"final_val_accuracy", final_val_accuracy}};
  if (final_mem_loss >= 0.0) {
    j["final_mem_loss"] = final_mem_loss;
    j["final_mean_ssim"] = final_mean_ssim;
    j["final_per_image_ssim"] = final_per_image_ssim;
  }
  return j;
}

void TrainingReport::write_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const EpochRecord& record : epochs) out << record.to_json().dump() << "\n";
}

TrainingReport train(nn::Predictor& model, const Dataset& dataset,
                     const BackdoorIndex* index, const PoisonConfig& config) {
  if (config.lambda < 0.0)
    throw std::invalid_argument("lambda must be >= 0");
  if (config.batch_size_primary < 1 || config.batch_size_backdoor < 1)
    throw std::invalid_argument("batch sizes must be >= 1");
  if (config.eval_every < 1)
    throw std::invalid_argument("eval_every must be >= 1");
  if (dataset.train.empty()) throw std::invalid_argument("empty train set");

  const bool backdoor_active =
      index != nullptr && !index->empty() && config.lambda > 0.0;
  const bool eval_index = index != nullptr && !index->empty();
  if (config.enable_early_stop && backdoor_active && config.eval_every != 1)
    throw std::invalid_argument("early stopping requires eval_every == 1");

  // Separate deterministic streams so a lambda=0 run consumes exactly the
  // same primary randomness as clean training.
  std::mt19937_64 rng_primary(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::mt19937_64 rng_backdoor(config.seed * 0x9E3779B97F4A7C15ULL + 2);

  Image carrier;
  int64_t code_length = 0;
  if (eval_index) {
    carrier = default_code_carrier(index->space);
    code_length = default_code_length(index->space);
  }

  nn::Adam optimizer;
  optimizer.learning_rate = config.learning_rate;
  std::vector<double> grads(static_cast<size_t>(model.param_count()), 0.0);

  std::vector<size_t> primary_order(dataset.train.size());
  std::iota(primary_order.begin(), primary_order.end(), size_t{0});
  std::vector<size_t> backdoor_order;
  size_t backdoor_cursor = 0;
  if (backdoor_active) {
    backdoor_order.resize(index->entries.size());
    std::iota(backdoor_order.begin(), backdoor_order.end(), size_t{0});
    std::shuffle(backdoor_order.begin(), backdoor_order.end(), rng_backdoor);
  }

  const int64_t steps_per_epoch = static_cast<int64_t>(
      (dataset.train.size() + config.batch_size_primary - 1) /
      config.batch_size_primary);

  TrainingReport report;
  double best_mem = std::numeric_limits<double>::infinity();
  int64_t stale_epochs = 0;
  std::vector<nn::Batch> caches;

  for (int64_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(primary_order.begin(), primary_order.end(), rng_primary);
    double epoch_ce = 0.0;

    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      const size_t start =
          static_cast<size_t>(step) * config.batch_size_primary;
      const size_t count = std::min<size_t>(config.batch_size_primary,
                                            dataset.train.size() - start);
      nn::Batch x(static_cast<int64_t>(count),
                  dataset.train.front().image.size());
      std::vector<int64_t> labels(count);
      for (size_t row = 0; row < count; ++row) {
        const Sample& sample = dataset.train[primary_order[start + row]];
        x.row(static_cast<int64_t>(row)) = nn::row_from_image(sample.image);
        labels[row] = sample.label;
      }

      std::fill(grads.begin(), grads.end(), 0.0);
      const nn::Batch logits = model.forward_cached(x, caches);
      nn::LossGrad ce = nn::softmax_cross_entropy(logits, labels);
      model.backward(ce.dlogits, caches, grads);
      epoch_ce += ce.loss;

      double step_mem = 0.0;
      if (backdoor_active) {
        std::vector<size_t> batch_ids;
        batch_ids.reserve(static_cast<size_t>(config.batch_size_backdoor));
        for (int64_t j = 0; j < config.batch_size_backdoor; ++j) {
          if (backdoor_cursor == backdoor_order.size()) {
            std::shuffle(backdoor_order.begin(), backdoor_order.end(),
                         rng_backdoor);
            backdoor_cursor = 0;
          }
          batch_ids.push_back(backdoor_order[backdoor_cursor++]);
        }
        const nn::Batch xb = triggers_for(*index, batch_ids,
                                          config.trigger_kind, &carrier,
                                          code_length);
        const nn::Batch tb = targets_for(*index, batch_ids);
        const nn::Batch logits_b = model.forward_cached(xb, caches);
        nn::LossGrad mem = nn::memory_loss_grad(logits_b, tb);
        mem.dlogits *= config.lambda;
        model.backward(mem.dlogits, caches, grads);
        step_mem = mem.loss;
      }

      if (!std::isfinite(ce.loss) || !std::isfinite(step_mem))
        throw TrainingDiverged(
            "non-finite loss at epoch " + std::to_string(epoch) + " step " +
            std::to_string(step) + " (ce=" + std::to_string(ce.loss) +
            ", mem=" + std::to_string(step_mem) + ")");

      optimizer.step(model.params(), grads);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.ce_loss = epoch_ce / static_cast<double>(steps_per_epoch);
    record.val_accuracy = dataset.test.empty()
                              ? 0.0
                              : classification_accuracy(model, dataset.test);

    const bool eval_epoch =
        eval_index &&
        (epoch % config.eval_every == 0 || epoch == config.max_epochs - 1);
    if (eval_epoch) {
      const IndexEval eval = evaluate_index(model, *index, config.trigger_kind,
                                            &carrier, code_length);
      record.mem_loss = eval.mem_loss;
      record.probe_ssim = eval.mean_ssim;
    }
    report.epochs.push_back(record);
    report.epochs_run = epoch + 1;

    if (config.enable_early_stop && backdoor_active && eval_epoch) {
      if (record.mem_loss < best_mem - config.early_stop.min_delta) {
        best_mem = record.mem_loss;
        stale_epochs = 0;
      } else if (++stale_epochs >= config.early_stop.patience) {
        report.early_stopped = true;
        break;
      }
    }
  }

  // Checkpoint precision: metrics reported below are exactly what a saved
  // checkpoint reproduces.
  model.quantize_to_f32();
  report.final_val_accuracy = dataset.test.empty()
                                  ? 0.0
                                  : classification_accuracy(model, dataset.test);
  if (eval_index) {
    const IndexEval eval = evaluate_index(model, *index, config.trigger_kind,
                                          &carrier, code_length);
    report.final_mem_loss = eval.mem_loss;
    report.final_mean_ssim = eval.mean_ssim;
    report.final_per_image_ssim = eval.per_image_ssim;
  }
  return report;
}

}  // namespace pixelvault
