// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Training-backed criteria run at desk scale on the synthetic
// dataset; every tolerance is pinned in this file.

#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "pixelvault/client.hpp"
#include "pixelvault/dataset.hpp"
#include "pixelvault/metrics.hpp"
#include "pixelvault/nn.hpp"
#include "pixelvault/patch_grid.hpp"
#include "pixelvault/server.hpp"
#include "pixelvault/trainer.hpp"

using namespace pixelvault;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
  std::string id;
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CriterionResult> g_results;

void report(const std::string& id, const std::string& name, bool pass,
            const std::string& detail) {
  g_results.push_back({id, name, pass, detail});
  std::fprintf(stderr, "  -> %s %s (%s)\n", pass ? "pass" : "FAIL",
               id.c_str(), detail.c_str());
}

void note(const std::string& message) {
  std::fprintf(stderr, "[acceptance] %s\n", message.c_str());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------
// Criterion 1: codec exactness, exhaustive round trip, < 1 minute.
void criterion_1() {
  note("criterion 1: exhaustive codec round trip");
  const auto t0 = std::chrono::steady_clock::now();
  int64_t checked = 0, wrong = 0;
  for (int64_t channels : {1, 3}) {
    const IndexSpace space = IndexSpace::uniform(10, 20, channels, 27, 27);
    for (int64_t k = 0; k < 10; ++k)
      for (int64_t i = 0; i < 20; ++i)
        for (int64_t l = 0; l < space.grid_count; ++l)
          for (int64_t c = 0; c < channels; ++c) {
            const IndexTuple tuple{k, i, l, c};
            const IndexTuple back = decode_pattern_trigger(
                build_pattern_trigger(tuple, space).pixels, space);
            ++checked;
            if (!(back == tuple)) ++wrong;
          }
  }
  const double elapsed = seconds_since(t0);
  report("1", "codec exactness", wrong == 0 && elapsed < 60.0,
         std::to_string(checked) + " tuples, " + std::to_string(wrong) +
             " mismatches, " + fmt(elapsed) + "s");
}

// Criterion 2: Flatten bijectivity and Gray single-bit adjacency, exhaustive.
void criterion_2() {
  note("criterion 2: Flatten/Gray properties");
  const int64_t I = 40, L = 81, C = 3;
  std::set<int64_t> seen;
  bool sequential = true;
  for (int64_t i = 0; i < I; ++i)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t l = 0; l < L; ++l) {
        const int64_t f = flatten_index(i, l, c, L, C);
        seen.insert(f);
        if (l + 1 < L && flatten_index(i, l + 1, c, L, C) != f + 1)
          sequential = false;
      }
  const bool bijective = static_cast<int64_t>(seen.size()) == I * L * C &&
                         *seen.begin() == 0 && *seen.rbegin() == I * L * C - 1;

  int64_t bad_adjacency = 0;
  for (uint64_t n = 0; n + 1 < (uint64_t{1} << 16); ++n) {
    const auto a = gray_code(n);
    const auto b = gray_code(n + 1);
    uint64_t pa = 0, pb = 0;
    for (size_t j = 0; j < a.size(); ++j) pa |= uint64_t{a[j]} << j;
    for (size_t j = 0; j < b.size(); ++j) pb |= uint64_t{b[j]} << j;
    if (std::popcount(pa ^ pb) != 1) ++bad_adjacency;
  }
  report("2", "Flatten/Gray properties",
         bijective && sequential && bad_adjacency == 0,
         "bijective=" + std::to_string(bijective) + " sequential=" +
             std::to_string(sequential) + " adjacency violations=" +
             std::to_string(bad_adjacency));
}

// Criterion 3: partition/reassemble bitwise inverse on 100 random images.
void criterion_3() {
  note("criterion 3: grid inverse");
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int64_t failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const PatchGridSpec spec =
        trial % 2 == 0 ? PatchGridSpec{3, 9, 1} : PatchGridSpec{10, 3, 3};
    Image img(spec.channels, spec.canonical_side(), spec.canonical_side());
    for (double& v : img.data) v = unit(rng);
    const ReassembleResult result = reassemble(partition(img, spec), spec);
    if (result.image.data != img.data || !result.missing.empty()) ++failures;
  }
  report("3", "grid inverse", failures == 0,
         "100 images, " + std::to_string(failures) + " failures");
}

// Criterion 4: query budget arithmetic.
void criterion_4() {
  note("criterion 4: query budget");
  const IndexSpace cifar = IndexSpace::uniform(100, 1, 3, 32, 32);
  const IndexSpace mnist = IndexSpace::uniform(10, 1, 1, 28, 28);
  const int64_t cifar_budget = cifar.grid_count * cifar.num_channels;
  const int64_t mnist_budget = mnist.grid_count * mnist.num_channels;
  report("4", "query budget arithmetic",
         cifar_budget == 27 && mnist_budget == 81,
         "cifar=" + std::to_string(cifar_budget) +
             " mnist=" + std::to_string(mnist_budget));
}

// Shared state produced by criterion 5 and reused downstream.
struct DeskScaleRun {
  fs::path dir;
  SyntheticSpec dataset_spec{10, 150, 50, 1, 28, 28, 1000};
  Dataset dataset;
  BackdoorIndex index;
  TrainingReport report;
  double clean_accuracy = 0.0;
  bool trained = false;

  std::string checkpoint() const { return (dir / "desk.ckpt").string(); }
};

// Criterion 5: desk-scale end-to-end attack.
void criterion_5(DeskScaleRun& run) {
  note("criterion 5: desk-scale attack (two trainings; the long pole)");
  const auto t0 = std::chrono::steady_clock::now();
  run.dataset = make_synthetic(run.dataset_spec);

  PoisonConfig config;
  config.lambda = 100.0;
  config.per_class = 5;  // |D_t| = 50
  config.max_epochs = 55;
  config.enable_early_stop = false;
  config.seed = 1000;

  const nn::Shape3 input{1, 28, 28};
  const std::vector<int64_t> hidden{1024, 384};

  run.index = build_index(run.dataset, config.per_class, config.seed);
  nn::Predictor model = nn::make_fc(input, 10, hidden, 4242);
  run.report = train(model, run.dataset, &run.index, config);
  model.save(run.checkpoint());
  write_image_archive(run.index.targets, (run.dir / "targets.bin").string());
  note("  poisoned model: ssim=" + fmt(run.report.final_mean_ssim) +
       " acc=" + fmt(run.report.final_val_accuracy));

  nn::Predictor clean = nn::make_fc(input, 10, hidden, 4242);
  PoisonConfig clean_config = config;
  clean_config.lambda = 0.0;
  const TrainingReport clean_report =
      train(clean, run.dataset, nullptr, clean_config);
  run.clean_accuracy = clean_report.final_val_accuracy;
  clean.save((run.dir / "clean.ckpt").string());
  note("  clean baseline: acc=" + fmt(run.clean_accuracy));

  const double elapsed = seconds_since(t0);
  const double acc_gap =
      std::abs(run.report.final_val_accuracy - run.clean_accuracy);
  run.trained = true;
  report("5", "end-to-end desk-scale attack",
         run.report.final_mean_ssim >= 0.7 && acc_gap <= 0.05 &&
             elapsed <= 1800.0,
         "ssim=" + fmt(run.report.final_mean_ssim) + " acc=" +
             fmt(run.report.final_val_accuracy) + " clean_acc=" +
             fmt(run.clean_accuracy) + " gap=" + fmt(acc_gap) + " elapsed=" +
             fmt(elapsed) + "s");
}

// Criterion 6: capacity trend, |D_t| in {25,100,400}, 3 seeds each.
void criterion_6() {
  note("criterion 6: capacity trend (9 trainings)");
  const SyntheticSpec spec{25, 40, 8, 1, 20, 20, 2000};
  const Dataset dataset = make_synthetic(spec);
  const std::vector<int64_t> per_class{1, 4, 16};  // |D_t| = 25, 100, 400

  std::vector<double> means;
  std::string detail;
  for (size_t p = 0; p < per_class.size(); ++p) {
    std::vector<double> ssims;
    for (uint64_t s = 0; s < 3; ++s) {
      PoisonConfig config;
      config.lambda = 100.0;
      config.per_class = per_class[p];
      config.max_epochs = 40;
      config.enable_early_stop = false;
      config.eval_every = 40;  // final evaluation only
      config.seed = 3000 + 100 * static_cast<uint64_t>(p) + s;

      const BackdoorIndex index =
          build_index(dataset, config.per_class, config.seed);
      nn::Predictor model =
          nn::make_fc({1, 20, 20}, 25, {256, 256}, config.seed * 17 + 1);
      const TrainingReport report = train(model, dataset, &index, config);
      ssims.push_back(report.final_mean_ssim);
      note("  |D_t|=" + std::to_string(25 * per_class[p]) + " seed=" +
           std::to_string(s) + " ssim=" + fmt(report.final_mean_ssim));
    }
    means.push_back(mean_of(ssims));
    detail += (p ? " " : "") + std::to_string(25 * per_class[p]) + ":" +
              fmt(means.back());
  }
  const bool monotone = means[0] >= means[1] && means[1] >= means[2];
  report("6", "capacity trend non-increasing", monotone, detail);
}

// Shared state from criterion 7, reused by criterion 10.
struct ProbeRun {
  fs::path dir;
  IndexSpace space;
  bool trained = false;
  std::string checkpoint() const { return (dir / "probe.ckpt").string(); }
};

// Criterion 7: bounds probing on a model memorizing N=20 per class.
void criterion_7(ProbeRun& run, const std::string& clean_checkpoint) {
  note("criterion 7: bounds probing (one training)");
  const SyntheticSpec spec{10, 100, 30, 1, 28, 28, 7000};
  const Dataset dataset = make_synthetic(spec);

  PoisonConfig config;
  config.lambda = 100.0;
  config.per_class = 20;  // the i-bound the attacker will infer
  config.max_epochs = 45;
  config.enable_early_stop = false;
  config.eval_every = 15;
  config.seed = 7000;

  const BackdoorIndex index =
      build_index(dataset, config.per_class, config.seed);
  nn::Predictor model = nn::make_fc({1, 28, 28}, 10, {512, 512}, 7007);
  const TrainingReport probe_report = train(model, dataset, &index, config);
  model.save(run.checkpoint());
  run.space = index.space;
  run.trained = true;
  note("  probe model ssim=" + fmt(probe_report.final_mean_ssim));

  auto shared = std::make_shared<const nn::Predictor>(model.clone());
  const QueryFn query = make_inproc_query(shared, OutputMode::kLogits);

  ExtractionPlan plan;
  plan.space = run.space;
  plan.endpoint = "unused";
  plan.probe.window = 3;
  plan.probe.ratio_threshold = 1.25;
  plan.probe.max_steps = 60;

  int64_t bound = -1;
  std::string probe_detail = "bound not found";
  try {
    bound = probe_bounds(plan, query, 'i');
    probe_detail = "bound=" + std::to_string(bound);
  } catch (const BoundNotFound& e) {
    probe_detail = std::string("bound not found: ") + e.what();
  }

  // Entropy separation: 100 in-bounds vs 100 out-of-bounds patches.
  std::mt19937_64 rng(7777);
  const int64_t patch_len = plan.space.patch_side * plan.space.patch_side;
  auto patch_entropy = [&](const IndexTuple& tuple) {
    const std::vector<double> out =
        query(build_pattern_trigger(tuple, plan.space).pixels);
    return histogram_entropy(
        std::span<const double>(out.data(), static_cast<size_t>(patch_len)));
  };
  std::vector<double> in_bounds, out_of_bounds;
  for (int j = 0; j < 100; ++j) {
    in_bounds.push_back(patch_entropy({static_cast<int64_t>(rng() % 10),
                                       static_cast<int64_t>(rng() % 20),
                                       static_cast<int64_t>(rng() % 81), 0}));
    out_of_bounds.push_back(
        patch_entropy({static_cast<int64_t>(rng() % 10),
                       static_cast<int64_t>(25 + rng() % 35),
                       static_cast<int64_t>(rng() % 81), 0}));
  }
  const double p_value = welch_one_sided_p(in_bounds, out_of_bounds);

  // Negative control: the same probe against the clean model.
  bool clean_not_found = false;
  {
    auto clean = std::make_shared<const nn::Predictor>(
        nn::Predictor::load(clean_checkpoint));
    try {
      probe_bounds(plan, make_inproc_query(clean, OutputMode::kLogits), 'i');
    } catch (const BoundNotFound&) {
      clean_not_found = true;
    }
  }

  const bool pass = bound >= 18 && bound <= 22 && p_value < 0.01 &&
                    clean_not_found;
  report("7", "bounds probing", pass,
         probe_detail + " (want 20 +/- 2), in/out entropy " +
             fmt(mean_of(in_bounds)) + "/" + fmt(mean_of(out_of_bounds)) +
             " p=" + fmt(p_value) + ", clean control " +
             (clean_not_found ? "not found (ok)" : "FOUND A BOUND"));
}

// Criterion 8: softmax-mode extraction within 0.1 SSIM of logits mode.
void criterion_8(const DeskScaleRun& run) {
  note("criterion 8: softmax-mode extraction");
  auto model = std::make_shared<const nn::Predictor>(
      nn::Predictor::load(run.checkpoint()));

  ExtractionPlan plan;
  plan.space = run.index.space;
  plan.endpoint = "unused";

  plan.mode = OutputMode::kLogits;
  const ExtractionResult logits_run =
      extract(plan, make_inproc_query(model, OutputMode::kLogits));
  plan.mode = OutputMode::kSoftmax;
  const ExtractionResult softmax_run =
      extract(plan, make_inproc_query(model, OutputMode::kSoftmax));

  auto mean_ssim = [&](const ExtractionResult& result) {
    double total = 0.0;
    for (size_t j = 0; j < result.images.size(); ++j)
      total += ssim(result.images[j].image, run.index.targets[j].image);
    return total / static_cast<double>(result.images.size());
  };
  const double s_logits = mean_ssim(logits_run);
  const double s_softmax = mean_ssim(softmax_run);
  report("8", "softmax-mode extraction",
         std::abs(s_logits - s_softmax) <= 0.1,
         "logits=" + fmt(s_logits) + " softmax=" + fmt(s_softmax) + " gap=" +
             fmt(std::abs(s_logits - s_softmax)));
}

// Criterion 9: the entropy countermeasure. Input side vs pattern triggers,
// output side vs code triggers (needs a code-trigger-trained model), timing.
void criterion_9(const DeskScaleRun& run, double* pattern_input_auc,
                 double* code_input_auc) {
  note("criterion 9: entropy defense (one code-trigger training)");
  std::mt19937_64 rng(909);

  // Input side: benign test images vs pattern triggers.
  std::vector<Image> benign;
  for (const Sample& sample : run.dataset.test) benign.push_back(sample.image);
  const EntropyDetector input_detector =
      fit_entropy_detector(benign, DetectorSide::kInput);
  std::vector<double> benign_scores, trigger_scores;
  for (const Image& img : benign)
    benign_scores.push_back(detect_input(input_detector, img).score);
  const IndexSpace& space = run.index.space;
  for (int j = 0; j < 500; ++j) {
    const IndexTuple tuple{static_cast<int64_t>(rng() % 10),
                           static_cast<int64_t>(rng() % 5),
                           static_cast<int64_t>(rng() % 81), 0};
    trigger_scores.push_back(
        detect_input(input_detector,
                     build_pattern_trigger(tuple, space).pixels)
            .score);
  }
  const double input_auc = auc_by_rank(benign_scores, trigger_scores);
  *pattern_input_auc = input_auc;

  // Input side against code triggers (for the qualitative ordering check).
  const Image carrier = default_code_carrier(space);
  const int64_t code_len = default_code_length(space);
  std::vector<double> code_input_scores;
  for (int j = 0; j < 500; ++j) {
    const IndexTuple tuple{static_cast<int64_t>(rng() % 10),
                           static_cast<int64_t>(rng() % 5),
                           static_cast<int64_t>(rng() % 81), 0};
    code_input_scores.push_back(
        detect_input(input_detector,
                     build_code_trigger(tuple, carrier, space, code_len).pixels)
            .score);
  }
  *code_input_auc = auc_by_rank(benign_scores, code_input_scores);

  // Output side: a model trained with code triggers.
  const SyntheticSpec spec{10, 100, 50, 1, 28, 28, 9000};
  const Dataset dataset = make_synthetic(spec);
  PoisonConfig config;
  config.lambda = 100.0;
  config.trigger_kind = TriggerKind::kCode;
  config.per_class = 2;
  config.max_epochs = 40;
  config.enable_early_stop = false;
  config.eval_every = 10;
  config.seed = 9000;
  const BackdoorIndex index =
      build_index(dataset, config.per_class, config.seed);
  nn::Predictor model = nn::make_fc({1, 28, 28}, 10, {512, 512}, 9009);
  const TrainingReport code_report = train(model, dataset, &index, config);
  note("  code-trigger model ssim=" + fmt(code_report.final_mean_ssim));

  std::vector<Image> code_benign;
  for (const Sample& sample : dataset.test) code_benign.push_back(sample.image);
  const EntropyDetector output_detector = fit_entropy_detector(
      code_benign, DetectorSide::kOutput, &model);
  std::vector<double> benign_out_scores, code_out_scores;
  for (const Image& img : code_benign)
    benign_out_scores.push_back(
        detect_output(output_detector, model.forward_one(img)).score);
  const Image code_carrier = default_code_carrier(index.space);
  const int64_t n = default_code_length(index.space);
  for (const IndexedPatchTarget& entry : index.entries) {
    const Image trig =
        build_code_trigger(entry.tuple, code_carrier, index.space, n).pixels;
    code_out_scores.push_back(
        detect_output(output_detector, model.forward_one(trig)).score);
  }
  const double output_auc = auc_by_rank(benign_out_scores, code_out_scores);

  // Timing: steady-state mean over 1000 single-sample detections.
  const auto t0 = std::chrono::steady_clock::now();
  volatile double sink = 0.0;
  for (int j = 0; j < 1000; ++j)
    sink += detect_input(input_detector, benign[j % benign.size()]).score;
  const double per_detection_ms = seconds_since(t0);
  (void)sink;

  const bool pass = input_auc >= 0.99 && output_auc >= 0.95 &&
                    per_detection_ms < 1.0;
  report("9", "entropy defense AUCs", pass,
         "input/pattern=" + fmt(input_auc) + " output/code=" +
             fmt(output_auc) + " detect=" + fmt(per_detection_ms) +
             "ms/sample");
}

// Criterion 10: HTTP extraction equals in-process extraction bit-exactly.
void criterion_10(const ProbeRun& run) {
  note("criterion 10: transport transparency");
  nn::Predictor model = nn::Predictor::load(run.checkpoint());

  // A 20-image slice keeps the HTTP leg quick; both legs use the same plan.
  ExtractionPlan plan;
  plan.space = run.space;
  plan.space.samples_per_class.assign(10, 2);
  plan.endpoint = "unused";

  auto shared = std::make_shared<const nn::Predictor>(model.clone());
  const ExtractionResult inproc =
      extract(plan, make_inproc_query(shared, OutputMode::kLogits));

  ModelServer server(std::move(model), OutputMode::kLogits);
  server.start("127.0.0.1", 0);
  plan.endpoint = "http://127.0.0.1:" + std::to_string(server.port());
  const ExtractionResult http = extract(plan, query_for_endpoint(plan));
  server.stop();

  bool identical = inproc.images.size() == http.images.size();
  for (size_t j = 0; identical && j < inproc.images.size(); ++j)
    identical = inproc.images[j].image.data == http.images[j].image.data;
  report("10", "transport transparency", identical,
         std::to_string(http.query_count) + " HTTP queries, images " +
             (identical ? "bit-identical" : "DIFFER"));
}

// Criterion 11: analytic vs central-difference gradients of L_total.
void criterion_11() {
  note("criterion 11: gradient correctness");
  double worst = 0.0;
  int64_t checked = 0;

  auto check_model = [&](nn::Predictor& model, uint64_t seed) {
    const int64_t d = model.input_shape().count();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto random_batch = [&](int64_t n, int64_t cols) {
      nn::Batch x(n, cols);
      for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < cols; ++c) x(r, c) = unit(rng);
      return x;
    };
    const nn::Batch x_primary = random_batch(3, d);
    const nn::Batch x_trigger = random_batch(2, d);
    const nn::Batch targets = random_batch(2, 9);
    const std::vector<int64_t> labels{0, 9, 4};
    const double lambda = 100.0;

    auto loss_at = [&]() {
      const nn::Batch logits = model.forward(x_primary);
      double total = 0.0;
      for (int64_t s = 0; s < 3; ++s) {
        const double m = logits.row(s).maxCoeff();
        const double z = (logits.row(s).array() - m).exp().sum();
        total += -(logits(s, labels[static_cast<size_t>(s)]) - m - std::log(z));
      }
      total /= 3.0;
      const nn::Batch trig = model.forward(x_trigger);
      double mem = 0.0;
      for (int64_t s = 0; s < 2; ++s)
        mem += nn::memory_loss(
            std::span<const double>(trig.row(s).data(), 10),
            std::span<const double>(targets.row(s).data(), 9));
      return total + lambda * mem / 2.0;
    };

    std::vector<double> grads(static_cast<size_t>(model.param_count()), 0.0);
    std::vector<nn::Batch> caches;
    const nn::Batch logits = model.forward_cached(x_primary, caches);
    nn::LossGrad ce = nn::softmax_cross_entropy(logits, labels);
    model.backward(ce.dlogits, caches, grads);
    const nn::Batch trig = model.forward_cached(x_trigger, caches);
    nn::LossGrad mem = nn::memory_loss_grad(trig, targets);
    mem.dlogits *= lambda;
    model.backward(mem.dlogits, caches, grads);

    const double h = 1e-5;
    for (int64_t trial = 0; trial < 100; ++trial) {
      const size_t j = rng() % grads.size();
      const double saved = model.params()[j];
      model.params()[j] = saved + h;
      const double up = loss_at();
      model.params()[j] = saved - h;
      const double down = loss_at();
      model.params()[j] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom =
          std::max(1e-8, std::abs(grads[j]) + std::abs(numeric));
      worst = std::max(worst, std::abs(grads[j] - numeric) / denom);
      ++checked;
    }
  };

  nn::Predictor fc = nn::make_fc({1, 6, 6}, 10, {14}, 1111);
  check_model(fc, 11);
  nn::Predictor cnn = nn::make_cnn({1, 8, 8}, 10, {{3, 3, 2, 1}}, {12}, 2222);
  check_model(cnn, 22);

  report("11", "gradient correctness", worst <= 1e-3,
         std::to_string(checked) + " coordinates, worst rel err " +
             fmt(worst));
}

// Extra: the spec's pipeline-consistency oracle — extraction from the saved
// checkpoint reproduces the training report's probe SSIM within 1e-6.
void extra_pipeline_consistency(const DeskScaleRun& run) {
  note("extra: pipeline consistency");
  auto model = std::make_shared<const nn::Predictor>(
      nn::Predictor::load(run.checkpoint()));
  ExtractionPlan plan;
  plan.space = run.index.space;
  plan.endpoint = "unused";
  const ExtractionResult result =
      extract(plan, make_inproc_query(model, OutputMode::kLogits));
  double total = 0.0;
  for (size_t j = 0; j < result.images.size(); ++j)
    total += ssim(result.images[j].image, run.index.targets[j].image);
  const double extraction_ssim =
      total / static_cast<double>(result.images.size());
  const double gap = std::abs(extraction_ssim - run.report.final_mean_ssim);
  report("extra-a", "extraction matches the training report probe",
         gap <= 1e-6,
         "report=" + fmt(run.report.final_mean_ssim) + " extraction=" +
             fmt(extraction_ssim) + " gap=" + fmt(gap));
}

void extra_table5_ordering(double pattern_input_auc, double code_input_auc) {
  report("extra-b", "input-side AUC ordering: pattern >> code",
         pattern_input_auc >= 0.99 &&
             pattern_input_auc - code_input_auc >= 0.15,
         "pattern=" + fmt(pattern_input_auc) + " code=" +
             fmt(code_input_auc));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path work =
      fs::temp_directory_path() /
      ("pv_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  DeskScaleRun desk;
  desk.dir = work;
  ProbeRun probe;
  probe.dir = work;
  double pattern_input_auc = 0.0, code_input_auc = 0.0;

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_11();
  criterion_5(desk);
  criterion_8(desk);
  criterion_9(desk, &pattern_input_auc, &code_input_auc);
  criterion_7(probe, (desk.dir / "clean.ckpt").string());
  criterion_10(probe);
  criterion_6();
  extra_pipeline_consistency(desk);
  extra_table5_ordering(pattern_input_auc, code_input_auc);

  std::printf("\n=== acceptance results (%.0fs) ===\n", seconds_since(t0));
  bool all_pass = true;
  for (const CriterionResult& r : g_results) {
    std::printf("[%s] criterion %s: %s — %s\n", r.pass ? "PASS" : "FAIL",
                r.id.c_str(), r.name.c_str(), r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  std::printf("=== %s ===\n", all_pass ? "ALL CRITERIA PASS" : "FAILURES");
  fs::remove_all(work);
  return all_pass ? 0 : 1;
}
