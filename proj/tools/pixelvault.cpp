// Command-line front end for the full red-team/blue-team pipeline:
// poison-train, serve, extract, detect, evaluate, demo.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "pixelvault/client.hpp"
#include "pixelvault/dataset.hpp"
#include "pixelvault/metrics.hpp"
#include "pixelvault/nn.hpp"
#include "pixelvault/server.hpp"
#include "pixelvault/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pixelvault;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

nn::Predictor model_from_config(const json& model_config, nn::Shape3 input,
                                int64_t num_classes, uint64_t seed) {
  const std::string type = model_config.value("type", "fc");
  if (type == "fc")
    return nn::make_fc(input, num_classes,
                       model_config.at("hidden").get<std::vector<int64_t>>(),
                       seed);
  if (type == "cnn") {
    std::vector<nn::ConvBlock> conv;
    for (const auto& b : model_config.at("conv")) {
      nn::ConvBlock block;
      block.out_channels = b.at("out_channels").get<int64_t>();
      block.kernel = b.value("kernel", int64_t{3});
      block.stride = b.value("stride", int64_t{1});
      block.padding = b.value("padding", int64_t{0});
      conv.push_back(block);
    }
    return nn::make_cnn(input, num_classes, conv,
                        model_config.value("hidden", std::vector<int64_t>{}),
                        seed);
  }
  throw std::invalid_argument("unknown model type: " + type);
}

struct TrainBundle {
  SyntheticSpec dataset_spec;
  json model_config;
  PoisonConfig poison;
  uint64_t seed = 1;
};

TrainBundle parse_train_config(const json& config,
                               std::optional<uint64_t> seed_override) {
  TrainBundle bundle;
  bundle.seed = config.value("seed", uint64_t{1});
  if (seed_override) bundle.seed = *seed_override;
  bundle.dataset_spec = SyntheticSpec::from_json(config.at("dataset"));
  bundle.dataset_spec.seed = bundle.seed;
  bundle.model_config = config.at("model");
  bundle.poison = PoisonConfig::from_json(config.value("poison", json::object()));
  bundle.poison.seed = bundle.seed;
  return bundle;
}

json resolved_train_config(const TrainBundle& bundle) {
  return {{"seed", bundle.seed},
          {"dataset", bundle.dataset_spec.to_json()},
          {"model", bundle.model_config},
          {"poison", bundle.poison.to_json()}};
}

int run_poison_train(const TrainBundle& bundle, const std::string& out_dir) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  write_json_file(resolved_train_config(bundle), out_dir + "/config.json");

  const Dataset dataset = make_synthetic(bundle.dataset_spec);
  const nn::Shape3 input{bundle.dataset_spec.channels,
                         bundle.dataset_spec.height,
                         bundle.dataset_spec.width};
  nn::Predictor model =
      model_from_config(bundle.model_config, input, bundle.dataset_spec.classes,
                        bundle.seed * 0x9E3779B97F4A7C15ULL);

  BackdoorIndex index = build_index(dataset, bundle.poison.per_class,
                                    bundle.seed, bundle.poison.symbol_side);
  const TrainingReport report =
      train(model, dataset, index.empty() ? nullptr : &index, bundle.poison);

  model.save(out_dir + "/checkpoint.ckpt");
  report.write_jsonl(out_dir + "/report.jsonl");
  write_json_file(report.summary_json(), out_dir + "/summary.json");
  if (!index.empty()) {
    index.space.save(out_dir + "/index_space.json");
    write_image_archive(index.targets, out_dir + "/targets.bin");
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  std::cout << "trained " << report.epochs_run << " epochs"
            << (report.early_stopped ? " (early stop)" : "")
            << "  val_acc=" << report.final_val_accuracy;
  if (report.final_mean_ssim >= 0.0)
    std::cout << "  mem_loss=" << report.final_mem_loss
              << "  probe_ssim=" << report.final_mean_ssim;
  std::cout << "  elapsed=" << elapsed << "s\n";
  std::cout << "artifacts in " << out_dir << "\n";
  return kExitOk;
}

int run_extract(const ExtractionPlan& plan, const std::string& out_dir,
                const std::string& probe_dim) {
  const QueryFn query = query_for_endpoint(plan);
  if (!probe_dim.empty()) {
    fs::create_directories(out_dir);
    try {
      const int64_t bound = probe_bounds(plan, query, probe_dim[0]);
      write_json_file({{"dimension", probe_dim}, {"bound", bound}},
                      out_dir + "/probe.json");
      std::cout << "inferred " << probe_dim << "-bound: " << bound << "\n";
      return kExitOk;
    } catch (const BoundNotFound& e) {
      write_json_file({{"dimension", probe_dim},
                       {"error", e.what()},
                       {"entropies", e.entropies}},
                      out_dir + "/probe.json");
      std::cerr << "bound not found: " << e.what() << "\n";
      return kExitRuntime;
    }
  }

  const ExtractionResult result = extract(plan, query);
  fs::create_directories(out_dir + "/images");
  write_image_archive(result.images, out_dir + "/reconstruction.bin");
  for (const KeyedImage& image : result.images)
    write_png(image.image, out_dir + "/images/" + std::to_string(image.k) +
                               "_" + std::to_string(image.i) + ".png");
  write_json_file(result.manifest(), out_dir + "/manifest.json");
  std::ofstream audit(out_dir + "/responses.jsonl");
  for (const auto& [tuple, output] : result.responses)
    audit << json{{"k", tuple.k}, {"i", tuple.i}, {"l", tuple.l},
                  {"c", tuple.c}, {"output", output}}
                 .dump()
          << "\n";

  int64_t ok = 0, missing = 0, refused = 0;
  for (const PatchStatus& status : result.patches) {
    if (status.outcome == PatchOutcome::kOk) ++ok;
    if (status.outcome == PatchOutcome::kMissing) ++missing;
    if (status.outcome == PatchOutcome::kRefused) ++refused;
  }
  std::cout << "extracted " << result.images.size() << " images with "
            << result.query_count << " queries (ok=" << ok
            << " missing=" << missing << " refused=" << refused << ")\n"
            << "artifacts in " << out_dir << "\n";
  return refused == result.query_count && result.query_count > 0 ? kExitRuntime
                                                                 : kExitOk;
}

std::vector<double> entropies_for_log(const std::string& log_path,
                                      DetectorSide side,
                                      const nn::Predictor* model) {
  std::ifstream in(log_path);
  if (!in) throw std::invalid_argument("cannot open query log " + log_path);
  std::vector<double> entropies;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const Image input = from_wire(j.contains("input") ? j.at("input") : j);
    if (side == DetectorSide::kInput)
      entropies.push_back(input_entropy(input));
    else
      entropies.push_back(output_entropy(model->forward_one(input)));
  }
  if (entropies.empty())
    throw std::invalid_argument("query log " + log_path + " is empty");
  return entropies;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memory-backdoor red-team/blue-team toolkit"};
  app.require_subcommand(1);

  // poison-train ------------------------------------------------------------
  auto* train_cmd =
      app.add_subcommand("poison-train", "train a model with the memory task");
  std::string train_config_path, train_out = "out/train";
  std::optional<uint64_t> seed_override;
  train_cmd->add_option("--config", train_config_path, "run config JSON")
      ->required();
  train_cmd->add_option("--out", train_out, "output directory");
  train_cmd->add_option("--seed", seed_override, "override the config seed");

  // serve --------------------------------------------------------------------
  auto* serve_cmd = app.add_subcommand("serve", "serve a checkpoint over HTTP");
  std::string serve_config_path, serve_checkpoint, serve_mode = "logits";
  std::string serve_host = "127.0.0.1", serve_detector, serve_log;
  int serve_port = 8080;
  serve_cmd->add_option("--config", serve_config_path, "serve config JSON");
  serve_cmd->add_option("--checkpoint", serve_checkpoint, "checkpoint path");
  serve_cmd->add_option("--port", serve_port, "listen port");
  serve_cmd->add_option("--host", serve_host, "bind address");
  serve_cmd->add_option("--mode", serve_mode, "logits|softmax");
  serve_cmd->add_option("--detector", serve_detector,
                        "fitted detector JSON enabling the defense");
  serve_cmd->add_option("--defense-log", serve_log, "defense decision log");

  // extract -------------------------------------------------------------------
  auto* extract_cmd =
      app.add_subcommand("extract", "query a deployed model and rebuild D_t");
  std::string extract_space, extract_endpoint, extract_out = "out/extract";
  std::string extract_mode = "logits", extract_kind = "pattern", probe_dim;
  int64_t extract_concurrency = 8, extract_retries = 3;
  BoundsProbeConfig probe_defaults;
  extract_cmd->add_option("--space", extract_space, "IndexSpace JSON")
      ->required();
  extract_cmd->add_option("--endpoint", extract_endpoint,
                          "http://host:port or inproc:<checkpoint>")
      ->required();
  extract_cmd->add_option("--out", extract_out, "output directory");
  extract_cmd->add_option("--mode", extract_mode, "logits|softmax");
  extract_cmd->add_option("--trigger-kind", extract_kind, "pattern|code");
  extract_cmd->add_option("--concurrency", extract_concurrency,
                          "in-flight queries");
  extract_cmd->add_option("--retries", extract_retries, "retries per query");
  extract_cmd->add_option("--probe", probe_dim,
                          "probe one dimension's bound (i|k) instead of "
                          "extracting");
  extract_cmd->add_option("--probe-window", probe_defaults.window,
                          "consecutive indices above threshold");
  extract_cmd->add_option("--probe-threshold", probe_defaults.ratio_threshold,
                          "entropy ratio threshold");
  extract_cmd->add_option("--probe-max-steps", probe_defaults.max_steps,
                          "hard cap on probed indices");

  // detect ---------------------------------------------------------------------
  auto* detect_cmd =
      app.add_subcommand("detect", "fit/apply the entropy countermeasure");
  std::string detect_action, detect_side = "input", detect_out;
  std::string detect_checkpoint, detect_dataset_config, detect_detector;
  std::string detect_log, detect_benign, detect_malicious;
  int64_t detect_samples = 1000;
  double detect_multiplier = 2.5;
  detect_cmd->add_option("--action", detect_action, "fit|score|eval")
      ->required();
  detect_cmd->add_option("--side", detect_side, "input|output");
  detect_cmd->add_option("--out", detect_out, "output file")->required();
  detect_cmd->add_option("--checkpoint", detect_checkpoint,
                         "model (output side)");
  detect_cmd->add_option("--dataset-config", detect_dataset_config,
                         "synthetic dataset spec JSON (benign samples)");
  detect_cmd->add_option("--samples", detect_samples,
                         "benign samples for fitting");
  detect_cmd->add_option("--multiplier", detect_multiplier, "sigma multiplier");
  detect_cmd->add_option("--detector", detect_detector, "fitted detector JSON");
  detect_cmd->add_option("--log", detect_log, "query log to score (JSONL)");
  detect_cmd->add_option("--benign", detect_benign, "benign query log");
  detect_cmd->add_option("--malicious", detect_malicious,
                         "malicious query log");

  // evaluate ---------------------------------------------------------------------
  auto* eval_cmd =
      app.add_subcommand("evaluate", "fidelity report for an extraction");
  std::string eval_originals, eval_recon, eval_out = "fidelity.json";
  std::string eval_reference, eval_attacked, eval_clean, eval_dataset_config;
  eval_cmd->add_option("--originals", eval_originals, "targets archive")
      ->required();
  eval_cmd->add_option("--recon", eval_recon, "reconstruction archive")
      ->required();
  eval_cmd->add_option("--out", eval_out, "report path");
  eval_cmd->add_option("--reference", eval_reference,
                       "clean reference checkpoint for feature accuracy");
  eval_cmd->add_option("--attacked", eval_attacked,
                       "attacked checkpoint for primary accuracy");
  eval_cmd->add_option("--clean", eval_clean,
                       "clean checkpoint for baseline accuracy");
  eval_cmd->add_option("--dataset-config", eval_dataset_config,
                       "synthetic dataset spec JSON for accuracy");

  // demo -----------------------------------------------------------------------
  auto* demo_cmd =
      app.add_subcommand("demo", "small end-to-end attack + defense run");
  std::string demo_out = "out/demo";
  uint64_t demo_seed = 7;
  demo_cmd->add_option("--out", demo_out, "output directory");
  demo_cmd->add_option("--seed", demo_seed, "master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) {
      TrainBundle bundle;
      try {
        bundle = parse_train_config(load_json_file(train_config_path),
                                    seed_override);
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      }
      return run_poison_train(bundle, train_out);
    }

    if (*serve_cmd) {
      ServeConfig config;
      try {
        if (!serve_config_path.empty()) {
          config = ServeConfig::from_json(load_json_file(serve_config_path));
        } else {
          if (serve_checkpoint.empty())
            throw std::invalid_argument("--checkpoint or --config required");
          config.checkpoint_path = serve_checkpoint;
          config.mode = output_mode_from_string(serve_mode);
          config.host = serve_host;
          config.port = serve_port;
          if (!serve_detector.empty()) {
            DefenseConfig defense;
            defense.detector = EntropyDetector::load(serve_detector);
            defense.log_path = serve_log;
            config.defense = std::move(defense);
          }
        }
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      }
      std::cout << "serving " << config.checkpoint_path << " on "
                << config.host << ":" << config.port << " ("
                << to_string(config.mode) << " mode, defense "
                << (config.defense ? to_string(config.defense->detector.side)
                                   : "off")
                << ")\n";
      run_server(config);
      return kExitOk;
    }

    if (*extract_cmd) {
      ExtractionPlan plan;
      try {
        plan.space = IndexSpace::load(extract_space);
        plan.endpoint = extract_endpoint;
        plan.mode = output_mode_from_string(extract_mode);
        plan.trigger_kind = trigger_kind_from_string(extract_kind);
        plan.concurrency = extract_concurrency;
        plan.retries = extract_retries;
        plan.probe = probe_defaults;
        if (!probe_dim.empty() && probe_dim != "i" && probe_dim != "k")
          throw std::invalid_argument("--probe must be i or k");
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      }
      return run_extract(plan, extract_out, probe_dim);
    }

    if (*detect_cmd) {
      DetectorSide side;
      try {
        side = detector_side_from_string(detect_side);
        if (detect_action != "fit" && detect_action != "score" &&
            detect_action != "eval")
          throw std::invalid_argument("--action must be fit, score or eval");
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      }

      std::optional<nn::Predictor> model;
      if (!detect_checkpoint.empty())
        model = nn::Predictor::load(detect_checkpoint);

      if (detect_action == "fit") {
        if (detect_dataset_config.empty()) {
          std::cerr << "config error: fit needs --dataset-config\n";
          return kExitConfig;
        }
        SyntheticSpec spec = SyntheticSpec::from_json(
            load_json_file(detect_dataset_config));
        const Dataset dataset = make_synthetic(spec);
        std::vector<Image> benign;
        for (const Sample& sample : dataset.test) {
          if (static_cast<int64_t>(benign.size()) >= detect_samples) break;
          benign.push_back(sample.image);
        }
        const EntropyDetector detector = fit_entropy_detector(
            benign, side, model ? &*model : nullptr, detect_multiplier);
        detector.save(detect_out);
        std::cout << "fitted " << to_string(side) << "-side detector on "
                  << detector.fitted_on << " samples: mu=" << detector.mean
                  << " sigma=" << detector.stddev << "\n";
        return kExitOk;
      }

      const EntropyDetector detector = EntropyDetector::load(detect_detector);
      if (detector.side == DetectorSide::kOutput && !model) {
        std::cerr << "config error: output-side scoring needs --checkpoint\n";
        return kExitConfig;
      }

      if (detect_action == "score") {
        const std::vector<double> entropies = entropies_for_log(
            detect_log, detector.side, model ? &*model : nullptr);
        std::ofstream out(detect_out);
        int64_t flagged = 0;
        for (size_t idx = 0; idx < entropies.size(); ++idx) {
          const Detection d = detect(detector, entropies[idx]);
          flagged += d.anomalous ? 1 : 0;
          out << json{{"index", idx},
                      {"entropy", d.entropy},
                      {"score", d.score},
                      {"decision", d.anomalous ? "rejected" : "ok"}}
                     .dump()
              << "\n";
        }
        std::cout << "flagged " << flagged << "/" << entropies.size()
                  << " queries\n";
        return kExitOk;
      }

      // eval: threshold-free AUC + ROC of detector scores.
      const std::vector<double> benign_h = entropies_for_log(
          detect_benign, detector.side, model ? &*model : nullptr);
      const std::vector<double> malicious_h = entropies_for_log(
          detect_malicious, detector.side, model ? &*model : nullptr);
      auto scores = [&](const std::vector<double>& hs) {
        std::vector<double> out;
        for (double h : hs) out.push_back(detect(detector, h).score);
        return out;
      };
      const std::vector<double> neg = scores(benign_h);
      const std::vector<double> pos = scores(malicious_h);
      const double auc = auc_by_rank(neg, pos);
      json report{{"auc", auc},
                  {"benign_count", neg.size()},
                  {"malicious_count", pos.size()},
                  {"benign_scores", neg},
                  {"malicious_scores", pos},
                  {"roc", roc_points(neg, pos)}};
      write_json_file(report, detect_out);
      std::cout << "AUC = " << auc << "\n";
      return kExitOk;
    }

    if (*eval_cmd) {
      std::vector<KeyedImage> originals, recon;
      try {
        originals = read_image_archive(eval_originals);
        recon = read_image_archive(eval_recon);
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      }
      std::map<std::pair<int64_t, int64_t>, const Image*> by_key;
      for (const KeyedImage& rec : recon) by_key[{rec.k, rec.i}] = &rec.image;

      FidelityReport report;
      std::vector<Image> recon_images;
      std::vector<int64_t> labels;
      for (const KeyedImage& orig : originals) {
        auto it = by_key.find({orig.k, orig.i});
        if (it == by_key.end())
          throw std::runtime_error("reconstruction missing image (" +
                                   std::to_string(orig.k) + "," +
                                   std::to_string(orig.i) + ")");
        report.per_image_ssim.push_back(ssim(*it->second, orig.image));
        recon_images.push_back(*it->second);
        labels.push_back(orig.k);
      }
      report.mean_ssim = 0.0;
      for (double s : report.per_image_ssim) report.mean_ssim += s;
      report.mean_ssim /= static_cast<double>(report.per_image_ssim.size());

      if (!eval_reference.empty()) {
        const nn::Predictor reference = nn::Predictor::load(eval_reference);
        std::vector<Image> sized;
        for (const Image& img : recon_images)
          sized.push_back(resize_bilinear(img, reference.input_shape().height,
                                          reference.input_shape().width));
        report.feature_accuracy = feature_accuracy(sized, labels, reference);
      }
      if (!eval_dataset_config.empty()) {
        const Dataset dataset = make_synthetic(
            SyntheticSpec::from_json(load_json_file(eval_dataset_config)));
        if (!eval_attacked.empty())
          report.accuracy = classification_accuracy(
              nn::Predictor::load(eval_attacked), dataset.test);
        if (!eval_clean.empty())
          report.clean_accuracy = classification_accuracy(
              nn::Predictor::load(eval_clean), dataset.test);
      }
      write_json_file(report.to_json(), eval_out);
      std::cout << "mean SSIM = " << report.mean_ssim;
      if (report.feature_accuracy >= 0)
        std::cout << "  FA = " << report.feature_accuracy;
      if (report.accuracy >= 0) std::cout << "  ACC = " << report.accuracy;
      if (report.clean_accuracy >= 0)
        std::cout << "  clean ACC = " << report.clean_accuracy;
      std::cout << "\n";
      return kExitOk;
    }

    if (*demo_cmd) {
      fs::create_directories(demo_out);
      std::cout << "[1/4] training a backdoored classifier (10 memorized "
                   "images)...\n";
      TrainBundle bundle;
      bundle.seed = demo_seed;
      bundle.dataset_spec = SyntheticSpec{10, 60, 20, 1, 27, 27, demo_seed};
      bundle.model_config = {{"type", "fc"}, {"hidden", {256, 256}}};
      bundle.poison.per_class = 1;
      bundle.poison.max_epochs = 45;
      bundle.poison.seed = demo_seed;
      const int rc = run_poison_train(bundle, demo_out + "/train");
      if (rc != kExitOk) return rc;

      std::cout << "[2/4] extracting the memorized images in-process...\n";
      ExtractionPlan plan;
      plan.space = IndexSpace::load(demo_out + "/train/index_space.json");
      plan.endpoint = "inproc:" + demo_out + "/train/checkpoint.ckpt";
      const int rc2 = run_extract(plan, demo_out + "/extract", "");
      if (rc2 != kExitOk) return rc2;

      std::cout << "[3/4] fidelity vs the originals...\n";
      const auto originals = read_image_archive(demo_out + "/train/targets.bin");
      const auto recon =
          read_image_archive(demo_out + "/extract/reconstruction.bin");
      double mean_ssim = 0.0;
      for (size_t j = 0; j < originals.size(); ++j)
        mean_ssim += ssim(originals[j].image, recon[j].image);
      mean_ssim /= static_cast<double>(originals.size());
      std::cout << "      mean extraction SSIM = " << mean_ssim << "\n";

      std::cout << "[4/4] input-entropy countermeasure...\n";
      const Dataset dataset = make_synthetic(bundle.dataset_spec);
      std::vector<Image> benign;
      for (const Sample& sample : dataset.test) benign.push_back(sample.image);
      const EntropyDetector detector =
          fit_entropy_detector(benign, DetectorSide::kInput);
      detector.save(demo_out + "/detector.json");
      std::vector<double> neg, pos;
      for (const Image& img : benign)
        neg.push_back(detect_input(detector, img).score);
      int64_t flagged = 0;
      for (int64_t k = 0; k < plan.space.num_classes; ++k)
        for (int64_t l = 0; l < plan.space.grid_count; l += 7) {
          const auto trig = build_pattern_trigger({k, 0, l, 0}, plan.space);
          const Detection d = detect_input(detector, trig.pixels);
          pos.push_back(d.score);
          flagged += d.anomalous ? 1 : 0;
        }
      std::cout << "      trigger AUC = " << auc_by_rank(neg, pos) << ", "
                << flagged << "/" << pos.size()
                << " triggers flagged at 2.5 sigma\n";
      std::cout << "demo artifacts in " << demo_out << "\n";
      return kExitOk;
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
