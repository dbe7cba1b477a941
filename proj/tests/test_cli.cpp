#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pixelvault/image.hpp"
#include "pixelvault/index_codec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pixelvault;

namespace {

const std::string kBinary = PIXELVAULT_CLI_PATH;

int run(const std::string& args) {
  const int rc = std::system((kBinary + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pv_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter() {
    static int n = 0;
    return n++;
  }
  std::string str(const std::string& sub = "") const {
    return (path / sub).string();
  }
};

void write_tiny_train_config(const fs::path& path, double lambda = 100.0) {
  const json config{
      {"seed", 11},
      {"dataset",
       {{"classes", 6}, {"train_per_class", 24}, {"test_per_class", 8},
        {"channels", 1}, {"width", 15}, {"height", 15}, {"seed", 11}}},
      {"model", {{"type", "fc"}, {"hidden", {48}}}},
      {"poison",
       {{"lambda", lambda}, {"per_class", 1}, {"max_epochs", 6},
        {"batch_size_primary", 32}, {"batch_size_backdoor", 32},
        {"enable_early_stop", false}}}};
  std::ofstream out(path);
  out << config.dump(2);
}

}  // namespace

TEST_CASE("poison-train writes all artifacts and is reproducible") {
  TempDir dir;
  write_tiny_train_config(dir.path / "config.json");

  REQUIRE(run("poison-train --config " + dir.str("config.json") + " --out " +
              dir.str("run1")) == 0);
  for (const char* artifact :
       {"checkpoint.ckpt", "report.jsonl", "summary.json", "index_space.json",
        "targets.bin", "config.json"})
    CHECK(fs::exists(dir.path / "run1" / artifact));

  REQUIRE(run("poison-train --config " + dir.str("config.json") + " --out " +
              dir.str("run2")) == 0);
  CHECK(slurp(dir.path / "run1/report.jsonl") ==
        slurp(dir.path / "run2/report.jsonl"));
  CHECK(slurp(dir.path / "run1/summary.json") ==
        slurp(dir.path / "run2/summary.json"));
  CHECK(slurp(dir.path / "run1/checkpoint.ckpt") ==
        slurp(dir.path / "run2/checkpoint.ckpt"));

  SUBCASE("a different seed changes the report") {
    REQUIRE(run("poison-train --config " + dir.str("config.json") +
                " --seed 12 --out " + dir.str("run3")) == 0);
    CHECK(slurp(dir.path / "run1/report.jsonl") !=
          slurp(dir.path / "run3/report.jsonl"));
  }

  SUBCASE("extract + evaluate close the loop") {
    REQUIRE(run("extract --space " + dir.str("run1/index_space.json") +
                " --endpoint inproc:" + dir.str("run1/checkpoint.ckpt") +
                " --out " + dir.str("extract")) == 0);
    CHECK(fs::exists(dir.path / "extract/manifest.json"));
    CHECK(fs::exists(dir.path / "extract/reconstruction.bin"));
    CHECK(fs::exists(dir.path / "extract/responses.jsonl"));
    CHECK(fs::exists(dir.path / "extract/images/0_0.png"));

    // Reconstruction SSIM of the reconstruction against itself is 1.
    REQUIRE(run("evaluate --originals " + dir.str("extract/reconstruction.bin") +
                " --recon " + dir.str("extract/reconstruction.bin") +
                " --out " + dir.str("fidelity.json")) == 0);
    const json fidelity = json::parse(slurp(dir.path / "fidelity.json"));
    CHECK(fidelity["mean_ssim"].get<double>() == doctest::Approx(1.0));

    // And against the true targets it is a valid score in [-1, 1].
    REQUIRE(run("evaluate --originals " + dir.str("run1/targets.bin") +
                " --recon " + dir.str("extract/reconstruction.bin") +
                " --out " + dir.str("fidelity2.json")) == 0);
    const json f2 = json::parse(slurp(dir.path / "fidelity2.json"));
    CHECK(f2["mean_ssim"].get<double>() <= 1.0);
    CHECK(f2["mean_ssim"].get<double>() >= -1.0);
  }
}

TEST_CASE("config errors exit with code 2") {
  TempDir dir;
  std::ofstream bad(dir.path / "bad.json");
  bad << "{ not json";
  bad.close();
  CHECK(run("poison-train --config " + dir.str("bad.json") + " --out " +
            dir.str("out")) == 2);
  CHECK(run("poison-train --out " + dir.str("out")) == 2);  // missing --config
  CHECK(run("extract --space nope.json --endpoint inproc:x --out " +
            dir.str("out")) == 2);
}

TEST_CASE("detect fit + score flags every pattern trigger in a log") {
  TempDir dir;
  const json dataset_spec{{"classes", 6},      {"train_per_class", 4},
                          {"test_per_class", 40}, {"channels", 1},
                          {"width", 15},       {"height", 15},
                          {"seed", 5}};
  std::ofstream(dir.path / "dataset.json") << dataset_spec.dump();

  REQUIRE(run("detect --action fit --side input --dataset-config " +
              dir.str("dataset.json") + " --samples 240 --out " +
              dir.str("detector.json")) == 0);
  CHECK(fs::exists(dir.path / "detector.json"));

  // A log of pure pattern-trigger queries.
  const IndexSpace space = IndexSpace::uniform(6, 4, 1, 15, 15);
  std::ofstream log(dir.path / "triggers.jsonl");
  for (int64_t k = 0; k < 6; ++k)
    log << json{{"input", to_wire(build_pattern_trigger({k, 1, 2, 0}, space)
                                      .pixels)}}
               .dump()
        << "\n";
  log.close();

  REQUIRE(run("detect --action score --detector " + dir.str("detector.json") +
              " --log " + dir.str("triggers.jsonl") + " --out " +
              dir.str("scores.jsonl")) == 0);
  std::ifstream scores(dir.path / "scores.jsonl");
  std::string line;
  int64_t total = 0, rejected = 0;
  while (std::getline(scores, line)) {
    ++total;
    if (json::parse(line)["decision"] == "rejected") ++rejected;
  }
  CHECK(total == 6);
  CHECK(rejected == 6);
}
