#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

// Eigen (via the pixelvault headers) must precede httplib.
#include "pixelvault/dataset.hpp"
#include "pixelvault/index_codec.hpp"
#include "pixelvault/server.hpp"

#include "httplib.h"

using namespace pixelvault;
using nlohmann::json;

namespace {

nn::Predictor test_model() { return nn::make_fc({1, 14, 14}, 5, {24}, 77); }

json post_query(int port, const json& body, int* status = nullptr) {
  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/query", body.dump(), "application/json");
  REQUIRE(res);
  if (status) *status = res->status;
  return json::parse(res->body);
}

Image benign_image() {
  Image img(1, 14, 14);
  for (int64_t y = 0; y < 14; ++y)
    for (int64_t x = 0; x < 14; ++x)
      img.at(0, y, x) = 0.5 + 0.4 * std::sin(0.7 * x + 0.3 * y);
  return img;
}

}  // namespace

TEST_CASE("health endpoint") {
  ModelServer server(test_model(), OutputMode::kLogits);
  server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", server.port());
  auto res = client.Get("/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["status"] == "ok");
}

TEST_CASE("logits mode returns K finite reals; identical payloads match") {
  ModelServer server(test_model(), OutputMode::kLogits);
  server.start("127.0.0.1", 0);
  const json request = make_query_request(benign_image());
  const json a = post_query(server.port(), request);
  CHECK(a["mode"] == "logits");
  REQUIRE(a["output"].size() == 5);
  for (const auto& v : a["output"]) CHECK(std::isfinite(v.get<double>()));
  const json b = post_query(server.port(), request);
  CHECK(a == b);
}

TEST_CASE("softmax mode sums to one and matches client-side softmax") {
  nn::Predictor model = test_model();
  ModelServer logits_server(model.clone(), OutputMode::kLogits);
  ModelServer softmax_server(std::move(model), OutputMode::kSoftmax);
  logits_server.start("127.0.0.1", 0);
  softmax_server.start("127.0.0.1", 0);

  const json request = make_query_request(benign_image());
  const json zl = post_query(logits_server.port(), request);
  const json zp = post_query(softmax_server.port(), request);
  CHECK(zp["mode"] == "softmax");

  const std::vector<double> logits = zl["output"].get<std::vector<double>>();
  const std::vector<double> probs = zp["output"].get<std::vector<double>>();
  double sum = 0.0;
  for (double p : probs) {
    CHECK(p > 0.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  const std::vector<double> client_side = softmax(logits);
  for (size_t j = 0; j < probs.size(); ++j)
    CHECK(probs[j] == doctest::Approx(client_side[j]).epsilon(1e-6));
}

TEST_CASE("malformed payloads get structured 400 errors") {
  ModelServer server(test_model(), OutputMode::kLogits);
  server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", server.port());

  auto res = client.Post("/query", "this is not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"] == "bad_request");

  int status = 0;
  const json no_input = post_query(server.port(), json{{"x", 1}}, &status);
  CHECK(status == 400);
  CHECK(no_input["error"] == "bad_request");
}

TEST_CASE("wrong input shape names the expected dims") {
  ModelServer server(test_model(), OutputMode::kLogits);
  server.start("127.0.0.1", 0);
  int status = 0;
  const json response = post_query(
      server.port(), make_query_request(Image(1, 7, 7, 0.2)), &status);
  CHECK(status == 400);
  const std::string message = response["message"].get<std::string>();
  CHECK(message.find("[1,14,14]") != std::string::npos);
}

TEST_CASE("input-side defense refuses pattern triggers and logs them") {
  const SyntheticSpec spec{5, 30, 30, 1, 14, 14, 3};
  const Dataset ds = make_synthetic(spec);
  std::vector<Image> benign;
  for (const Sample& s : ds.test) benign.push_back(s.image);

  DefenseConfig defense;
  defense.detector = fit_entropy_detector(benign, DetectorSide::kInput);
  const std::string log_path =
      (std::filesystem::temp_directory_path() / "pv_defense_log.jsonl")
          .string();
  std::filesystem::remove(log_path);
  defense.log_path = log_path;

  ModelServer server(test_model(), OutputMode::kLogits, defense);
  server.start("127.0.0.1", 0);

  // A benign query passes.
  int status = 0;
  post_query(server.port(), make_query_request(ds.test[0].image), &status);
  CHECK(status == 200);

  // A pattern trigger is refused.
  const IndexSpace space = IndexSpace::uniform(5, 10, 1, 14, 14);
  const TriggerImage trigger = build_pattern_trigger({2, 3, 1, 0}, space);
  const json refusal =
      post_query(server.port(), make_query_request(trigger.pixels), &status);
  CHECK(status == 403);
  CHECK(refusal["error"] == "rejected");
  CHECK(refusal["reason"] == "anomalous_input");

  server.stop();
  std::ifstream log(log_path);
  REQUIRE(log);
  int64_t rejected = 0, total = 0;
  std::string line;
  while (std::getline(log, line)) {
    const json entry = json::parse(line);
    CHECK(entry.contains("timestamp"));
    CHECK(entry.contains("entropy"));
    ++total;
    if (entry["decision"] == "rejected") ++rejected;
  }
  CHECK(total == 2);
  CHECK(rejected == 1);
  std::filesystem::remove(log_path);
}

TEST_CASE("serve config parses JSON") {
  const json j{{"checkpoint", "model.ckpt"},
               {"output_mode", "softmax"},
               {"port", 9001}};
  const ServeConfig config = ServeConfig::from_json(j);
  CHECK(config.checkpoint_path == "model.ckpt");
  CHECK(config.mode == OutputMode::kSoftmax);
  CHECK(config.port == 9001);
  CHECK_FALSE(config.defense.has_value());
}
