#include "pixelvault/server.hpp"

#include <chrono>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include "httplib.h"

namespace pixelvault {

struct ModelServer::Impl {
  httplib::Server server;
  std::mutex log_mutex;
  std::ofstream log;
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

ModelServer::ModelServer(nn::Predictor model, OutputMode mode,
                         std::optional<DefenseConfig> defense)
    : model_(std::move(model)), mode_(mode), defense_(std::move(defense)),
      impl_(std::make_unique<Impl>()) {
  if (defense_ && !defense_->log_path.empty()) {
    impl_->log.open(defense_->log_path, std::ios::app);
    if (!impl_->log)
      throw std::runtime_error("cannot open defense log " +
                               defense_->log_path);
  }

  auto log_decision = [this](const Detection& detection) {
    if (!defense_ || !impl_->log.is_open()) return;
    const auto now = std::chrono::system_clock::now();
    const double ts =
        std::chrono::duration<double>(now.time_since_epoch()).count();
    nlohmann::json line{{"timestamp", ts},
                        {"side", pixelvault::to_string(defense_->detector.side)},
                        {"entropy", detection.entropy},
                        {"score", detection.score},
                        {"decision", detection.anomalous ? "rejected" : "ok"}};
    std::lock_guard<std::mutex> lock(impl_->log_mutex);
    impl_->log << line.dump() << "\n";
    impl_->log.flush();
  };

  impl_->server.Get("/health",
                    [](const httplib::Request&, httplib::Response& res) {
                      send_json(res, 200, {{"status", "ok"}});
                    });

  impl_->server.Post("/query", [this, log_decision](const httplib::Request& req,
                                                    httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400,
                {{"error", "bad_request"},
                 {"message", std::string("invalid JSON: ") + e.what()}});
      return;
    }

    Image input;
    try {
      if (!body.contains("input"))
        throw std::invalid_argument("missing \"input\" field");
      input = from_wire(body.at("input"));
    } catch (const std::exception& e) {
      send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
      return;
    }

    const nn::Shape3& shape = model_.input_shape();
    if (input.channels != shape.channels || input.height != shape.height ||
        input.width != shape.width) {
      send_json(res, 400,
                {{"error", "bad_request"},
                 {"message",
                  "wrong input shape: expected [C,H,W] = [" +
                      std::to_string(shape.channels) + "," +
                      std::to_string(shape.height) + "," +
                      std::to_string(shape.width) + "], got [" +
                      std::to_string(input.channels) + "," +
                      std::to_string(input.height) + "," +
                      std::to_string(input.width) + "]"}});
      return;
    }

    if (defense_ && defense_->detector.side == DetectorSide::kInput) {
      const Detection detection = detect_input(defense_->detector, input);
      log_decision(detection);
      if (detection.anomalous) {
        send_json(res, 403,
                  {{"error", "rejected"}, {"reason", "anomalous_input"}});
        return;
      }
    }

    std::vector<double> output = model_.forward_one(input);

    if (defense_ && defense_->detector.side == DetectorSide::kOutput) {
      const Detection detection = detect_output(defense_->detector, output);
      log_decision(detection);
      if (detection.anomalous) {
        send_json(res, 403,
                  {{"error", "rejected"}, {"reason", "anomalous_output"}});
        return;
      }
    }

    if (mode_ == OutputMode::kSoftmax) output = softmax(output);
    send_json(res, 200, make_query_response(output, mode_));
  });
}

ModelServer::~ModelServer() { stop(); }

void ModelServer::start(const std::string& host, int port) {
  if (thread_.joinable())
    throw std::runtime_error("server already started");
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
    if (port_ < 0) throw std::runtime_error("cannot bind " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port))
      throw std::runtime_error("cannot bind " + host + ":" +
                               std::to_string(port));
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  while (!impl_->server.is_running())
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
}

void ModelServer::stop() {
  if (thread_.joinable()) {
    impl_->server.stop();
    thread_.join();
  }
}

ServeConfig ServeConfig::from_json(const nlohmann::json& j) {
  ServeConfig config;
  config.checkpoint_path = j.at("checkpoint").get<std::string>();
  if (j.contains("output_mode"))
    config.mode = output_mode_from_string(j.at("output_mode").get<std::string>());
  config.host = j.value("host", config.host);
  config.port = j.value("port", config.port);
  if (j.contains("defense") && !j.at("defense").is_null()) {
    DefenseConfig defense;
    defense.detector =
        EntropyDetector::load(j.at("defense").at("detector").get<std::string>());
    defense.log_path = j.at("defense").value("log", std::string{});
    config.defense = std::move(defense);
  }
  return config;
}

void run_server(const ServeConfig& config) {
  ModelServer server(nn::Predictor::load(config.checkpoint_path), config.mode,
                     config.defense);
  server.start(config.host, config.port);
  // Serve until the process is terminated.
  while (true) std::this_thread::sleep_for(std::chrono::seconds(3600));
}

}  // namespace pixelvault
