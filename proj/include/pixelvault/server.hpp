#ifndef PIXELVAULT_SERVER_HPP
#define PIXELVAULT_SERVER_HPP

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "pixelvault/metrics.hpp"
#include "pixelvault/nn.hpp"
#include "pixelvault/protocol.hpp"

namespace pixelvault {

struct DefenseConfig {
  EntropyDetector detector;
  std::string log_path;  // JSON lines: timestamp, entropy, decision
};

struct ServeConfig {
  std::string checkpoint_path;
  OutputMode mode = OutputMode::kLogits;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<DefenseConfig> defense;

  static ServeConfig from_json(const nlohmann::json& j);
};

// Black-box query-response front end over a frozen Predictor. Exposes only
// POST /query and GET /health; no parameter or gradient access. The model is
// immutable after construction, so requests are served concurrently.
class ModelServer {
 public:
  ModelServer(nn::Predictor model, OutputMode mode,
              std::optional<DefenseConfig> defense = std::nullopt);
  ~ModelServer();

  ModelServer(const ModelServer&) = delete;
  ModelServer& operator=(const ModelServer&) = delete;

  // Starts listening on a background thread; returns once the socket is
  // bound. port 0 picks a free one.
  void start(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  const nn::Predictor& model() const { return model_; }

 private:
  struct Impl;
  nn::Predictor model_;
  OutputMode mode_;
  std::optional<DefenseConfig> defense_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

// Blocking entry point for the CLI: load checkpoint, serve until terminated.
void run_server(const ServeConfig& config);

}  // namespace pixelvault

#endif  // PIXELVAULT_SERVER_HPP
