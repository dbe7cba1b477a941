#ifndef PIXELVAULT_CLIENT_HPP
#define PIXELVAULT_CLIENT_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixelvault/image.hpp"
#include "pixelvault/index_codec.hpp"
#include "pixelvault/nn.hpp"
#include "pixelvault/protocol.hpp"

namespace pixelvault {

// A query transport: returns the server's K output values for one input.
// Must be callable from several threads at once. Throws QueryRefused when
// the defense rejects the query, std::runtime_error on transport failure.
using QueryFn = std::function<std::vector<double>(const Image&)>;

class QueryRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BoundsProbeConfig {
  int64_t window = 3;            // consecutive high-entropy indices required
  double ratio_threshold = 1.3;  // vs the running median of in-bounds levels
  int64_t max_steps = 256;
  int64_t sample_patches = 16;   // locations averaged per probed index
};

struct ExtractionPlan {
  IndexSpace space;
  TriggerKind trigger_kind = TriggerKind::kPattern;
  std::string endpoint;  // "http://host:port" or "inproc:<checkpoint path>"
  OutputMode mode = OutputMode::kLogits;
  int64_t concurrency = 8;
  int64_t retries = 3;
  BoundsProbeConfig probe;
};

enum class PatchOutcome { kOk, kMissing, kRefused };

struct PatchStatus {
  IndexTuple tuple;
  PatchOutcome outcome = PatchOutcome::kOk;
  double entropy = 0.0;  // 256-bin histogram entropy of the raw patch
};

struct ExtractionResult {
  std::vector<KeyedImage> images;  // reconstructed canonical images
  std::vector<PatchStatus> patches;
  std::vector<std::pair<IndexTuple, std::vector<double>>> responses;  // audit
  int64_t query_count = 0;
  OutputMode mode = OutputMode::kLogits;

  nlohmann::json manifest() const;
};

// HTTP transport with `retries` attempts and exponential backoff. Each call
// uses its own connection, so the function is thread-safe.
QueryFn make_http_query(const std::string& url, int64_t retries = 3);

// Direct in-process transport around a frozen model; applies softmax when
// the mode asks for it, exactly as the server would.
QueryFn make_inproc_query(std::shared_ptr<const nn::Predictor> model,
                          OutputMode mode);

// Builds the transport named by plan.endpoint ("http://..." or "inproc:...").
QueryFn query_for_endpoint(const ExtractionPlan& plan);

// Iterate every in-bounds tuple of plan.space, query, take the first s^2
// output entries as the patch, and reassemble one canonical image per (k,i).
// In softmax mode the logits are first re-estimated (estimate_logits), each
// patch is re-anchored by the mean of the non-patch logits when K > s^2, and
// every image gets a final affine fit into [0,1]. Failed queries surface as
// missing patches (filled 0.5), refusals are recorded distinctly; neither
// aborts the run.
ExtractionResult extract(const ExtractionPlan& plan, const QueryFn& query);

class BoundNotFound : public std::runtime_error {
 public:
  BoundNotFound(const std::string& what, std::vector<double> entropies)
      : std::runtime_error(what), entropies(std::move(entropies)) {}
  std::vector<double> entropies;  // per probed index, for manual inspection
};

// Walk one index dimension ('i' or 'k') upward from 0 with the other
// dimensions fixed to known-good values, measuring the mean patch entropy at
// each step; returns the first out-of-bounds value (i.e. the inferred
// count). Throws BoundNotFound when no entropy jump appears within
// probe.max_steps.
int64_t probe_bounds(const ExtractionPlan& plan, const QueryFn& query,
                     char dimension);

// Logit estimate from class probabilities: log(p) recentered to zero mean —
// the true logits up to the additive constant softmax discards. Zero
// probabilities are clamped at 1e-12 (with a warning on stderr).
std::vector<double> estimate_logits(std::span<const double> probs);

}  // namespace pixelvault

#endif  // PIXELVAULT_CLIENT_HPP
