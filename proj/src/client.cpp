#include "pixelvault/client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <thread>

#include "httplib.h"
#include "pixelvault/metrics.hpp"
#include "pixelvault/patch_grid.hpp"

namespace pixelvault {

std::vector<double> estimate_logits(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("empty probability vector");
  std::vector<double> logits(probs.size());
  int64_t clamped = 0;
  for (size_t j = 0; j < probs.size(); ++j) {
    double p = probs[j];
    if (p < 1e-12) {
      p = 1e-12;
      ++clamped;
    }
    logits[j] = std::log(p);
  }
  if (clamped > 0)
    std::fprintf(stderr,
                 "estimate_logits: clamped %lld zero probabilities at 1e-12\n",
                 static_cast<long long>(clamped));
  const double mean =
      std::accumulate(logits.begin(), logits.end(), 0.0) /
      static_cast<double>(logits.size());
  for (double& z : logits) z -= mean;
  return logits;
}

QueryFn make_http_query(const std::string& url, int64_t retries) {
  return [url, retries](const Image& input) -> std::vector<double> {
    const std::string body = make_query_request(input).dump();
    std::string last_error = "no attempt made";
    for (int64_t attempt = 0; attempt <= retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(50 * (int64_t{1} << (attempt - 1))));
      // One connection per call keeps the function safe to share across
      // extraction workers.
      httplib::Client client(url);
      client.set_connection_timeout(5, 0);
      client.set_read_timeout(30, 0);
      httplib::Result res =
          client.Post("/query", body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      nlohmann::json payload;
      try {
        payload = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception&) {
        last_error = "unparseable response (status " +
                     std::to_string(res->status) + ")";
        continue;
      }
      if (res->status == 403 && payload.value("error", "") == "rejected")
        throw QueryRefused(payload.value("reason", "rejected"));
      if (res->status != 200) {
        last_error = "status " + std::to_string(res->status) + ": " +
                     payload.value("message", res->body);
        continue;
      }
      return payload.at("output").get<std::vector<double>>();
    }
    throw std::runtime_error("query failed after " + std::to_string(retries) +
                             " retries: " + last_error);
  };
}

QueryFn make_inproc_query(std::shared_ptr<const nn::Predictor> model,
                          OutputMode mode) {
  return [model, mode](const Image& input) -> std::vector<double> {
    std::vector<double> output = model->forward_one(input);
    if (mode == OutputMode::kSoftmax) output = softmax(output);
    return output;
  };
}

QueryFn query_for_endpoint(const ExtractionPlan& plan) {
  constexpr std::string_view kInproc = "inproc:";
  if (plan.endpoint.rfind(kInproc, 0) == 0) {
    auto model = std::make_shared<const nn::Predictor>(
        nn::Predictor::load(plan.endpoint.substr(kInproc.size())));
    return make_inproc_query(std::move(model), plan.mode);
  }
  return make_http_query(plan.endpoint, plan.retries);
}

namespace {

std::string outcome_string(PatchOutcome outcome) {
  switch (outcome) {
    case PatchOutcome::kOk: return "ok";
    case PatchOutcome::kMissing: return "missing";
    case PatchOutcome::kRefused: return "refused";
  }
  return "unknown";
}

struct TriggerFactory {
  const IndexSpace& space;
  TriggerKind kind;
  Image carrier;
  int64_t code_length = 0;

  explicit TriggerFactory(const ExtractionPlan& plan)
      : space(plan.space), kind(plan.trigger_kind) {
    if (kind == TriggerKind::kCode) {
      carrier = default_code_carrier(space);
      code_length = default_code_length(space);
    }
  }

  Image operator()(const IndexTuple& tuple) const {
    return kind == TriggerKind::kPattern
               ? build_pattern_trigger(tuple, space).pixels
               : build_code_trigger(tuple, carrier, space, code_length).pixels;
  }
};

// Raw patch from one response: first s^2 entries; in softmax mode the logits
// are re-estimated and, when the output has spare entries beyond the patch,
// re-anchored by the mean of those free logits (their true values are
// roughly constant across triggers, which cancels the per-query constant
// softmax discarded).
std::vector<double> patch_from_response(const std::vector<double>& response,
                                        int64_t patch_len, OutputMode mode) {
  if (static_cast<int64_t>(response.size()) < patch_len)
    throw std::runtime_error("response shorter than one patch");
  if (mode == OutputMode::kLogits)
    return {response.begin(), response.begin() + patch_len};
  const std::vector<double> est = estimate_logits(response);
  std::vector<double> patch(est.begin(), est.begin() + patch_len);
  const int64_t free_count = static_cast<int64_t>(est.size()) - patch_len;
  if (free_count > 0) {
    const double anchor =
        std::accumulate(est.begin() + patch_len, est.end(), 0.0) /
        static_cast<double>(free_count);
    for (double& v : patch) v -= anchor;
  }
  return patch;
}

}  // namespace

ExtractionResult extract(const ExtractionPlan& plan, const QueryFn& query) {
  plan.space.validate();
  const IndexSpace& space = plan.space;
  const int64_t patch_len = space.patch_side * space.patch_side;
  const PatchGridSpec grid = PatchGridSpec::from_space(space);
  const TriggerFactory make_trigger(plan);

  // Work order groups every image's patches contiguously: (k, i, c, l).
  std::vector<IndexTuple> work;
  for (int64_t k = 0; k < space.num_classes; ++k)
    for (int64_t i = 0; i < space.samples_per_class[static_cast<size_t>(k)];
         ++i)
      for (int64_t c = 0; c < space.num_channels; ++c)
        for (int64_t l = 0; l < space.grid_count; ++l)
          work.push_back({k, i, l, c});

  struct Slot {
    PatchOutcome outcome = PatchOutcome::kMissing;
    std::vector<double> response;
  };
  std::vector<Slot> slots(work.size());

  std::atomic<size_t> cursor{0};
  auto worker = [&] {
    for (;;) {
      const size_t idx = cursor.fetch_add(1);
      if (idx >= work.size()) return;
      try {
        const Image trigger = make_trigger(work[idx]);
        slots[idx].response = query(trigger);
        slots[idx].outcome = PatchOutcome::kOk;
      } catch (const QueryRefused&) {
        slots[idx].outcome = PatchOutcome::kRefused;
      } catch (const std::exception&) {
        slots[idx].outcome = PatchOutcome::kMissing;
      }
    }
  };
  const int64_t thread_count = std::clamp<int64_t>(
      plan.concurrency, 1, static_cast<int64_t>(work.size()));
  std::vector<std::thread> pool;
  for (int64_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  ExtractionResult result;
  result.mode = plan.mode;
  result.query_count = static_cast<int64_t>(work.size());
  result.patches.reserve(work.size());
  result.responses.reserve(work.size());

  // Deterministic single-threaded reassembly keyed by tuple; any query
  // completion order produces the same result.
  std::map<std::pair<int64_t, int64_t>, std::vector<Patch>> by_image;
  for (size_t idx = 0; idx < work.size(); ++idx) {
    const IndexTuple& tuple = work[idx];
    PatchStatus status;
    status.tuple = tuple;
    status.outcome = slots[idx].outcome;
    if (slots[idx].outcome == PatchOutcome::kOk) {
      std::vector<double> raw =
          patch_from_response(slots[idx].response, patch_len, plan.mode);
      status.entropy = histogram_entropy(raw);
      Patch patch;
      patch.index = tuple;
      patch.values = std::move(raw);
      by_image[{tuple.k, tuple.i}].push_back(std::move(patch));
      result.responses.push_back({tuple, std::move(slots[idx].response)});
    }
    result.patches.push_back(status);
  }

  for (int64_t k = 0; k < space.num_classes; ++k)
    for (int64_t i = 0; i < space.samples_per_class[static_cast<size_t>(k)];
         ++i) {
      auto it = by_image.find({k, i});
      std::vector<Patch> patches =
          it == by_image.end() ? std::vector<Patch>{} : std::move(it->second);
      ReassembleResult assembled = reassemble(patches, grid);
      // Transform only the regions real patches produced; missing slots stay
      // at the neutral 0.5 fill.
      auto for_present_pixels = [&](auto&& fn) {
        const int64_t s = space.patch_side;
        const int64_t g = grid.grid_dim;
        for (const Patch& patch : patches) {
          const int64_t row0 = (patch.index.l / g) * s;
          const int64_t col0 = (patch.index.l % g) * s;
          for (int64_t dy = 0; dy < s; ++dy)
            for (int64_t dx = 0; dx < s; ++dx)
              fn(assembled.image.at(patch.index.c, row0 + dy, col0 + dx));
        }
      };
      if (plan.mode == OutputMode::kSoftmax && !patches.empty()) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for_present_pixels([&](double& v) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        });
        if (hi - lo > 1e-12)
          for_present_pixels([&](double& v) { v = (v - lo) / (hi - lo); });
        else
          for_present_pixels([&](double& v) { v = 0.5; });
      }
      for_present_pixels([](double& v) { v = std::clamp(v, 0.0, 1.0); });
      result.images.push_back({k, i, std::move(assembled.image)});
    }
  return result;
}

nlohmann::json ExtractionResult::manifest() const {
  nlohmann::json manifest;
  manifest["mode"] = pixelvault::to_string(mode);
  manifest["query_count"] = query_count;

  std::map<std::pair<int64_t, int64_t>, nlohmann::json> image_entries;
  for (const KeyedImage& image : images) {
    nlohmann::json entry{{"k", image.k},
                         {"i", image.i},
                         {"patches", nlohmann::json::array()},
                         {"missing", nlohmann::json::array()},
                         {"checksum", pixel_crc32(image.image)}};
    image_entries[{image.k, image.i}] = std::move(entry);
  }
  for (const PatchStatus& status : patches) {
    auto it = image_entries.find({status.tuple.k, status.tuple.i});
    if (it == image_entries.end()) continue;
    nlohmann::json patch{{"l", status.tuple.l},
                         {"c", status.tuple.c},
                         {"status", outcome_string(status.outcome)}};
    if (status.outcome == PatchOutcome::kOk) patch["entropy"] = status.entropy;
    it->second["patches"].push_back(std::move(patch));
    if (status.outcome != PatchOutcome::kOk)
      it->second["missing"].push_back({status.tuple.l, status.tuple.c});
  }
  manifest["images"] = nlohmann::json::array();
  for (auto& [key, entry] : image_entries)
    manifest["images"].push_back(std::move(entry));
  return manifest;
}

int64_t probe_bounds(const ExtractionPlan& plan, const QueryFn& query,
                     char dimension) {
  if (dimension != 'i' && dimension != 'k')
    throw std::invalid_argument(
        "probe_bounds supports the 'i' and 'k' dimensions");
  plan.space.validate();
  const IndexSpace& space = plan.space;
  const int64_t patch_len = space.patch_side * space.patch_side;
  const TriggerFactory make_trigger(plan);

  const int64_t sample_count =
      std::clamp<int64_t>(plan.probe.sample_patches, 1, space.grid_count);
  std::vector<int64_t> locations;
  for (int64_t j = 0; j < sample_count; ++j)
    locations.push_back(j * space.grid_count / sample_count);

  std::vector<double> series;
  std::vector<double> accepted;
  const int64_t warmup = std::max<int64_t>(3, plan.probe.window);
  int64_t streak = 0;
  int64_t first_flagged = -1;

  for (int64_t v = 0; v < plan.probe.max_steps; ++v) {
    double total = 0.0;
    int64_t measured = 0;
    for (int64_t l : locations) {
      IndexTuple tuple =
          dimension == 'i' ? IndexTuple{0, v, l, 0} : IndexTuple{v, 0, l, 0};
      try {
        const std::vector<double> response = query(make_trigger(tuple));
        total += histogram_entropy(
            patch_from_response(response, patch_len, plan.mode));
        ++measured;
      } catch (const CodecError&) {
        // Walked past what the trigger encoding can represent; nothing more
        // to measure in this dimension.
        throw BoundNotFound(
            "dimension '" + std::string(1, dimension) +
                "' left the encodable range before any entropy jump",
            series);
      } catch (const std::exception&) {
        // Failed or refused sample; skip it.
      }
    }
    if (measured == 0)
      throw BoundNotFound("no measurable responses at index " +
                              std::to_string(v),
                          series);
    const double level = total / static_cast<double>(measured);
    series.push_back(level);

    if (v < warmup) {
      accepted.push_back(level);
      continue;
    }
    std::vector<double> sorted = accepted;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                     sorted.end());
    const double median = sorted[sorted.size() / 2];
    if (level > plan.probe.ratio_threshold * median) {
      if (streak == 0) first_flagged = v;
      if (++streak >= plan.probe.window) return first_flagged;
    } else {
      streak = 0;
      accepted.push_back(level);
    }
  }
  throw BoundNotFound("no entropy jump within " +
                          std::to_string(plan.probe.max_steps) + " steps",
                      series);
}

}  // namespace pixelvault
