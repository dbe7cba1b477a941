#ifndef PIXELVAULT_PROTOCOL_HPP
#define PIXELVAULT_PROTOCOL_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "pixelvault/image.hpp"

namespace pixelvault {

enum class OutputMode { kLogits, kSoftmax };

std::string to_string(OutputMode mode);
OutputMode output_mode_from_string(const std::string& s);

// Wire schema, JSON over HTTP:
//   POST /query   {"input": [channel][row][col] floats in [0,1]}
//              -> {"output": [K floats], "mode": "logits"|"softmax"}
//   errors        {"error": "bad_request", "message": ...}        (HTTP 400)
//   refusals      {"error": "rejected",
//                  "reason": "anomalous_input"|"anomalous_output"} (HTTP 403)
//   GET /health -> {"status": "ok"}
nlohmann::json make_query_request(const Image& input);
nlohmann::json make_query_response(const std::vector<double>& output,
                                   OutputMode mode);

}  // namespace pixelvault

#endif  // PIXELVAULT_PROTOCOL_HPP
