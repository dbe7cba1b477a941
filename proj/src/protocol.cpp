#include "pixelvault/protocol.hpp"

#include <stdexcept>

namespace pixelvault {

std::string to_string(OutputMode mode) {
  return mode == OutputMode::kLogits ? "logits" : "softmax";
}

OutputMode output_mode_from_string(const std::string& s) {
  if (s == "logits") return OutputMode::kLogits;
  if (s == "softmax") return OutputMode::kSoftmax;
  throw std::invalid_argument("unknown output mode: " + s);
}

nlohmann::json make_query_request(const Image& input) {
  return {{"input", to_wire(input)}};
}

nlohmann::json make_query_response(const std::vector<double>& output,
                                   OutputMode mode) {
  return {{"output", output}, {"mode", to_string(mode)}};
}

}  // namespace pixelvault
