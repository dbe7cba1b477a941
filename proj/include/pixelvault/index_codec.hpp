#ifndef PIXELVAULT_INDEX_CODEC_HPP
#define PIXELVAULT_INDEX_CODEC_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixelvault/image.hpp"

namespace pixelvault {

enum class TriggerKind { kPattern, kCode };

std::string to_string(TriggerKind kind);
TriggerKind trigger_kind_from_string(const std::string& s);

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The attacker's 4-D addressing scheme over memorized patches.
//
// K classes, N_k samples per class, L patch locations per channel, C channels.
// patch_side s must satisfy s <= floor(sqrt(K)) so a patch fits in one model
// output vector. image_width/height are the model input dims; the patch grid
// lives on the canonical square W' = s * floor(min(W,H)/s) anchored top-left.
struct IndexSpace {
  int64_t num_classes = 0;                 // K
  std::vector<int64_t> samples_per_class;  // N_k, size K
  int64_t patch_side = 0;                  // s
  int64_t grid_count = 0;                  // L = g*g
  int64_t num_channels = 1;                // C, 1 or 3
  int64_t image_width = 0;                 // W
  int64_t image_height = 0;                // H
  int64_t symbol_side = 3;                 // side of one-hot / Gray squares

  // Uniform-N space with s = floor(sqrt(K)) and L derived from the geometry.
  static IndexSpace uniform(int64_t num_classes, int64_t samples_per_class,
                            int64_t channels, int64_t width, int64_t height,
                            int64_t symbol_side = 3);

  void validate() const;  // throws std::invalid_argument on inconsistency

  int64_t grid_dim() const;        // g = floor(min(W,H)/s)
  int64_t canonical_side() const;  // W' = g*s
  int64_t total_patches() const;   // sum_k N_k * L * C

  nlohmann::json to_json() const;
  static IndexSpace from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static IndexSpace load(const std::string& path);
};

// One address (k, i, l, c) into the memorized dataset. Out-of-bounds tuples
// are representable (bounds probing relies on them); in_bounds() flags them.
struct IndexTuple {
  int64_t k = 0;
  int64_t i = 0;
  int64_t l = 0;
  int64_t c = 0;

  bool in_bounds(const IndexSpace& space) const;
  bool operator==(const IndexTuple&) const = default;
};

struct TriggerImage {
  Image pixels;
  TriggerKind kind = TriggerKind::kPattern;
  IndexTuple source;
};

// Reflected-binary Gray code of n, LSB first; length = bit length of n,
// minimum 1. gray_code(0) == {0}.
std::vector<uint8_t> gray_code(uint64_t n);
uint64_t gray_decode(const std::vector<uint8_t>& bits_lsb_first);

// Flatten(i,l,c) = l + c*L + i*L*C. Bijection from the (i,l,c) box onto a
// contiguous integer range; adjacent l values map to adjacent integers.
int64_t flatten_index(int64_t i, int64_t l, int64_t c, int64_t L, int64_t C);

// Pattern-based trigger, combined additively from four sub-triggers:
//   t_k  one-hot class square in channel 1 (row-major slots from top-left)
//   t_i  Gray-code squares of the sample index in channel 0, LSB first
//   t_l  mask over patch l's pixels in channel 2
//   t_c  bottom image row of channel c at brightness 1/(c+1)
// For C=1 all sub-triggers share the single channel with brightnesses
// 4/7 (t_k), 2/7 (t_i), 1/7 (t_l); sums are exact multiples of 1/7 so the
// decoder can separate them, and t_c is omitted.
// For C=3 the symbol grid stops above the bottom row, which is reserved for
// the channel marker.
TriggerImage build_pattern_trigger(const IndexTuple& tuple,
                                   const IndexSpace& space);

// Exact inverse of build_pattern_trigger. Throws CodecError on images that
// no in- or out-of-bounds tuple could have produced.
IndexTuple decode_pattern_trigger(const Image& trigger,
                                  const IndexSpace& space);

// Code value at position p: 1/3 * Gray_n(Flatten(i,l,c))_p + 2/3 * [p == k].
// Written over the first n pixels of channel 0 (top row, wrapping to the
// next rows), every written pixel in {0, 1/3, 2/3, 1}.
TriggerImage build_code_trigger(const IndexTuple& tuple, const Image& base,
                                const IndexSpace& space, int64_t code_length);

// Smallest code length covering both the one-hot of K and the Gray code of
// the largest in-bounds Flatten value.
int64_t default_code_length(const IndexSpace& space);

// Deterministic smooth carrier image for code triggers. Training and
// extraction must embed the code in the same base image or the planted
// mapping never matches; deriving the carrier from the space dims gives both
// sides the same base with no coordination channel. Low-frequency content
// keeps its pixel-entropy close to natural images.
Image default_code_carrier(const IndexSpace& space);

// Text trigger: canary + ' ' + first 8 hex chars of SHA-256 of the decimal
// rendering of i.
std::string build_text_trigger(uint64_t i, const std::string& canary);

}  // namespace pixelvault

#endif  // PIXELVAULT_INDEX_CODEC_HPP
