#ifndef PIXELVAULT_PATCH_GRID_HPP
#define PIXELVAULT_PATCH_GRID_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "pixelvault/image.hpp"
#include "pixelvault/index_codec.hpp"

namespace pixelvault {

// Geometry of the patch grid: g*g patches of side s per channel over the
// canonical square image of side g*s.
struct PatchGridSpec {
  int64_t patch_side = 0;  // s
  int64_t grid_dim = 0;    // g
  int64_t channels = 1;    // C

  int64_t canonical_side() const { return patch_side * grid_dim; }
  int64_t patch_count() const { return grid_dim * grid_dim; }  // L

  static PatchGridSpec from_space(const IndexSpace& space);
};

// One s*s fragment of one channel, row-major. index.l / index.c locate it in
// the grid; index.k / index.i are filled by whoever owns the source image.
struct Patch {
  std::vector<double> values;
  IndexTuple index;
};

// Bilinear resample to an arbitrary size (align_corners=false convention);
// returns a copy when the size already matches.
Image resize_bilinear(const Image& image, int64_t height, int64_t width);

// Bilinear resize to the canonical W'xW' square, W' = s * floor(min(W,H)/s).
// Bit-identical copy when the input is already canonical. Throws
// std::invalid_argument for images smaller than one patch.
Image canonicalize(const Image& image, const PatchGridSpec& spec);

// Split a canonical image into L*C patches. Patch l covers rows
// floor(l/g)*s.., cols (l mod g)*s.., row-major; channels indexed separately.
// Output ordered by (c, l); index.k/.i are zero.
std::vector<Patch> partition(const Image& canonical, const PatchGridSpec& spec);

struct ReassembleResult {
  Image image;
  std::vector<std::pair<int64_t, int64_t>> missing;  // (l, c) not provided
};

// Inverse of partition. Missing (l,c) slots are filled with 0.5 and reported;
// duplicate (l,c) entries are rejected (std::invalid_argument).
ReassembleResult reassemble(const std::vector<Patch>& patches,
                            const PatchGridSpec& spec);

}  // namespace pixelvault

#endif  // PIXELVAULT_PATCH_GRID_HPP
