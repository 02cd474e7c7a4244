#pragma once

#include <cstdint>
#include <vector>

#include "xannot/grid.hpp"

namespace xannot::datastore {

/// Column-major run lengths, alternating background/foreground, starting with
/// the (possibly zero) background run. sum(counts) == height * width.
struct RLEMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const RLEMask&, const RLEMask&) = default;
};

RLEMask rle_encode(const BinaryMask& mask);
/// Throws CodecError when the counts do not cover exactly height * width pixels.
BinaryMask rle_decode(const RLEMask& rle);
/// Throws CodecError on a malformed RLE.
void rle_validate(const RLEMask& rle);

/// Tight inclusive bounds of the foreground; throws DegenerateMask when empty.
BBox bbox_from_mask(const BinaryMask& mask);

}  // namespace xannot::datastore
