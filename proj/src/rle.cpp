#include "xannot/rle.hpp"

#include <algorithm>

namespace xannot::datastore {

RLEMask rle_encode(const BinaryMask& mask) {
  RLEMask rle;
  rle.height = mask.height();
  rle.width = mask.width();
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const std::uint8_t v = mask(x, y) != 0 ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

void rle_validate(const RLEMask& rle) {
  if (rle.height < 0 || rle.width < 0) throw CodecError("rle: negative size");
  std::uint64_t total = 0;
  for (auto c : rle.counts) total += c;
  const auto expected = static_cast<std::uint64_t>(rle.height) * static_cast<std::uint64_t>(rle.width);
  if (total != expected) {
    throw CodecError("rle: counts sum to " + std::to_string(total) + ", expected " + std::to_string(expected));
  }
}

BinaryMask rle_decode(const RLEMask& rle) {
  rle_validate(rle);
  BinaryMask mask(rle.width, rle.height, 0);
  std::uint64_t pos = 0;
  std::uint8_t value = 0;
  const auto h = static_cast<std::uint64_t>(rle.height);
  for (auto c : rle.counts) {
    if (value) {
      for (std::uint64_t i = pos; i < pos + c; ++i) {
        mask(static_cast<int>(i / h), static_cast<int>(i % h)) = 1;
      }
    }
    pos += c;
    value ^= 1;
  }
  return mask;
}

BBox bbox_from_mask(const BinaryMask& mask) {
  BBox b{mask.width(), mask.height(), -1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      b.x_min = std::min(b.x_min, x);
      b.y_min = std::min(b.y_min, y);
      b.x_max = std::max(b.x_max, x);
      b.y_max = std::max(b.y_max, y);
    }
  }
  if (b.x_max < 0) throw DegenerateMask("mask has no foreground");
  return b;
}

}  // namespace xannot::datastore
