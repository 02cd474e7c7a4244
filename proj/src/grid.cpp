#include "xannot/grid.hpp"

#include <algorithm>

namespace xannot {

const char* to_string(BackendError::Kind kind) noexcept {
  switch (kind) {
    case BackendError::Kind::timeout: return "timeout";
    case BackendError::Kind::status: return "status";
    case BackendError::Kind::malformed: return "malformed";
    case BackendError::Kind::empty: return "empty";
  }
  return "unknown";
}

BinaryMask binarize(const SoftMask& mask, double threshold) {
  BinaryMask out(mask.width(), mask.height(), 0);
  std::transform(mask.storage().begin(), mask.storage().end(), out.storage().begin(),
                 [threshold](double v) { return static_cast<std::uint8_t>(v >= threshold ? 1 : 0); });
  return out;
}

SoftMask to_soft(const BinaryMask& mask) {
  SoftMask out(mask.width(), mask.height(), 0.0);
  std::transform(mask.storage().begin(), mask.storage().end(), out.storage().begin(),
                 [](std::uint8_t v) { return v != 0 ? 1.0 : 0.0; });
  return out;
}

std::size_t count_foreground(const BinaryMask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.storage().begin(), mask.storage().end(), [](std::uint8_t v) { return v != 0; }));
}

}  // namespace xannot
