#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xannot/error.hpp"

namespace xannot {

/// Row-major 2D array. Pixel (x, y) lives at index y * width + x.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw ShapeError("grid dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Grid(int width, int height, std::vector<T> data) : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0 ||
        data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ShapeError("grid data size does not match dimensions");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Grid& a, const Grid& b) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// 8-bit single-channel plane.
using GrayPlane = Grid<std::uint8_t>;
/// Binary mask; every value is 0 or 1.
using BinaryMask = Grid<std::uint8_t>;
/// Per-pixel foreground probability in [0, 1].
using SoftMask = Grid<double>;

/// Three 8-bit planes stored interleaved as RGBRGB... in row-major order.
struct PseudoColorImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  PseudoColorImage() = default;
  PseudoColorImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* pixel(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int x, int y) const { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }

  friend bool operator==(const PseudoColorImage&, const PseudoColorImage&) = default;
};

/// Inclusive integer pixel bounds.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const noexcept { return x_max - x_min + 1; }
  int height() const noexcept { return y_max - y_min + 1; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Mask with every value >= threshold set to 1.
BinaryMask binarize(const SoftMask& mask, double threshold = 0.5);
SoftMask to_soft(const BinaryMask& mask);
std::size_t count_foreground(const BinaryMask& mask);

}  // namespace xannot
