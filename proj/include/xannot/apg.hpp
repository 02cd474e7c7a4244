#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xannot/backend.hpp"
#include "xannot/energy.hpp"
#include "xannot/grid.hpp"
#include "xannot/random.hpp"

namespace xannot::apg {

using backend::PointPrompt;

struct Pixel {
  int x = 0;
  int y = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Continuous axis-aligned box [x0, x1] x [y0, y1] in pixel-edge coordinates:
/// pixel (i, j) covers [i, i+1) x [j, j+1), so its center is (i + 0.5, j + 0.5).
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const noexcept { return x1 - x0; }
  double height() const noexcept { return y1 - y0; }
  double area() const noexcept { return width() * height(); }
  double diagonal() const noexcept;
  bool contains(double x, double y) const noexcept { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

Box to_box(const BBox& b) noexcept;

struct APGConfig {
  double scale_low = 0.9;
  double scale_high = 1.1;
  int k = 2;
  double tau_min_px = 2.0;
  double tau_diag_fraction = 0.02;
  double binarize_threshold = 0.5;
  int kmeans_max_iterations = 20;
  double kmeans_tolerance = 1e-3;
  /// Cluster on (x, y, I_H, I_L) instead of (x, y). Needs the decomposed image.
  bool intensity_features = false;
  std::uint64_t rng_seed = 0;

  void validate() const;
  /// max(tau_min_px, tau_diag_fraction * diagonal).
  double tau(const Box& box) const noexcept;
};

/// Tight bounds of mask >= threshold. Throws DegenerateMask when nothing passes.
BBox bbox_of(const SoftMask& mask, double threshold = 0.5);

/// Center-preserving scale of width by s_w and height by s_h, no clipping.
Box scale_box(const Box& box, double s_w, double s_h) noexcept;
Box clip_box(const Box& box, int width, int height) noexcept;
/// scale_box followed by clip_box.
Box scale_bbox(const BBox& b0, double s_w, double s_h, int width, int height) noexcept;

struct Clustering {
  /// False when a cluster came out empty or the centroids are within tau.
  bool separated = false;
  std::vector<Pixel> c1_pixels;
  std::vector<Pixel> c2_pixels;
  /// Spatial centroids at pixel-center coordinates.
  Point2 c1;
  Point2 c2;
  double tau = 0.0;
  int iterations = 0;
};

/// Two-means over the foreground pixels whose centers lie in `box`. The first
/// center is a seeded random foreground pixel, the second the pixel farthest
/// from it. Throws DegenerateMask when no foreground pixel lies in the box.
Clustering cluster_foreground(const SoftMask& mask, const Box& box, const APGConfig& config, Rng& rng,
                              const energy::DualEnergyPair* features = nullptr);

std::int64_t squared_distance(const Pixel& a, const Pixel& b) noexcept;

/// argmax over C1 x C2 of the Euclidean distance; ties go to the lexicographically
/// smallest (p1.y, p1.x, p2.y, p2.x). Exhaustive when |C1|*|C2| <= 1e7, otherwise
/// restricted to convex-hull vertices, which contain every maximizer.
std::pair<Pixel, Pixel> farthest_cross_pair(const std::vector<Pixel>& c1, const std::vector<Pixel>& c2);
std::pair<Pixel, Pixel> farthest_cross_pair_brute(const std::vector<Pixel>& c1, const std::vector<Pixel>& c2);
std::pair<Pixel, Pixel> farthest_cross_pair_hull(const std::vector<Pixel>& c1, const std::vector<Pixel>& c2);

/// Strict convex hull (collinear points dropped), counter-clockwise.
std::vector<Pixel> convex_hull(std::vector<Pixel> points);

enum class Mode { clustered, fallback, degenerate };
std::string to_string(Mode mode);

struct APGResult {
  Mode mode = Mode::degenerate;
  std::pair<PointPrompt, PointPrompt> points;
  std::optional<Point2> c1;
  std::optional<Point2> c2;
  /// Unscaled bounds of M0; absent in degenerate mode.
  std::optional<BBox> b0;
  /// Scaled and clipped box the points were drawn from.
  std::optional<Box> box;
  double s_w = 1.0;
  double s_h = 1.0;
  /// Oracle output for {p0}; m0 is the best of these.
  std::vector<backend::MaskProposal> initial_proposals;
  SoftMask m0;
  std::vector<Pixel> c1_pixels;
  std::vector<Pixel> c2_pixels;
};

/// Expands p0 into two prompts. `request` names the image (inline or by id);
/// its points are replaced by {p0}. Oracle failures propagate as BackendError.
APGResult generate(const backend::OracleRequest& request, const PointPrompt& p0, backend::SegmentationOracle& oracle,
                   const APGConfig& config = {});

}  // namespace xannot::apg
