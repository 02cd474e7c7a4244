#include "xannot/apg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>

namespace xannot::apg {

double Box::diagonal() const noexcept { return std::hypot(width(), height()); }

Box to_box(const BBox& b) noexcept {
  return {static_cast<double>(b.x_min), static_cast<double>(b.y_min), static_cast<double>(b.x_max) + 1.0,
          static_cast<double>(b.y_max) + 1.0};
}

void APGConfig::validate() const {
  if (!(scale_low > 0.0 && scale_low <= scale_high)) throw ConfigError("apg: need 0 < scale_low <= scale_high");
  if (k != 2) throw ConfigError("apg: only K = 2 is supported");
  if (!(tau_min_px >= 0.0) || !(tau_diag_fraction >= 0.0)) throw ConfigError("apg: tau parameters must be >= 0");
  if (!(binarize_threshold > 0.0 && binarize_threshold <= 1.0)) {
    throw ConfigError("apg: binarize_threshold must lie in (0, 1]");
  }
  if (kmeans_max_iterations < 1) throw ConfigError("apg: kmeans_max_iterations must be >= 1");
  if (!(kmeans_tolerance >= 0.0)) throw ConfigError("apg: kmeans_tolerance must be >= 0");
}

double APGConfig::tau(const Box& box) const noexcept {
  return std::max(tau_min_px, tau_diag_fraction * box.diagonal());
}

BBox bbox_of(const SoftMask& mask, double threshold) {
  BBox b{mask.width(), mask.height(), -1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!(mask(x, y) >= threshold)) continue;
      b.x_min = std::min(b.x_min, x);
      b.y_min = std::min(b.y_min, y);
      b.x_max = std::max(b.x_max, x);
      b.y_max = std::max(b.y_max, y);
    }
  }
  if (b.x_max < 0) throw DegenerateMask("mask has no pixel at or above the threshold");
  return b;
}

Box scale_box(const Box& box, double s_w, double s_h) noexcept {
  const double cx = 0.5 * (box.x0 + box.x1), cy = 0.5 * (box.y0 + box.y1);
  const double hw = 0.5 * box.width() * s_w, hh = 0.5 * box.height() * s_h;
  return {cx - hw, cy - hh, cx + hw, cy + hh};
}

Box clip_box(const Box& box, int width, int height) noexcept {
  return {std::clamp(box.x0, 0.0, static_cast<double>(width)), std::clamp(box.y0, 0.0, static_cast<double>(height)),
          std::clamp(box.x1, 0.0, static_cast<double>(width)), std::clamp(box.y1, 0.0, static_cast<double>(height))};
}

Box scale_bbox(const BBox& b0, double s_w, double s_h, int width, int height) noexcept {
  return clip_box(scale_box(to_box(b0), s_w, s_h), width, height);
}

namespace {

using Feature = std::array<double, 4>;

double feature_dist2(const Feature& a, const Feature& b, int dims) {
  double s = 0.0;
  for (int i = 0; i < dims; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Nearest center; ties go to cluster 0.
int assign(const Feature& f, const std::array<Feature, 2>& centers, int dims) {
  return feature_dist2(f, centers[1], dims) < feature_dist2(f, centers[0], dims) ? 1 : 0;
}

Point2 spatial_centroid(const std::vector<Pixel>& pixels) {
  double sx = 0.0, sy = 0.0;
  for (const auto& p : pixels) {
    sx += p.x + 0.5;
    sy += p.y + 0.5;
  }
  const double n = static_cast<double>(pixels.size());
  return {sx / n, sy / n};
}

}  // namespace

Clustering cluster_foreground(const SoftMask& mask, const Box& box, const APGConfig& config, Rng& rng,
                              const energy::DualEnergyPair* features) {
  std::vector<Pixel> fg;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y) >= config.binarize_threshold && box.contains(x + 0.5, y + 0.5)) fg.push_back({x, y});
    }
  }
  if (fg.empty()) throw DegenerateMask("no foreground pixel inside the box");

  const bool use_intensity = config.intensity_features && features != nullptr;
  if (use_intensity && (features->high.width() != mask.width() || features->high.height() != mask.height())) {
    throw ShapeError("intensity features differ in size from the mask");
  }
  const int dims = use_intensity ? 4 : 2;
  std::vector<Feature> feats(fg.size());
  for (std::size_t i = 0; i < fg.size(); ++i) {
    const auto [x, y] = fg[i];
    feats[i] = {x + 0.5, y + 0.5, 0.0, 0.0};
    if (use_intensity) {
      feats[i][2] = features->high(x, y);
      feats[i][3] = features->low(x, y);
    }
  }

  Clustering out;
  out.tau = config.tau(box);

  std::array<Feature, 2> centers;
  const std::size_t first = rng.below(fg.size());
  centers[0] = feats[first];
  std::size_t far = 0;
  double far_d = -1.0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const double d = feature_dist2(feats[i], centers[0], dims);
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  centers[1] = feats[far];

  std::vector<int> label(fg.size(), 0);
  for (int it = 0; it < config.kmeans_max_iterations; ++it) {
    out.iterations = it + 1;
    std::array<Feature, 2> sum{};
    std::array<std::size_t, 2> count{};
    for (std::size_t i = 0; i < feats.size(); ++i) {
      label[i] = assign(feats[i], centers, dims);
      for (int d = 0; d < dims; ++d) sum[label[i]][d] += feats[i][d];
      ++count[label[i]];
    }
    double shift = 0.0;
    for (int c = 0; c < 2; ++c) {
      if (count[c] == 0) continue;
      Feature next = sum[c];
      for (int d = 0; d < dims; ++d) next[d] /= static_cast<double>(count[c]);
      shift = std::max(shift, std::sqrt(feature_dist2(next, centers[c], dims)));
      centers[c] = next;
    }
    if (shift < config.kmeans_tolerance) break;
  }
  for (std::size_t i = 0; i < feats.size(); ++i) {
    label[i] = assign(feats[i], centers, dims);
    (label[i] == 0 ? out.c1_pixels : out.c2_pixels).push_back(fg[i]);
  }

  if (out.c1_pixels.empty() || out.c2_pixels.empty()) return out;
  out.c1 = spatial_centroid(out.c1_pixels);
  out.c2 = spatial_centroid(out.c2_pixels);
  out.separated = std::hypot(out.c1.x - out.c2.x, out.c1.y - out.c2.y) > out.tau;
  return out;
}

std::int64_t squared_distance(const Pixel& a, const Pixel& b) noexcept {
  const std::int64_t dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

namespace {

auto pair_key(const Pixel& a, const Pixel& b) { return std::make_tuple(a.y, a.x, b.y, b.x); }

std::pair<Pixel, Pixel> best_pair(const std::vector<Pixel>& c1, const std::vector<Pixel>& c2) {
  if (c1.empty() || c2.empty()) throw Error("farthest_cross_pair: empty cluster");
  std::pair<Pixel, Pixel> best{c1.front(), c2.front()};
  std::int64_t best_d = -1;
  for (const auto& a : c1) {
    for (const auto& b : c2) {
      const std::int64_t d = squared_distance(a, b);
      if (d > best_d || (d == best_d && pair_key(a, b) < pair_key(best.first, best.second))) {
        best_d = d;
        best = {a, b};
      }
    }
  }
  return best;
}

std::int64_t cross(const Pixel& o, const Pixel& a, const Pixel& b) {
  return static_cast<std::int64_t>(a.x - o.x) * (b.y - o.y) - static_cast<std::int64_t>(a.y - o.y) * (b.x - o.x);
}

}  // namespace

std::vector<Pixel> convex_hull(std::vector<Pixel> points) {
  std::sort(points.begin(), points.end(),
            [](const Pixel& a, const Pixel& b) { return std::tie(a.x, a.y) < std::tie(b.x, b.y); });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;
  std::vector<Pixel> hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return hull;
}

std::pair<Pixel, Pixel> farthest_cross_pair_brute(const std::vector<Pixel>& c1, const std::vector<Pixel>& c2) {
  return best_pair(c1, c2);
}

std::pair<Pixel, Pixel> farthest_cross_pair_hull(const std::vector<Pixel>& c1, const std::vector<Pixel>& c2) {
  if (c1.empty() || c2.empty()) throw Error("farthest_cross_pair: empty cluster");
  // Squared distance is strictly convex along any segment, so a farthest partner
  // is never interior to a hull edge: every maximizer is a pair of hull vertices.
  return best_pair(convex_hull(c1), convex_hull(c2));
}

std::pair<Pixel, Pixel> farthest_cross_pair(const std::vector<Pixel>& c1, const std::vector<Pixel>& c2) {
  const double work = static_cast<double>(c1.size()) * static_cast<double>(c2.size());
  return work <= 1e7 ? farthest_cross_pair_brute(c1, c2) : farthest_cross_pair_hull(c1, c2);
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::clustered: return "clustered";
    case Mode::fallback: return "fallback";
    case Mode::degenerate: return "degenerate";
  }
  return "unknown";
}

APGResult generate(const backend::OracleRequest& request, const PointPrompt& p0, backend::SegmentationOracle& oracle,
                   const APGConfig& config) {
  config.validate();
  backend::OracleRequest initial = request;
  initial.points = {p0};
  initial.validate();

  APGResult result;
  result.initial_proposals = oracle.segment(initial);
  result.m0 = backend::select_best(result.initial_proposals);
  if (result.m0.width() != request.width || result.m0.height() != request.height) {
    throw BackendError(BackendError::Kind::malformed, "initial mask size differs from the image");
  }
  result.points = {p0, p0};

  BBox b0;
  try {
    b0 = bbox_of(result.m0, config.binarize_threshold);
  } catch (const DegenerateMask&) {
    result.mode = Mode::degenerate;
    return result;
  }
  result.b0 = b0;

  Rng rng(config.rng_seed);
  result.s_w = rng.uniform(config.scale_low, config.scale_high);
  result.s_h = rng.uniform(config.scale_low, config.scale_high);
  const Box box = scale_bbox(b0, result.s_w, result.s_h, request.width, request.height);
  result.box = box;

  std::optional<energy::DualEnergyPair> pair;
  if (config.intensity_features && request.image) pair = energy::decompose(*request.image);

  bool separated = false;
  try {
    Clustering cl = cluster_foreground(result.m0, box, config, rng, pair ? &*pair : nullptr);
    separated = cl.separated;
    if (separated) {
      const auto [a, b] = farthest_cross_pair(cl.c1_pixels, cl.c2_pixels);
      result.mode = Mode::clustered;
      result.points = {PointPrompt{a.x + 0.5, a.y + 0.5, 1}, PointPrompt{b.x + 0.5, b.y + 0.5, 1}};
      result.c1 = cl.c1;
      result.c2 = cl.c2;
      result.c1_pixels = std::move(cl.c1_pixels);
      result.c2_pixels = std::move(cl.c2_pixels);
    }
  } catch (const DegenerateMask&) {
    // A shrunken box can miss a hollow mask entirely; sample the box instead.
  }
  if (!separated) {
    result.mode = Mode::fallback;
    const PointPrompt a{rng.uniform(box.x0, box.x1), rng.uniform(box.y0, box.y1), 1};
    const PointPrompt b{rng.uniform(box.x0, box.x1), rng.uniform(box.y0, box.y1), 1};
    result.points = {a, b};
  }
  return result;
}

}  // namespace xannot::apg
