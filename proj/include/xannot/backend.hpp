#pragma once

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xannot/energy.hpp"
#include "xannot/grid.hpp"

namespace xannot::backend {

/// Foreground point prompt in pixel coordinates; (x, y) may be sub-pixel.
struct PointPrompt {
  double x = 0.0;
  double y = 0.0;
  int label = 1;

  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

struct MaskProposal {
  SoftMask mask;
  double score = 0.0;
};

struct OracleRequest {
  std::string image_id;
  /// Inline image; oracles that resolve ids server-side may leave it empty.
  std::shared_ptr<const PseudoColorImage> image;
  int width = 0;
  int height = 0;
  std::vector<PointPrompt> points;
  int max_proposals = 3;

  /// Throws ValidationError unless there is at least one in-bounds prompt.
  void validate() const;
};

class SegmentationOracle {
 public:
  virtual ~SegmentationOracle() = default;
  virtual std::vector<MaskProposal> segment(const OracleRequest& request) = 0;
};

/// Index of the highest score; ties go to the lowest index. Throws BackendError on empty input.
std::size_t select_best_index(std::span<const MaskProposal> proposals);
const SoftMask& select_best(std::span<const MaskProposal> proposals);

struct RegionGrowConfig {
  /// Intensity tolerance on the 8-bit low-energy plane.
  double tolerance = 12.0;
  int connectivity = 4;
  /// Regions covering more than this fraction of the image are treated as
  /// leaks into the background and come back empty with score 0.
  double max_region_fraction = 0.9;

  void validate() const;
};

/// 4 * pi * area / perimeter^2 on the pixel-edge perimeter, clamped to [0, 1]; 0 when empty.
double compactness(const BinaryMask& mask);

/// Flood fill from one seed pixel within +/- tolerance of the seed value, 4-connected.
BinaryMask flood_fill(const GrayPlane& plane, int seed_x, int seed_y, double tolerance);

/// Proposals at tolerances t/2, t and 2t; each is the union of the fills from every prompt.
std::vector<MaskProposal> region_grow_segment(const GrayPlane& low, std::span<const PointPrompt> prompts,
                                              const RegionGrowConfig& config = {});

/// Deterministic stand-in segmenter working on the low-energy plane of the request image.
class BuiltinOracle final : public SegmentationOracle {
 public:
  explicit BuiltinOracle(RegionGrowConfig config = {}) : config_(config) { config_.validate(); }
  std::vector<MaskProposal> segment(const OracleRequest& request) override;

 private:
  RegionGrowConfig config_;
};

struct RemoteConfig {
  /// Base URL, e.g. "http://127.0.0.1:8081"; requests go to <endpoint>/segment.
  std::string endpoint;
  std::chrono::milliseconds timeout{10000};
  int retries = 0;
};

struct RemoteResult {
  std::vector<MaskProposal> proposals;
  std::vector<std::string> warnings;
};

/// Request body: {"image_id" | "image_png_base64", "points": [{x, y, label}], "max_proposals"}.
nlohmann::json request_to_json(const OracleRequest& request);

/// Response body: {"proposals": [{"rle": [counts...], "size": [H, W], "score": s}]}.
/// Scores outside [0, 1] are clamped with a warning. Throws BackendError(malformed).
RemoteResult parse_response(const nlohmann::json& body, int expected_width, int expected_height);

/// POST <endpoint>/segment. Transport failures map to BackendError(timeout),
/// non-2xx to BackendError(status), schema violations to BackendError(malformed).
RemoteResult remote_segment(const RemoteConfig& config, const OracleRequest& request);

/// Client for an external prompt-based segmenter. One request in flight at a time.
class RemoteOracle final : public SegmentationOracle {
 public:
  explicit RemoteOracle(RemoteConfig config) : config_(std::move(config)) {}
  std::vector<MaskProposal> segment(const OracleRequest& request) override;
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  RemoteConfig config_;
  std::vector<std::string> warnings_;
};

}  // namespace xannot::backend
