#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xannot/grid.hpp"

namespace xannot::curation {

struct FilterConfig {
  int min_resolution = 200;
  double aspect_low = 0.2;
  double aspect_high = 5.0;
  /// Empirical; tuned for 8-bit grayscale.
  double laplacian_threshold = 1500.0;
  double discard_probability = 0.9;
  std::uint64_t rng_seed = 0;

  /// Throws ConfigError unless 0 < aspect_low < aspect_high and 0 <= p <= 1.
  void validate() const;
};

enum class Decision { keep, reject };
enum class Reason { none, resolution, aspect_ratio, noise, io_error };

const char* to_string(Decision d) noexcept;
const char* to_string(Reason r) noexcept;

struct CurationRecord {
  std::string id;
  std::string source;
  Decision decision = Decision::keep;
  Reason reason = Reason::none;
  int width = 0;
  int height = 0;
  /// Aspect ratio is width / height.
  double aspect_ratio = 0.0;
  /// Only measured when the deterministic filters pass.
  std::optional<double> laplacian_variance;
  std::string error;

  int min_dim() const noexcept { return width < height ? width : height; }
};

/// Population variance of the 4-neighbour Laplacian over interior pixels.
/// Throws ShapeError when the plane is smaller than 3x3.
double laplacian_variance(const GrayPlane& gray);

struct CorpusImage {
  std::string id;
  std::string source;
  GrayPlane gray;
};

/// Resolution, then aspect ratio, then noise; the first filter that fires wins.
/// The noise draw is seeded from (rng_seed, id) so verdicts do not depend on order.
CurationRecord evaluate(const CorpusImage& image, const FilterConfig& config);

std::vector<CurationRecord> apply_filters(std::span<const CorpusImage> corpus, const FilterConfig& config);

/// Curates every *.png under `dir`. The first path component below `dir` is the
/// source tag when the image sits in a subdirectory; otherwise "default".
/// Unreadable files yield a reject record with Reason::io_error.
std::vector<CurationRecord> curate_directory(const std::filesystem::path& dir, const FilterConfig& config);

enum class Split { train, validation, test };
const char* to_string(Split s) noexcept;
/// Accepts train|validation|val|test; throws ValidationError otherwise.
Split split_from_string(std::string_view s);

struct SplitItem {
  std::string id;
  std::string source;
};

struct SplitRatios {
  int train = 8;
  int validation = 1;
  int test = 1;
};

struct SplitAssignment {
  std::map<std::string, Split> split;
  std::map<std::string, std::string> source;

  /// Counts per source, indexed by Split.
  std::map<std::string, std::array<int, 3>> counts() const;
};

/// Largest-remainder apportionment of n items over the ratios (ties go to the
/// earlier bucket).
std::array<int, 3> apportion(int n, const SplitRatios& ratios);

/// Preserved ids keep their split; the rest are shuffled per source and cut
/// by `apportion`. Throws ValidationError on conflicts or unknown preserved ids.
SplitAssignment split(std::span<const SplitItem> kept, const SplitRatios& ratios,
                      std::span<const std::pair<std::string, Split>> preserved, std::uint64_t seed);

struct Summary {
  int total = 0;
  int kept = 0;
  std::map<std::string, int> rejected_by_reason;
};

Summary summarize(std::span<const CurationRecord> records);

/// One JSON object per line, then a final {"summary": ...} line.
std::string format_report(std::span<const CurationRecord> records, const FilterConfig& config);

FilterConfig config_from_json(std::string_view json_text);

}  // namespace xannot::curation
