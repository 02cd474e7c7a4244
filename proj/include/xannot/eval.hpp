#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xannot/grid.hpp"

namespace xannot::eval {

struct Overlap {
  std::size_t intersection = 0;
  std::size_t a = 0;
  std::size_t b = 0;
};

/// Throws ShapeError when the masks differ in size.
Overlap overlap(const BinaryMask& a, const BinaryMask& b);
/// |a & b| / |a | b|; 1 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);
/// 2|a & b| / (|a| + |b|); 1 when both are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

/// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2). Ties are
/// dropped by the caller. Returns 1 when there are no untied pairs.
double sign_test_p(std::size_t wins, std::size_t losses);

struct EvalItem {
  std::string id;
  std::string category;
  std::optional<BinaryMask> ground_truth;
  /// One prediction per repetition; a missing entry is reported as an error.
  std::vector<std::optional<BinaryMask>> predictions;
};

struct EvalOptions {
  int repetitions = 3;
  std::vector<std::uint64_t> seeds;
  std::string run;
};

struct InstanceResult {
  std::string id;
  std::string category;
  int repetition = 0;
  double iou = 0.0;
  double dice = 0.0;
};

struct ItemError {
  std::string id;
  int repetition = 0;
  std::string message;
};

struct CategoryResult {
  std::string category;
  double mean_iou = 0.0;
  double mean_dice = 0.0;
  std::size_t instances = 0;
};

struct EvalReport {
  std::string run;
  int repetitions = 0;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::vector<InstanceResult> instances;
  std::vector<CategoryResult> categories;
  std::vector<ItemError> errors;
  /// Macro average over categories, then averaged over repetitions.
  double miou = 0.0;
  double mean_dice = 0.0;
  std::vector<double> miou_per_repetition;
};

/// Metrics per instance and repetition. Items are processed in id order, so the
/// report does not depend on input order. Throws ValidationError on duplicate ids.
EvalReport evaluate_run(std::vector<EvalItem> items, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Human-readable table followed by a "## summary" line and the JSON report.
std::string format_report(const EvalReport& report);
/// Recovers the JSON block of a formatted report. Throws ValidationError.
nlohmann::json parse_report_summary(std::string_view text);

/// Loads <gt>/<id>.png and either <pred>/<id>.png (one repetition) or
/// <pred>/rep<N>/<id>.png. `categories` maps ids to classes; others get "object".
std::vector<EvalItem> load_run(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                               const std::map<std::string, std::string>& categories, int* repetitions);

}  // namespace xannot::eval
