#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xannot::neural {

struct GradCheckOptions {
  std::uint64_t seed = 0;
  /// Random inputs for the full encoder + location initializer check.
  int inputs = 20;
  /// Spatial size of the full-network input (size x size x 2).
  int size = 16;
  /// Spatial size of the per-op inputs (op_size x op_size x 2).
  int op_size = 6;
  /// Coordinates probed per parameter tensor in the full-network check;
  /// every input coordinate is always probed.
  int param_samples = 48;
  double step = 1e-5;
};

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates whose +/- step changed max-pool or top-k routing; no derivative
  /// exists across such a kink, so they are excluded and counted here.
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  double seconds = 0.0;
};

/// |a - n| / max(|a|, |n|, 1e-5). The floor sits above the round-off noise of a
/// 1e-5 central difference, so vanishing gradients are not compared against zero.
double relative_error(double analytic, double numeric);

/// Central finite differences against every analytic backward, one entry per check.
GradCheckReport run_gradcheck(const GradCheckOptions& options = {});

}  // namespace xannot::neural
