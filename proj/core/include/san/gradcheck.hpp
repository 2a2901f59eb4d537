#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace san {

struct GradcheckRow {
  std::string op;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed = false;
};

/// Central finite-difference check of every differentiable op in 64-bit on
/// small random inputs. The error for one input is
/// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2); each row
/// reports the worst input of that op.
std::vector<GradcheckRow> run_gradcheck(std::uint64_t seed, double step = 1e-4, double tolerance = 1e-5);

}  // namespace san
