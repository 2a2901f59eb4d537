#pragma once

#include <string>
#include <vector>

#include "san/sparse_tensor.hpp"

namespace san {

/// Standard depth evaluation metrics over valid ground-truth pixels.
/// `silog` is reported as 100 * sqrt(var(log gt - log pred)).
struct MetricReport {
  double abs_rel = 0;
  double sq_rel = 0;
  double rmse = 0;
  double rmse_log = 0;
  double silog = 0;
  double a1 = 0;  // delta < 1.25
  double a2 = 0;  // delta < 1.25^2
  double a3 = 0;  // delta < 1.25^3

  static std::string csv_header();
  std::string csv_row() const;
  std::vector<double> values() const { return {abs_rel, sq_rel, rmse, rmse_log, silog, a1, a2, a3}; }

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Pixels with gt <= 0 or gt > cap are ignored. Throws EmptyGroundTruthError
/// if none remain and ContractError on a non-positive prediction there.
template <class T>
MetricReport eval_metrics(const DepthMap<T>& gt, const DepthMap<T>& pred, double cap);

/// Element-wise mean of several reports. Throws ContractError when empty.
MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace san
