#include "san/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "san/errors.hpp"

namespace san {

std::string MetricReport::csv_header() { return "abs_rel,sq_rel,rmse,rmse_log,silog,a1,a2,a3"; }

std::string MetricReport::csv_row() const {
  std::string row;
  char buf[40];
  for (double v : values()) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    if (!row.empty()) row += ',';
    row += buf;
  }
  return row;
}

template <class T>
MetricReport eval_metrics(const DepthMap<T>& gt, const DepthMap<T>& pred, double cap) {
  if (gt.shape() != pred.shape()) {
    throw ContractError("metrics: ground truth " + shape_str(gt.shape()) + " vs prediction " +
                        shape_str(pred.shape()));
  }
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0, s1 = 0, s2 = 0;
  std::size_t a1 = 0, a2 = 0, a3 = 0, n = 0;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    const double d = double(gt[i]);
    if (!(d > 0) || d > cap) continue;
    const double p = double(pred[i]);
    if (!(p > 0)) throw ContractError("metrics: prediction must be strictly positive");
    const double diff = d - p;
    abs_rel += std::abs(diff) / d;
    sq_rel += diff * diff / d;
    sq += diff * diff;
    const double dl = std::log(d) - std::log(p);
    sq_log += dl * dl;
    s1 += dl;
    s2 += dl * dl;
    const double ratio = std::max(d / p, p / d);
    a1 += ratio < 1.25;
    a2 += ratio < 1.25 * 1.25;
    a3 += ratio < 1.25 * 1.25 * 1.25;
    ++n;
  }
  if (n == 0) throw EmptyGroundTruthError("metrics: no valid ground-truth pixel below the cap");
  const double nn = double(n);
  MetricReport r;
  r.abs_rel = abs_rel / nn;
  r.sq_rel = sq_rel / nn;
  r.rmse = std::sqrt(sq / nn);
  r.rmse_log = std::sqrt(sq_log / nn);
  r.silog = 100.0 * std::sqrt(std::max(0.0, s2 / nn - (s1 / nn) * (s1 / nn)));
  r.a1 = double(a1) / nn;
  r.a2 = double(a2) / nn;
  r.a3 = double(a3) / nn;
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ContractError("mean_report of an empty list");
  MetricReport m;
  for (const auto& r : reports) {
    m.abs_rel += r.abs_rel;
    m.sq_rel += r.sq_rel;
    m.rmse += r.rmse;
    m.rmse_log += r.rmse_log;
    m.silog += r.silog;
    m.a1 += r.a1;
    m.a2 += r.a2;
    m.a3 += r.a3;
  }
  const double n = double(reports.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse /= n;
  m.rmse_log /= n;
  m.silog /= n;
  m.a1 /= n;
  m.a2 /= n;
  m.a3 /= n;
  return m;
}

template MetricReport eval_metrics(const DepthMap<float>&, const DepthMap<float>&, double);
template MetricReport eval_metrics(const DepthMap<double>&, const DepthMap<double>&, double);

}  // namespace san
