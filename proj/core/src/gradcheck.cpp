#include "san/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "san/dense_ops.hpp"
#include "san/kernel_map.hpp"
#include "san/losses.hpp"
#include "san/rng.hpp"
#include "san/san.hpp"
#include "san/sparse_ops.hpp"

namespace san {

namespace {

using D = double;
using Fn = std::function<Var<D>(const std::vector<Var<D>>&)>;

Tensor<D> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.span()) v = rng.uniform(lo, hi);
  return t;
}

/// Values in [-1, 1] whose magnitudes stay above `gap`, so kinks at zero are
/// not crossed by the finite-difference step.
Tensor<D> away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.span()) {
    const double m = rng.uniform(gap, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

/// Distinct values spaced `gap` apart in shuffled order (max-pool ties).
Tensor<D> distinct_values(Shape shape, Rng& rng, double gap = 0.05) {
  Tensor<D> t(std::move(shape));
  std::vector<std::size_t> perm(t.numel());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  for (std::size_t i = 0; i < perm.size(); ++i) t[i] = double(perm[i]) * gap - 1.0;
  return t;
}

double relative_error(const Tensor<D>& a, const Tensor<D>& n) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

double check(std::vector<Tensor<D>> inputs, const Fn& fn, Rng& rng, double h) {
  std::vector<Var<D>> leaves;
  for (const auto& t : inputs) leaves.push_back(make_leaf(t, true));
  const Var<D> out = fn(leaves);
  const Tensor<D> weights = random_tensor(out->value.shape(), rng);
  backward(weighted_sum(out, weights));

  auto objective = [&](const std::vector<Tensor<D>>& values) {
    NoGradGuard guard;
    std::vector<Var<D>> in;
    for (const auto& t : values) in.push_back(make_leaf(t, false));
    return weighted_sum(fn(in), weights)->value[0];
  };

  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<D> numeric(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double plus = objective(inputs);
      inputs[k][i] = saved - h;
      const double minus = objective(inputs);
      inputs[k][i] = saved;
      numeric[i] = (plus - minus) / (2 * h);
    }
    const Tensor<D> analytic = leaves[k]->has_grad() ? leaves[k]->grad : Tensor<D>(inputs[k].shape());
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

std::vector<Coord> random_coords(int w, int h, double density, Rng& rng) {
  std::vector<Coord> coords;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (rng.uniform() < density) coords.push_back({u, v, 0});
  if (coords.empty()) coords.push_back({0, 0, 0});
  return coords;
}

SparseVar<D> with_coords(const std::shared_ptr<const std::vector<Coord>>& coords, const Var<D>& feats, int w,
                         int h) {
  return {coords, feats, w, h};
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(std::uint64_t seed, double h, double tol) {
  Rng rng(seed);
  std::vector<GradcheckRow> rows;
  auto record = [&](const std::string& op, double err) { rows.push_back({op, err, tol, err < tol}); };

  record("conv2d", check({random_tensor({3, 6, 5}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng)},
                         [](const auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); }, rng, h));
  record("conv2d_stride2",
         check({random_tensor({2, 8, 8}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
               [](const auto& in) { return conv2d(in[0], in[1], in[2], 2, 1); }, rng, h));
  record("relu", check({away_from_zero({2, 4, 4}, rng)}, [](const auto& in) { return relu(in[0]); }, rng, h));
  record("add", check({random_tensor({2, 3, 3}, rng), random_tensor({2, 3, 3}, rng)},
                      [](const auto& in) { return add(in[0], in[1]); }, rng, h));
  record("scale", check({random_tensor({5}, rng)}, [](const auto& in) { return scale(in[0], 0.37); }, rng, h));
  record("concat_upsample", check({random_tensor({2, 2, 3}, rng), random_tensor({1, 4, 6}, rng)},
                                  [](const auto& in) { return concat_channels(upsample2x(in[0]), in[1]); }, rng, h));
  record("inverse_depth_head", check({random_tensor({1, 4, 4}, rng, -4, 4)},
                                     [](const auto& in) { return inverse_depth_head(in[0], 0.1, 100.0); }, rng, h));
  record("augment_skip",
         check({random_tensor({3, 4, 4}, rng), random_tensor({3, 4, 4}, rng), random_tensor({3}, rng),
                random_tensor({3}, rng)},
               [](const auto& in) { return augment_skip(in[0], in[1], in[2], in[3]); }, rng, h));

  {
    const int w = 7, hh = 6;
    auto coords = std::make_shared<const std::vector<Coord>>(random_coords(w, hh, 0.5, rng));
    const int n = int(coords->size());
    const KernelMap km1 = build_kernel_map(*coords, 3, 1, w, hh);
    const KernelMap km2 = build_kernel_map(*coords, 3, 2, w, hh);
    record("sparse_conv2d",
           check({random_tensor({n, 2}, rng), random_tensor({9, 2, 3}, rng), random_tensor({3}, rng)},
                 [&](const auto& in) { return sparse_conv2d(with_coords(coords, in[0], w, hh), in[1], in[2], km1).feats; },
                 rng, h));
    record("sparse_conv2d_stride2",
           check({random_tensor({n, 2}, rng), random_tensor({9, 2, 3}, rng), random_tensor({3}, rng)},
                 [&](const auto& in) { return sparse_conv2d(with_coords(coords, in[0], w, hh), in[1], in[2], km2).feats; },
                 rng, h));
    record("sparse_batch_norm",
           check({random_tensor({n, 3}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)},
                 [&](const auto& in) {
                   Tensor<D> rm({3}), rv({3}, 1.0);
                   return sparse_batch_norm(with_coords(coords, in[0], w, hh), in[1], in[2], rm, rv,
                                            BatchNormMode::Train).feats;
                 },
                 rng, h));
    const Tensor<D> rm = random_tensor({3}, rng), rv = random_tensor({3}, rng, 0.5, 2.0);
    record("sparse_batch_norm_eval",
           check({random_tensor({n, 3}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)},
                 [&](const auto& in) {
                   Tensor<D> m = rm, v = rv;
                   return sparse_batch_norm(with_coords(coords, in[0], w, hh), in[1], in[2], m, v,
                                            BatchNormMode::Eval).feats;
                 },
                 rng, h));
    record("sparse_relu", check({away_from_zero({n, 2}, rng)},
                                [&](const auto& in) { return sparse_relu(with_coords(coords, in[0], w, hh)).feats; },
                                rng, h));
    record("sparse_max_pool",
           check({distinct_values({n, 2}, rng)},
                 [&](const auto& in) { return sparse_max_pool(with_coords(coords, in[0], w, hh)).feats; }, rng, h));
    record("densify", check({random_tensor({n, 2}, rng)},
                            [&](const auto& in) { return densify(with_coords(coords, in[0], w, hh)); }, rng, h));
  }

  {
    Tensor<D> gt = random_tensor({1, 5, 5}, rng, 0.5, 20.0);
    for (std::size_t i = 0; i < gt.numel(); i += 4) gt[i] = 0;  // masked pixels
    record("silog", check({random_tensor({1, 5, 5}, rng, 0.5, 20.0)},
                          [gt](const auto& in) { return silog(gt, in[0], 0.85); }, rng, h));
  }
  return rows;
}

}  // namespace san
