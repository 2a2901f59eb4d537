#include "san/optim.hpp"

#include <cmath>

#include "san/errors.hpp"

namespace san {

void OptimConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(beta1 > 0 && beta1 < 1)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(eps > 0)) throw ConfigError("eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(lr_decay_factor >= 1)) throw ConfigError("lr_decay_factor must be >= 1");
  if (lr_decay_every <= 0) throw ConfigError("lr_decay_every must be positive");
}

double decay_lr(const OptimConfig& cfg, int epoch) {
  if (epoch < 0) throw ContractError("epoch must be nonnegative");
  return cfg.lr / std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

template <class T>
void adamw_step(ParamStore<T>& params, const OptimConfig& cfg, double lr) {
  for (auto& e : params.entries()) {
    if (e.is_buffer || e.frozen) continue;
    if (!e.node->has_grad()) throw ContractError("no gradient for unfrozen parameter " + e.name);
  }
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2), eps = T(cfg.eps);
  const T decay = T(1) - T(lr * cfg.weight_decay);
  for (auto& e : params.entries()) {
    if (e.is_buffer || e.frozen) continue;
    ++e.step;
    const T bc1 = T(1) - T(std::pow(cfg.beta1, double(e.step)));
    const T bc2 = T(1) - T(std::pow(cfg.beta2, double(e.step)));
    const T step_size = T(lr) / bc1;
    const T bc2_sqrt = std::sqrt(bc2);
    T* p = e.node->value.data();
    const T* g = e.node->grad.data();
    T* m = e.exp_avg.data();
    T* v = e.exp_avg_sq.data();
    const std::size_t n = e.node->value.numel();
    for (std::size_t i = 0; i < n; ++i) {
      p[i] *= decay;
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) / bc2_sqrt + eps);
    }
  }
}

template void adamw_step(ParamStore<float>&, const OptimConfig&, double);
template void adamw_step(ParamStore<double>&, const OptimConfig&, double);

}  // namespace san
