#pragma once

#include "san/param_store.hpp"

namespace san {

struct OptimConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  double lr_decay_factor = 2.0;
  int lr_decay_every = 20;  // epochs

  /// Throws ConfigError unless 0 < beta < 1, lr > 0, and the decay settings are positive.
  void validate() const;
};

/// Step-decayed learning rate: lr / factor^floor(epoch / every).
double decay_lr(const OptimConfig& cfg, int epoch);

/// One AdamW update (decoupled weight decay, bias-corrected moments) at
/// learning rate `lr`. Frozen entries and buffers are left untouched. Throws
/// ContractError if an unfrozen parameter has no gradient.
template <class T>
void adamw_step(ParamStore<T>& params, const OptimConfig& cfg, double lr);

}  // namespace san
