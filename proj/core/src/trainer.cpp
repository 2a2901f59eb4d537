#include "san/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "san/dense_ops.hpp"
#include "san/depthnet.hpp"
#include "san/errors.hpp"
#include "san/losses.hpp"
#include "san/optim.hpp"
#include "san/rng.hpp"

namespace san {

namespace {

// Random stream identifiers for derive_seed.
constexpr std::uint64_t kShuffleStream = 0x7001;
constexpr std::uint64_t kTrainSparsityStream = 0x7002;
constexpr std::uint64_t kEvalSparsityStream = 0x7003;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

const char* to_string(EvalMode mode) { return mode == EvalMode::Prediction ? "prediction" : "completion"; }

std::string EpochLog::csv_header() { return "epoch,stage,lr,train_loss,mode," + MetricReport::csv_header(); }

std::string EpochLog::csv_row() const {
  std::string row = std::to_string(epoch) + "," + std::to_string(stage) + "," + fmt(lr) + "," + fmt(train_loss) +
                    "," + to_string(mode) + ",";
  if (val) {
    row += val->csv_row();
  } else {
    row += ",,,,,,,";
  }
  return row;
}

template <class T>
Checkpoint<T> init_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint<T> ckpt;
  ckpt.config = config;
  DepthNet<T>(config.model).init_params(ckpt.params, config.seed);
  return ckpt;
}

template <class T>
void apply_freeze_policy(ParamStore<T>& params, const TrainConfig& config, int stage) {
  if (stage == 1) {
    params.set_frozen_prefix(kEncoderPrefix, false);
    params.set_frozen_prefix(kDecoderPrefix, false);
    params.set_frozen_prefix(kSanPrefix, true);
  } else {
    params.set_frozen_prefix(kEncoderPrefix, config.freeze_pred_encoder);
    params.set_frozen_prefix(kDecoderPrefix, config.freeze_pred_decoder);
    params.set_frozen_prefix(kSanPrefix, false);
  }
}

double epoch_lr(const TrainConfig& config, int epoch) {
  const bool stage2 = epoch >= config.stage1_epochs;
  const int clock = stage2 && config.lr_decay_reset_stage2 ? epoch - config.stage1_epochs : epoch;
  return decay_lr(config.optim, clock);
}

template <class T>
DepthMap<T> training_sparse_input(const TrainConfig& config, const DepthMap<T>& depth, int epoch, std::size_t index,
                                  std::size_t num_frames) {
  Rng draw(derive_seed(config.seed, kTrainSparsityStream, std::uint64_t(epoch) * num_frames + index));
  const double fraction = draw.uniform(config.train_sparsity_min, config.train_sparsity_max);
  return sample_sparse(depth, SparsitySpec::with_fraction(fraction, draw.next()));
}

template <class T>
Checkpoint<T> train(const TrainConfig& config, const Dataset<T>& data, const TrainHooks<T>& hooks,
                    std::optional<Checkpoint<T>> resume, std::optional<int> stop_after_epochs) {
  config.validate();
  if (data.train.empty()) throw ContractError("training split is empty");
  Checkpoint<T> ckpt = resume ? std::move(*resume) : init_checkpoint<T>(config);
  if (resume && ckpt.config.model.widths != config.model.widths) {
    throw ConfigError("resume checkpoint was trained with a different architecture");
  }
  ckpt.config = config;
  const DepthNet<T> net(config.model);
  const int total = config.total_epochs();
  const int stop = std::min(total, stop_after_epochs.value_or(total));
  const T lambda = T(config.lambda);

  if (ckpt.epochs_done == 0 && config.stage1_epochs == 0 && hooks.on_stage_boundary) hooks.on_stage_boundary(ckpt);

  for (int epoch = ckpt.epochs_done; epoch < stop; ++epoch) {
    const int stage = epoch < config.stage1_epochs ? 1 : 2;
    apply_freeze_policy(ckpt.params, config, stage);
    const double lr = epoch_lr(config, epoch);

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng(derive_seed(config.seed, kShuffleStream, std::uint64_t(epoch))).shuffle(order);

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.accum)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(config.accum));
      const T inv_batch = T(1) / T(end - start);
      ckpt.params.zero_grad();
      auto check_finite = [&](double value, std::size_t idx) {
        if (!std::isfinite(value)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", frame " +
                                std::to_string(idx));
        }
        loss_sum += value;
      };
      if (stage == 1) {
        for (std::size_t k = start; k < end; ++k) {
          const Frame<T>& frame = data.train[order[k]];
          const Var<T> loss = silog(frame.depth, net.forward_prediction(ckpt.params, frame.image), lambda);
          check_finite(double(loss->value[0]), order[k]);
          backward(scale(loss, inv_batch));
        }
      } else {
        // The whole group goes through the SAN together so its batch
        // normalization sees every sample of the step.
        std::vector<DepthMap<T>> sparse;
        std::vector<const ImageTensor<T>*> images;
        for (std::size_t k = start; k < end; ++k) {
          const std::size_t idx = order[k];
          sparse.push_back(training_sparse_input(config, data.train[idx].depth, epoch, idx, data.train.size()));
          images.push_back(&data.train[idx].image);
        }
        std::vector<const DepthMap<T>*> sparse_ptrs;
        for (const auto& d : sparse) sparse_ptrs.push_back(&d);
        const auto outs = net.forward_both_batch(ckpt.params, images, sparse_ptrs, BatchNormMode::Train);
        Var<T> total;
        for (std::size_t k = start; k < end; ++k) {
          const Frame<T>& frame = data.train[order[k]];
          const auto& out = outs[k - start];
          const Var<T> loss = config.joint ? joint_loss(frame.depth, out.prediction, out.completion, lambda)
                                           : silog(frame.depth, out.completion, lambda);
          check_finite(double(loss->value[0]), order[k]);
          total = total ? add(total, loss) : loss;
        }
        backward(scale(total, inv_batch));
      }
      // Parameters that no sample reached this step take a zero gradient.
      for (auto& e : ckpt.params.entries()) {
        if (!e.is_buffer && !e.frozen) e.node->grad_buffer();
      }
      adamw_step(ckpt.params, config.optim, lr);
    }
    ckpt.params.zero_grad();
    ckpt.epochs_done = epoch + 1;

    if (hooks.on_log) {
      EpochLog log{epoch, stage, lr, loss_sum / double(order.size()), EvalMode::Prediction, std::nullopt};
      const bool validate =
          config.val_every > 0 && !data.val.empty() && ((epoch + 1) % config.val_every == 0 || epoch + 1 == total);
      if (validate) {
        log.val = evaluate(ckpt, data.val, EvalMode::Prediction, 0.0, config.eval_seed, config.eval_cap);
      }
      hooks.on_log(log);
      if (stage == 2) {
        log.mode = EvalMode::Completion;
        if (validate) {
          log.val = evaluate(ckpt, data.val, EvalMode::Completion, config.eval_sparsity, config.eval_seed,
                             config.eval_cap);
        }
        hooks.on_log(log);
      }
    }
    if (ckpt.epochs_done == config.stage1_epochs && hooks.on_stage_boundary) hooks.on_stage_boundary(ckpt);
  }
  return ckpt;
}

template <class T>
MetricReport evaluate(Checkpoint<T>& ckpt, const std::vector<Frame<T>>& frames, EvalMode mode, double sparsity,
                      std::uint64_t eval_seed, double cap) {
  if (frames.empty()) throw ContractError("evaluation split is empty");
  const DepthNet<T> net(ckpt.config.model);
  std::vector<MetricReport> reports;
  reports.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame<T>& f = frames[i];
    DepthMap<T> pred;
    if (mode == EvalMode::Prediction) {
      pred = net.predict(ckpt.params, f.image);
    } else {
      const auto spec =
          SparsitySpec::with_fraction(sparsity, derive_seed(eval_seed, kEvalSparsityStream, std::uint64_t(i)));
      pred = net.complete(ckpt.params, f.image, sample_sparse(f.depth, spec));
    }
    reports.push_back(eval_metrics(f.depth, pred, cap));
  }
  return mean_report(reports);
}

template <class T>
std::vector<SweepRow> sparsity_sweep(Checkpoint<T>& ckpt, const std::vector<Frame<T>>& frames,
                                     const std::vector<double>& levels, std::uint64_t eval_seed, double cap) {
  for (double l : levels) {
    if (!(l >= 0 && l <= 1)) throw ConfigError("sweep levels must lie in [0, 1]");
  }
  std::vector<SweepRow> rows;
  rows.push_back({EvalMode::Prediction, 0.0, evaluate(ckpt, frames, EvalMode::Prediction, 0.0, eval_seed, cap)});
  for (double l : levels) {
    rows.push_back({EvalMode::Completion, l, evaluate(ckpt, frames, EvalMode::Completion, l, eval_seed, cap)});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "mode,level," + MetricReport::csv_header() + "\n";
  for (const auto& r : rows) out += std::string(to_string(r.mode)) + "," + fmt(r.level) + "," + r.report.csv_row() + "\n";
  return out;
}

std::vector<std::pair<std::string, TrainConfig>> ablation_grid(const TrainConfig& base) {
  std::vector<std::pair<std::string, TrainConfig>> grid;
  auto variant = [&](const char* name, auto&& edit) {
    TrainConfig c = base;
    edit(c);
    grid.emplace_back(name, c);
  };
  variant("san", [](TrainConfig&) {});
  variant("srb_x1", [](TrainConfig& c) { c.model.srb_branches = 1; });
  variant("srb_x2", [](TrainConfig& c) { c.model.srb_branches = 2; });
  variant("unfreeze_pred_encoder", [](TrainConfig& c) { c.freeze_pred_encoder = false; });
  variant("freeze_pred_decoder", [](TrainConfig& c) { c.freeze_pred_decoder = true; });
  variant("no_wb", [](TrainConfig& c) { c.model.use_wb = false; });
  variant("prediction", [](TrainConfig& c) { c.stage2_epochs = 0; });
  variant("completion", [](TrainConfig& c) { c.joint = false; });
  return grid;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("spearman needs two equal-length samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * double(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = double(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

#define SAN_INSTANTIATE(T)                                                                                   \
  template Checkpoint<T> init_checkpoint(const TrainConfig&);                                                \
  template void apply_freeze_policy(ParamStore<T>&, const TrainConfig&, int);                                \
  template DepthMap<T> training_sparse_input(const TrainConfig&, const DepthMap<T>&, int, std::size_t,       \
                                             std::size_t);                                                   \
  template Checkpoint<T> train(const TrainConfig&, const Dataset<T>&, const TrainHooks<T>&,                  \
                               std::optional<Checkpoint<T>>, std::optional<int>);                            \
  template MetricReport evaluate(Checkpoint<T>&, const std::vector<Frame<T>>&, EvalMode, double,             \
                                 std::uint64_t, double);                                                     \
  template std::vector<SweepRow> sparsity_sweep(Checkpoint<T>&, const std::vector<Frame<T>>&,               \
                                                const std::vector<double>&, std::uint64_t, double);
SAN_INSTANTIATE(float)
SAN_INSTANTIATE(double)
#undef SAN_INSTANTIATE

}  // namespace san
