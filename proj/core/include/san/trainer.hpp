#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "san/checkpoint.hpp"
#include "san/config.hpp"
#include "san/data.hpp"
#include "san/metrics.hpp"

namespace san {

enum class EvalMode { Prediction, Completion };

const char* to_string(EvalMode mode);

/// One row of the per-epoch training log.
struct EpochLog {
  int epoch = 0;
  int stage = 1;
  double lr = 0;
  double train_loss = 0;
  EvalMode mode = EvalMode::Prediction;
  std::optional<MetricReport> val;

  static std::string csv_header();
  std::string csv_row() const;
};

template <class T>
struct TrainHooks {
  std::function<void(const EpochLog&)> on_log;
  /// Called once with the model as it stands after the last stage-1 epoch.
  std::function<void(const Checkpoint<T>&)> on_stage_boundary;
};

/// Freshly initialized checkpoint for `config` (epoch 0).
template <class T>
Checkpoint<T> init_checkpoint(const TrainConfig& config);

/// Marks parameters frozen/trainable for the given stage (1 or 2).
template <class T>
void apply_freeze_policy(ParamStore<T>& params, const TrainConfig& config, int stage);

/// Learning rate used during `epoch`.
double epoch_lr(const TrainConfig& config, int epoch);

/// Stage-2 sparse input of training frame `index` in `epoch`: a fraction drawn
/// uniformly from [train_sparsity_min, train_sparsity_max] of its valid pixels.
template <class T>
DepthMap<T> training_sparse_input(const TrainConfig& config, const DepthMap<T>& depth, int epoch, std::size_t index,
                                  std::size_t num_frames);

/// Two-stage schedule. Stage 1 fits the prediction path with silog; stage 2
/// trains the SAN (and the unfrozen shared parts) on silog(C), or on
/// silog(P) + silog(C) when `joint`. Starts from `resume` if given and stops
/// after `stop_after_epochs` completed epochs if set. Throws DivergenceError
/// on a non-finite loss.
template <class T>
Checkpoint<T> train(const TrainConfig& config, const Dataset<T>& data, const TrainHooks<T>& hooks = {},
                    std::optional<Checkpoint<T>> resume = std::nullopt,
                    std::optional<int> stop_after_epochs = std::nullopt);

/// Mean metrics over `frames`. Completion mode feeds each frame a
/// `sparsity` fraction of its valid ground truth, sampled with a seed derived
/// from `eval_seed` and the frame index; metrics always use the full ground
/// truth. Throws ContractError on an empty split.
template <class T>
MetricReport evaluate(Checkpoint<T>& ckpt, const std::vector<Frame<T>>& frames, EvalMode mode, double sparsity,
                      std::uint64_t eval_seed, double cap);

struct SweepRow {
  EvalMode mode = EvalMode::Completion;
  double level = 0;
  MetricReport report;
};

/// Prediction baseline followed by one completion evaluation per level, all
/// with the same evaluation seed so the rows are paired.
template <class T>
std::vector<SweepRow> sparsity_sweep(Checkpoint<T>& ckpt, const std::vector<Frame<T>>& frames,
                                     const std::vector<double>& levels, std::uint64_t eval_seed, double cap);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Named variants of a base configuration mirroring the ablation axes:
/// SRB branch count, encoder/decoder freezing, w/b removal, single-task.
std::vector<std::pair<std::string, TrainConfig>> ablation_grid(const TrainConfig& base);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace san
