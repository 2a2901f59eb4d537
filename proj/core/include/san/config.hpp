#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "san/data.hpp"
#include "san/depthnet.hpp"
#include "san/optim.hpp"

namespace san {

/// Flat `key = value` text. '#' starts a comment; blank lines are ignored.
/// Throws ConfigError on a malformed line or a repeated key.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Everything needed to reproduce a training run.
struct TrainConfig {
  std::uint64_t seed = 1;  // parameter init, shuffling, training sparsity draws
  DataConfig data{};
  DepthNetConfig model{};
  OptimConfig optim{.lr = 1e-3, .lr_decay_every = 10};

  int stage1_epochs = 15;
  int stage2_epochs = 10;
  bool joint = true;                  // stage 2 optimizes silog(P) + silog(C)
  bool freeze_pred_encoder = true;    // stage 2
  bool freeze_pred_decoder = false;   // stage 2
  bool lr_decay_reset_stage2 = false; // restart the decay clock at stage 2
  int accum = 4;                      // samples per optimizer step
  double lambda = 0.85;

  double train_sparsity_min = 0.05;
  double train_sparsity_max = 0.5;

  double eval_sparsity = 0.2;
  std::uint64_t eval_seed = 7;
  double eval_cap = 80.0;
  int val_every = 1;  // 0 disables per-epoch validation

  int total_epochs() const noexcept { return stage1_epochs + stage2_epochs; }

  /// Throws ConfigError on any inconsistent value.
  void validate() const;

  /// Applies overrides; unknown keys throw ConfigError.
  void apply(const std::map<std::string, std::string>& kv);
  /// Canonical key=value text listing every field.
  std::string to_text() const;

  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::filesystem::path& path);

  friend bool operator==(const TrainConfig& a, const TrainConfig& b) { return a.to_text() == b.to_text(); }
};

}  // namespace san
