#pragma once

#include <filesystem>
#include <istream>
#include <ostream>

#include "san/config.hpp"
#include "san/param_store.hpp"

namespace san {

/// Parameters, optimizer moments, epoch counter and config snapshot. All
/// random streams are derived from `config.seed` and the epoch index, so no
/// further generator state is needed to resume.
template <class T>
struct Checkpoint {
  TrainConfig config;
  ParamStore<T> params;
  int epochs_done = 0;
};

/// Binary layout (little-endian):
///   "SANC" u32 version u32 value_bytes(4|8) u32 epochs_done
///   u32 len + config text
///   u32 entry_count, then per entry:
///     u32 len + name, u8 flags (1 frozen, 2 buffer), u64 step,
///     u32 rank, rank x u32 dims, values, [exp_avg, exp_avg_sq if not buffer]
template <class T>
void save_checkpoint(const Checkpoint<T>& ckpt, std::ostream& out);
template <class T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::filesystem::path& path);

/// Throws ParseError (BadMagic, BadVersion, Truncated) or ConfigError when the
/// stored value width differs from T.
template <class T>
Checkpoint<T> load_checkpoint(std::istream& in);
template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// Value width recorded in a checkpoint file (4 or 8).
int checkpoint_value_bytes(const std::filesystem::path& path);

}  // namespace san
