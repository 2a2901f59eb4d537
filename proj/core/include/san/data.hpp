#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "san/sparse_tensor.hpp"

namespace san {

/// Parameters of one synthetic frame.
struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  int min_objects = 3;
  int max_objects = 8;
  double depth_min = 2.0;
  double depth_max = 40.0;
  double noise = 0.08;             // per-pixel texture noise amplitude
  double invalid_fraction = 0.05;  // pixels dropped from the depth map
  double color_jitter = 0.2;       // per-scene shift of the depth-to-hue map
  double object_jitter = 0.35;     // extra per-object hue shift
  bool sky = true;                 // no depth above the horizon (unless an object covers it)

  /// Throws ConfigError for inconsistent values. `divisor` is 2^S of the
  /// network the data feeds.
  void validate(int divisor = 1) const;
};

struct SceneObject {
  enum class Kind { Rectangle, Disk };
  Kind kind = Kind::Rectangle;
  double cx = 0, cy = 0;          // centre in pixels
  double half_w = 0, half_h = 0;  // rectangle half extents; disk radius in half_w
  double depth = 0;

  bool covers(int u, int v) const noexcept;
};

template <class T>
struct Frame {
  ImageTensor<T> image;  // [3, H, W]
  DepthMap<T> depth;     // [1, H, W]
};

template <class T>
struct Scene {
  Frame<T> frame;
  double horizon = 0;
  std::vector<SceneObject> objects;
};

/// Ground-plane gradient with constant-depth rectangles/disks on top (nearest
/// wins). The image is a hue map of log depth with per-scene and per-object
/// shifts, object shading and per-pixel noise. With `sky`, pixels above the
/// horizon not covered by an object get a flat sky colour and no depth,
/// otherwise they sit at depth_max. A random `invalid_fraction` of the
/// remaining depth pixels is zeroed. Deterministic in `spec.seed`.
template <class T>
Scene<T> gen_scene(const SceneSpec& spec);

struct SparsitySpec {
  enum class Mode { Fraction, Count };
  Mode mode = Mode::Fraction;
  double fraction = 1.0;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;

  static SparsitySpec with_fraction(double f, std::uint64_t seed) { return {Mode::Fraction, f, 0, seed}; }
  static SparsitySpec with_count(std::uint64_t c, std::uint64_t seed) { return {Mode::Count, 0.0, c, seed}; }
};

/// Keeps a uniformly drawn subset (without replacement) of the valid pixels
/// and zeroes everything else. Fraction mode keeps round(fraction * valid)
/// pixels. Requests above the valid count are clamped; `*clamped` reports it.
/// For a fixed seed, smaller requests select a prefix of larger ones.
template <class T>
DepthMap<T> sample_sparse(const DepthMap<T>& depth, const SparsitySpec& spec, bool* clamped = nullptr);

struct DataConfig {
  std::uint64_t seed = 0;
  int train_frames = 512;
  int val_frames = 64;
  SceneSpec scene{};
};

template <class T>
struct Dataset {
  std::vector<Frame<T>> train;
  std::vector<Frame<T>> val;
};

enum class Split : std::uint64_t { Train = 0, Val = 1 };

/// Per-frame seed: derive_seed(master, split, index).
std::uint64_t frame_seed(std::uint64_t master, Split split, std::uint64_t index);

template <class T>
Dataset<T> make_dataset(const DataConfig& cfg);

/// Layout: <dir>/{train,val}/{index:06}.rgb.dmap and {index:06}.depth.dmap.
template <class T>
void save_dataset(const Dataset<T>& data, const std::filesystem::path& dir);
template <class T>
Dataset<T> load_dataset(const std::filesystem::path& dir);

}  // namespace san
