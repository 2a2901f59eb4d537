#include "san/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "san/dmap.hpp"
#include "san/errors.hpp"
#include "san/rng.hpp"

namespace san {

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (int(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

std::string frame_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

}  // namespace

void SceneSpec::validate(int divisor) const {
  if (width <= 0 || height <= 0) throw ConfigError("scene extents must be positive");
  if (divisor > 0 && (width % divisor != 0 || height % divisor != 0)) {
    throw ConfigError("scene extents must be divisible by " + std::to_string(divisor));
  }
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("need 0 <= min_objects <= max_objects");
  if (!(depth_min > 0 && depth_max > depth_min)) throw ConfigError("need 0 < depth_min < depth_max");
  if (!(noise >= 0)) throw ConfigError("noise must be nonnegative");
  if (!(invalid_fraction >= 0 && invalid_fraction < 1)) throw ConfigError("invalid_fraction must lie in [0, 1)");
  if (!(color_jitter >= 0)) throw ConfigError("color_jitter must be nonnegative");
  if (!(object_jitter >= 0)) throw ConfigError("object_jitter must be nonnegative");
}

bool SceneObject::covers(int u, int v) const noexcept {
  const double x = u + 0.5 - cx, y = v + 0.5 - cy;
  if (kind == Kind::Disk) return x * x + y * y <= half_w * half_w;
  return std::abs(x) <= half_w && std::abs(y) <= half_h;
}

template <class T>
Scene<T> gen_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int w = spec.width, h = spec.height;
  const double dmin = spec.depth_min, dmax = spec.depth_max;

  Scene<T> scene;
  scene.horizon = rng.uniform(0.3, 0.5) * h;
  // Ground inverse depth grows linearly from the horizon to the bottom row.
  const double near = dmin * rng.uniform(1.0, 1.5);
  const double tilt = rng.uniform(-0.2, 0.2);

  const int n_obj = spec.min_objects + int(rng.below(std::uint64_t(spec.max_objects - spec.min_objects + 1)));
  for (int k = 0; k < n_obj; ++k) {
    SceneObject o;
    o.kind = rng.uniform() < 0.5 ? SceneObject::Kind::Rectangle : SceneObject::Kind::Disk;
    o.cx = rng.uniform(0, w);
    o.cy = rng.uniform(0.2 * h, h);
    o.half_w = rng.uniform(2.0, w / 6.0);
    o.half_h = rng.uniform(2.0, h / 6.0);
    o.depth = std::exp(rng.uniform(std::log(dmin), std::log(0.7 * dmax)));
    scene.objects.push_back(o);
  }
  std::vector<double> shade(scene.objects.size());
  for (auto& s : shade) s = rng.uniform(0.75, 1.0);
  std::vector<double> object_shift(scene.objects.size());
  for (auto& s : object_shift) s = rng.uniform(-spec.object_jitter, spec.object_jitter);
  const double hue_shift = rng.uniform(-spec.color_jitter, spec.color_jitter);

  std::vector<double> depth(std::size_t(w) * h);
  std::vector<int> owner(depth.size(), -1);
  constexpr int kSky = -2;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double d = dmax;
      const bool above_horizon = v + 0.5 <= scene.horizon;
      if (!above_horizon) {
        const double t = (v + 0.5 - scene.horizon) / (h - scene.horizon);
        const double slope = 1.0 + tilt * (u + 0.5 - 0.5 * w) / w;
        const double inv = 1.0 / dmax + std::clamp(t * slope, 0.0, 1.0) * (1.0 / near - 1.0 / dmax);
        d = 1.0 / inv;
      }
      int who = above_horizon && spec.sky ? kSky : -1;
      for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        const SceneObject& o = scene.objects[k];
        if (o.depth < d && o.covers(u, v)) {
          d = o.depth;
          who = int(k);
        }
      }
      depth[std::size_t(v) * w + u] = std::clamp(d, dmin, dmax);
      owner[std::size_t(v) * w + u] = who;
    }
  }

  scene.frame.image = ImageTensor<T>({3, h, w});
  scene.frame.depth = DepthMap<T>({1, h, w});
  const double log_span = std::log(dmax) - std::log(dmin);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = std::size_t(v) * w + u;
      const double t = (std::log(depth[i]) - std::log(dmin)) / log_span;
      const bool on_object = owner[i] >= 0;
      const bool sky = owner[i] == kSky;
      const double value = on_object ? shade[owner[i]] : 0.9;
      const double shift = hue_shift + (on_object ? object_shift[owner[i]] : 0.0);
      double rgb[3];
      if (sky) {
        hsv_to_rgb(0.55, 0.3, 0.95, rgb);
      } else {
        hsv_to_rgb(0.75 * std::clamp(t + shift, 0.0, 1.0), 0.8, value, rgb);
      }
      for (int c = 0; c < 3; ++c) {
        const double noisy = rgb[c] + rng.uniform(-spec.noise, spec.noise);
        scene.frame.image.at(c, v, u) = T(std::clamp(noisy, 0.0, 1.0));
      }
      const bool dropped = rng.uniform() < spec.invalid_fraction;
      scene.frame.depth.at(0, v, u) = dropped || sky ? T(0) : T(depth[i]);
    }
  }
  return scene;
}

template <class T>
DepthMap<T> sample_sparse(const DepthMap<T>& depth, const SparsitySpec& spec, bool* clamped) {
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < depth.numel(); ++i) {
    if (depth[i] > T(0)) valid.push_back(i);
  }
  std::uint64_t want;
  if (spec.mode == SparsitySpec::Mode::Fraction) {
    if (!(spec.fraction >= 0 && spec.fraction <= 1)) throw ConfigError("sparsity fraction must lie in [0, 1]");
    want = std::uint64_t(std::llround(spec.fraction * double(valid.size())));
  } else {
    want = spec.count;
  }
  if (clamped) *clamped = want > valid.size();
  const std::size_t keep = std::size_t(std::min<std::uint64_t>(want, valid.size()));

  // Partial Fisher-Yates: the first `keep` slots are a uniform draw.
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < keep; ++i) {
    std::swap(valid[i], valid[i + rng.below(valid.size() - i)]);
  }
  DepthMap<T> out(depth.shape());
  for (std::size_t i = 0; i < keep; ++i) out[valid[i]] = depth[valid[i]];
  return out;
}

std::uint64_t frame_seed(std::uint64_t master, Split split, std::uint64_t index) {
  return derive_seed(master, static_cast<std::uint64_t>(split), index);
}

template <class T>
Dataset<T> make_dataset(const DataConfig& cfg) {
  if (cfg.train_frames < 0 || cfg.val_frames < 0) throw ConfigError("frame counts must be nonnegative");
  Dataset<T> data;
  SceneSpec spec = cfg.scene;
  for (int i = 0; i < cfg.train_frames; ++i) {
    spec.seed = frame_seed(cfg.seed, Split::Train, i);
    data.train.push_back(gen_scene<T>(spec).frame);
  }
  for (int i = 0; i < cfg.val_frames; ++i) {
    spec.seed = frame_seed(cfg.seed, Split::Val, i);
    data.val.push_back(gen_scene<T>(spec).frame);
  }
  return data;
}

template <class T>
void save_dataset(const Dataset<T>& data, const std::filesystem::path& dir) {
  for (const auto& [name, frames] : {std::pair{"train", &data.train}, std::pair{"val", &data.val}}) {
    const auto split_dir = dir / name;
    std::filesystem::create_directories(split_dir);
    for (std::size_t i = 0; i < frames->size(); ++i) {
      const std::string stem = frame_stem(int(i));
      write_dmap(to_raster((*frames)[i].image), split_dir / (stem + ".rgb.dmap"));
      write_dmap(to_raster((*frames)[i].depth), split_dir / (stem + ".depth.dmap"));
    }
  }
}

template <class T>
Dataset<T> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ParseError(ParseError::Kind::Io, "no dataset at " + dir.string());
  Dataset<T> data;
  for (const auto& [name, frames] : {std::pair{"train", &data.train}, std::pair{"val", &data.val}}) {
    const auto split_dir = dir / name;
    for (int i = 0;; ++i) {
      const std::string stem = frame_stem(i);
      const auto rgb = split_dir / (stem + ".rgb.dmap");
      if (!std::filesystem::exists(rgb)) break;
      Frame<T> f{from_raster<T>(read_dmap(rgb)), from_raster<T>(read_dmap(split_dir / (stem + ".depth.dmap")))};
      if (f.image.dim(0) != 3 || f.depth.dim(0) != 1 || f.image.dim(1) != f.depth.dim(1) ||
          f.image.dim(2) != f.depth.dim(2)) {
        throw DataError("frame " + (split_dir / stem).string() + " has inconsistent rasters");
      }
      frames->push_back(std::move(f));
    }
  }
  return data;
}

#define SAN_INSTANTIATE(T)                                                                \
  template Scene<T> gen_scene(const SceneSpec&);                                          \
  template DepthMap<T> sample_sparse(const DepthMap<T>&, const SparsitySpec&, bool*);     \
  template Dataset<T> make_dataset(const DataConfig&);                                    \
  template void save_dataset(const Dataset<T>&, const std::filesystem::path&);            \
  template Dataset<T> load_dataset(const std::filesystem::path&);
SAN_INSTANTIATE(float)
SAN_INSTANTIATE(double)
#undef SAN_INSTANTIATE

}  // namespace san
