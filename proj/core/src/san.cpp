#include "san/san.hpp"

#include <algorithm>
#include <cmath>

#include "san/dense_ops.hpp"
#include "san/errors.hpp"

namespace san {

namespace {

std::string block_prefix(const std::string& srb, int branch, int block) {
  return srb + ".branch" + std::to_string(branch) + "." + std::to_string(block);
}

template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.span()) v = T(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

std::string srb_prefix(int scale) { return "san.srb" + std::to_string(scale); }
std::string skip_weight_name(int scale) { return "san.skip" + std::to_string(scale) + ".w"; }
std::string skip_bias_name(int scale) { return "san.skip" + std::to_string(scale) + ".b"; }

template <class T>
void init_san_params(ParamStore<T>& store, const SanConfig& cfg, Rng& rng) {
  if (cfg.branches < 1 || cfg.branches > 3) throw ConfigError("srb_branches must be 1, 2 or 3");
  if (cfg.widths.empty()) throw ConfigError("SAN needs at least one scale");
  int cin = cfg.in_channels;
  for (int s = 0; s < cfg.scales(); ++s) {
    const int cout = cfg.widths[s];
    const std::string srb = srb_prefix(s);
    for (int b = 1; b <= cfg.branches; ++b) {
      for (int k = 0; k < b; ++k) {
        const int in_c = k == 0 ? cin : cout;
        const std::string p = block_prefix(srb, b, k);
        store.add_param(p + ".conv.weight", uniform_tensor<T>({9, in_c, cout}, std::sqrt(6.0 / (9 * in_c)), rng));
        store.add_param(p + ".conv.bias", Tensor<T>({cout}));
        store.add_param(p + ".bn.gamma", Tensor<T>({cout}, T(1)));
        store.add_param(p + ".bn.beta", Tensor<T>({cout}));
        store.add_buffer(p + ".bn.running_mean", Tensor<T>({cout}));
        store.add_buffer(p + ".bn.running_var", Tensor<T>({cout}, T(1)));
      }
    }
    if (cfg.use_wb) {
      store.add_param(skip_weight_name(s), Tensor<T>({cout}, T(1)));
      store.add_param(skip_bias_name(s), Tensor<T>({cout}));
    }
    cin = cout;
  }
}

template <class T>
SparseVar<T> srb_forward(const SparseVar<T>& x, ParamStore<T>& store, const std::string& prefix, int branches,
                         BatchNormMode mode, const BatchNormOptions& bn) {
  const SparseVar<T> pooled = sparse_max_pool(x);
  const KernelMap km = build_kernel_map(*pooled.coords, 3, 1, pooled.width, pooled.height);
  SparseVar<T> total;
  for (int b = 1; b <= branches; ++b) {
    SparseVar<T> h = pooled;
    for (int k = 0; k < b; ++k) {
      const std::string p = block_prefix(prefix, b, k);
      const Var<T>& w = store.param(p + ".conv.weight");
      if (w->value.dim(1) != h.channels()) {
        throw ContractError("SRB " + p + " expects " + std::to_string(w->value.dim(1)) + " channels, got " +
                            std::to_string(h.channels()));
      }
      h = sparse_conv2d(h, w, store.param(p + ".conv.bias"), km);
      h = sparse_batch_norm(h, store.param(p + ".bn.gamma"), store.param(p + ".bn.beta"),
                            store.buffer(p + ".bn.running_mean"), store.buffer(p + ".bn.running_var"), mode, bn);
      h = sparse_relu(h);
    }
    total = b == 1 ? h : sparse_add(total, h);
  }
  return total;
}

template <class T>
std::vector<std::vector<Var<T>>> san_encode_batch(const std::vector<const DepthMap<T>*>& maps, ParamStore<T>& store,
                                                  const SanConfig& cfg, BatchNormMode mode) {
  if (maps.empty()) throw ContractError("san_encode_batch needs at least one depth map");
  const int factor = 1 << cfg.scales();
  const int height = maps[0]->rank() == 3 ? maps[0]->dim(1) : 0;
  const int width = maps[0]->rank() == 3 ? maps[0]->dim(2) : 0;
  std::vector<Coord> coords;
  std::vector<T> values;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const DepthMap<T>& d = *maps[i];
    if (d.rank() != 3 || d.dim(0) != 1) throw ContractError("san_encode expects [1, H, W] depth maps");
    if (d.dim(1) != height || d.dim(2) != width) {
      throw ContractError("batched depth maps differ in extent: " + shape_str(d.shape()) + " vs " +
                          shape_str(maps[0]->shape()));
    }
    const SparseTensor<T> one = sparsify(d);
    for (std::size_t n = 0; n < one.coords.size(); ++n) {
      coords.push_back({one.coords[n].u, one.coords[n].v, int(i)});
      values.push_back(one.feats[n]);
    }
  }
  if (height % factor != 0 || width % factor != 0) {
    throw ContractError("depth extents " + shape_str(maps[0]->shape()) + " not divisible by " +
                        std::to_string(factor));
  }
  Tensor<T> feats({int(values.size()), 1});
  std::copy(values.begin(), values.end(), feats.span().begin());
  SparseVar<T> s = sparse_leaf(SparseTensor<T>(std::move(coords), std::move(feats), width, height, int(maps.size())));

  std::vector<std::vector<Var<T>>> out(maps.size());
  for (int i = 0; i < cfg.scales(); ++i) {
    s = srb_forward(s, store, srb_prefix(i), cfg.branches, mode, cfg.bn);
    for (std::size_t b = 0; b < maps.size(); ++b) out[b].push_back(densify(s, int(b)));
  }
  return out;
}

template <class T>
std::vector<Var<T>> san_encode(const DepthMap<T>& sparse_depth, ParamStore<T>& store, const SanConfig& cfg,
                               BatchNormMode mode) {
  return std::move(san_encode_batch<T>({&sparse_depth}, store, cfg, mode).front());
}

template <class T>
Var<T> augment_skip(const Var<T>& skip, const Var<T>& sparse_features, const Var<T>& w, const Var<T>& b) {
  if (skip->value.shape() != sparse_features->value.shape()) {
    throw ContractError("skip " + shape_str(skip->value.shape()) + " and sparse features " +
                        shape_str(sparse_features->value.shape()) + " differ in shape");
  }
  const Var<T> modulated = (w || b) ? channel_affine(skip, w, b) : skip;
  return add(modulated, sparse_features);
}

#define SAN_INSTANTIATE(T)                                                                                 \
  template void init_san_params(ParamStore<T>&, const SanConfig&, Rng&);                                   \
  template SparseVar<T> srb_forward(const SparseVar<T>&, ParamStore<T>&, const std::string&, int,          \
                                    BatchNormMode, const BatchNormOptions&);                               \
  template std::vector<std::vector<Var<T>>> san_encode_batch(const std::vector<const DepthMap<T>*>&,        \
                                                             ParamStore<T>&, const SanConfig&, BatchNormMode); \
  template std::vector<Var<T>> san_encode(const DepthMap<T>&, ParamStore<T>&, const SanConfig&,            \
                                          BatchNormMode);                                                  \
  template Var<T> augment_skip(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);
SAN_INSTANTIATE(float)
SAN_INSTANTIATE(double)
#undef SAN_INSTANTIATE

}  // namespace san
