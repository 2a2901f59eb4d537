#include "san/depthnet.hpp"

#include <cmath>

#include "san/dense_ops.hpp"
#include "san/errors.hpp"

namespace san {

namespace {

std::string enc_name(int i, int j) {
  return std::string(kEncoderPrefix) + std::to_string(i) + ".conv" + std::to_string(j);
}
std::string dec_name(int i) { return std::string(kDecoderPrefix) + std::to_string(i) + ".conv"; }
std::string head_name() { return std::string(kDecoderPrefix) + ".head"; }

template <class T>
void add_conv(ParamStore<T>& store, const std::string& name, int cout, int cin, double gain, Rng& rng) {
  Tensor<T> w({cout, cin, 3, 3});
  const double bound = gain * std::sqrt(6.0 / (9.0 * cin));
  for (auto& v : w.span()) v = T(rng.uniform(-bound, bound));
  store.add_param(name + ".weight", std::move(w));
  store.add_param(name + ".bias", Tensor<T>({cout}));
}

template <class T>
Var<T> conv(ParamStore<T>& store, const std::string& name, const Var<T>& x, int stride) {
  return conv2d(x, store.param(name + ".weight"), store.param(name + ".bias"), stride, 1);
}

}  // namespace

void DepthNetConfig::validate() const {
  if (widths.empty()) throw ConfigError("widths must list at least one scale");
  for (int w : widths) {
    if (w <= 0) throw ConfigError("widths must be positive");
  }
  if (srb_branches < 1 || srb_branches > 3) throw ConfigError("srb_branches must be 1, 2 or 3");
  if (!(d_min > 0 && d_max > d_min)) throw ConfigError("need 0 < d_min < d_max");
}

template <class T>
DepthNet<T>::DepthNet(DepthNetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  // SAN scale i must match encoder skip i in both resolution and width.
  const SanConfig san = cfg_.san();
  if (san.widths != cfg_.widths || san.scales() != cfg_.scales()) {
    throw ConfigError("SAN scales do not match encoder skips");
  }
}

template <class T>
void DepthNet<T>::init_params(ParamStore<T>& store, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, 0x1417, 0));
  int cin = 3;
  for (int i = 0; i < cfg_.scales(); ++i) {
    add_conv(store, enc_name(i, 0), cfg_.widths[i], cin, 1.0, rng);
    add_conv(store, enc_name(i, 1), cfg_.widths[i], cfg_.widths[i], 1.0, rng);
    cin = cfg_.widths[i];
  }
  for (int i = cfg_.scales() - 2; i >= 0; --i) {
    add_conv(store, dec_name(i + 1), cfg_.widths[i], cfg_.widths[i + 1] + cfg_.widths[i], 1.0, rng);
  }
  add_conv(store, dec_name(0), cfg_.widths[0], cfg_.widths[0], 1.0, rng);
  add_conv(store, head_name(), 1, cfg_.widths[0], 0.1, rng);
  // Start the head at the geometric mean of the depth range.
  const double mid = std::sqrt(cfg_.d_min * cfg_.d_max);
  const double sig = (1.0 / mid - 1.0 / cfg_.d_max) / (1.0 / cfg_.d_min - 1.0 / cfg_.d_max);
  store.entry(head_name() + ".bias").node->value[0] = T(std::log(sig / (1.0 - sig)));
  Rng san_rng(derive_seed(seed, 0x5a4e, 0));
  init_san_params(store, cfg_.san(), san_rng);
}

template <class T>
void DepthNet<T>::check_image(const ImageTensor<T>& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ContractError("image must be [3, H, W], got " + shape_str(image.shape()));
  }
  const int factor = 1 << cfg_.scales();
  if (image.dim(1) % factor != 0 || image.dim(2) % factor != 0) {
    throw ContractError("image extents " + shape_str(image.shape()) + " not divisible by " +
                        std::to_string(factor));
  }
}

template <class T>
std::vector<Var<T>> DepthNet<T>::encode(ParamStore<T>& store, const Var<T>& image) const {
  std::vector<Var<T>> skips;
  Var<T> x = image;
  for (int i = 0; i < cfg_.scales(); ++i) {
    x = relu(conv(store, enc_name(i, 0), x, 2));
    x = relu(conv(store, enc_name(i, 1), x, 1));
    skips.push_back(x);
  }
  return skips;
}

template <class T>
Var<T> DepthNet<T>::decode(ParamStore<T>& store, const std::vector<Var<T>>& skips) const {
  if (int(skips.size()) != cfg_.scales()) throw ContractError("decoder expects one skip per scale");
  Var<T> x = skips.back();
  for (int i = cfg_.scales() - 2; i >= 0; --i) {
    x = concat_channels(upsample2x(x), skips[i]);
    x = relu(conv(store, dec_name(i + 1), x, 1));
  }
  x = relu(conv(store, dec_name(0), upsample2x(x), 1));
  Var<T> logits = conv(store, head_name(), x, 1);
  return inverse_depth_head(logits, T(cfg_.d_min), T(cfg_.d_max));
}

template <class T>
std::vector<Var<T>> DepthNet<T>::augment(ParamStore<T>& store, const std::vector<Var<T>>& skips,
                                         const std::vector<Var<T>>& sparse_features) const {
  if (skips.size() != sparse_features.size()) throw ContractError("one sparse feature map per skip required");
  std::vector<Var<T>> out;
  out.reserve(skips.size());
  for (std::size_t i = 0; i < skips.size(); ++i) {
    Var<T> w, b;
    if (cfg_.use_wb) {
      w = store.param(skip_weight_name(int(i)));
      b = store.param(skip_bias_name(int(i)));
    }
    out.push_back(augment_skip(skips[i], sparse_features[i], w, b));
  }
  return out;
}

template <class T>
Var<T> DepthNet<T>::forward_prediction(ParamStore<T>& store, const ImageTensor<T>& image) const {
  check_image(image);
  return decode(store, encode(store, make_leaf(image)));
}

template <class T>
Var<T> DepthNet<T>::forward_completion(ParamStore<T>& store, const ImageTensor<T>& image,
                                       const DepthMap<T>& sparse, BatchNormMode mode) const {
  return forward_both(store, image, sparse, mode).completion;
}

template <class T>
typename DepthNet<T>::Outputs DepthNet<T>::forward_both(ParamStore<T>& store, const ImageTensor<T>& image,
                                                        const DepthMap<T>& sparse, BatchNormMode mode) const {
  return forward_both_batch(store, {&image}, {&sparse}, mode).front();
}

template <class T>
std::vector<typename DepthNet<T>::Outputs> DepthNet<T>::forward_both_batch(
    ParamStore<T>& store, const std::vector<const ImageTensor<T>*>& images,
    const std::vector<const DepthMap<T>*>& sparse, BatchNormMode mode) const {
  if (images.size() != sparse.size()) throw ContractError("forward_both_batch: image and sparse counts differ");
  std::vector<std::vector<Var<T>>> skips(images.size());
  std::vector<Outputs> out(images.size());
  std::vector<std::size_t> with_depth;
  std::vector<const DepthMap<T>*> maps;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTensor<T>& image = *images[i];
    const DepthMap<T>& d = *sparse[i];
    check_image(image);
    if (d.rank() != 3 || d.dim(0) != 1 || d.dim(1) != image.dim(1) || d.dim(2) != image.dim(2)) {
      throw ContractError("sparse depth " + shape_str(d.shape()) + " does not match image " +
                          shape_str(image.shape()));
    }
    skips[i] = encode(store, make_leaf(image));
    out[i].prediction = decode(store, skips[i]);
    // No sparse input: the SAN and w_i, b_i are not touched.
    out[i].completion = out[i].prediction;
    if (count_valid(d) > 0) {
      with_depth.push_back(i);
      maps.push_back(&d);
    }
  }
  if (maps.empty()) return out;
  const auto features = san_encode_batch(maps, store, cfg_.san(), mode);
  for (std::size_t k = 0; k < with_depth.size(); ++k) {
    const std::size_t i = with_depth[k];
    out[i].completion = decode(store, augment(store, skips[i], features[k]));
  }
  return out;
}

template <class T>
DepthMap<T> DepthNet<T>::predict(ParamStore<T>& store, const ImageTensor<T>& image) const {
  NoGradGuard guard;
  return forward_prediction(store, image)->value;
}

template <class T>
DepthMap<T> DepthNet<T>::complete(ParamStore<T>& store, const ImageTensor<T>& image,
                                  const DepthMap<T>& sparse) const {
  NoGradGuard guard;
  check_image(image);
  if (sparse.rank() == 3 && sparse.dim(0) == 1 && count_valid(sparse) == 0 && sparse.dim(1) == image.dim(1) &&
      sparse.dim(2) == image.dim(2)) {
    return predict(store, image);
  }
  return forward_completion(store, image, sparse, BatchNormMode::Eval)->value;
}

template class DepthNet<float>;
template class DepthNet<double>;

}  // namespace san
