#include "san/sparse_tensor.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "san/errors.hpp"

namespace san {

namespace {
constexpr std::uint64_t kCoordMask = (1ull << 21) - 1;
}

std::uint64_t coord_key(const Coord& c) noexcept {
  return (std::uint64_t(c.s) & kCoordMask) << 42 | (std::uint64_t(c.v) & kCoordMask) << 21 |
         (std::uint64_t(c.u) & kCoordMask);
}

template <class T>
void SparseTensor<T>::validate() const {
  if (feats.rank() != 2) throw ContractError("sparse features must be [N, Q], got " + shape_str(feats.shape()));
  if (std::size_t(feats.dim(0)) != coords.size()) {
    throw ContractError("sparse tensor has " + std::to_string(coords.size()) + " coordinates but " +
                        std::to_string(feats.dim(0)) + " feature rows");
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(coords.size());
  for (const Coord& c : coords) {
    if (c.u < 0 || c.u >= width || c.v < 0 || c.v >= height || c.s < 0 || c.s >= batch) {
      throw ContractError("coordinate (" + std::to_string(c.u) + "," + std::to_string(c.v) + "," +
                          std::to_string(c.s) + ") outside " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    if (!seen.insert(coord_key(c)).second) {
      throw ContractError("duplicate coordinate (" + std::to_string(c.u) + "," + std::to_string(c.v) + ")");
    }
  }
}

template <class T>
SparseTensor<T> sparsify(const DepthMap<T>& depth) {
  if (depth.rank() != 3 || depth.dim(0) != 1) {
    throw ContractError("sparsify expects a [1, H, W] depth map, got " + shape_str(depth.shape()));
  }
  const int h = depth.dim(1), w = depth.dim(2);
  std::vector<Coord> coords;
  std::vector<T> values;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const T d = depth.at(0, v, u);
      if (!std::isfinite(d)) {
        throw DataError("non-finite depth at (" + std::to_string(u) + "," + std::to_string(v) + ")");
      }
      if (d > T(0)) {
        coords.push_back({u, v, 0});
        values.push_back(d);
      }
    }
  }
  const int n = static_cast<int>(coords.size());
  return SparseTensor<T>(std::move(coords), Tensor<T>({n, 1}, std::move(values)), w, h);
}

template <class T>
DenseFeatureMap<T> densify(const SparseTensor<T>& s) {
  s.validate();
  const int q = s.channels();
  DenseFeatureMap<T> out({q, s.height, s.width});
  for (std::size_t n = 0; n < s.coords.size(); ++n) {
    const Coord& c = s.coords[n];
    for (int k = 0; k < q; ++k) out.at(k, c.v, c.u) = s.feats.at(int(n), k);
  }
  return out;
}

template <class T>
std::size_t count_valid(const DepthMap<T>& depth) {
  std::size_t n = 0;
  for (T v : depth.span()) n += v > T(0);
  return n;
}

#define SAN_INSTANTIATE(T)                                         \
  template struct SparseTensor<T>;                                 \
  template SparseTensor<T> sparsify(const DepthMap<T>&);           \
  template DenseFeatureMap<T> densify(const SparseTensor<T>&);     \
  template std::size_t count_valid(const DepthMap<T>&);
SAN_INSTANTIATE(float)
SAN_INSTANTIATE(double)
#undef SAN_INSTANTIATE

}  // namespace san
