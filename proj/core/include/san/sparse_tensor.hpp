#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "san/tensor.hpp"

namespace san {

// Dense raster conventions used throughout:
//   depth map      Tensor<T> [1, H, W], value > 0 is valid, <= 0 is missing
//   image          Tensor<T> [3, H, W], values in [0, 1]
//   feature map    Tensor<T> [Q, H, W]
template <class T>
using DepthMap = Tensor<T>;
template <class T>
using ImageTensor = Tensor<T>;
template <class T>
using DenseFeatureMap = Tensor<T>;

/// Pixel column u, pixel row v, batch index s. Ordered (s, v, u), which is
/// the canonical row-major order.
struct Coord {
  std::int32_t u = 0;
  std::int32_t v = 0;
  std::int32_t s = 0;

  friend bool operator==(const Coord&, const Coord&) = default;
  friend std::strong_ordering operator<=>(const Coord& a, const Coord& b) {
    if (auto c = a.s <=> b.s; c != 0) return c;
    if (auto c = a.v <=> b.v; c != 0) return c;
    return a.u <=> b.u;
  }
};

/// Packs a coordinate into a 64-bit hash key. Each component must fit in 21 bits.
std::uint64_t coord_key(const Coord& c) noexcept;

/// Coordinate matrix plus feature matrix [N, Q] on a W x H raster.
template <class T>
struct SparseTensor {
  std::vector<Coord> coords;
  Tensor<T> feats;  // [N, Q]
  int width = 0;
  int height = 0;
  int batch = 1;

  SparseTensor() = default;
  SparseTensor(std::vector<Coord> c, Tensor<T> f, int w, int h, int b = 1)
      : coords(std::move(c)), feats(std::move(f)), width(w), height(h), batch(b) {}

  /// Empty tensor with Q channels.
  static SparseTensor empty(int w, int h, int channels) {
    return SparseTensor({}, Tensor<T>({0, channels}), w, h);
  }

  std::size_t size() const noexcept { return coords.size(); }
  int channels() const { return feats.rank() == 2 ? feats.dim(1) : 0; }

  /// Throws ContractError on length mismatch, duplicates, or out-of-range coordinates.
  void validate() const;
};

/// Gathers the strictly positive pixels of a [1, H, W] map in row-major order.
/// Throws DataError on NaN/Inf.
template <class T>
SparseTensor<T> sparsify(const DepthMap<T>& depth);

/// Scatters features into a zero [Q, H, W] map.
template <class T>
DenseFeatureMap<T> densify(const SparseTensor<T>& s);

/// Number of strictly positive entries.
template <class T>
std::size_t count_valid(const DepthMap<T>& depth);

}  // namespace san
