#pragma once

#include <cstdint>
#include <vector>

#include "san/sparse_tensor.hpp"

namespace san {

/// Input/output index pairs of a sparse convolution, grouped by kernel offset.
/// Offset o = dy * k + dx covers the displacement (dx - r, dy - r) with
/// r = (k - 1) / 2. Input i pairs with output j under o iff
/// coords[i] == stride * out_coords[j] + displacement(o).
struct KernelMap {
  int kernel_size = 1;
  int stride = 1;
  int in_width = 0;
  int in_height = 0;
  int out_width = 0;
  int out_height = 0;
  std::size_t num_inputs = 0;
  std::vector<Coord> out_coords;
  // Per offset: matching (input, output) index lists, sorted by output.
  std::vector<std::vector<std::int32_t>> in_index;
  std::vector<std::vector<std::int32_t>> out_index;

  std::size_t num_offsets() const noexcept { return in_index.size(); }
  std::size_t num_pairs() const noexcept;
};

/// Stride 1 keeps the input coordinates (same order). Stride 2 produces the
/// unique floor(c / 2) coordinates in canonical order on a ceil(W/2) x
/// ceil(H/2) grid. Throws ContractError on even k, a stride other than 1 or 2,
/// or out-of-range/duplicate coordinates.
KernelMap build_kernel_map(const std::vector<Coord>& coords, int kernel_size, int stride, int width, int height);

/// Unique floor(c / 2) cells in canonical order.
std::vector<Coord> downsample_coords(const std::vector<Coord>& coords);

}  // namespace san
