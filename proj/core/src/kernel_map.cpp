#include "san/kernel_map.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>

#include "san/errors.hpp"

namespace san {

std::size_t KernelMap::num_pairs() const noexcept {
  std::size_t n = 0;
  for (const auto& v : in_index) n += v.size();
  return n;
}

std::vector<Coord> downsample_coords(const std::vector<Coord>& coords) {
  std::vector<Coord> out;
  out.reserve(coords.size());
  for (const Coord& c : coords) out.push_back({c.u / 2, c.v / 2, c.s});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

KernelMap build_kernel_map(const std::vector<Coord>& coords, int kernel_size, int stride, int width, int height) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ContractError("kernel size must be odd and positive, got " + std::to_string(kernel_size));
  }
  if (stride != 1 && stride != 2) throw ContractError("stride must be 1 or 2, got " + std::to_string(stride));

  std::unordered_map<std::uint64_t, std::int32_t> table;
  table.reserve(coords.size() * 2);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Coord& c = coords[i];
    if (c.u < 0 || c.u >= width || c.v < 0 || c.v >= height || c.s < 0) {
      throw ContractError("kernel map coordinate (" + std::to_string(c.u) + "," + std::to_string(c.v) +
                          ") outside " + std::to_string(width) + "x" + std::to_string(height));
    }
    if (!table.emplace(coord_key(c), std::int32_t(i)).second) {
      throw ContractError("duplicate coordinate in kernel map input");
    }
  }

  KernelMap km;
  km.kernel_size = kernel_size;
  km.stride = stride;
  km.in_width = width;
  km.in_height = height;
  km.num_inputs = coords.size();
  if (stride == 1) {
    km.out_coords = coords;
    km.out_width = width;
    km.out_height = height;
  } else {
    km.out_coords = downsample_coords(coords);
    km.out_width = (width + 1) / 2;
    km.out_height = (height + 1) / 2;
  }

  const int k = kernel_size, r = (k - 1) / 2;
  km.in_index.assign(std::size_t(k) * k, {});
  km.out_index.assign(std::size_t(k) * k, {});
  for (std::size_t j = 0; j < km.out_coords.size(); ++j) {
    const Coord& oc = km.out_coords[j];
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx) {
        const Coord ic{stride * oc.u + dx - r, stride * oc.v + dy - r, oc.s};
        if (ic.u < 0 || ic.u >= width || ic.v < 0 || ic.v >= height) continue;
        auto it = table.find(coord_key(ic));
        if (it == table.end()) continue;
        const std::size_t o = std::size_t(dy) * k + dx;
        km.in_index[o].push_back(it->second);
        km.out_index[o].push_back(std::int32_t(j));
      }
    }
  }
  return km;
}

}  // namespace san
