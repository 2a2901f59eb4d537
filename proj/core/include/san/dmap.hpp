#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "san/tensor.hpp"

namespace san {

/// In-memory form of a DMAP file: "DMF1", u32 W, u32 H, u32 Q, then W*H*Q
/// little-endian f32 values, row-major with the channel innermost.
struct Raster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> values;  // [H][W][Q]

  friend bool operator==(const Raster&, const Raster&) = default;
};

void write_dmap(const Raster& raster, std::ostream& out);
void write_dmap(const Raster& raster, const std::filesystem::path& path);

/// Throws ParseError with kind BadMagic, Truncated, ExtentOverflow or Io.
Raster read_dmap(std::istream& in);
Raster read_dmap(const std::filesystem::path& path);

/// [Q, H, W] tensor <-> channel-innermost raster.
template <class T>
Raster to_raster(const Tensor<T>& chw);
template <class T>
Tensor<T> from_raster(const Raster& raster);

}  // namespace san
