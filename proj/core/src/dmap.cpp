#include "san/dmap.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "san/errors.hpp"

namespace san {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'M', 'F', '1'};
// Rasters larger than this are rejected before allocating.
constexpr std::uint64_t kMaxValues = std::uint64_t(1) << 31;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  return true;
}

}  // namespace

void write_dmap(const Raster& raster, std::ostream& out) {
  const std::uint64_t n = std::uint64_t(raster.width) * raster.height * raster.channels;
  if (n != raster.values.size()) throw ContractError("raster extents do not match value count");
  for (float v : raster.values) {
    if (!std::isfinite(v)) throw DataError("refusing to write non-finite raster value");
  }
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, raster.width);
  put_u32(out, raster.height);
  put_u32(out, raster.channels);
  for (float v : raster.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw ParseError(ParseError::Kind::Io, "write failed");
}

void write_dmap(const Raster& raster, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string() + " for writing");
  write_dmap(raster, out);
}

Raster read_dmap(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw ParseError(ParseError::Kind::Truncated, "missing DMAP header");
  if (magic != kMagic) throw ParseError(ParseError::Kind::BadMagic, "bad DMAP magic");
  Raster r;
  if (!get_u32(in, r.width) || !get_u32(in, r.height) || !get_u32(in, r.channels)) {
    throw ParseError(ParseError::Kind::Truncated, "truncated DMAP header");
  }
  const std::uint64_t area = std::uint64_t(r.width) * r.height;
  if (area > kMaxValues || (r.channels != 0 && area > kMaxValues / r.channels)) {
    throw ParseError(ParseError::Kind::ExtentOverflow, "DMAP extents too large");
  }
  const std::uint64_t n = area * r.channels;
  r.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    if (!get_u32(in, bits)) {
      throw ParseError(ParseError::Kind::Truncated,
                       "DMAP payload truncated at value " + std::to_string(i) + " of " + std::to_string(n));
    }
    r.values[i] = std::bit_cast<float>(bits);
  }
  return r;
}

Raster read_dmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
  return read_dmap(in);
}

template <class T>
Raster to_raster(const Tensor<T>& chw) {
  if (chw.rank() != 3) throw ContractError("to_raster expects [Q, H, W], got " + shape_str(chw.shape()));
  Raster r;
  r.channels = chw.dim(0);
  r.height = chw.dim(1);
  r.width = chw.dim(2);
  r.values.resize(chw.numel());
  std::size_t i = 0;
  for (int y = 0; y < chw.dim(1); ++y)
    for (int x = 0; x < chw.dim(2); ++x)
      for (int c = 0; c < chw.dim(0); ++c) r.values[i++] = static_cast<float>(chw.at(c, y, x));
  return r;
}

template <class T>
Tensor<T> from_raster(const Raster& r) {
  if (std::uint64_t(r.width) * r.height * r.channels != r.values.size()) {
    throw ContractError("raster extents do not match value count");
  }
  Tensor<T> out({int(r.channels), int(r.height), int(r.width)});
  std::size_t i = 0;
  for (std::uint32_t y = 0; y < r.height; ++y)
    for (std::uint32_t x = 0; x < r.width; ++x)
      for (std::uint32_t c = 0; c < r.channels; ++c) out.at(c, y, x) = static_cast<T>(r.values[i++]);
  return out;
}

template Raster to_raster(const Tensor<float>&);
template Raster to_raster(const Tensor<double>&);
template Tensor<float> from_raster(const Raster&);
template Tensor<double> from_raster(const Raster&);

}  // namespace san
