#include "san/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "san/errors.hpp"

namespace san {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'A', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <class U>
  void uint(U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), sizeof(U));
  }
  void string(const std::string& s) {
    uint(std::uint32_t(s.size()));
    out_.write(s.data(), std::streamsize(s.size()));
  }
  template <class T>
  void values(const Tensor<T>& t) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (T v : t.span()) uint(std::bit_cast<Bits>(v));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <class U>
  U uint() {
    unsigned char b[sizeof(U)];
    if (!in_.read(reinterpret_cast<char*>(b), sizeof(U))) {
      throw ParseError(ParseError::Kind::Truncated, "checkpoint truncated");
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(b[i]) << (8 * i);
    return v;
  }
  std::string string() {
    const auto n = uint<std::uint32_t>();
    if (n > (1u << 24)) throw ParseError(ParseError::Kind::ExtentOverflow, "checkpoint string too long");
    std::string s(n, '\0');
    if (n && !in_.read(s.data(), n)) throw ParseError(ParseError::Kind::Truncated, "checkpoint truncated");
    return s;
  }
  template <class T>
  Tensor<T> values(const Shape& shape) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    Tensor<T> t(shape);
    for (auto& v : t.span()) v = std::bit_cast<T>(uint<Bits>());
    return t;
  }

 private:
  std::istream& in_;
};

}  // namespace

template <class T>
void save_checkpoint(const Checkpoint<T>& ckpt, std::ostream& out) {
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.uint(kVersion);
  w.uint(std::uint32_t(sizeof(T)));
  w.uint(std::uint32_t(ckpt.epochs_done));
  w.string(ckpt.config.to_text());
  const auto& entries = ckpt.params.entries();
  w.uint(std::uint32_t(entries.size()));
  for (const auto& e : entries) {
    w.string(e.name);
    w.uint(std::uint8_t((e.frozen ? 1 : 0) | (e.is_buffer ? 2 : 0)));
    w.uint(std::uint64_t(e.step));
    const Shape& shape = e.node->value.shape();
    w.uint(std::uint32_t(shape.size()));
    for (int d : shape) w.uint(std::uint32_t(d));
    w.values(e.node->value);
    if (!e.is_buffer) {
      w.values(e.exp_avg);
      w.values(e.exp_avg_sq);
    }
  }
  if (!out) throw ParseError(ParseError::Kind::Io, "checkpoint write failed");
}

template <class T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string() + " for writing");
  save_checkpoint(ckpt, out);
}

template <class T>
Checkpoint<T> load_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw ParseError(ParseError::Kind::Truncated, "checkpoint truncated");
  if (magic != kMagic) throw ParseError(ParseError::Kind::BadMagic, "not a checkpoint file");
  Reader r(in);
  if (r.uint<std::uint32_t>() != kVersion) throw ParseError(ParseError::Kind::BadVersion, "unsupported checkpoint version");
  const auto bytes = r.uint<std::uint32_t>();
  if (bytes != sizeof(T)) {
    throw ConfigError("checkpoint stores " + std::to_string(bytes * 8) + "-bit values, expected " +
                      std::to_string(sizeof(T) * 8));
  }
  Checkpoint<T> ckpt;
  ckpt.epochs_done = int(r.uint<std::uint32_t>());
  ckpt.config = TrainConfig::from_text(r.string());
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.string();
    const auto flags = r.uint<std::uint8_t>();
    const auto step = r.uint<std::uint64_t>();
    const auto rank = r.uint<std::uint32_t>();
    if (rank > 8) throw ParseError(ParseError::Kind::ExtentOverflow, "checkpoint tensor rank too large");
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(int(r.uint<std::uint32_t>()));
      numel *= std::uint64_t(shape.back());
      if (numel > (std::uint64_t(1) << 31)) throw ParseError(ParseError::Kind::ExtentOverflow, "tensor too large");
    }
    Tensor<T> value = r.values<T>(shape);
    if (flags & 2) {
      ckpt.params.add_buffer(name, std::move(value));
      continue;
    }
    ckpt.params.add_param(name, std::move(value));
    auto& e = ckpt.params.entry(name);
    e.step = step;
    e.exp_avg = r.values<T>(shape);
    e.exp_avg_sq = r.values<T>(shape);
    ckpt.params.set_frozen(name, flags & 1);
  }
  return ckpt;
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
  return load_checkpoint<T>(in);
}

int checkpoint_value_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw ParseError(ParseError::Kind::Truncated, "checkpoint truncated");
  if (magic != kMagic) throw ParseError(ParseError::Kind::BadMagic, "not a checkpoint file");
  Reader r(in);
  r.uint<std::uint32_t>();
  return int(r.uint<std::uint32_t>());
}

template void save_checkpoint(const Checkpoint<float>&, std::ostream&);
template void save_checkpoint(const Checkpoint<double>&, std::ostream&);
template void save_checkpoint(const Checkpoint<float>&, const std::filesystem::path&);
template void save_checkpoint(const Checkpoint<double>&, const std::filesystem::path&);
template Checkpoint<float> load_checkpoint(std::istream&);
template Checkpoint<double> load_checkpoint(std::istream&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace san
