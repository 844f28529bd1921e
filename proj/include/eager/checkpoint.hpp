#pragma once

// Binary checkpoint container, little-endian:
//
//   magic "EAGERCKP" | u32 version | u32 scalar bytes (4 or 8)
//   u64 E | u64 layers | u64 vocab | f64 dropout_embed | f64 dropout_hidden | u8 tied
//   u32 tensor count, then per tensor:
//     u32 name length | name bytes | u64 rows | u64 cols | rows*cols scalars, row-major
//
// A checkpoint written from ParameterSet<T> reloads bit-identically into the
// same T; loading into the other precision converts value by value.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "eager/model.hpp"

namespace eager {

inline constexpr char kCheckpointMagic[8] = {'E', 'A', 'G', 'E', 'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ParameterSet<T>& p, std::ostream& os) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  const auto& cfg = p.config();
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, sizeof(T));
  detail::put<std::uint64_t>(os, cfg.embed_dim);
  detail::put<std::uint64_t>(os, cfg.layers);
  detail::put<std::uint64_t>(os, cfg.vocab_size);
  detail::put<double>(os, cfg.dropout_embed);
  detail::put<double>(os, cfg.dropout_hidden);
  detail::put<std::uint8_t>(os, cfg.tied ? 1 : 0);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.params().size()));
  for (const auto& prm : p.params()) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(prm.name.size()));
    os.write(prm.name.data(), static_cast<std::streamsize>(prm.name.size()));
    detail::put<std::uint64_t>(os, prm.value.rows());
    detail::put<std::uint64_t>(os, prm.value.cols());
    os.write(reinterpret_cast<const char*>(prm.value.data()), static_cast<std::streamsize>(prm.value.size() * sizeof(T)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

template <typename T>
void save_checkpoint(const ParameterSet<T>& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  save_checkpoint(p, os);
}

template <typename T>
ParameterSet<T> load_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  auto scalar = detail::get<std::uint32_t>(is);
  if (scalar != 4 && scalar != 8) throw std::runtime_error("checkpoint: bad scalar size");
  ModelConfig cfg;
  cfg.embed_dim = detail::get<std::uint64_t>(is);
  cfg.layers = detail::get<std::uint64_t>(is);
  cfg.vocab_size = detail::get<std::uint64_t>(is);
  cfg.dropout_embed = detail::get<double>(is);
  cfg.dropout_hidden = detail::get<double>(is);
  cfg.tied = detail::get<std::uint8_t>(is) != 0;
  ParameterSet<T> p(cfg);
  auto count = detail::get<std::uint32_t>(is);
  if (count != p.params().size()) throw std::runtime_error("checkpoint: tensor count does not match config");
  for (auto& prm : p.params()) {
    auto len = detail::get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("checkpoint: truncated file");
    if (name != prm.name) throw std::runtime_error("checkpoint: expected tensor " + prm.name + ", found " + name);
    auto rows = detail::get<std::uint64_t>(is);
    auto cols = detail::get<std::uint64_t>(is);
    if (rows != prm.value.rows() || cols != prm.value.cols())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (auto& v : prm.value.flat()) {
      if (scalar == 4) v = static_cast<T>(detail::get<float>(is));
      else v = static_cast<T>(detail::get<double>(is));
    }
  }
  return p;
}

template <typename T>
ParameterSet<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return load_checkpoint<T>(is);
}

}  // namespace eager
