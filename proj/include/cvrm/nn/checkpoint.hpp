// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "cvrm/nn/tensor.hpp"

namespace cvrm::nn {

// Layout (little-endian):
//   "CVRMCKPT" | u32 version | u64 meta_len | meta (JSON text) | u32 count |
//   count x { u32 name_len | name | u32 dtype_bytes | u32 rows | u32 cols | raw }
inline constexpr char kCheckpointMagic[8] = {'C', 'V', 'R', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::uint32_t dtype_bytes = 4;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<unsigned char> raw;

  template <typename T>
  Matrix<T> as() const {
    Matrix<double> tmp(rows, cols);
    if (dtype_bytes == 4) {
      Matrix<float> f(rows, cols);
      std::memcpy(f.data(), raw.data(), raw.size());
      if constexpr (std::is_same_v<T, float>) return f;
      tmp = f.template cast<double>();
    } else {
      std::memcpy(tmp.data(), raw.data(), raw.size());
      if constexpr (std::is_same_v<T, double>) return tmp;
    }
    return tmp.template cast<T>();
  }
};

struct Checkpoint {
  std::string metadata;
  std::vector<std::string> order;
  std::map<std::string, StoredTensor> tensors;
};

namespace detail {
template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}
template <typename U>
U get(std::istream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw ParseError("truncated checkpoint");
  return v;
}
}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params,
                     const std::string& metadata = "{}") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, metadata.size());
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put<std::uint32_t>(out, sizeof(T));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(p.value.size())));
  }
  if (!out) throw Error("write failed: " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError("not a checkpoint file: " + path.string());
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto meta_len = detail::get<std::uint64_t>(in);
  ck.metadata.resize(meta_len);
  in.read(ck.metadata.data(), static_cast<std::streamsize>(meta_len));
  const auto count = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(detail::get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    StoredTensor t;
    t.dtype_bytes = detail::get<std::uint32_t>(in);
    if (t.dtype_bytes != 4 && t.dtype_bytes != 8) throw ParseError("bad dtype in checkpoint");
    t.rows = detail::get<std::uint32_t>(in);
    t.cols = detail::get<std::uint32_t>(in);
    t.raw.resize(static_cast<std::size_t>(t.dtype_bytes) * t.rows * t.cols);
    in.read(reinterpret_cast<char*>(t.raw.data()), static_cast<std::streamsize>(t.raw.size()));
    if (!in) throw ParseError("truncated checkpoint tensor '" + name + "'");
    ck.order.push_back(name);
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

/// Loads every parameter of `params` by name; shapes must match.
template <typename T>
void load_into(const Checkpoint& ck, ParameterSet<T>& params) {
  for (auto& p : params) {
    auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) throw NotFoundError("checkpoint lacks tensor '" + p.name + "'");
    const auto& t = it->second;
    if (t.rows != p.value.rows() || t.cols != p.value.cols())
      throw ShapeError("checkpoint shape mismatch for '" + p.name + "'");
    p.value = t.template as<T>();
  }
}

}  // namespace cvrm::nn
