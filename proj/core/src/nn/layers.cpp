/**
 * Copyright 2026 The iptdet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "iptdet/nn/layers.hpp"

#include "iptdet/error.hpp"
#include "iptdet/nn/ops.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace iptdet::nn {

Var ParameterSet::add(std::string name, Matrix init) {
  if (contains(name)) {
    throw ContractError("duplicate parameter name: " + name);
  }
  Var v(std::move(init), true);
  entries_.push_back({std::move(name), v});
  return v;
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) {
      return true;
    }
  }
  return false;
}

Var ParameterSet::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) {
      return e.var;
    }
  }
  throw ContractError("no parameter named " + std::string(name));
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) {
    e.var.zero_grad();
  }
}

void ParameterSet::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& e : entries_) {
    if (e.name.starts_with(prefix)) {
      e.var.set_requires_grad(trainable);
      if (!trainable) {
        e.var.zero_grad();
      }
    }
  }
}

std::size_t ParameterSet::count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) {
      n += static_cast<std::size_t>(e.var.value().size());
    }
  }
  return n;
}

std::uint64_t ParameterSet::checksum(std::string_view prefix) const {
  // FNV-1a over name and raw bytes, combined with xor so registration
  // order does not matter.
  std::uint64_t total = 0;
  for (const auto& e : entries_) {
    if (!e.name.starts_with(prefix)) {
      continue;
    }
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const unsigned char* p, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
      }
    };
    mix(reinterpret_cast<const unsigned char*>(e.name.data()), e.name.size());
    const Matrix& m = e.var.value();
    mix(reinterpret_cast<const unsigned char*>(m.data()),
        static_cast<std::size_t>(m.size()) * sizeof(Scalar));
    total ^= h;
  }
  return total;
}

std::map<std::string, Matrix> ParameterSet::values() const {
  std::map<std::string, Matrix> out;
  for (const auto& e : entries_) {
    out.emplace(e.name, e.var.value());
  }
  return out;
}

void ParameterSet::assign(const std::map<std::string, Matrix>& values,
                          std::string_view strip_prefix) {
  for (auto& e : entries_) {
    std::string key = e.name;
    if (!strip_prefix.empty() && key.starts_with(strip_prefix)) {
      key = key.substr(strip_prefix.size());
    }
    auto it = values.find(key);
    if (it == values.end()) {
      throw ParseError("missing parameter in checkpoint: " + key);
    }
    Matrix& dst = e.var.mutable_value();
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols()) {
      throw ParseError("parameter " + key + " has shape " + std::to_string(it->second.rows()) +
                       "x" + std::to_string(it->second.cols()) + ", expected " +
                       std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()));
    }
    dst = it->second;
  }
}

namespace {

constexpr char kMagic[4] = {'I', 'P', 'T', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw ParseError("truncated tensor file: " + path.string());
  }
  return v;
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path,
                       const std::map<std::string, Matrix>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, tensors.size());
  for (const auto& [name, m] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

std::map<std::string, Matrix> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("not a tensor file: " + path.string());
  }
  const auto version = take<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw ParseError("unsupported tensor file version " + std::to_string(version));
  }
  const auto n = take<std::uint64_t>(in, path);
  std::map<std::string, Matrix> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = take<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = take<std::uint64_t>(in, path);
    const auto cols = take<std::uint64_t>(in, path);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
    if (!in) {
      throw ParseError("truncated tensor file: " + path.string());
    }
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

Matrix fan_in_uniform(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(dist(rng));
  }
  return m;
}

Linear::Linear(ParameterSet& params, const std::string& name, Index in, Index out,
               std::mt19937_64& rng, bool with_bias) {
  weight_ = params.add(name + ".weight", fan_in_uniform(out, in, in, rng));
  if (with_bias) {
    bias_ = params.add(name + ".bias", Matrix::Zero(1, out));
  }
}

Var Linear::operator()(const Var& x) const { return linear(x, weight_, bias_); }

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, Index dim, Scalar eps)
    : eps_(eps) {
  gamma_ = params.add(name + ".weight", Matrix::Ones(1, dim));
  beta_ = params.add(name + ".bias", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(const Var& x) const { return layer_norm(x, gamma_, beta_, eps_); }

MultiHeadSelfAttention::MultiHeadSelfAttention(ParameterSet& params, const std::string& name,
                                               Index dim, Index heads, std::mt19937_64& rng)
    : heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw ContractError("attention width " + std::to_string(dim) +
                        " is not a multiple of head count " + std::to_string(heads));
  }
  q_ = Linear(params, name + ".q_proj", dim, dim, rng);
  k_ = Linear(params, name + ".k_proj", dim, dim, rng);
  v_ = Linear(params, name + ".v_proj", dim, dim, rng);
  out_ = Linear(params, name + ".out_proj", dim, dim, rng);
}

Var MultiHeadSelfAttention::operator()(const Var& x) const {
  const Index dim = q_.out_features();
  const Index head_dim = dim / heads_;
  const Scalar scaling = Scalar(1.0 / std::sqrt(static_cast<double>(head_dim)));
  Var q = scale(q_(x), scaling);
  Var k = k_(x);
  Var v = v_(x);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(heads_));
  for (Index h = 0; h < heads_; ++h) {
    Var qh = slice_cols(q, h * head_dim, head_dim);
    Var kh = slice_cols(k, h * head_dim, head_dim);
    Var vh = slice_cols(v, h * head_dim, head_dim);
    heads.push_back(matmul(softmax_rows(matmul_nt(qh, kh)), vh));
  }
  return out_(heads_ == 1 ? heads.front() : concat_cols(heads));
}

}  // namespace iptdet::nn
