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

#pragma once

#include "iptdet/nn/autograd.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace iptdet::nn {

/// Named, ordered collection of parameter leaves.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var var;
  };

  /// Registers a new leaf; names must be unique.
  Var add(std::string name, Matrix init);

  const std::vector<Entry>& entries() const { return entries_; }
  bool contains(std::string_view name) const;
  Var get(std::string_view name) const;

  void zero_grad();
  /// Marks every parameter whose name starts with `prefix` as (non-)trainable.
  void set_trainable(std::string_view prefix, bool trainable);
  std::size_t count(std::string_view prefix = {}) const;

  /// Order-independent fingerprint of the values under `prefix`.
  std::uint64_t checksum(std::string_view prefix = {}) const;

  std::map<std::string, Matrix> values() const;
  /// Copies values in; every registered name must be present with the
  /// registered shape.
  void assign(const std::map<std::string, Matrix>& values, std::string_view strip_prefix = {});

 private:
  std::vector<Entry> entries_;
};

/// Tensor blob file: named row-major float32 matrices.
void write_tensor_file(const std::filesystem::path& path,
                       const std::map<std::string, Matrix>& tensors);
std::map<std::string, Matrix> read_tensor_file(const std::filesystem::path& path);

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual FC initializer.
Matrix fan_in_uniform(Index rows, Index cols, Index fan_in, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, Index in, Index out,
         std::mt19937_64& rng, bool with_bias = true);

  Var operator()(const Var& x) const;

  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  Index in_features() const { return weight_.cols(); }
  Index out_features() const { return weight_.rows(); }

 private:
  Var weight_;
  Var bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, Index dim, Scalar eps = 1e-5f);
  Var operator()(const Var& x) const;

 private:
  Var gamma_;
  Var beta_;
  Scalar eps_ = 1e-5f;
};

/// Multi-head scaled dot-product self-attention over the rows of x.
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterSet& params, const std::string& name, Index dim, Index heads,
                         std::mt19937_64& rng);

  Var operator()(const Var& x) const;
  Index heads() const { return heads_; }

 private:
  Linear q_, k_, v_, out_;
  Index heads_ = 1;
};

}  // namespace iptdet::nn
