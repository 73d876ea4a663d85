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

#include <random>
#include <vector>

/// Differentiable operations over time-major 2-D values.
namespace iptdet::nn {

/// y = x W^T + b; W is (out x in), b is (1 x out) or undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var matmul(const Var& a, const Var& b);
/// a b^T
Var matmul_nt(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);

Var relu(const Var& x);
/// Exact (erf) GELU.
Var gelu(const Var& x);
Var sigmoid(const Var& x);
/// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, Scalar p, std::mt19937_64& rng);

Var softmax_rows(const Var& x);
/// Normalizes each row over its columns.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps = 1e-5f);
/// Normalizes each column over time; affine per column. Equivalent to a
/// GroupNorm with one group per channel.
Var instance_norm_time(const Var& x, const Var& gamma, const Var& beta, Scalar eps = 1e-5f);

Var slice_cols(const Var& x, Index start, Index count);
Var slice_rows(const Var& x, Index start, Index count);
Var concat_cols(const std::vector<Var>& parts);

/// Time-major 1-D convolution. `weight` is (C_out x (C_in/groups)*kernel)
/// with column index c*kernel + k, i.e. a flattened (C_out, C_in/groups, K)
/// tensor. Zero padding on both ends.
Var conv1d(const Var& x, const Var& weight, const Var& bias, Index kernel, Index stride,
           Index padding, Index groups);
Index conv1d_output_length(Index input_length, Index kernel, Index stride, Index padding);

/// sum_k softmax(raw)_k * layers[k]; raw is (1 x L).
Var softmax_weighted_sum(const std::vector<Var>& layers, const Var& raw);

/// (T x groups*size) -> (T x groups): sums each contiguous block of `size` columns.
Var sum_blocks(const Var& x, Index groups, Index size);
/// (T x groups*size) -> (T x size): sums column j of every block.
Var sum_across_blocks(const Var& x, Index groups, Index size);

}  // namespace iptdet::nn
