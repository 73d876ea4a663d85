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

#include "iptdet/dataset.hpp"
#include "iptdet/downstream.hpp"

#include <Eigen/Core>

#include <span>

namespace iptdet {

using DMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LossWeights {
  double lambda_ipt = 1.0;
  double lambda_pitch = 0.5;
  double lambda_onset = 0.5;

  void validate() const;
};

inline constexpr double kLossEpsilon = 1e-7;

/// A reduced loss with its gradient w.r.t. the prediction matrix.
struct LossTerm {
  double value = 0.0;
  DMatrix grad;
  std::size_t count = 0;  // masked elements entering the mean
};

/// Mean over valid frames (all columns) of -[y ln p + (1-y) ln(1-p)],
/// p clipped to [eps, 1-eps]. An empty mask yields 0 with a warning.
LossTerm bce(const DMatrix& pred, const BinaryGrid& target, const BinaryVector& mask);

/// As bce with the positive term of column c scaled by weights[c].
LossTerm weighted_bce(const DMatrix& pred, const BinaryGrid& target, const BinaryVector& mask,
                      std::span<const double> weights);

struct LossBreakdown {
  double total = 0.0;
  double ipt = 0.0;
  double pitch = 0.0;
  double onset = 0.0;
  // Gradients of `total` w.r.t. y_ipt, y_pitch and onset; empty when the
  // term is absent.
  DMatrix grad_ipt, grad_pitch, grad_onset;
  std::size_t valid_frames = 0;
};

/// L = l_ipt * wBCE(y_ipt) + l_pitch * BCE(y_pitch) + l_onset * BCE(onset).
/// Terms whose posterior is absent contribute 0; the pitch term is also
/// skipped when `pitch_labels` is false.
LossBreakdown total_loss(const PosteriorSet& posteriors, const FrameGrid& targets,
                         const LossWeights& weights, std::span<const double> class_weights,
                         bool pitch_labels = true);
/// Double-precision form; a matrix with zero columns marks an absent term.
LossBreakdown total_loss(const DMatrix& y_ipt, const DMatrix& y_pitch, const DMatrix& onset,
                         const FrameGrid& targets, const LossWeights& weights,
                         std::span<const double> class_weights, bool pitch_labels = true);

}  // namespace iptdet
