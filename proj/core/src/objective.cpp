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

#include "iptdet/objective.hpp"

#include "iptdet/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace iptdet {

void LossWeights::validate() const {
  if (!(lambda_ipt >= 0.0) || !(lambda_pitch >= 0.0) || !(lambda_onset >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

namespace {

LossTerm reduce(const DMatrix& pred, const BinaryGrid& target, const BinaryVector& mask,
                std::span<const double> weights) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ContractError("loss: prediction is " + std::to_string(pred.rows()) + "x" +
                        std::to_string(pred.cols()) + ", target is " +
                        std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  }
  if (mask.size() != pred.rows()) {
    throw ContractError("loss: mask length differs from frame count");
  }
  if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != pred.cols()) {
    throw ContractError("loss: " + std::to_string(weights.size()) + " class weights for " +
                        std::to_string(pred.cols()) + " classes");
  }
  LossTerm out;
  out.grad = DMatrix::Zero(pred.rows(), pred.cols());
  const auto valid = static_cast<std::size_t>((mask != 0).count());
  out.count = valid * static_cast<std::size_t>(pred.cols());
  if (out.count == 0) {
    if (pred.cols() > 0) {
      spdlog::warn("loss over an empty mask; returning 0");
    }
    return out;
  }
  const double inv = 1.0 / static_cast<double>(out.count);
  double sum = 0.0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    if (mask(t) == 0) {
      continue;
    }
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double raw = pred(t, c);
      const double p = std::clamp(raw, kLossEpsilon, 1.0 - kLossEpsilon);
      const bool clipped = p != raw;
      const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(c)];
      if (target(t, c) != 0) {
        sum -= w * std::log(p);
        out.grad(t, c) = clipped ? 0.0 : -w / p * inv;
      } else {
        sum -= std::log1p(-p);
        out.grad(t, c) = clipped ? 0.0 : 1.0 / (1.0 - p) * inv;
      }
    }
  }
  out.value = sum * inv;
  return out;
}

}  // namespace

LossTerm bce(const DMatrix& pred, const BinaryGrid& target, const BinaryVector& mask) {
  return reduce(pred, target, mask, {});
}

LossTerm weighted_bce(const DMatrix& pred, const BinaryGrid& target, const BinaryVector& mask,
                      std::span<const double> weights) {
  if (static_cast<Eigen::Index>(weights.size()) != pred.cols()) {
    throw ContractError("weighted_bce: " + std::to_string(weights.size()) +
                        " class weights for " + std::to_string(pred.cols()) + " classes");
  }
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ContractError("weighted_bce: class weights must be finite and non-negative");
    }
  }
  return reduce(pred, target, mask, weights);
}

LossBreakdown total_loss(const PosteriorSet& posteriors, const FrameGrid& targets,
                         const LossWeights& weights, std::span<const double> class_weights,
                         bool pitch_labels) {
  return total_loss(posteriors.y_ipt.cast<double>(), posteriors.y_pitch.cast<double>(),
                    posteriors.onset.cast<double>(), targets, weights, class_weights,
                    pitch_labels);
}

LossBreakdown total_loss(const DMatrix& y_ipt, const DMatrix& y_pitch, const DMatrix& onset,
                         const FrameGrid& targets, const LossWeights& weights,
                         std::span<const double> class_weights, bool pitch_labels) {
  weights.validate();
  const auto n = y_ipt.rows();
  if (n != targets.n_time() || (y_pitch.cols() > 0 && y_pitch.rows() != n) ||
      (onset.cols() > 0 && onset.rows() != n)) {
    throw ContractError("loss: posteriors cover " + std::to_string(n) + " frames, targets " +
                        std::to_string(targets.n_time()));
  }
  LossBreakdown out;
  out.valid_frames = static_cast<std::size_t>((targets.mask != 0).count());

  LossTerm ipt = class_weights.empty()
                     ? bce(y_ipt, targets.ipt, targets.mask)
                     : weighted_bce(y_ipt, targets.ipt, targets.mask, class_weights);
  out.ipt = ipt.value;
  out.grad_ipt = weights.lambda_ipt * ipt.grad;

  if (y_pitch.cols() > 0 && pitch_labels) {
    LossTerm pitch = bce(y_pitch, targets.pitch, targets.mask);
    out.pitch = pitch.value;
    out.grad_pitch = weights.lambda_pitch * pitch.grad;
  } else if (y_pitch.cols() > 0) {
    out.grad_pitch = DMatrix::Zero(y_pitch.rows(), y_pitch.cols());
  }

  if (onset.cols() > 0) {
    const BinaryGrid onset_target = targets.onset;
    LossTerm term = bce(onset, onset_target, targets.mask);
    out.onset = term.value;
    out.grad_onset = weights.lambda_onset * term.grad;
  }

  out.total = weights.lambda_ipt * out.ipt + weights.lambda_pitch * out.pitch +
              weights.lambda_onset * out.onset;
  return out;
}

}  // namespace iptdet
