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

#include "iptdet/downstream.hpp"

#include "iptdet/error.hpp"
#include "iptdet/nn/ops.hpp"

#include <cmath>

namespace iptdet {

using nn::Matrix;
using nn::Var;

Variant parse_variant(std::string_view name) {
  if (name == "IPT_probing") {
    return Variant::ipt_probing;
  }
  if (name == "IPT_finetune") {
    return Variant::ipt_finetune;
  }
  if (name == "IPT+Pitch") {
    return Variant::ipt_pitch;
  }
  if (name == "IPT+Pitch+Onset") {
    return Variant::ipt_pitch_onset;
  }
  if (name == "MERTech") {
    return Variant::mertech;
  }
  throw ConfigError("unknown model variant '" + std::string(name) +
                    "' (expected IPT_probing, IPT_finetune, IPT+Pitch, IPT+Pitch+Onset or "
                    "MERTech)");
}

std::string_view variant_name(Variant variant) {
  switch (variant) {
    case Variant::ipt_probing:
      return "IPT_probing";
    case Variant::ipt_finetune:
      return "IPT_finetune";
    case Variant::ipt_pitch:
      return "IPT+Pitch";
    case Variant::ipt_pitch_onset:
      return "IPT+Pitch+Onset";
    case Variant::mertech:
      return "MERTech";
  }
  return "unknown";
}

VariantTraits traits(Variant variant) {
  switch (variant) {
    case Variant::ipt_probing:
      return {false, false, false, false};
    case Variant::ipt_finetune:
      return {false, false, false, true};
    case Variant::ipt_pitch:
      return {true, false, false, true};
    case Variant::ipt_pitch_onset:
      return {true, true, false, true};
    case Variant::mertech:
      return {true, true, true, true};
  }
  return {true, true, true, true};
}

void PosteriorSet::validate(double tol) const {
  const auto n = y_ipt.rows();
  auto in_open_unit = [](const Matrix& m) {
    return m.size() == 0 || ((m.array() >= 0.0f).all() && (m.array() <= 1.0f).all());
  };
  if (onset.rows() != n || p_ipt.rows() != n || p_pitch.rows() != n || y_pitch.rows() != n) {
    throw ContractError("posterior set components disagree on frame count");
  }
  if (!onset.allFinite() || !p_ipt.allFinite() || !p_pitch.allFinite() || !y_ipt.allFinite() ||
      !y_pitch.allFinite()) {
    throw ContractError("posterior set holds non-finite values");
  }
  if (!in_open_unit(onset) || !in_open_unit(y_ipt) || !in_open_unit(y_pitch)) {
    throw ContractError("posterior probabilities outside [0, 1]");
  }
  if (p_pitch.cols() > 0) {
    for (Eigen::Index t = 0; t < n; ++t) {
      const double a = p_ipt.row(t).cast<double>().sum();
      const double b = p_pitch.row(t).cast<double>().sum();
      if (std::abs(a - b) > tol) {
        throw ContractError("marginal sums differ at frame " + std::to_string(t));
      }
    }
  }
}

std::pair<Matrix, Matrix> marginalize(const FactorTensor& d) {
  if (d.d.cols() != static_cast<Eigen::Index>(d.n_ipt) * d.n_pitch) {
    throw ContractError("factor tensor width is not n_ipt * n_pitch");
  }
  // Accumulate in double so each marginal is within half an ulp of the exact sum.
  using DMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const DMat dd = d.d.cast<double>();
  DMat ipt = DMat::Zero(dd.rows(), d.n_ipt);
  DMat pitch = DMat::Zero(dd.rows(), d.n_pitch);
  for (int i = 0; i < d.n_ipt; ++i) {
    auto block = dd.middleCols(static_cast<Eigen::Index>(i) * d.n_pitch, d.n_pitch);
    ipt.col(i) = block.rowwise().sum();
    pitch += block;
  }
  Matrix p_ipt = ipt.cast<float>();
  Matrix p_pitch = pitch.cast<float>();
  return {std::move(p_ipt), std::move(p_pitch)};
}

std::pair<Var, Var> marginalize(const Var& d, int n_ipt, int n_pitch) {
  return {nn::sum_blocks(d, n_ipt, n_pitch), nn::sum_across_blocks(d, n_ipt, n_pitch)};
}

MlpBranch::MlpBranch(nn::ParameterSet& params, const std::string& name, int in, int hidden,
                     int out, float dropout, std::mt19937_64& init_rng)
    : fc1_(params, name + ".fc1", in, hidden, init_rng),
      fc2_(params, name + ".fc2", hidden, out, init_rng),
      dropout_(dropout) {}

Var MlpBranch::operator()(const Var& x, bool training, std::mt19937_64* rng) const {
  Var h = fc1_(x);
  if (training && dropout_ > 0.0f) {
    if (rng == nullptr) {
      throw ContractError("training-mode forward needs a dropout RNG");
    }
    h = nn::dropout(h, dropout_, *rng);
  }
  return fc2_(nn::relu(h));
}

RefineNet::RefineNet(nn::ParameterSet& params, const std::string& name, int classes,
                     bool with_onset, int heads, std::mt19937_64& init_rng)
    : classes_(classes), with_onset_(with_onset) {
  const int in = classes + (with_onset ? 1 : 0);
  // A projection is only needed when the heads do not divide the input.
  const int dim = (in + heads - 1) / heads * heads;
  model_dim_ = dim;
  if (dim != in) {
    in_proj_ = nn::Linear(params, name + ".in_proj", in, dim, init_rng);
  }
  attention_ = nn::MultiHeadSelfAttention(params, name + ".attention", dim, heads, init_rng);
  // Zero output projection: the residual block starts as the identity.
  params.get(name + ".attention.out_proj.weight").mutable_value().setZero();
  fc_ = nn::Linear(params, name + ".fc", dim, classes, init_rng);
}

Var RefineNet::operator()(const Var& marginal, const Var& onset, bool detach_onset) const {
  if (marginal.cols() != classes_) {
    throw ContractError("refine: marginal has " + std::to_string(marginal.cols()) +
                        " classes, expected " + std::to_string(classes_));
  }
  Var input = marginal;
  if (with_onset_) {
    if (!onset.defined() || onset.rows() != marginal.rows() || onset.cols() != 1) {
      throw ContractError("refine: onset posterior must be n_time x 1 matching the marginal");
    }
    input = nn::concat_cols({marginal, detach_onset ? onset.detach() : onset});
  }
  Var z = model_dim_ != input.cols() ? in_proj_(input) : input;
  Var h = nn::add(z, attention_(z));
  return nn::sigmoid(fc_(h));
}

IptModel::IptModel(Variant variant, ClassMap class_map, HeadConfig head, int feature_dim,
                   int num_layers, std::uint64_t seed)
    : variant_(variant),
      class_map_(std::move(class_map)),
      head_(head),
      feature_dim_(feature_dim) {
  class_map_.validate();
  if (head_.hidden < 1 || head_.attention_heads < 1 || head_.dropout < 0.0f ||
      head_.dropout >= 1.0f) {
    throw ConfigError("invalid head configuration");
  }
  std::mt19937_64 rng(seed);
  layer_weights_ = LayerWeights{params_.add("layer_weights", Matrix::Zero(1, num_layers))};
  const auto t = traits(variant_);
  const int n_ipt = class_map_.n_ipt();
  const int n_pitch = class_map_.n_pitch();
  if (t.onset_branch) {
    onset_mlp_ = MlpBranch(params_, "onset_mlp", feature_dim, head_.hidden, 1, head_.dropout, rng);
  }
  if (t.factorized) {
    factor_mlp_ = MlpBranch(params_, "factor_mlp", feature_dim, head_.hidden, n_ipt * n_pitch,
                            head_.dropout, rng);
    refine_ipt_ =
        RefineNet(params_, "refine_ipt", n_ipt, t.onset_branch, head_.attention_heads, rng);
    refine_pitch_ =
        RefineNet(params_, "refine_pitch", n_pitch, t.onset_branch, head_.attention_heads, rng);
  } else {
    ipt_mlp_ = MlpBranch(params_, "ipt_mlp", feature_dim, head_.hidden, n_ipt, head_.dropout, rng);
  }
}

Var IptModel::onset_branch(const FeatureSeq& features, bool training,
                           std::mt19937_64* rng) const {
  if (!traits(variant_).onset_branch) {
    throw ContractError("variant " + std::string(variant_name(variant_)) + " has no onset branch");
  }
  return nn::sigmoid(onset_mlp_(features.features, training, rng));
}

Var IptModel::factor_branch(const FeatureSeq& features, bool training,
                            std::mt19937_64* rng) const {
  if (!traits(variant_).factorized) {
    throw ContractError("variant " + std::string(variant_name(variant_)) +
                        " has no factorized branch");
  }
  return factor_mlp_(features.features, training, rng);
}

Var IptModel::refine_ipt(const Var& p_ipt, const Var& onset) const {
  return refine_ipt_(p_ipt, onset, head_.detach_onset);
}

Var IptModel::refine_pitch(const Var& p_pitch, const Var& onset) const {
  return refine_pitch_(p_pitch, onset, head_.detach_onset);
}

IptModel::Outputs IptModel::forward(const FeatureSeq& features, bool training,
                                    std::mt19937_64* rng) const {
  if (features.features.cols() != feature_dim_) {
    throw ContractError("features have width " + std::to_string(features.features.cols()) +
                        ", model expects " + std::to_string(feature_dim_));
  }
  const auto t = traits(variant_);
  Outputs out;
  if (!t.factorized) {
    out.p_ipt = ipt_mlp_(features.features, training, rng);
    out.y_ipt = nn::sigmoid(out.p_ipt);
    return out;
  }
  if (t.onset_branch) {
    out.onset = onset_branch(features, training, rng);
  }
  out.factor = factor_branch(features, training, rng);
  std::tie(out.p_ipt, out.p_pitch) =
      marginalize(out.factor, class_map_.n_ipt(), class_map_.n_pitch());
  out.y_ipt = refine_ipt(out.p_ipt, out.onset);
  out.y_pitch = refine_pitch(out.p_pitch, out.onset);
  return out;
}

IptModel::Outputs IptModel::forward(const LayerStack& stack, bool training,
                                    std::mt19937_64* rng) const {
  return forward(weighted_sum(stack, layer_weights_), training, rng);
}

PosteriorSet IptModel::to_posteriors(const Outputs& out) {
  PosteriorSet p;
  const auto n = out.y_ipt.rows();
  auto value_or_empty = [n](const Var& v) { return v.defined() ? v.value() : Matrix(n, 0); };
  p.onset = value_or_empty(out.onset);
  p.p_ipt = value_or_empty(out.p_ipt);
  p.p_pitch = value_or_empty(out.p_pitch);
  p.y_ipt = value_or_empty(out.y_ipt);
  p.y_pitch = value_or_empty(out.y_pitch);
  return p;
}

PosteriorSet IptModel::infer(const LayerStack& stack) const {
  nn::NoGradGuard guard;
  return to_posteriors(forward(stack, false, nullptr));
}

}  // namespace iptdet
