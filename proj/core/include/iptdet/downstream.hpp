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
#include "iptdet/encoder.hpp"
#include "iptdet/nn/layers.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>

namespace iptdet {

/// Model variants of the ablation grid.
enum class Variant {
  ipt_probing,      // single IPT head, backbone frozen
  ipt_finetune,     // single IPT head, backbone finetuned
  ipt_pitch,        // factorized IPT x pitch branch, no onset branch
  ipt_pitch_onset,  // full multi-task model, ungated decoding
  mertech,          // full multi-task model, onset-gated decoding
};

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant variant);

struct VariantTraits {
  bool factorized;
  bool onset_branch;
  bool gated_decoding;
  bool backbone_trainable;
};
VariantTraits traits(Variant variant);

struct HeadConfig {
  int hidden = 512;
  float dropout = 0.2f;
  int attention_heads = 1;
  bool detach_onset = true;
};

/// Order-3 tensor D stored as n_time x (n_ipt * n_pitch); element (t, i, p)
/// lives at column i * n_pitch + p.
struct FactorTensor {
  nn::Matrix d;
  int n_ipt = 0;
  int n_pitch = 0;

  int n_time() const { return static_cast<int>(d.rows()); }
  float& at(int t, int i, int p) { return d(t, i * n_pitch + p); }
  float at(int t, int i, int p) const { return d(t, i * n_pitch + p); }
};

/// Model outputs for one window or recording.
struct PosteriorSet {
  nn::Matrix onset;    // n_time x 1; n_time x 0 without an onset branch
  nn::Matrix p_ipt;    // raw IPT marginal (single-head variants: logits)
  nn::Matrix p_pitch;  // raw pitch marginal; n_time x 0 for single-head variants
  nn::Matrix y_ipt;    // refined IPT probabilities
  nn::Matrix y_pitch;  // refined pitch probabilities; n_time x 0 when absent

  int n_time() const { return static_cast<int>(y_ipt.rows()); }
  bool has_onset() const { return onset.cols() > 0; }
  bool has_pitch() const { return y_pitch.cols() > 0; }
  /// Probability ranges and, when both marginals exist, per-frame
  /// sum(p_ipt) == sum(p_pitch) within `tol`.
  void validate(double tol = 1e-4) const;
};

/// p_ipt[t,i] = sum_p d[t,i,p]; p_pitch[t,p] = sum_i d[t,i,p].
std::pair<nn::Matrix, nn::Matrix> marginalize(const FactorTensor& d);
std::pair<nn::Var, nn::Var> marginalize(const nn::Var& d, int n_ipt, int n_pitch);

/// Linear -> dropout -> ReLU -> time-distributed linear.
class MlpBranch {
 public:
  MlpBranch() = default;
  MlpBranch(nn::ParameterSet& params, const std::string& name, int in, int hidden, int out,
            float dropout, std::mt19937_64& init_rng);
  nn::Var operator()(const nn::Var& x, bool training, std::mt19937_64* rng) const;

  const nn::Linear& output_layer() const { return fc2_; }

 private:
  nn::Linear fc1_, fc2_;
  float dropout_ = 0.0f;
};

/// Refinement sub-network: concat(marginal, onset) -> input projection to a
/// multiple of the head count -> residual self-attention -> FC -> sigmoid.
class RefineNet {
 public:
  RefineNet() = default;
  RefineNet(nn::ParameterSet& params, const std::string& name, int classes, bool with_onset,
            int heads, std::mt19937_64& init_rng);

  /// `onset` may be undefined when built without onset input.
  nn::Var operator()(const nn::Var& marginal, const nn::Var& onset, bool detach_onset) const;
  int model_dim() const { return model_dim_; }

 private:
  nn::Linear in_proj_;
  nn::MultiHeadSelfAttention attention_;
  nn::Linear fc_;
  int classes_ = 0;
  int model_dim_ = 0;
  bool with_onset_ = false;
};

/// The downstream model including the learnable layer weighting.
class IptModel {
 public:
  struct Outputs {
    nn::Var onset;    // post-sigmoid
    nn::Var factor;   // raw D (factorized variants)
    nn::Var p_ipt, p_pitch;
    nn::Var y_ipt, y_pitch;
  };

  IptModel(Variant variant, ClassMap class_map, HeadConfig head, int feature_dim, int num_layers,
           std::uint64_t seed);

  Variant variant() const { return variant_; }
  const ClassMap& class_map() const { return class_map_; }
  const HeadConfig& head_config() const { return head_; }
  int feature_dim() const { return feature_dim_; }
  int num_layers() const { return layer_weights_.size(); }

  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const LayerWeights& layer_weights() const { return layer_weights_; }

  /// Dropout is active only when `training`; `rng` is then required.
  Outputs forward(const FeatureSeq& features, bool training, std::mt19937_64* rng) const;
  Outputs forward(const LayerStack& stack, bool training, std::mt19937_64* rng) const;
  /// Eval-mode forward without graph recording.
  PosteriorSet infer(const LayerStack& stack) const;
  static PosteriorSet to_posteriors(const Outputs& out);

  // Individual components.
  nn::Var onset_branch(const FeatureSeq& features, bool training, std::mt19937_64* rng) const;
  nn::Var factor_branch(const FeatureSeq& features, bool training, std::mt19937_64* rng) const;
  nn::Var refine_ipt(const nn::Var& p_ipt, const nn::Var& onset) const;
  nn::Var refine_pitch(const nn::Var& p_pitch, const nn::Var& onset) const;

  const MlpBranch& onset_mlp() const { return onset_mlp_; }
  const MlpBranch& factor_mlp() const { return factor_mlp_; }

  static constexpr std::string_view kOnsetPrefix = "onset_mlp.";

 private:
  Variant variant_;
  ClassMap class_map_;
  HeadConfig head_;
  int feature_dim_;
  nn::ParameterSet params_;
  LayerWeights layer_weights_;
  MlpBranch onset_mlp_;
  MlpBranch factor_mlp_;  // factorized variants
  MlpBranch ipt_mlp_;     // single-head variants
  RefineNet refine_ipt_;
  RefineNet refine_pitch_;
};

}  // namespace iptdet
