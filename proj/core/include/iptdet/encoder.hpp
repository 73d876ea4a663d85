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
#include "iptdet/nn/layers.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iptdet {

inline constexpr int kDefaultLayers = 13;  // CNN output + 12 transformer layers
inline constexpr int kDefaultFeatureDim = 768;
inline constexpr double kEncoderFrameRate = 75.0;

/// Per-layer encoder outputs, each n_time x dim. Held as graph values so
/// gradients can reach a trainable backbone.
struct LayerStack {
  std::vector<nn::Var> layers;
  double frame_rate = kEncoderFrameRate;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int n_time() const { return layers.empty() ? 0 : static_cast<int>(layers.front().rows()); }
  int dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().cols()); }
  /// Throws ContractError unless all layers share n_time and dim and are finite.
  void validate(int expected_layers = kDefaultLayers) const;
};

/// Learnable per-layer mixing logits (1 x L), softmax-normalized on use.
struct LayerWeights {
  nn::Var raw;

  static LayerWeights uniform(int n_layers);
  int size() const { return static_cast<int>(raw.cols()); }
  Eigen::VectorXd normalized() const;
};

struct FeatureSeq {
  nn::Var features;  // n_time x dim
  double frame_rate = kEncoderFrameRate;
};

/// sum_k softmax(weights)_k * stack.layers[k]
FeatureSeq weighted_sum(const LayerStack& stack, const LayerWeights& weights);

enum class Backend { pretrained, stub };
Backend parse_backend(std::string_view name);
std::string_view backend_name(Backend backend);

/// Frame-level audio encoder over fixed 5 s, 24 kHz windows.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual Backend backend() const = 0;
  /// Requires exactly kWindowSamples samples.
  virtual LayerStack encode(std::span<const float> waveform) const = 0;
  /// Frame count produced for one window; fixed per backend.
  virtual int frames_per_window() const = 0;
  virtual int num_layers() const = 0;
  virtual int feature_dim() const = 0;

  /// Excludes the convolutional feature extractor from gradient updates.
  virtual void set_extractor_frozen(bool frozen) = 0;
  virtual bool extractor_frozen() const = 0;
  /// Freezes or unfreezes every backbone parameter (probing mode).
  virtual void set_trainable(bool trainable) = 0;

  virtual nn::ParameterSet& parameters() = 0;
  virtual const nn::ParameterSet& parameters() const = 0;
  virtual std::uint64_t extractor_checksum() const = 0;

  /// Writes the backbone so a checkpoint can be reloaded stand-alone.
  virtual void save(const std::filesystem::path& dir) const = 0;
};

/// Deterministic stand-in with the pretrained backbone's shape contract:
/// framed log band energies and their positive deltas, passed through a
/// fixed random projection normalized per dimension over the window, replicated per
/// layer with fixed perturbations.
class StubEncoder final : public Encoder {
 public:
  explicit StubEncoder(std::uint64_t seed = 0, int feature_dim = kDefaultFeatureDim,
                       int num_layers = kDefaultLayers);

  Backend backend() const override { return Backend::stub; }
  LayerStack encode(std::span<const float> waveform) const override;
  int frames_per_window() const override { return n_time_; }
  int num_layers() const override { return num_layers_; }
  int feature_dim() const override { return feature_dim_; }
  void set_extractor_frozen(bool frozen) override;
  bool extractor_frozen() const override { return true; }
  void set_trainable(bool) override {}
  nn::ParameterSet& parameters() override { return params_; }
  const nn::ParameterSet& parameters() const override { return params_; }
  std::uint64_t extractor_checksum() const override;
  void save(const std::filesystem::path& dir) const override;

  std::uint64_t seed() const { return seed_; }

  static constexpr int kBands = 96;
  static constexpr int kFrameLength = 1024;

 private:
  std::uint64_t seed_;
  int feature_dim_;
  int num_layers_;
  int n_time_;
  nn::Matrix basis_;       // kFrameLength x 2*kBands (windowed cos | sin)
  nn::Matrix projection_;  // raw feature width x feature_dim
  nn::Matrix layer_scale_;   // num_layers x feature_dim
  nn::Matrix layer_offset_;  // num_layers x feature_dim
  nn::ParameterSet params_;  // always empty
};

/// HuBERT-style backbone (conv feature extractor, feature projection,
/// convolutional positional embedding, post-norm transformer), loadable
/// from a converted checkpoint directory.
struct BackboneConfig {
  std::vector<int> conv_dim{512, 512, 512, 512, 512, 512, 512};
  std::vector<int> conv_kernel{10, 3, 3, 3, 3, 2, 2};
  std::vector<int> conv_stride{5, 2, 2, 2, 2, 2, 2};
  bool conv_bias = false;
  bool group_norm_first_layer = true;
  int hidden_size = 768;
  int num_hidden_layers = 12;
  int num_attention_heads = 12;
  int intermediate_size = 3072;
  int num_conv_pos_embeddings = 128;
  int num_conv_pos_embedding_groups = 16;
  double layer_norm_eps = 1e-5;
  bool feat_proj_layer_norm = true;

  /// Reads Hugging Face style config keys; unknown keys are ignored.
  static BackboneConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Frames produced for `samples` input samples.
  int output_frames(int samples) const;
};

class PretrainedEncoder final : public Encoder {
 public:
  /// Randomly initialized backbone (tests, conversion round trips).
  PretrainedEncoder(BackboneConfig config, std::uint64_t seed);

  /// Loads `config.json` + `encoder.bin` from `dir`.
  static std::unique_ptr<PretrainedEncoder> load(const std::filesystem::path& dir);

  Backend backend() const override { return Backend::pretrained; }
  LayerStack encode(std::span<const float> waveform) const override;
  int frames_per_window() const override { return n_time_; }
  int num_layers() const override { return config_.num_hidden_layers + 1; }
  int feature_dim() const override { return config_.hidden_size; }
  void set_extractor_frozen(bool frozen) override;
  bool extractor_frozen() const override { return extractor_frozen_; }
  void set_trainable(bool trainable) override;
  nn::ParameterSet& parameters() override { return params_; }
  const nn::ParameterSet& parameters() const override { return params_; }
  std::uint64_t extractor_checksum() const override;
  void save(const std::filesystem::path& dir) const override;

  const BackboneConfig& config() const { return config_; }

  static constexpr std::string_view kExtractorPrefix = "feature_extractor.";

 private:
  struct ConvLayer {
    nn::Var weight, bias;
    nn::Var norm_weight, norm_bias;  // first layer only
  };
  struct TransformerLayer {
    nn::MultiHeadSelfAttention attention;
    nn::LayerNorm attn_norm;
    nn::Linear ff_in, ff_out;
    nn::LayerNorm final_norm;
  };

  nn::Var extract(std::span<const float> waveform) const;

  BackboneConfig config_;
  nn::ParameterSet params_;
  std::vector<ConvLayer> conv_;
  nn::LayerNorm proj_norm_;
  nn::Linear projection_;
  nn::Var pos_weight_, pos_bias_;
  nn::LayerNorm encoder_norm_;
  std::vector<TransformerLayer> layers_;
  int n_time_ = 0;
  bool extractor_frozen_ = false;
};

/// Environment variable naming the pretrained checkpoint directory.
inline constexpr const char* kEncoderDirEnv = "IPT_ENCODER_DIR";

/// Builds an encoder. For the pretrained backend the directory comes from
/// `checkpoint_dir`, else from IPT_ENCODER_DIR; missing files raise
/// BackendError with remediation steps.
std::unique_ptr<Encoder> make_encoder(Backend backend,
                                      const std::optional<std::filesystem::path>& checkpoint_dir,
                                      std::uint64_t seed);

}  // namespace iptdet
