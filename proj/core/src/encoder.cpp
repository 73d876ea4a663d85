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

#include "iptdet/encoder.hpp"

#include "iptdet/dataset.hpp"
#include "iptdet/error.hpp"
#include "iptdet/nn/ops.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>

namespace iptdet {

using nn::Index;
using nn::Matrix;
using nn::Var;

void LayerStack::validate(int expected_layers) const {
  if (num_layers() != expected_layers) {
    throw ContractError("layer stack has " + std::to_string(num_layers()) + " layers, expected " +
                        std::to_string(expected_layers));
  }
  for (const auto& l : layers) {
    if (l.rows() != n_time() || l.cols() != dim()) {
      throw ContractError("layer stack layers disagree on shape");
    }
    if (!l.value().allFinite()) {
      throw ContractError("layer stack holds non-finite features");
    }
  }
}

LayerWeights LayerWeights::uniform(int n_layers) {
  return LayerWeights{Var(Matrix::Zero(1, n_layers), true)};
}

Eigen::VectorXd LayerWeights::normalized() const {
  Eigen::VectorXd w = raw.value().row(0).transpose().cast<double>();
  w = (w.array() - w.maxCoeff()).exp();
  return w / w.sum();
}

FeatureSeq weighted_sum(const LayerStack& stack, const LayerWeights& weights) {
  if (stack.num_layers() != weights.size()) {
    throw ContractError("weighted_sum: " + std::to_string(stack.num_layers()) + " layers but " +
                        std::to_string(weights.size()) + " weights");
  }
  return FeatureSeq{nn::softmax_weighted_sum(stack.layers, weights.raw), stack.frame_rate};
}

Backend parse_backend(std::string_view name) {
  if (name == "pretrained") {
    return Backend::pretrained;
  }
  if (name == "stub") {
    return Backend::stub;
  }
  throw ConfigError("unknown encoder backend '" + std::string(name) +
                    "' (expected pretrained or stub)");
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::pretrained ? "pretrained" : "stub";
}

namespace {

void require_window(std::span<const float> waveform) {
  if (waveform.size() != static_cast<std::size_t>(kWindowSamples)) {
    throw ContractError("encode: expected " + std::to_string(kWindowSamples) +
                        " samples (5 s at 24 kHz), got " + std::to_string(waveform.size()));
  }
}

Matrix gaussian(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<float>(dist(rng));
  }
  return m;
}

constexpr int kRawWidth = 2 * StubEncoder::kBands + 2;
constexpr double kLogFloor = 1e-6;

}  // namespace

// ---------------------------------------------------------------------------
// Stub backend

StubEncoder::StubEncoder(std::uint64_t seed, int feature_dim, int num_layers)
    : seed_(seed),
      feature_dim_(feature_dim),
      num_layers_(num_layers),
      n_time_(BackboneConfig{}.output_frames(kWindowSamples)) {
  if (feature_dim < 1 || num_layers < 1) {
    throw ContractError("stub encoder needs positive width and layer count");
  }
  // Hann-windowed complex exponentials at log-spaced band centers, scaled
  // so a unit sinusoid at a center frequency reports amplitude ~1.
  basis_.resize(kFrameLength, 2 * kBands);
  double window_sum = 0.0;
  for (int n = 0; n < kFrameLength; ++n) {
    window_sum += 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFrameLength);
  }
  const double f_lo = 60.0;
  const double f_hi = 8000.0;
  for (int b = 0; b < kBands; ++b) {
    const double f = f_lo * std::pow(f_hi / f_lo, static_cast<double>(b) / (kBands - 1));
    for (int n = 0; n < kFrameLength; ++n) {
      const double w = (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFrameLength)) *
                       2.0 / window_sum;
      const double phase = 2.0 * std::numbers::pi * f * n / kSampleRate;
      basis_(n, b) = static_cast<float>(w * std::cos(phase));
      basis_(n, kBands + b) = static_cast<float>(w * std::sin(phase));
    }
  }
  std::mt19937_64 rng(seed);
  projection_ = gaussian(kRawWidth, feature_dim, 1.0 / std::sqrt(static_cast<double>(kRawWidth)),
                         rng);
  layer_scale_ = gaussian(num_layers, feature_dim, 0.1, rng);
  layer_scale_.array() += 1.0f;
  layer_offset_ = gaussian(num_layers, feature_dim, 0.05, rng);
}

LayerStack StubEncoder::encode(std::span<const float> waveform) const {
  require_window(waveform);
  const int hop = kSampleRate / static_cast<int>(kEncoderFrameRate);
  Matrix frames = Matrix::Zero(n_time_, kFrameLength);
  for (int t = 0; t < n_time_; ++t) {
    // Centered on the receptive field of the backbone's t-th frame.
    const int start = t * hop + 200 - kFrameLength / 2;
    for (int n = 0; n < kFrameLength; ++n) {
      const int s = start + n;
      if (s >= 0 && s < kWindowSamples) {
        frames(t, n) = waveform[static_cast<std::size_t>(s)];
      }
    }
  }
  Matrix spec = frames * basis_;
  Matrix raw(n_time_, kRawWidth);
  const double floor_log = std::log10(kLogFloor);
  for (int t = 0; t < n_time_; ++t) {
    double energy = 0.0;
    for (int b = 0; b < kBands; ++b) {
      const double re = spec(t, b);
      const double im = spec(t, kBands + b);
      const double p = re * re + im * im;
      energy += p;
      // log10 power above the floor, scaled so unit power maps to 1 and
      // silence to 0
      raw(t, b) = static_cast<float>((std::log10(p + kLogFloor) - floor_log) / -floor_log);
    }
    raw(t, 2 * kBands) =
        static_cast<float>((std::log10(energy + kLogFloor) - floor_log) / -floor_log);
  }
  const float silence = 0.0f;
  for (int t = 0; t < n_time_; ++t) {
    for (int b = 0; b < kBands; ++b) {
      const float prev = t > 0 ? raw(t - 1, b) : silence;
      raw(t, kBands + b) = std::max(0.0f, raw(t, b) - prev) * 4.0f;
    }
    const float prev_e = t > 0 ? raw(t - 1, 2 * kBands) : silence;
    raw(t, 2 * kBands + 1) = std::max(0.0f, raw(t, 2 * kBands) - prev_e) * 4.0f;
  }
  // Mean and variance normalization of each dimension over the window.
  Matrix base = raw * projection_;
  for (Index d = 0; d < base.cols(); ++d) {
    auto col = base.col(d);
    const float mean = col.mean();
    col.array() -= mean;
    const float var = col.squaredNorm() / static_cast<float>(n_time_);
    col /= std::sqrt(var + 1e-4f);
  }
  LayerStack stack;
  stack.frame_rate = kEncoderFrameRate;
  stack.layers.reserve(static_cast<std::size_t>(num_layers_));
  for (int k = 0; k < num_layers_; ++k) {
    Matrix layer = (base.array().rowwise() * layer_scale_.row(k).array()).matrix();
    layer.rowwise() += layer_offset_.row(k);
    stack.layers.emplace_back(std::move(layer), false);
  }
  return stack;
}

void StubEncoder::set_extractor_frozen(bool) {
  spdlog::info("stub encoder has no trainable feature extractor; freeze request ignored");
}

std::uint64_t StubEncoder::extractor_checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const Matrix& m) {
    auto* p = reinterpret_cast<const unsigned char*>(m.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(float); ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(basis_);
  mix(projection_);
  return h;
}

void StubEncoder::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j{{"backend", "stub"},
                   {"seed", seed_},
                   {"feature_dim", feature_dim_},
                   {"num_layers", num_layers_}};
  std::ofstream(dir / "config.json") << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Pretrained backend

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.conv_dim = j.value("conv_dim", c.conv_dim);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.conv_stride = j.value("conv_stride", c.conv_stride);
  c.conv_bias = j.value("conv_bias", c.conv_bias);
  c.group_norm_first_layer = j.value("feat_extract_norm", std::string("group")) == "group";
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.num_hidden_layers = j.value("num_hidden_layers", c.num_hidden_layers);
  c.num_attention_heads = j.value("num_attention_heads", c.num_attention_heads);
  c.intermediate_size = j.value("intermediate_size", c.intermediate_size);
  c.num_conv_pos_embeddings = j.value("num_conv_pos_embeddings", c.num_conv_pos_embeddings);
  c.num_conv_pos_embedding_groups =
      j.value("num_conv_pos_embedding_groups", c.num_conv_pos_embedding_groups);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  c.feat_proj_layer_norm = j.value("feat_proj_layer_norm", c.feat_proj_layer_norm);
  if (c.conv_dim.empty() || c.conv_dim.size() != c.conv_kernel.size() ||
      c.conv_dim.size() != c.conv_stride.size()) {
    throw BackendError("backbone config: conv_dim/conv_kernel/conv_stride lengths differ");
  }
  if (c.hidden_size % c.num_attention_heads != 0 ||
      c.hidden_size % c.num_conv_pos_embedding_groups != 0) {
    throw BackendError("backbone config: hidden_size must divide into heads and pos-conv groups");
  }
  return c;
}

nlohmann::json BackboneConfig::to_json() const {
  return {{"conv_dim", conv_dim},
          {"conv_kernel", conv_kernel},
          {"conv_stride", conv_stride},
          {"conv_bias", conv_bias},
          {"feat_extract_norm", group_norm_first_layer ? "group" : "none"},
          {"hidden_size", hidden_size},
          {"num_hidden_layers", num_hidden_layers},
          {"num_attention_heads", num_attention_heads},
          {"intermediate_size", intermediate_size},
          {"num_conv_pos_embeddings", num_conv_pos_embeddings},
          {"num_conv_pos_embedding_groups", num_conv_pos_embedding_groups},
          {"layer_norm_eps", layer_norm_eps},
          {"feat_proj_layer_norm", feat_proj_layer_norm}};
}

int BackboneConfig::output_frames(int samples) const {
  Index n = samples;
  for (std::size_t i = 0; i < conv_kernel.size(); ++i) {
    n = nn::conv1d_output_length(n, conv_kernel[i], conv_stride[i], 0);
  }
  return static_cast<int>(n);
}

PretrainedEncoder::PretrainedEncoder(BackboneConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  std::mt19937_64 rng(seed);
  const auto eps = static_cast<float>(config_.layer_norm_eps);
  int in_ch = 1;
  for (std::size_t i = 0; i < config_.conv_dim.size(); ++i) {
    const std::string name = "feature_extractor.conv_layers." + std::to_string(i);
    const int out_ch = config_.conv_dim[i];
    const int k = config_.conv_kernel[i];
    ConvLayer layer;
    layer.weight =
        params_.add(name + ".conv.weight", nn::fan_in_uniform(out_ch, in_ch * k, in_ch * k, rng));
    if (config_.conv_bias) {
      layer.bias = params_.add(name + ".conv.bias", Matrix::Zero(1, out_ch));
    }
    if (i == 0 && config_.group_norm_first_layer) {
      layer.norm_weight = params_.add(name + ".layer_norm.weight", Matrix::Ones(1, out_ch));
      layer.norm_bias = params_.add(name + ".layer_norm.bias", Matrix::Zero(1, out_ch));
    }
    conv_.push_back(layer);
    in_ch = out_ch;
  }
  const int hidden = config_.hidden_size;
  if (config_.feat_proj_layer_norm) {
    proj_norm_ = nn::LayerNorm(params_, "feature_projection.layer_norm", in_ch, eps);
  }
  projection_ = nn::Linear(params_, "feature_projection.projection", in_ch, hidden, rng);
  const int groups = config_.num_conv_pos_embedding_groups;
  const int kpos = config_.num_conv_pos_embeddings;
  pos_weight_ = params_.add("encoder.pos_conv_embed.conv.weight",
                            nn::fan_in_uniform(hidden, hidden / groups * kpos,
                                               hidden / groups * kpos, rng));
  pos_bias_ = params_.add("encoder.pos_conv_embed.conv.bias", Matrix::Zero(1, hidden));
  encoder_norm_ = nn::LayerNorm(params_, "encoder.layer_norm", hidden, eps);
  for (int l = 0; l < config_.num_hidden_layers; ++l) {
    const std::string name = "encoder.layers." + std::to_string(l);
    TransformerLayer layer;
    layer.attention = nn::MultiHeadSelfAttention(params_, name + ".attention", hidden,
                                                 config_.num_attention_heads, rng);
    layer.attn_norm = nn::LayerNorm(params_, name + ".layer_norm", hidden, eps);
    layer.ff_in = nn::Linear(params_, name + ".feed_forward.intermediate_dense", hidden,
                             config_.intermediate_size, rng);
    layer.ff_out = nn::Linear(params_, name + ".feed_forward.output_dense",
                              config_.intermediate_size, hidden, rng);
    layer.final_norm = nn::LayerNorm(params_, name + ".final_layer_norm", hidden, eps);
    layers_.push_back(std::move(layer));
  }
  n_time_ = config_.output_frames(kWindowSamples);
  if (n_time_ < 1) {
    throw BackendError("backbone config produces no frames for a 5 s window");
  }
  set_extractor_frozen(true);
}

std::unique_ptr<PretrainedEncoder> PretrainedEncoder::load(const std::filesystem::path& dir) {
  const auto cfg_path = dir / "config.json";
  const auto bin_path = dir / "encoder.bin";
  if (!std::filesystem::exists(cfg_path) || !std::filesystem::exists(bin_path)) {
    throw BackendError("pretrained encoder checkpoint not found in '" + dir.string() +
                       "' (need config.json and encoder.bin). Convert a Hugging Face "
                       "checkpoint with tools/convert_hf_checkpoint.py and point "
                       "encoder.checkpoint_dir or IPT_ENCODER_DIR at the output directory, "
                       "or select the stub backend.");
  }
  nlohmann::json j;
  try {
    std::ifstream in(cfg_path);
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("unreadable encoder config " + cfg_path.string() + ": " + e.what());
  }
  auto enc = std::make_unique<PretrainedEncoder>(BackboneConfig::from_json(j), 0);
  try {
    enc->params_.assign(nn::read_tensor_file(bin_path));
  } catch (const Error& e) {
    throw BackendError(std::string("encoder weights: ") + e.what());
  }
  return enc;
}

void PretrainedEncoder::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j = config_.to_json();
  j["backend"] = "pretrained";
  std::ofstream(dir / "config.json") << j.dump(2) << '\n';
  nn::write_tensor_file(dir / "encoder.bin", params_.values());
}

void PretrainedEncoder::set_extractor_frozen(bool frozen) {
  params_.set_trainable(kExtractorPrefix, !frozen);
  extractor_frozen_ = frozen;
}

void PretrainedEncoder::set_trainable(bool trainable) {
  params_.set_trainable("", trainable);
  if (trainable && extractor_frozen_) {
    params_.set_trainable(kExtractorPrefix, false);
  }
}

std::uint64_t PretrainedEncoder::extractor_checksum() const {
  return params_.checksum(kExtractorPrefix);
}

Var PretrainedEncoder::extract(std::span<const float> waveform) const {
  // The extractor holds the largest activations; skip graph recording when
  // none of its parameters train.
  std::optional<nn::NoGradGuard> guard;
  if (extractor_frozen_) {
    guard.emplace();
  }
  Matrix input(static_cast<Index>(waveform.size()), 1);
  std::copy(waveform.begin(), waveform.end(), input.data());
  Var x(std::move(input), false);
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    x = nn::conv1d(x, conv_[i].weight, conv_[i].bias, config_.conv_kernel[i],
                   config_.conv_stride[i], 0, 1);
    if (conv_[i].norm_weight.defined()) {
      x = nn::instance_norm_time(x, conv_[i].norm_weight, conv_[i].norm_bias);
    }
    x = nn::gelu(x);
  }
  return x;
}

LayerStack PretrainedEncoder::encode(std::span<const float> waveform) const {
  require_window(waveform);
  Var x = extract(waveform);
  if (config_.feat_proj_layer_norm) {
    x = proj_norm_(x);
  }
  x = projection_(x);
  const int kpos = config_.num_conv_pos_embeddings;
  Var pos = nn::conv1d(x, pos_weight_, pos_bias_, kpos, 1, kpos / 2,
                       config_.num_conv_pos_embedding_groups);
  if (kpos % 2 == 0) {
    pos = nn::slice_rows(pos, 0, pos.rows() - 1);
  }
  x = encoder_norm_(nn::add(x, nn::gelu(pos)));
  LayerStack stack;
  stack.frame_rate = kEncoderFrameRate;
  stack.layers.push_back(x);
  for (const auto& layer : layers_) {
    Var h = layer.attn_norm(nn::add(x, layer.attention(x)));
    Var ff = layer.ff_out(nn::gelu(layer.ff_in(h)));
    x = layer.final_norm(nn::add(h, ff));
    stack.layers.push_back(x);
  }
  return stack;
}

std::unique_ptr<Encoder> make_encoder(Backend backend,
                                      const std::optional<std::filesystem::path>& checkpoint_dir,
                                      std::uint64_t seed) {
  if (backend == Backend::stub) {
    return std::make_unique<StubEncoder>(seed);
  }
  std::optional<std::filesystem::path> dir = checkpoint_dir;
  if (!dir || dir->empty()) {
    if (const char* env = std::getenv(kEncoderDirEnv); env != nullptr && *env != '\0') {
      dir = env;
    }
  }
  if (!dir) {
    throw BackendError(
        "pretrained encoder requested but no checkpoint directory configured: set "
        "encoder.checkpoint_dir or the IPT_ENCODER_DIR environment variable");
  }
  return PretrainedEncoder::load(*dir);
}

}  // namespace iptdet
