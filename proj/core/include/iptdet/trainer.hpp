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

#include "iptdet/checkpoint.hpp"
#include "iptdet/dataset.hpp"
#include "iptdet/downstream.hpp"
#include "iptdet/encoder.hpp"
#include "iptdet/metrics.hpp"
#include "iptdet/objective.hpp"
#include "iptdet/postprocess.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace iptdet {

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  int batch_size = 10;
  double grad_clip_norm = 3.0;
  int epochs = 50;
  int patience = 10;   // epochs without validation improvement; 0 disables
  long max_steps = 0;  // 0: epochs * batches per epoch
  std::uint64_t seed = 0;
  bool freeze_extractor = true;
  /// Frozen-backbone features are cached up to this many MiB.
  std::size_t feature_cache_mib = 2048;
  std::string dataset;
  int fold = 0;

  void validate() const;
};

/// base * (1 + cos(pi * step / total)) / 2
double cosine_lr(double base, long step, long total);

struct ParamGroup {
  std::string name;
  nn::ParameterSet* params;
};

struct ClipResult {
  double norm = 0.0;          // before clipping
  double clipped_norm = 0.0;  // after
};

/// Global L2 clipping over every trainable parameter holding a gradient.
/// Non-finite gradients raise NumericError naming the group and parameter.
ClipResult clip_gradients(std::span<const ParamGroup> groups, double max_norm);

/// SGD with momentum: v = mu * v + g; p -= lr * v.
class Sgd {
 public:
  explicit Sgd(double momentum) : momentum_(momentum) {}
  void step(std::span<const ParamGroup> groups, double lr);

 private:
  double momentum_;
  std::map<const nn::Node*, nn::Matrix> velocity_;
};

struct StepLog {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_ipt = 0.0;
  double loss_pitch = 0.0;
  double loss_onset = 0.0;
  double grad_norm = 0.0;
  double clipped_norm = 0.0;

  std::string to_json() const;
};

struct TrainInputs {
  std::span<const Sample> train;
  std::span<const Sample> val;  // may be empty: the last state is kept
  LossWeights loss;
  std::vector<double> class_weights;  // empty: unweighted IPT loss
  DecodeConfig decode;
};

struct TrainOutcome {
  std::vector<StepLog> log;
  long steps = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_frame_macro_f1 = 0.0;
  bool early_stopped = false;
  std::optional<std::filesystem::path> checkpoint;
};

/// Finetunes `model` (and the backbone when the variant allows it). With an
/// output directory, writes `train_log.jsonl` and the best checkpoint under
/// `checkpoint/`. On return the model holds the best parameters.
TrainOutcome train(IptModel& model, Encoder& encoder, const TrainConfig& cfg,
                   const TrainInputs& inputs,
                   const std::optional<std::filesystem::path>& output_dir = std::nullopt,
                   CheckpointMeta meta = {});

/// Applies the variant's backbone trainability and extractor freezing.
void configure_backbone(const IptModel& model, Encoder& encoder, bool freeze_extractor);

/// A full recording with its reference annotations.
struct Recording {
  std::string id;
  std::vector<float> waveform;  // 24 kHz mono
  std::vector<IPTEvent> events;
};

struct RecordingPrediction {
  PosteriorSet posteriors;  // windows concatenated, padded frames zeroed
  FrameGrid targets;        // rasterized reference, same layout
  std::vector<IPTEvent> events;
  FrameTimeMap time_map;
};

/// Non-overlapping window inference over a recording, followed by
/// onset-gated (or, for variants without gating, ungated) decoding.
RecordingPrediction predict_recording(const IptModel& model, const Encoder& encoder,
                                      const Recording& recording, const DecodeConfig& decode);

/// Frame F1 over posteriors thresholded at `decode.frame_threshold`, event
/// F1 at `tolerance`; counts are pooled across recordings.
EvalReport evaluate_recordings(const IptModel& model, const Encoder& encoder,
                               std::span<const Recording> recordings, const DecodeConfig& decode,
                               double tolerance);

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               std::span<const Recording> recordings, const ClassMap& class_map,
                               const DecodeConfig& decode, double tolerance);

/// Frame macro F1 of window samples (validation metric).
double window_frame_macro_f1(const IptModel& model, const Encoder& encoder,
                             std::span<const Sample> samples, double threshold);

}  // namespace iptdet
