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
#include "iptdet/encoder.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace iptdet {

/// Sidecar contents of a model checkpoint (`model.json`).
struct CheckpointMeta {
  Variant variant = Variant::mertech;
  ClassMap class_map;
  HeadConfig head;
  int feature_dim = kDefaultFeatureDim;
  int num_layers = kDefaultLayers;
  int n_time = 0;  // frames per 5 s window probed from the encoder
  std::vector<double> layer_weights;             // raw logits
  std::vector<double> layer_weights_normalized;  // softmax
  std::vector<double> class_weights;
  std::uint64_t model_seed = 0;
  std::string schema;
  int epoch = 0;
  long step = 0;
  double val_frame_macro_f1 = 0.0;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::unique_ptr<IptModel> model;
  std::unique_ptr<Encoder> encoder;
};

/// Writes `model.json`, `head.bin` and the encoder under `encoder/`.
void save_checkpoint(const std::filesystem::path& dir, const IptModel& model,
                     const Encoder& encoder, CheckpointMeta meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

/// Rebuilds model and encoder. When `expected` is given its class map must
/// equal the stored one (CompatibilityError otherwise).
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const ClassMap* expected = nullptr);

/// Loads an encoder saved by Encoder::save.
std::unique_ptr<Encoder> load_encoder(const std::filesystem::path& dir);

}  // namespace iptdet
