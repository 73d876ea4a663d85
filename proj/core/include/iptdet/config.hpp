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
#include "iptdet/metrics.hpp"
#include "iptdet/objective.hpp"
#include "iptdet/postprocess.hpp"
#include "iptdet/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iptdet {

/// Everything a command needs, read from a sectioned TOML file.
struct RunConfig {
  std::uint64_t seed = 0;

  // [dataset]
  std::optional<Schema> schema;
  std::filesystem::path dataset_root;  // prepared dataset directory
  std::optional<std::filesystem::path> split_manifest;
  int fold = 0;
  std::string split = "test";

  // [encoder]
  Backend backend = Backend::stub;
  std::optional<std::filesystem::path> encoder_dir;

  // [model]
  Variant variant = Variant::mertech;
  HeadConfig head;

  TrainConfig train;  // [train]
  LossWeights loss;   // [loss]
  bool class_weighting = true;
  DecodeConfig decode;  // [decode]

  // [eval]
  double tolerance = 0.05;
  Aggregation aggregation = Aggregation::mean;

  // [output]
  std::filesystem::path output_dir = "runs";
  std::optional<std::filesystem::path> checkpoint;

  /// Parses TOML text. Unknown sections or keys and mistyped values raise
  /// ConfigError naming the key.
  static RunConfig parse(std::string_view text, std::string_view source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Checks ranges and that `required` dotted keys were provided and that
  /// referenced paths exist.
  void validate(std::span<const std::string_view> required = {}) const;

  /// Dotted keys present in the parsed file.
  std::vector<std::string> provided;
  bool has(std::string_view key) const;
};

}  // namespace iptdet
