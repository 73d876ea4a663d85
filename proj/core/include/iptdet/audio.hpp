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

#include <filesystem>
#include <span>
#include <vector>

namespace iptdet {

/// Decodes WAV or FLAC, downmixes to mono and resamples to `target_rate`.
/// Throws IoError on unreadable files or conversion failure.
std::vector<float> load_audio(const std::filesystem::path& path, int target_rate = kSampleRate);

/// Writes 32-bit float mono WAV.
// Duration in seconds read from the file header, without decoding.
double audio_duration(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate);

}  // namespace iptdet
