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

#include "iptdet/audio.hpp"

#include "iptdet/error.hpp"

#define MA_NO_DEVICE_IO
#define MA_NO_ENGINE
#define MA_NO_NODE_GRAPH
#define MA_NO_RESOURCE_MANAGER
#define MA_NO_GENERATION
#include <miniaudio.h>

#include <array>
#include <string>

namespace iptdet {

std::vector<float> load_audio(const std::filesystem::path& path, int target_rate) {
  if (!std::filesystem::exists(path)) {
    throw IoError("audio file not found: " + path.string());
  }
  ma_decoder_config cfg =
      ma_decoder_config_init(ma_format_f32, 1, static_cast<ma_uint32>(target_rate));
  cfg.resampling.algorithm = ma_resample_algorithm_linear;
  cfg.resampling.linear.lpfOrder = MA_MAX_FILTER_ORDER;
  ma_decoder decoder;
  if (ma_decoder_init_file(path.string().c_str(), &cfg, &decoder) != MA_SUCCESS) {
    throw IoError("cannot decode audio file " + path.string() + " (expected WAV or FLAC)");
  }
  std::vector<float> out;
  std::array<float, 8192> chunk{};
  while (true) {
    ma_uint64 got = 0;
    const ma_result r = ma_decoder_read_pcm_frames(&decoder, chunk.data(), chunk.size(), &got);
    out.insert(out.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(got));
    if (r == MA_AT_END || got == 0) {
      break;
    }
    if (r != MA_SUCCESS) {
      ma_decoder_uninit(&decoder);
      throw IoError("decoding/resampling failed for " + path.string() + " (miniaudio error " +
                    std::to_string(static_cast<int>(r)) + ")");
    }
  }
  ma_decoder_uninit(&decoder);
  return out;
}

double audio_duration(const std::filesystem::path& path) {
  ma_decoder decoder;
  if (ma_decoder_init_file(path.string().c_str(), nullptr, &decoder) != MA_SUCCESS) {
    throw IoError("cannot open audio file " + path.string());
  }
  ma_uint64 frames = 0;
  const ma_result r = ma_decoder_get_length_in_pcm_frames(&decoder, &frames);
  const double rate = decoder.outputSampleRate;
  ma_decoder_uninit(&decoder);
  if (r != MA_SUCCESS || rate <= 0.0) {
    throw IoError("cannot determine length of " + path.string());
  }
  return static_cast<double>(frames) / rate;
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate) {
  ma_encoder_config cfg = ma_encoder_config_init(ma_encoding_format_wav, ma_format_f32, 1,
                                                 static_cast<ma_uint32>(sample_rate));
  ma_encoder encoder;
  if (ma_encoder_init_file(path.string().c_str(), &cfg, &encoder) != MA_SUCCESS) {
    throw IoError("cannot write " + path.string());
  }
  ma_uint64 written = 0;
  const ma_result r =
      ma_encoder_write_pcm_frames(&encoder, samples.data(), samples.size(), &written);
  ma_encoder_uninit(&encoder);
  if (r != MA_SUCCESS || written != samples.size()) {
    throw IoError("short write to " + path.string());
  }
}

}  // namespace iptdet
