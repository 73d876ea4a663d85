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
#include "iptdet/nn/autograd.hpp"

#include <optional>
#include <vector>

namespace iptdet {

struct DecodeConfig {
  double onset_threshold = 0.5;
  double frame_threshold = 0.5;
  int min_event_frames = 1;

  void validate() const;
};

/// An event in frame indices: frames [start, end) of one class.
struct FrameEvent {
  int label = 0;
  int start = 0;
  int end = 0;
  friend bool operator==(const FrameEvent&, const FrameEvent&) = default;
};

/// Maps frame indices of concatenated windows to recording time. Frame t
/// of window w starts at w * window_seconds + t / frame_rate.
struct FrameTimeMap {
  int frames_per_window = 0;  // 0: one unbounded window
  double window_seconds = kWindowSeconds;
  double frame_rate = 75.0;

  double start_time(int frame) const;
  /// End of the last frame of an exclusive range ending at `end`.
  double end_time(int end) const;
};

/// mask[t] = onset[t] >= threshold. `onset` is n_time x 1.
BinaryVector binarize_onsets(const nn::Matrix& onset, double threshold = 0.5);

/// Elementwise y >= threshold.
BinaryGrid decode_frames(const nn::Matrix& y, double threshold = 0.5);

/// Per class: an event starts where the class is active and the onset mask
/// fires (a firing gate inside an active run splits it), continues while
/// active and ends at the first inactive frame. Runs that never meet an
/// open gate yield nothing. Without a mask, every active run is an event.
std::vector<FrameEvent> decode_frame_events(const nn::Matrix& y_ipt,
                                            const std::optional<BinaryVector>& onset_mask,
                                            const DecodeConfig& cfg);

/// Gated decoding in seconds (single window, times t / frame_rate).
std::vector<IPTEvent> decode_events(const nn::Matrix& y_ipt, const BinaryVector& onset_mask,
                                    const DecodeConfig& cfg, double frame_rate);
/// Onset-free decoding: every active run becomes an event.
std::vector<IPTEvent> decode_events_ungated(const nn::Matrix& y_ipt, const DecodeConfig& cfg,
                                            double frame_rate);

/// Converts frame events to timed events sorted by (onset, label). When
/// `y_pitch` has columns, each event takes midi_min + argmax of the pitch
/// posterior summed over its span.
std::vector<IPTEvent> to_timed_events(std::span<const FrameEvent> events, const FrameTimeMap& map,
                                      const nn::Matrix& y_pitch = nn::Matrix(),
                                      int midi_min = 0);

}  // namespace iptdet
