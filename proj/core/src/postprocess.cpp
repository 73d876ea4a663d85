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

#include "iptdet/postprocess.hpp"

#include "iptdet/error.hpp"

#include <algorithm>
#include <tuple>

namespace iptdet {

void DecodeConfig::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(onset_threshold) || !in_unit(frame_threshold)) {
    throw ConfigError("decode thresholds must lie in (0, 1)");
  }
  if (min_event_frames < 1) {
    throw ConfigError("decode.min_event_frames must be >= 1");
  }
}

double FrameTimeMap::start_time(int frame) const {
  if (frames_per_window <= 0) {
    return frame / frame_rate;
  }
  const int w = frame / frames_per_window;
  const int t = frame % frames_per_window;
  return w * window_seconds + t / frame_rate;
}

double FrameTimeMap::end_time(int end) const {
  if (frames_per_window <= 0) {
    return end / frame_rate;
  }
  return start_time(end - 1) + 1.0 / frame_rate;
}

BinaryVector binarize_onsets(const nn::Matrix& onset, double threshold) {
  if (onset.cols() != 1) {
    throw ContractError("onset posterior must have one column");
  }
  BinaryVector out(onset.rows());
  for (Eigen::Index t = 0; t < onset.rows(); ++t) {
    out(t) = onset(t, 0) >= threshold ? 1 : 0;
  }
  return out;
}

BinaryGrid decode_frames(const nn::Matrix& y, double threshold) {
  BinaryGrid out(y.rows(), y.cols());
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      out(t, c) = y(t, c) >= threshold ? 1 : 0;
    }
  }
  return out;
}

std::vector<FrameEvent> decode_frame_events(const nn::Matrix& y_ipt,
                                            const std::optional<BinaryVector>& onset_mask,
                                            const DecodeConfig& cfg) {
  const int n = static_cast<int>(y_ipt.rows());
  if (onset_mask && onset_mask->size() != n) {
    throw ContractError("onset mask length differs from frame count");
  }
  std::vector<FrameEvent> events;
  auto emit = [&](int c, int start, int end) {
    if (end - start >= cfg.min_event_frames) {
      events.push_back({c, start, end});
    }
  };
  for (int c = 0; c < y_ipt.cols(); ++c) {
    int start = -1;
    bool prev_active = false;
    for (int t = 0; t < n; ++t) {
      const bool active = y_ipt(t, c) >= cfg.frame_threshold;
      const bool gate = onset_mask ? (*onset_mask)(t) != 0 : !prev_active;
      if (!active) {
        if (start >= 0) {
          emit(c, start, t);
          start = -1;
        }
      } else if (gate) {
        if (start >= 0) {
          emit(c, start, t);
        }
        start = t;
      }
      prev_active = active;
    }
    if (start >= 0) {
      emit(c, start, n);
    }
  }
  std::sort(events.begin(), events.end(), [](const FrameEvent& a, const FrameEvent& b) {
    return std::tie(a.start, a.label) < std::tie(b.start, b.label);
  });
  return events;
}

std::vector<IPTEvent> to_timed_events(std::span<const FrameEvent> events, const FrameTimeMap& map,
                                      const nn::Matrix& y_pitch, int midi_min) {
  std::vector<IPTEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    IPTEvent ev{e.label, map.start_time(e.start), map.end_time(e.end), std::nullopt};
    if (y_pitch.cols() > 0) {
      if (e.end > y_pitch.rows()) {
        throw ContractError("pitch posterior shorter than decoded event");
      }
      Eigen::Index best = 0;
      y_pitch.middleRows(e.start, e.end - e.start).colwise().sum().maxCoeff(&best);
      ev.pitch = midi_min + static_cast<int>(best);
    }
    out.push_back(ev);
  }
  return out;
}

std::vector<IPTEvent> decode_events(const nn::Matrix& y_ipt, const BinaryVector& onset_mask,
                                    const DecodeConfig& cfg, double frame_rate) {
  const auto frames = decode_frame_events(y_ipt, onset_mask, cfg);
  return to_timed_events(frames, FrameTimeMap{0, kWindowSeconds, frame_rate});
}

std::vector<IPTEvent> decode_events_ungated(const nn::Matrix& y_ipt, const DecodeConfig& cfg,
                                            double frame_rate) {
  const auto frames = decode_frame_events(y_ipt, std::nullopt, cfg);
  return to_timed_events(frames, FrameTimeMap{0, kWindowSeconds, frame_rate});
}

}  // namespace iptdet
