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


// Reference implementations used only by tests. Each one is written from the
// definitions, favouring obviousness over speed, and shares no code with core.

#pragma once

#include "iptdet/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace iptdet::testing {

using DGrid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Triple-loop sums of a (t, i, p) tensor stored as t x (i * n_pitch + p).
void marginal_oracle(const DGrid& d, int n_ipt, int n_pitch, DGrid& p_ipt, DGrid& p_pitch);

/// Frame t is active for an event iff (t + 0.5) / fr lies in [onset, offset).
BinaryGrid rasterize_ipt_oracle(const std::vector<IPTEvent>& events, int n_frames, int n_ipt,
                                double frame_rate);

/// Decoded run in frame units.
struct OracleEvent {
  int label;
  int start;
  int end;
  friend bool operator==(const OracleEvent&, const OracleEvent&) = default;
  friend auto operator<=>(const OracleEvent&, const OracleEvent&) = default;
};

/// Per-class state machine over thresholded activations. With `gated`, a run
/// opens only on a frame whose gate is set, and a gated frame inside a run
/// closes it and opens the next. Without `gated`, every run is one event.
std::vector<OracleEvent> decode_oracle(const DGrid& y, const std::vector<int>& gate, bool gated,
                                       double threshold, int min_frames);

/// Largest number of disjoint (pred, ref) pairs with equal labels and onset
/// distance, rounded to 4 decimals, within `tolerance`. Exhaustive search.
int matching_oracle(const std::vector<IPTEvent>& pred, const std::vector<IPTEvent>& ref,
                    double tolerance);

/// Mean of -[w y ln p + (1 - y) ln(1 - p)] over rows with mask = 1, with p
/// clipped to [eps, 1 - eps].
double bce_oracle(const DGrid& pred, const DGrid& target, const std::vector<int>& mask,
                  const std::vector<double>& weights, double eps = 1e-7);

/// F1 = 2 tp / (2 tp + fp + fn); 0 when the denominator is 0.
double f1_oracle(long tp, long fp, long fn);

}  // namespace iptdet::testing
