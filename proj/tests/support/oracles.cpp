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


#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace iptdet::testing {

void marginal_oracle(const DGrid& d, int n_ipt, int n_pitch, DGrid& p_ipt, DGrid& p_pitch) {
  const auto n_time = d.rows();
  p_ipt = DGrid::Zero(n_time, n_ipt);
  p_pitch = DGrid::Zero(n_time, n_pitch);
  for (Eigen::Index t = 0; t < n_time; ++t) {
    for (int i = 0; i < n_ipt; ++i) {
      for (int p = 0; p < n_pitch; ++p) {
        const double v = d(t, i * n_pitch + p);
        p_ipt(t, i) += v;
        p_pitch(t, p) += v;
      }
    }
  }
}

BinaryGrid rasterize_ipt_oracle(const std::vector<IPTEvent>& events, int n_frames, int n_ipt,
                                double frame_rate) {
  BinaryGrid g = BinaryGrid::Zero(n_frames, n_ipt);
  for (int t = 0; t < n_frames; ++t) {
    const double centre = (t + 0.5) / frame_rate;
    for (const auto& e : events) {
      if (centre >= e.onset && centre < e.offset) {
        g(t, e.label) = 1;
      }
    }
  }
  return g;
}

std::vector<OracleEvent> decode_oracle(const DGrid& y, const std::vector<int>& gate, bool gated,
                                       double threshold, int min_frames) {
  std::vector<OracleEvent> out;
  const int n = static_cast<int>(y.rows());
  for (int c = 0; c < y.cols(); ++c) {
    enum class State { idle, open, blocked } state = State::idle;
    int start = 0;
    auto close = [&](int end) {
      if (end - start >= min_frames) {
        out.push_back({c, start, end});
      }
    };
    for (int t = 0; t < n; ++t) {
      const bool on = y(t, c) >= threshold;
      const bool fire = gated ? gate[static_cast<std::size_t>(t)] != 0 : true;
      switch (state) {
        case State::idle:
        case State::blocked:
          if (!on) {
            state = State::idle;
          } else if (fire && (state == State::idle || gated)) {
            state = State::open;
            start = t;
          } else {
            state = State::blocked;
          }
          break;
        case State::open:
          if (!on) {
            close(t);
            state = State::idle;
          } else if (gated && fire) {
            close(t);
            start = t;
          }
          break;
      }
    }
    if (state == State::open) {
      close(n);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int matching_oracle(const std::vector<IPTEvent>& pred, const std::vector<IPTEvent>& ref,
                    double tolerance) {
  auto compatible = [&](const IPTEvent& a, const IPTEvent& b) {
    const double d = std::round(std::abs(a.onset - b.onset) * 1e4) / 1e4;
    return a.label == b.label && d <= tolerance;
  };
  std::vector<bool> used(ref.size(), false);
  std::function<int(std::size_t)> best = [&](std::size_t i) -> int {
    if (i == pred.size()) {
      return 0;
    }
    int result = best(i + 1);  // leave pred i unmatched
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && compatible(pred[i], ref[j])) {
        used[j] = true;
        result = std::max(result, 1 + best(i + 1));
        used[j] = false;
      }
    }
    return result;
  };
  return best(0);
}

double bce_oracle(const DGrid& pred, const DGrid& target, const std::vector<int>& mask,
                  const std::vector<double>& weights, double eps) {
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    if (mask[static_cast<std::size_t>(t)] == 0) {
      continue;
    }
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double p = std::clamp(pred(t, c), eps, 1.0 - eps);
      const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(c)];
      const double y = target(t, c);
      sum += -(w * y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double f1_oracle(long tp, long fp, long fn) {
  const long den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

}  // namespace iptdet::testing
