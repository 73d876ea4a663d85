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


#include "iptdet/error.hpp"
#include "iptdet/postprocess.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace iptdet {
namespace {

using nn::Matrix;

constexpr double kFr = 75.0;

Matrix column(std::initializer_list<float> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (float x : v) {
    m(i++, 0) = x;
  }
  return m;
}

BinaryVector mask(std::initializer_list<int> v) {
  BinaryVector m(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) {
    m(i++) = static_cast<std::uint8_t>(x);
  }
  return m;
}

TEST(BinarizeOnsets, InclusiveThreshold) {
  const auto b = binarize_onsets(column({0.4f, 0.5f, 0.6f}));
  EXPECT_TRUE((b == mask({0, 1, 1})).all());
  EXPECT_EQ(binarize_onsets(Matrix::Zero(5, 1)).cast<int>().sum(), 0);
  EXPECT_EQ(binarize_onsets(Matrix::Ones(5, 1)).cast<int>().sum(), 5);
}

TEST(DecodeFrames, InclusiveThreshold) {
  Matrix y(1, 3);
  y << 0.5f, 0.49999f, 1.0f;
  const auto g = decode_frames(y);
  EXPECT_EQ(g(0, 0), 1);
  EXPECT_EQ(g(0, 1), 0);
  EXPECT_EQ(g(0, 2), 1);
  EXPECT_EQ(decode_frames(Matrix::Zero(4, 2)).cast<int>().sum(), 0);
  EXPECT_EQ(decode_frames(Matrix::Ones(4, 2)).cast<int>().sum(), 8);
}

TEST(DecodeEvents, GateDiscardsUnconfirmedRun) {
  const auto ev = decode_events(column({0.9f, 0.9f, 0.2f, 0.9f}), mask({1, 0, 0, 0}),
                                DecodeConfig{}, kFr);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].label, 0);
  EXPECT_DOUBLE_EQ(ev[0].onset, 0.0);
  EXPECT_NEAR(ev[0].offset, 2.0 / kFr, 1e-12);
}

TEST(DecodeEvents, ClosedGateNoEvents) {
  EXPECT_TRUE(decode_events(Matrix::Ones(10, 3), BinaryVector::Zero(10), DecodeConfig{}, kFr)
                  .empty());
}

TEST(DecodeEvents, ReOnsetSplitsRun) {
  const auto ev = decode_events(column({0.9f, 0.9f, 0.9f, 0.9f}), mask({1, 0, 1, 0}),
                                DecodeConfig{}, kFr);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_NEAR(ev[0].onset, 0.0, 1e-12);
  EXPECT_NEAR(ev[0].offset, 2.0 / kFr, 1e-12);
  EXPECT_NEAR(ev[1].onset, 2.0 / kFr, 1e-12);
  EXPECT_NEAR(ev[1].offset, 4.0 / kFr, 1e-12);
}

TEST(DecodeEvents, MinEventFrames) {
  DecodeConfig cfg;
  cfg.min_event_frames = 3;
  const Matrix y = column({0.9f, 0.9f, 0.1f, 0.9f, 0.9f, 0.9f});
  const auto ev = decode_events_ungated(y, cfg, kFr);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_NEAR(ev[0].onset, 3.0 / kFr, 1e-12);
}

TEST(DecodeEvents, UngatedEmitsEveryRun) {
  Matrix y(5, 2);
  y << 0.9f, 0.0f, 0.9f, 0.7f, 0.0f, 0.7f, 0.8f, 0.0f, 0.8f, 0.9f;
  const auto ev = decode_events_ungated(y, DecodeConfig{}, kFr);
  ASSERT_EQ(ev.size(), 4u);
  for (std::size_t i = 1; i < ev.size(); ++i) {
    EXPECT_LE(ev[i - 1].onset, ev[i].onset);
  }
}

TEST(DecodeEvents, InvalidThresholdRejected) {
  DecodeConfig cfg;
  cfg.frame_threshold = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = DecodeConfig{};
  cfg.min_event_frames = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(DecodeEvents, PropertiesOnRandomInputs) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + trial % 40;
    const int k = 1 + trial % 3;
    Matrix y(n, k);
    BinaryVector gate(n);
    for (int t = 0; t < n; ++t) {
      gate(t) = u(rng) < 0.3f;
      for (int c = 0; c < k; ++c) {
        y(t, c) = u(rng);
      }
    }
    const auto ev = decode_events(y, gate, DecodeConfig{}, kFr);
    std::vector<double> last_offset(static_cast<std::size_t>(k), -1.0);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      EXPECT_GT(ev[i].offset, ev[i].onset);
      EXPECT_GE(ev[i].onset, last_offset[static_cast<std::size_t>(ev[i].label)] - 1e-12);
      last_offset[static_cast<std::size_t>(ev[i].label)] = ev[i].offset;
      if (i > 0) {
        EXPECT_LE(ev[i - 1].onset, ev[i].onset);
      }
    }
    // Opening the gate further never loses events.
    BinaryVector wider = gate;
    wider(trial % n) = 1;
    EXPECT_GE(decode_events(y, wider, DecodeConfig{}, kFr).size(), ev.size());
  }
}

TEST(DecodeEvents, MatchesStateMachineOracle) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 30;
    const int k = 1 + trial % 3;
    Matrix y(n, k);
    std::vector<int> gate(static_cast<std::size_t>(n));
    BinaryVector g(n);
    for (int t = 0; t < n; ++t) {
      gate[t] = u(rng) < 0.35f;
      g(t) = static_cast<std::uint8_t>(gate[t]);
      for (int c = 0; c < k; ++c) {
        y(t, c) = u(rng) < 0.6f ? 0.9f : 0.1f;
      }
    }
    DecodeConfig cfg;
    cfg.min_event_frames = 1 + trial % 2;
    auto frames = decode_frame_events(y, g, cfg);
    std::vector<testing::OracleEvent> got;
    for (const auto& f : frames) {
      got.push_back({f.label, f.start, f.end});
    }
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, testing::decode_oracle(y.cast<double>(), gate, true, 0.5, cfg.min_event_frames));
  }
}

TEST(FrameTimeMap, WindowedTimes) {
  const FrameTimeMap map{375, 5.0, 75.0};
  EXPECT_DOUBLE_EQ(map.start_time(0), 0.0);
  EXPECT_DOUBLE_EQ(map.start_time(375), 5.0);
  EXPECT_NEAR(map.start_time(376), 5.0 + 1.0 / 75.0, 1e-12);
  EXPECT_NEAR(map.end_time(375), 5.0, 1e-12);

  // A backbone with 374 frames per window keeps window starts on 5 s.
  const FrameTimeMap short_map{374, 5.0, 75.0};
  EXPECT_DOUBLE_EQ(short_map.start_time(374), 5.0);
}

TEST(TimedEvents, PitchFromArgmaxOverSpan) {
  const std::vector<FrameEvent> fe{{0, 1, 4}};
  Matrix yp = Matrix::Zero(6, 3);
  yp(1, 2) = 0.9f;
  yp(2, 1) = 0.6f;
  yp(3, 1) = 0.6f;
  const auto ev = to_timed_events(fe, FrameTimeMap{0, 5.0, 75.0}, yp, 60);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].pitch, 61);
  const auto no_pitch = to_timed_events(fe, FrameTimeMap{0, 5.0, 75.0});
  EXPECT_FALSE(no_pitch[0].pitch.has_value());
}

}  // namespace
}  // namespace iptdet
