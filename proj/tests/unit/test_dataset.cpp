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


#include "iptdet/dataset.hpp"
#include "iptdet/error.hpp"
#include "iptdet/postprocess.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

namespace iptdet {
namespace {

ClassMap guzheng() { return ClassMap::for_schema(Schema::guzheng_tech99); }

ClassMap small_map(int n_ipt) {
  ClassMap cm;
  for (int i = 0; i < n_ipt; ++i) {
    cm.ipt_names.push_back("c" + std::to_string(i));
  }
  cm.midi_min = 60;
  cm.midi_max = 63;
  return cm;
}

std::vector<IPTEvent> parse(const std::string& text, Schema schema = Schema::guzheng_tech99) {
  std::istringstream in(text);
  return parse_annotations(in, schema, ClassMap::for_schema(schema));
}

TEST(Annotations, MapsFieldsOfNormalizedRow) {
  const auto ev = parse("onset_sec,offset_sec,technique,midi_pitch\n1.250,1.900,vibrato,64\n");
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0], (IPTEvent{0, 1.25, 1.90, 64}));
}

TEST(Annotations, EmptyFileGivesNoEvents) {
  EXPECT_TRUE(parse("").empty());
  EXPECT_TRUE(parse("onset_sec,offset_sec,technique,midi_pitch\n").empty());
}

TEST(Annotations, AllSevenGuzhengLabelsInRange) {
  std::string text = "onset_sec,offset_sec,technique,midi_pitch\n";
  const auto cm = guzheng();
  for (int i = 0; i < cm.n_ipt(); ++i) {
    text += std::to_string(i) + ".000," + std::to_string(i) + ".500," + cm.ipt_names[i] + ",60\n";
  }
  const auto ev = parse(text);
  ASSERT_EQ(ev.size(), 7u);
  std::set<int> labels;
  for (const auto& e : ev) {
    EXPECT_GE(e.label, 0);
    EXPECT_LT(e.label, 7);
    labels.insert(e.label);
  }
  EXPECT_EQ(labels.size(), 7u);
}

TEST(Annotations, SortedByOnset) {
  const auto ev = parse("onset_sec,offset_sec,technique,midi_pitch\n2.0,2.5,tremolo,\n"
                        "0.5,1.0,vibrato,60\n");
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_LT(ev[0].onset, ev[1].onset);
  EXPECT_FALSE(ev[1].pitch.has_value());
}

TEST(Annotations, MalformedRowNamesRowNumber) {
  try {
    parse("onset_sec,offset_sec,technique,midi_pitch\n0.1,0.2,vibrato,60\nabc,0.3,vibrato,60\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
}

TEST(Annotations, UnknownTechniqueListsName) {
  try {
    parse("onset_sec,offset_sec,technique,midi_pitch\n0.1,0.2,wobble,60\n");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("wobble"), std::string::npos) << e.what();
  }
}

TEST(Annotations, WriteThenReadRoundTrips) {
  const auto cm = guzheng();
  const std::vector<IPTEvent> events{{0, 0.125, 0.5, 60}, {5, 1.0, 2.25, std::nullopt}};
  std::stringstream buf;
  write_annotations(buf, events, cm);
  EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')), "onset_sec,offset_sec,technique,midi_pitch");
  const auto back = parse_annotations(buf, Schema::guzheng_tech99, cm);
  EXPECT_EQ(back, events);
}

TEST(Rasterize, NoEventsAllZero) {
  const auto g = rasterize({}, 10, guzheng());
  EXPECT_EQ(g.ipt.cast<int>().sum(), 0);
  EXPECT_EQ(g.onset.cast<int>().sum(), 0);
  EXPECT_EQ(g.mask.cast<int>().sum(), 10);
}

TEST(Rasterize, FirstTenthOfASecond) {
  const std::vector<IPTEvent> ev{{0, 0.0, 0.1, std::nullopt}};
  const auto g = rasterize(ev, 75, guzheng());
  for (int t = 0; t < 75; ++t) {
    EXPECT_EQ(g.ipt(t, 0), t <= 6 ? 1 : 0) << "frame " << t;
  }
  EXPECT_EQ(g.onset(0), 1);
  EXPECT_EQ(g.onset.cast<int>().sum(), 1);
}

TEST(Rasterize, OverlappingEventsSetBothColumns) {
  const std::vector<IPTEvent> ev{{0, 0.0, 0.5, 60}, {2, 0.2, 0.8, 62}};
  const auto cm = small_map(3);
  const auto g = rasterize(ev, 75, cm);
  const auto oracle = testing::rasterize_ipt_oracle(ev, 75, 3, 75.0);
  EXPECT_TRUE((g.ipt == oracle).all());
  int shared = 0;
  for (int t = 0; t < 75; ++t) {
    shared += g.ipt(t, 0) && g.ipt(t, 2);
  }
  EXPECT_GT(shared, 0);
  EXPECT_EQ(g.pitch(20, 0), 1);
  EXPECT_EQ(g.pitch(20, 2), 1);
}

TEST(Rasterize, OutOfRangeEventRejected) {
  const std::vector<IPTEvent> ev{{0, 0.5, 2.0, std::nullopt}};
  EXPECT_THROW(rasterize(ev, 75, guzheng()), RangeError);
}

TEST(Rasterize, PropertyMatchesOracleAndInvariants) {
  std::mt19937_64 rng(7);
  const auto cm = small_map(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 120)(rng);
    const double span = n / 75.0;
    std::uniform_real_distribution<double> when(0.0, span);
    std::vector<IPTEvent> ev;
    const int k = std::uniform_int_distribution<int>(0, 6)(rng);
    for (int i = 0; i < k; ++i) {
      double a = when(rng), b = when(rng);
      if (a == b) {
        continue;
      }
      if (a > b) {
        std::swap(a, b);
      }
      ev.push_back({std::uniform_int_distribution<int>(0, 2)(rng), a, b,
                    std::uniform_int_distribution<int>(60, 63)(rng)});
    }
    const auto g = rasterize(ev, n, cm);
    ASSERT_TRUE((g.ipt == testing::rasterize_ipt_oracle(ev, n, 3, 75.0)).all());
    EXPECT_NO_THROW(g.validate(true));
  }
}

TEST(Rasterize, RoundTripThroughDecoding) {
  // Non-overlapping events of at least two frames decode back to themselves.
  std::mt19937_64 rng(11);
  const auto cm = small_map(3);
  const double fr = cm.frame_rate;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<IPTEvent> ev;
    double t = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
    while (true) {
      const double len = std::uniform_real_distribution<double>(2.5 / fr, 0.4)(rng);
      if (t + len > 3.0) {
        break;
      }
      ev.push_back({std::uniform_int_distribution<int>(0, 2)(rng), t, t + len, std::nullopt});
      t += len + std::uniform_real_distribution<double>(1.5 / fr, 0.2)(rng);
    }
    const int n = static_cast<int>(3.0 * fr);
    const auto g = rasterize(ev, n, cm);
    const nn::Matrix y = g.ipt.cast<float>();
    for (const bool gated : {false, true}) {
      const auto dec = gated ? decode_events(y, g.onset, DecodeConfig{}, fr)
                             : decode_events_ungated(y, DecodeConfig{}, fr);
      ASSERT_EQ(dec.size(), ev.size()) << "trial " << trial << " gated " << gated;
      auto sorted = ev;
      std::sort(sorted.begin(), sorted.end(),
                [](const IPTEvent& a, const IPTEvent& b) { return a.onset < b.onset; });
      for (std::size_t i = 0; i < ev.size(); ++i) {
        EXPECT_EQ(dec[i].label, sorted[i].label);
        EXPECT_LE(std::abs(dec[i].onset - sorted[i].onset), 1.0 / fr + 1e-9);
      }
    }
  }
}

TEST(Segment, TwelveSecondsGivesThreeWindows) {
  const auto cm = guzheng();
  const std::vector<float> wave(12 * kSampleRate, 0.1f);
  const auto s = segment(wave, {}, cm, 375, "rec");
  ASSERT_EQ(s.size(), 3u);
  for (const auto& w : s) {
    EXPECT_EQ(w.waveform.size(), static_cast<std::size_t>(kWindowSamples));
  }
  EXPECT_EQ(s[0].labels.mask.cast<int>().sum(), 375);
  EXPECT_EQ(s[2].labels.mask.cast<int>().sum(), 150);
  EXPECT_EQ(s[2].waveform[2 * kSampleRate], 0.0f);
  EXPECT_DOUBLE_EQ(s[2].window_offset, 10.0);
}

TEST(Segment, ExactlyFiveSecondsFullMask) {
  const std::vector<float> wave(kWindowSamples, 0.0f);
  const auto s = segment(wave, {}, guzheng(), 375, "rec");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_TRUE((s[0].labels.mask == 1).all());
}

TEST(Segment, BoundaryEventSplitsAndClips) {
  const auto cm = guzheng();
  const std::vector<float> wave(10 * kSampleRate, 0.0f);
  const std::vector<IPTEvent> ev{{1, 4.5, 6.0, 60}};
  const auto s = segment(wave, ev, cm, 375, "rec");
  ASSERT_EQ(s.size(), 2u);
  ASSERT_EQ(s[0].events.size(), 1u);
  ASSERT_EQ(s[1].events.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].events[0].onset, 4.5);
  EXPECT_DOUBLE_EQ(s[0].events[0].offset, 5.0);
  EXPECT_DOUBLE_EQ(s[1].events[0].onset, 0.0);
  EXPECT_DOUBLE_EQ(s[1].events[0].offset, 1.0);
  EXPECT_EQ(s[0].labels.onset.cast<int>().sum(), 1);
  // The continuation is not a new onset.
  EXPECT_EQ(s[1].labels.onset.cast<int>().sum(), 0);
}

TEST(Segment, ShorterThanOneFrameIsEmpty) {
  const std::vector<float> wave(100, 0.0f);
  EXPECT_TRUE(segment(wave, {}, guzheng(), 375, "tiny").empty());
}

TEST(Segment, ConservesLabeledFrames) {
  std::mt19937_64 rng(5);
  const auto cm = small_map(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_full = std::uniform_int_distribution<int>(413, 1275)(rng);
    const double seconds = n_full / 75.0;
    const std::vector<float> wave(static_cast<std::size_t>(seconds * kSampleRate), 0.0f);
    std::vector<IPTEvent> ev;
    for (int i = 0; i < 6; ++i) {
      const double a = std::uniform_real_distribution<double>(0.0, seconds - 0.5)(rng);
      ev.push_back({i % 2, a, a + std::uniform_real_distribution<double>(0.05, 3.0)(rng),
                    std::nullopt});
      ev.back().offset = std::min(ev.back().offset, seconds);
    }
    const auto full = rasterize(ev, n_full, cm);
    long seg_total = 0;
    int crossings = 0;
    const auto windows = segment(wave, ev, cm, 375, "r");
    for (const auto& w : windows) {
      seg_total += w.labels.ipt.cast<long>().sum();
    }
    for (const auto& e : ev) {
      crossings += static_cast<int>(std::floor(e.offset / 5.0) - std::floor(e.onset / 5.0));
    }
    const long diff = std::abs(seg_total - full.ipt.cast<long>().sum());
    EXPECT_LE(diff, crossings + 1) << "trial " << trial;
  }
}

TEST(Splits, CbfTenPerformersFiveFolds) {
  std::vector<RecordingInfo> recs;
  for (int p = 0; p < 10; ++p) {
    for (int r = 0; r < 8; ++r) {
      recs.push_back({"p" + std::to_string(p) + "_" + std::to_string(r), "P" + std::to_string(p)});
    }
  }
  const auto plan = make_splits(Schema::cbf, recs, 3);
  ASSERT_EQ(plan.folds.size(), 5u);
  auto performer = [](const std::string& id) { return id.substr(0, id.find('_')); };
  std::set<std::string> held_all;
  for (const auto& f : plan.folds) {
    std::set<std::string> test_p, train_p;
    for (const auto& id : f.test) {
      test_p.insert(performer(id));
    }
    for (const auto& id : f.train) {
      train_p.insert(performer(id));
    }
    for (const auto& id : f.val) {
      train_p.insert(performer(id));
    }
    EXPECT_EQ(test_p.size(), 2u);
    EXPECT_EQ(train_p.size(), 8u);
    for (const auto& p : test_p) {
      EXPECT_FALSE(train_p.contains(p));
      EXPECT_TRUE(held_all.insert(p).second) << p << " held out twice";
    }
  }
  EXPECT_EQ(held_all.size(), 10u);
  EXPECT_EQ(plan, make_splits(Schema::cbf, recs, 3));
}

TEST(Splits, CbfWithoutPerformerIsConfigError) {
  std::vector<RecordingInfo> recs{{"a", ""}, {"b", "x"}};
  EXPECT_THROW(make_splits(Schema::cbf, recs, 0), ConfigError);
}

TEST(Splits, ManifestRoundTrip) {
  std::vector<RecordingInfo> recs;
  for (int i = 0; i < 20; ++i) {
    recs.push_back({"r" + std::to_string(i), ""});
  }
  const auto plan = make_splits(Schema::guzheng_tech99, recs, 1);
  const auto path = std::filesystem::temp_directory_path() / "iptdet_split_roundtrip.json";
  write_split_manifest(path, plan);
  const auto back = read_split_manifest(path);
  EXPECT_EQ(back.folds, plan.folds);
  const auto loaded = make_splits(Schema::guzheng_tech99, recs, 99, path);
  EXPECT_EQ(loaded.folds, plan.folds);
  std::filesystem::remove(path);
}

TEST(ClassWeights, RatiosAndClamp) {
  const auto cm = small_map(3);
  FrameGrid g = FrameGrid::zeros(100, cm);
  for (int t = 0; t < 10; ++t) {
    g.ipt(t, 0) = 1;  // 10% positive
  }
  for (int t = 0; t < 50; ++t) {
    g.ipt(t, 1) = 1;  // balanced
  }
  const std::vector<FrameGrid> grids{g};
  const auto w = class_weights(grids);
  EXPECT_DOUBLE_EQ(w[0], 9.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
  EXPECT_DOUBLE_EQ(w[2], 100.0);
}

TEST(ClassWeights, IgnoresMaskedFrames) {
  const auto cm = small_map(1);
  FrameGrid g = FrameGrid::zeros(20, cm);
  g.ipt(0, 0) = 1;
  g.ipt(1, 0) = 1;
  for (int t = 10; t < 20; ++t) {
    g.mask(t) = 0;
  }
  const std::vector<FrameGrid> grids{g};
  EXPECT_DOUBLE_EQ(class_weights(grids)[0], 4.0);
}

}  // namespace
}  // namespace iptdet
