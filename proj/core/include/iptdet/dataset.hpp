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

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iptdet {

/// Annotated corpora with a known technique vocabulary.
enum class Schema { guzheng_tech99, eg_solo, cbf };

Schema parse_schema(std::string_view name);
std::string_view schema_name(Schema schema);

/// A labeled technique interval in seconds.
struct IPTEvent {
  int label = 0;
  double onset = 0.0;
  double offset = 0.0;
  std::optional<int> pitch;  // MIDI note number

  friend bool operator==(const IPTEvent&, const IPTEvent&) = default;
};

struct ClassMap {
  std::vector<std::string> ipt_names;
  int midi_min = 0;
  int midi_max = 0;
  /// False for corpora without pitch labels; the pitch grid is then a
  /// single all-zero column and the pitch loss is skipped.
  bool has_pitch = true;
  double frame_rate = 75.0;

  int n_ipt() const { return static_cast<int>(ipt_names.size()); }
  int n_pitch() const { return midi_max - midi_min + 1; }

  /// Index of a technique name after normalization (case, separators,
  /// known synonyms); -1 when unknown.
  int index_of(std::string_view name) const;
  void validate() const;

  /// Default technique vocabulary and pitch range of a schema.
  static ClassMap for_schema(Schema schema);

  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

using BinaryGrid = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BinaryVector = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

/// Per-frame binary targets or predictions.
struct FrameGrid {
  BinaryGrid ipt;    // n_time x n_ipt
  BinaryGrid pitch;  // n_time x n_pitch
  BinaryVector onset;
  BinaryVector mask;  // 1 = valid frame
  double frame_rate = 75.0;

  int n_time() const { return static_cast<int>(mask.size()); }
  static FrameGrid zeros(int n_time, const ClassMap& class_map);
  /// Throws ContractError on the first violated invariant. Ground-truth
  /// grids additionally require every onset frame to carry an active class.
  void validate(bool ground_truth) const;
};

/// One fixed-length training/inference window.
struct Sample {
  std::vector<float> waveform;  // 24 kHz mono, always window-length
  FrameGrid labels;
  std::vector<IPTEvent> events;  // window-local, clipped
  std::string source_id;
  double window_offset = 0.0;
  double valid_seconds = 0.0;
};

struct RecordingInfo {
  std::string id;
  std::string performer;  // may be empty except for CBF
};

struct SplitPlan {
  struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    friend bool operator==(const Fold&, const Fold&) = default;
  };
  std::vector<Fold> folds;
  std::string policy;

  void validate() const;
  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

inline constexpr int kSampleRate = 24000;
inline constexpr double kWindowSeconds = 5.0;
inline constexpr int kWindowSamples = 120000;

/// Reads an annotation CSV (normalized header or the schema's native
/// column names) and returns events sorted by onset.
std::vector<IPTEvent> load_annotations(const std::filesystem::path& path, Schema schema,
                                       const ClassMap& class_map);
std::vector<IPTEvent> parse_annotations(std::istream& in, Schema schema,
                                        const ClassMap& class_map,
                                        std::string_view source_name = "<stream>");

/// Writes the normalized `onset_sec,offset_sec,technique,midi_pitch` CSV.
void write_annotations(std::ostream& out, std::span<const IPTEvent> events,
                       const ClassMap& class_map);
void write_annotations(const std::filesystem::path& path, std::span<const IPTEvent> events,
                       const ClassMap& class_map);

/// Frame t is active for an event when its center (t+0.5)/fr lies in
/// [onset, offset). The onset target is the event's first active frame.
FrameGrid rasterize(std::span<const IPTEvent> events, int n_frames, const ClassMap& class_map);
/// As above; events whose `has_onset` flag is false (continuations of an
/// event cut at a window edge) mark no onset frame.
FrameGrid rasterize(std::span<const IPTEvent> events, const std::vector<bool>& has_onset,
                    int n_frames, const ClassMap& class_map);

/// Cuts a 24 kHz recording into non-overlapping windows. `n_time` is the
/// encoder's frame count per window. The last short window is zero padded
/// and its padded frames are masked out.
std::vector<Sample> segment(std::span<const float> waveform, std::span<const IPTEvent> events,
                            const ClassMap& class_map, int n_time, std::string_view source_id,
                            double window_seconds = kWindowSeconds);

/// Builds the split plan of a corpus. CBF: performer-grouped 5-fold plan
/// (two held-out performers per fold). Other schemas: the manifest at
/// `manifest` when given, otherwise a seeded 80/10/10 recording split.
SplitPlan make_splits(Schema schema, std::span<const RecordingInfo> recordings, std::uint64_t seed,
                      const std::optional<std::filesystem::path>& manifest = std::nullopt);

SplitPlan read_split_manifest(const std::filesystem::path& path);
void write_split_manifest(const std::filesystem::path& path, const SplitPlan& plan);

/// Positive-term weights w_c = clamp(neg_c / max(pos_c, 1), 1, 100) over
/// valid frames; classes without positives get 100.
std::vector<double> class_weights(std::span<const FrameGrid> train_grids);

}  // namespace iptdet
