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
#include <string>
#include <utility>
#include <vector>

namespace iptdet {

struct Counts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  /// No positives on either side.
  bool empty() const { return tp + fp + fn == 0; }
  /// 2TP / (2TP + FP + FN); 0 when empty.
  double f1() const;
  friend bool operator==(const Counts&, const Counts&) = default;
};

struct F1Result {
  double micro = 0.0;
  double macro = 0.0;
  std::vector<Counts> per_class;
  Counts pooled;
  /// Pooled counts are all zero, so micro F1 is 0 by convention.
  bool micro_zero_support = false;

  static F1Result from_counts(std::vector<Counts> per_class);
};

/// Per-class frame counts over valid frames.
std::vector<Counts> frame_counts(const BinaryGrid& pred, const BinaryGrid& ref,
                                 const BinaryVector& mask);
F1Result frame_f1(const BinaryGrid& pred, const BinaryGrid& ref, const BinaryVector& mask);

/// Maximum-cardinality one-to-one matching between same-label events with
/// |onset difference| <= tolerance (distance rounded to 4 decimals).
/// Returns (pred index, ref index) pairs.
std::vector<std::pair<int, int>> match_events(std::span<const IPTEvent> pred,
                                              std::span<const IPTEvent> ref, double tolerance);

std::vector<Counts> event_counts(std::span<const IPTEvent> pred, std::span<const IPTEvent> ref,
                                 double tolerance, int n_classes);
F1Result event_f1(std::span<const IPTEvent> pred, std::span<const IPTEvent> ref, double tolerance,
                  const ClassMap& class_map);

struct ClassReport {
  std::string name;
  double frame_f1 = 0.0;
  double event_f1 = 0.0;
  long support = 0;  // reference frames
  long event_support = 0;
  Counts frame;
  Counts event;
  bool zero_support = false;  // no reference and no predicted positives
};

enum class Aggregation { mean, pooled };

struct EvalReport {
  double frame_micro_f1 = 0.0;
  double frame_macro_f1 = 0.0;
  double event_micro_f1 = 0.0;
  double event_macro_f1 = 0.0;
  double tolerance = 0.05;
  std::vector<ClassReport> per_class;
  bool frame_micro_zero_support = false;
  bool event_micro_zero_support = false;
  std::string variant;
  std::string split;
  std::string aggregation;  // set on aggregated reports
  int recordings = 0;

  static EvalReport from_counts(const ClassMap& class_map, std::vector<Counts> frame,
                                std::vector<Counts> event, double tolerance);
  void validate() const;
  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static EvalReport load(const std::filesystem::path& path);
};

/// Combines per-fold reports: `mean` averages each metric, `pooled` sums the
/// per-class counts and recomputes the scores.
EvalReport aggregate_reports(std::span<const EvalReport> reports, Aggregation mode);

/// Writes a per-class frame F1 bar chart (`<stem>.png`) and a CSV of the
/// per-class values (`<stem>.csv`) in class-map order. Returns both paths.
std::pair<std::filesystem::path, std::filesystem::path> per_class_histogram(
    const EvalReport& report, const std::filesystem::path& output);

}  // namespace iptdet
