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


// Command implementations behind the `iptdet` executable. Each command is a
// plain function so tests can drive the pipeline without spawning processes.

#pragma once

#include "iptdet/config.hpp"
#include "iptdet/dataset.hpp"
#include "iptdet/metrics.hpp"
#include "iptdet/postprocess.hpp"
#include "iptdet/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace iptdet {

// Flags that override config keys.
struct CliOverrides {
  std::optional<std::string> variant;
  std::optional<int> fold;
  std::optional<double> tolerance;
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::string> split;
};

// Loads the config (or defaults when no path is given), applies overrides and
// validates, requiring the listed keys to be present after overriding.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_path,
                         const CliOverrides& overrides,
                         std::span<const std::string_view> required = {});

struct PreparedRecording {
  std::string id;
  std::filesystem::path audio;        // absolute
  std::filesystem::path annotations;  // normalized CSV, absolute
  std::string performer;
  double duration = 0.0;
};

// A directory written by cmd_prepare: manifest.json, splits.json, stats.json
// and annotations/<id>.csv.
struct PreparedDataset {
  Schema schema = Schema::guzheng_tech99;
  ClassMap class_map;
  std::filesystem::path root;
  std::vector<PreparedRecording> recordings;

  static PreparedDataset load(const std::filesystem::path& dir);
  const PreparedRecording& find(const std::string& id) const;
  Recording load_recording(const PreparedRecording& rec) const;
  std::vector<Recording> load_recordings(std::span<const std::string> ids) const;
};

struct PrepareSummary {
  int recordings = 0;
  std::filesystem::path manifest;
  std::filesystem::path splits;
  std::filesystem::path stats;
};

// Scans `raw_root` for WAV/FLAC files with an annotation CSV of the same stem
// anywhere under the root. CBF performers come from metadata.csv (columns
// including `id` and `performer`) or, failing that, the parent directory name.
// A splits.json in the raw root (or `split_manifest`) overrides the seeded split.
PrepareSummary cmd_prepare(Schema schema, const std::filesystem::path& raw_root,
                           const std::filesystem::path& output, std::uint64_t seed,
                           const std::optional<std::filesystem::path>& split_manifest = {});

// Trains on the configured fold; writes train_log.jsonl, checkpoint/ and
// run.json under the output directory.
TrainOutcome cmd_train(const RunConfig& config);

// Evaluates `config.checkpoint` on `config.split` of the configured fold and
// writes report.json plus the per-class figure and CSV to the output directory.
EvalReport cmd_evaluate(const RunConfig& config);

struct PredictOutputs {
  std::filesystem::path events_csv;
  std::filesystem::path posteriors_csv;
  std::vector<IPTEvent> events;
};

PredictOutputs cmd_predict(const std::filesystem::path& checkpoint,
                           const std::filesystem::path& audio,
                           const std::filesystem::path& output, const DecodeConfig& decode);

struct ReportRow {
  std::string variant;
  double frame_micro_f1 = 0.0;
  double frame_macro_f1 = 0.0;
  double event_micro_f1 = 0.0;
  double event_macro_f1 = 0.0;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ReportOutputs {
  std::vector<ReportRow> rows;
  std::filesystem::path table_csv;
  std::filesystem::path table_md;
  std::vector<std::filesystem::path> figures;
};

// One table row per variant; reports sharing a variant (cross-validation
// folds) are combined with `mode` first. Writes table.csv, table.md and a
// per-class histogram for every row.
ReportOutputs cmd_report(std::span<const std::filesystem::path> reports,
                         const std::filesystem::path& output, Aggregation mode);

std::vector<ReportRow> read_report_table(const std::filesystem::path& path);

}  // namespace iptdet
