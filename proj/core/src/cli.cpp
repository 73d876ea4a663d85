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


#include "iptdet/cli.hpp"

#include "iptdet/audio.hpp"
#include "iptdet/checkpoint.hpp"
#include "iptdet/downstream.hpp"
#include "iptdet/encoder.hpp"
#include "iptdet/error.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace iptdet {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) {
      field.pop_back();
    }
    const auto first = field.find_first_not_of(" \t\"");
    const auto last = field.find_last_not_of(" \t\"");
    out.push_back(first == std::string::npos ? "" : field.substr(first, last - first + 1));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    throw IoError("cannot write " + path.string());
  }
}

std::map<std::string, std::string> read_performers(const fs::path& metadata) {
  std::ifstream in(metadata);
  if (!in) {
    throw IoError("cannot open " + metadata.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(metadata.string() + " is empty");
  }
  const auto header = split_csv_line(line);
  int c_id = -1;
  int c_perf = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const auto h = lower(header[static_cast<std::size_t>(i)]);
    if (h == "id" || h == "file" || h == "recording") {
      c_id = i;
    } else if (h == "performer" || h == "player") {
      c_perf = i;
    }
  }
  if (c_id < 0 || c_perf < 0) {
    throw ParseError(metadata.string() + ": header needs an id and a performer column");
  }
  std::map<std::string, std::string> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto f = split_csv_line(line);
    if (static_cast<int>(f.size()) <= std::max(c_id, c_perf)) {
      throw ParseError(metadata.string() + ", row " + std::to_string(row) + ": too few fields");
    }
    out[fs::path(f[static_cast<std::size_t>(c_id)]).stem().string()] =
        f[static_cast<std::size_t>(c_perf)];
  }
  return out;
}

ordered_json class_map_json(const ClassMap& cm) {
  return {{"ipt_names", cm.ipt_names},
          {"midi_min", cm.midi_min},
          {"midi_max", cm.midi_max},
          {"has_pitch", cm.has_pitch},
          {"frame_rate", cm.frame_rate}};
}

const std::vector<std::string>& split_ids(const SplitPlan::Fold& fold, const std::string& split) {
  if (split == "train") {
    return fold.train;
  }
  if (split == "val") {
    return fold.val;
  }
  return fold.test;
}

SplitPlan::Fold select_fold(const RunConfig& cfg) {
  const fs::path manifest = cfg.split_manifest.value_or(cfg.dataset_root / "splits.json");
  const SplitPlan plan = read_split_manifest(manifest);
  if (cfg.fold < 0 || cfg.fold >= static_cast<int>(plan.folds.size())) {
    throw ConfigError("fold " + std::to_string(cfg.fold) + " not in " + manifest.string() +
                      " (" + std::to_string(plan.folds.size()) + " folds)");
  }
  return plan.folds[static_cast<std::size_t>(cfg.fold)];
}

std::vector<Sample> to_samples(std::span<const Recording> recordings, const ClassMap& cm,
                               int n_time) {
  std::vector<Sample> out;
  for (const auto& r : recordings) {
    auto s = segment(r.waveform, r.events, cm, n_time, r.id);
    std::move(s.begin(), s.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace

RunConfig resolve_config(const std::optional<fs::path>& config_path, const CliOverrides& o,
                         std::span<const std::string_view> required) {
  RunConfig cfg = config_path ? RunConfig::load(*config_path) : RunConfig{};
  auto mark = [&cfg](const char* key) {
    if (!cfg.has(key)) {
      cfg.provided.emplace_back(key);
    }
  };
  if (o.variant) {
    cfg.variant = parse_variant(*o.variant);
    mark("model.variant");
  }
  if (o.fold) {
    cfg.fold = *o.fold;
    mark("dataset.fold");
  }
  if (o.tolerance) {
    cfg.tolerance = *o.tolerance;
    mark("eval.tolerance");
  }
  if (o.output) {
    cfg.output_dir = *o.output;
    mark("output.dir");
  }
  if (o.checkpoint) {
    cfg.checkpoint = *o.checkpoint;
    mark("output.checkpoint");
  }
  if (o.split) {
    cfg.split = *o.split;
    mark("dataset.split");
  }
  cfg.train.fold = cfg.fold;
  if (cfg.schema) {
    cfg.train.dataset = std::string(schema_name(*cfg.schema));
  }
  cfg.validate(required);
  return cfg;
}

// ---------------------------------------------------------------------------
// Prepared datasets

PreparedDataset PreparedDataset::load(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) {
    throw IoError("no prepared dataset at " + dir.string() + " (missing manifest.json)");
  }
  PreparedDataset ds;
  ds.root = fs::absolute(dir);
  try {
    const auto j = nlohmann::json::parse(in);
    ds.schema = parse_schema(j.at("schema").get<std::string>());
    ds.class_map = ClassMap::for_schema(ds.schema);
    for (const auto& r : j.at("recordings")) {
      PreparedRecording rec;
      rec.id = r.at("id").get<std::string>();
      rec.audio = r.at("audio").get<std::string>();
      rec.annotations = ds.root / r.at("annotations").get<std::string>();
      rec.performer = r.value("performer", std::string());
      rec.duration = r.value("duration", 0.0);
      ds.recordings.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return ds;
}

const PreparedRecording& PreparedDataset::find(const std::string& id) const {
  for (const auto& r : recordings) {
    if (r.id == id) {
      return r;
    }
  }
  throw ConfigError("recording '" + id + "' is not in the prepared dataset " + root.string());
}

Recording PreparedDataset::load_recording(const PreparedRecording& rec) const {
  Recording out;
  out.id = rec.id;
  out.waveform = load_audio(rec.audio);
  std::ifstream in(rec.annotations);
  if (!in) {
    throw IoError("cannot open " + rec.annotations.string());
  }
  out.events = parse_annotations(in, schema, class_map, rec.annotations.string());
  return out;
}

std::vector<Recording> PreparedDataset::load_recordings(std::span<const std::string> ids) const {
  std::vector<Recording> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    out.push_back(load_recording(find(id)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// prepare

PrepareSummary cmd_prepare(Schema schema, const fs::path& raw_root, const fs::path& output,
                           std::uint64_t seed, const std::optional<fs::path>& split_manifest) {
  if (!fs::is_directory(raw_root)) {
    throw IoError("dataset root not found: " + raw_root.string());
  }
  const ClassMap cm = ClassMap::for_schema(schema);

  std::map<std::string, fs::path> audio;
  std::map<std::string, std::vector<fs::path>> csvs;
  std::vector<std::string> problems;
  for (const auto& entry : fs::recursive_directory_iterator(raw_root)) {
    if (!entry.is_regular_file()) {
      continue;
    }
    const auto ext = lower(entry.path().extension().string());
    const auto stem = entry.path().stem().string();
    if (ext == ".wav" || ext == ".flac") {
      if (!audio.emplace(stem, entry.path()).second) {
        problems.push_back("duplicate audio id '" + stem + "': " + audio[stem].string() +
                           " and " + entry.path().string());
      }
    } else if (ext == ".csv" && lower(stem) != "metadata") {
      csvs[stem].push_back(entry.path());
    }
  }
  if (audio.empty()) {
    throw IoError("no .wav or .flac files under " + raw_root.string());
  }

  std::map<std::string, std::string> performers;
  const fs::path metadata = raw_root / "metadata.csv";
  if (fs::exists(metadata)) {
    performers = read_performers(metadata);
  }

  std::vector<PreparedRecording> recs;
  std::vector<std::vector<IPTEvent>> events;
  for (const auto& [id, path] : audio) {
    const auto it = csvs.find(id);
    if (it == csvs.end()) {
      problems.push_back("missing annotation file for " + path.string() + " (expected " + id +
                         ".csv)");
      continue;
    }
    if (it->second.size() > 1) {
      problems.push_back("ambiguous annotations for '" + id + "': " +
                         std::to_string(it->second.size()) + " files named " + id + ".csv");
      continue;
    }
    PreparedRecording r;
    r.id = id;
    r.audio = fs::absolute(path);
    r.annotations = fs::path("annotations") / (id + ".csv");
    if (schema == Schema::cbf) {
      const auto p = performers.find(id);
      r.performer = p != performers.end() ? p->second : path.parent_path().filename().string();
    }
    try {
      events.push_back(load_annotations(it->second.front(), schema, cm));
      r.duration = audio_duration(path);
    } catch (const Error& e) {
      problems.push_back(e.what());
      continue;
    }
    recs.push_back(std::move(r));
  }
  for (const auto& [stem, paths] : csvs) {
    if (!audio.contains(stem)) {
      for (const auto& p : paths) {
        problems.push_back("annotation without audio: " + p.string());
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " problem(s) in " + raw_root.string() + ":";
    for (const auto& p : problems) {
      msg += "\n  - " + p;
    }
    throw IoError(msg);
  }

  fs::create_directories(output / "annotations");
  ordered_json manifest{{"schema", std::string(schema_name(schema))},
                        {"class_map", class_map_json(cm)},
                        {"recordings", ordered_json::array()}};
  std::vector<RecordingInfo> infos;
  const int n_ipt = cm.n_ipt();
  std::vector<long> event_count(static_cast<std::size_t>(n_ipt), 0);
  std::vector<long> frame_count(static_cast<std::size_t>(n_ipt), 0);
  long total_frames = 0;
  double total_seconds = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    write_annotations(output / r.annotations, events[i], cm);
    manifest["recordings"].push_back({{"id", r.id},
                                      {"audio", r.audio.string()},
                                      {"annotations", r.annotations.generic_string()},
                                      {"performer", r.performer},
                                      {"duration", r.duration}});
    infos.push_back({r.id, r.performer});

    double end = r.duration;
    for (const auto& e : events[i]) {
      end = std::max(end, e.offset);
      ++event_count[static_cast<std::size_t>(e.label)];
    }
    const int n_frames = std::max(1, static_cast<int>(std::ceil(end * cm.frame_rate)));
    const FrameGrid g = rasterize(events[i], n_frames, cm);
    for (int c = 0; c < n_ipt; ++c) {
      frame_count[static_cast<std::size_t>(c)] += g.ipt.col(c).cast<long>().sum();
    }
    total_frames += n_frames;
    total_seconds += r.duration;
  }

  std::optional<fs::path> plan_source = split_manifest;
  if (!plan_source && fs::exists(raw_root / "splits.json")) {
    plan_source = raw_root / "splits.json";
  }
  const SplitPlan plan = make_splits(schema, infos, seed, plan_source);

  ordered_json classes = ordered_json::array();
  for (int c = 0; c < n_ipt; ++c) {
    const auto pos = frame_count[static_cast<std::size_t>(c)];
    classes.push_back(
        {{"name", cm.ipt_names[static_cast<std::size_t>(c)]},
         {"events", event_count[static_cast<std::size_t>(c)]},
         {"positive_frames", pos},
         {"negative_frames", total_frames - pos},
         {"positive_fraction",
          total_frames > 0 ? static_cast<double>(pos) / static_cast<double>(total_frames) : 0.0}});
  }
  const auto [mn, mx] = std::minmax_element(frame_count.begin(), frame_count.end());
  ordered_json stats{{"schema", std::string(schema_name(schema))},
                     {"recordings", recs.size()},
                     {"total_seconds", total_seconds},
                     {"total_frames", total_frames},
                     {"frame_rate", cm.frame_rate},
                     {"split_policy", plan.policy},
                     {"folds", plan.folds.size()},
                     {"imbalance_ratio",
                      *mn > 0 ? static_cast<double>(*mx) / static_cast<double>(*mn) : 0.0},
                     {"classes", classes}};

  PrepareSummary summary;
  summary.recordings = static_cast<int>(recs.size());
  summary.manifest = output / "manifest.json";
  summary.splits = output / "splits.json";
  summary.stats = output / "stats.json";
  write_text(summary.manifest, manifest.dump(2) + "\n");
  write_split_manifest(summary.splits, plan);
  write_text(summary.stats, stats.dump(2) + "\n");
  spdlog::info("prepared {} recordings ({} folds) into {}", summary.recordings, plan.folds.size(),
               output.string());
  return summary;
}

// ---------------------------------------------------------------------------
// train / evaluate

TrainOutcome cmd_train(const RunConfig& cfg) {
  const PreparedDataset ds = PreparedDataset::load(cfg.dataset_root);
  if (cfg.schema && *cfg.schema != ds.schema) {
    throw ConfigError("dataset.schema is " + std::string(schema_name(*cfg.schema)) +
                      " but the prepared dataset is " + std::string(schema_name(ds.schema)));
  }
  const SplitPlan::Fold fold = select_fold(cfg);
  auto encoder = make_encoder(cfg.backend, cfg.encoder_dir, cfg.seed);
  const int n_time = encoder->frames_per_window();

  const auto train_recs = ds.load_recordings(fold.train);
  const auto val_recs = ds.load_recordings(fold.val);
  const auto train_samples = to_samples(train_recs, ds.class_map, n_time);
  const auto val_samples = to_samples(val_recs, ds.class_map, n_time);
  if (train_samples.empty()) {
    throw ConfigError("fold " + std::to_string(cfg.fold) + " has no training audio");
  }

  TrainInputs inputs{train_samples, val_samples, cfg.loss, {}, cfg.decode};
  if (cfg.class_weighting) {
    std::vector<FrameGrid> grids;
    grids.reserve(train_samples.size());
    for (const auto& s : train_samples) {
      grids.push_back(s.labels);
    }
    inputs.class_weights = class_weights(grids);
  }

  IptModel model(cfg.variant, ds.class_map, cfg.head, encoder->feature_dim(),
                 encoder->num_layers(), cfg.seed);
  CheckpointMeta meta;
  meta.class_weights = inputs.class_weights;
  meta.model_seed = cfg.seed;
  meta.schema = std::string(schema_name(ds.schema));

  TrainConfig tc = cfg.train;
  tc.dataset = meta.schema;
  tc.fold = cfg.fold;
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "run.json",
             ordered_json{{"variant", std::string(variant_name(cfg.variant))},
                          {"schema", meta.schema},
                          {"fold", cfg.fold},
                          {"seed", cfg.seed},
                          {"backend", std::string(backend_name(cfg.backend))},
                          {"train_recordings", fold.train.size()},
                          {"val_recordings", fold.val.size()},
                          {"train_samples", train_samples.size()},
                          {"class_weights", inputs.class_weights}}
                     .dump(2) +
                 "\n");
  spdlog::info("training {} on fold {}: {} windows, {} validation windows",
               variant_name(cfg.variant), cfg.fold, train_samples.size(), val_samples.size());
  return train(model, *encoder, tc, inputs, cfg.output_dir, meta);
}

EvalReport cmd_evaluate(const RunConfig& cfg) {
  if (!cfg.checkpoint) {
    throw ConfigError("evaluate needs a checkpoint (--checkpoint or output.checkpoint)");
  }
  const PreparedDataset ds = PreparedDataset::load(cfg.dataset_root);
  const SplitPlan::Fold fold = select_fold(cfg);
  const auto& ids = split_ids(fold, cfg.split);
  const auto recs = ds.load_recordings(ids);
  EvalReport report = evaluate_checkpoint(*cfg.checkpoint, recs, ds.class_map, cfg.decode,
                                          cfg.tolerance);
  report.split = cfg.split;
  fs::create_directories(cfg.output_dir);
  report.save(cfg.output_dir / "report.json");
  per_class_histogram(report, cfg.output_dir / "per_class");
  spdlog::info("{} {} split: frame micro {:.4f} macro {:.4f}, event micro {:.4f} macro {:.4f}",
               report.variant, cfg.split, report.frame_micro_f1, report.frame_macro_f1,
               report.event_micro_f1, report.event_macro_f1);
  return report;
}

// ---------------------------------------------------------------------------
// predict

PredictOutputs cmd_predict(const fs::path& checkpoint, const fs::path& audio,
                           const fs::path& output, const DecodeConfig& decode) {
  if (!fs::is_directory(checkpoint)) {
    throw IoError("checkpoint not found: " + checkpoint.string());
  }
  const Checkpoint ck = load_checkpoint(checkpoint);
  Recording rec;
  rec.id = audio.stem().string();
  rec.waveform = load_audio(audio);
  if (rec.waveform.empty()) {
    throw IoError("no audio samples decoded from " + audio.string());
  }
  const RecordingPrediction pred = predict_recording(*ck.model, *ck.encoder, rec, decode);
  const ClassMap& cm = ck.model->class_map();

  fs::create_directories(output);
  PredictOutputs out;
  out.events = pred.events;
  out.events_csv = output / (rec.id + ".events.csv");
  out.posteriors_csv = output / (rec.id + ".posteriors.csv");
  write_annotations(out.events_csv, out.events, cm);

  const auto& p = pred.posteriors;
  std::string text = "frame,time_sec,valid";
  if (p.has_onset()) {
    text += ",onset";
  }
  for (const auto& name : cm.ipt_names) {
    text += "," + name;
  }
  if (p.has_pitch()) {
    for (int k = 0; k < p.y_pitch.cols(); ++k) {
      text += ",midi_" + std::to_string(cm.midi_min + k);
    }
  }
  text += "\n";
  for (int t = 0; t < p.n_time(); ++t) {
    text += std::to_string(t) + "," + fmt_short(pred.time_map.start_time(t)) + "," +
            std::to_string(static_cast<int>(pred.targets.mask(t)));
    if (p.has_onset()) {
      text += "," + fmt_short(p.onset(t, 0));
    }
    for (int c = 0; c < p.y_ipt.cols(); ++c) {
      text += "," + fmt_short(p.y_ipt(t, c));
    }
    for (int k = 0; k < p.y_pitch.cols(); ++k) {
      text += "," + fmt_short(p.y_pitch(t, k));
    }
    text += "\n";
  }
  write_text(out.posteriors_csv, text);
  spdlog::info("{}: {} events written to {}", rec.id, out.events.size(), out.events_csv.string());
  return out;
}

// ---------------------------------------------------------------------------
// report

ReportOutputs cmd_report(std::span<const fs::path> paths, const fs::path& output,
                         Aggregation mode) {
  if (paths.empty()) {
    throw ConfigError("report needs at least one evaluation report");
  }
  std::vector<EvalReport> loaded;
  for (const auto& p : paths) {
    loaded.push_back(EvalReport::load(p));
  }
  auto names = [](const EvalReport& r) {
    std::vector<std::string> n;
    for (const auto& c : r.per_class) {
      n.push_back(c.name);
    }
    return n;
  };
  const auto reference = names(loaded.front());
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    if (names(loaded[i]) != reference) {
      throw CompatibilityError("class map of " + paths[i].string() + " differs from " +
                               paths.front().string());
    }
  }

  // Group by variant, keeping first-appearance order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<EvalReport>> groups;
  for (auto& r : loaded) {
    if (!groups.contains(r.variant)) {
      order.push_back(r.variant);
    }
    groups[r.variant].push_back(std::move(r));
  }

  fs::create_directories(output);
  ReportOutputs out;
  out.table_csv = output / "table.csv";
  out.table_md = output / "table.md";
  std::string csv = "variant,frame_micro_f1,frame_macro_f1,event_micro_f1,event_macro_f1\n";
  std::string md =
      "| Variant | Frame MI-F1 | Frame MA-F1 | Event MI-F1 | Event MA-F1 |\n"
      "|---|---|---|---|---|\n";
  for (const auto& variant : order) {
    const auto& group = groups[variant];
    const EvalReport r = group.size() == 1 ? group.front() : aggregate_reports(group, mode);
    ReportRow row{variant.empty() ? std::string("unnamed") : variant, r.frame_micro_f1,
                  r.frame_macro_f1, r.event_micro_f1, r.event_macro_f1};
    csv += row.variant + "," + fmt_double(row.frame_micro_f1) + "," +
           fmt_double(row.frame_macro_f1) + "," + fmt_double(row.event_micro_f1) + "," +
           fmt_double(row.event_macro_f1) + "\n";
    char line[256];
    std::snprintf(line, sizeof line, "| %s | %.1f | %.1f | %.1f | %.1f |\n", row.variant.c_str(),
                  100.0 * row.frame_micro_f1, 100.0 * row.frame_macro_f1,
                  100.0 * row.event_micro_f1, 100.0 * row.event_macro_f1);
    md += line;
    std::string stem = "per_class_" + row.variant;
    std::replace(stem.begin(), stem.end(), '+', '_');
    out.figures.push_back(per_class_histogram(r, output / stem).first);
    out.rows.push_back(std::move(row));
  }
  if (paths.size() > order.size()) {
    const std::string how = mode == Aggregation::mean ? "mean" : "pooled";
    md += "\nFold reports combined by " + how + " aggregation.\n";
  }
  write_text(out.table_csv, csv);
  write_text(out.table_md, md);
  return out;
}

std::vector<ReportRow> read_report_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string line;
  std::getline(in, line);
  if (line != "variant,frame_micro_f1,frame_macro_f1,event_micro_f1,event_macro_f1") {
    throw ParseError(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<ReportRow> rows;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    const auto f = split_csv_line(line);
    if (f.size() != 5) {
      throw ParseError(path.string() + ", row " + std::to_string(n) + ": expected 5 fields");
    }
    try {
      rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::exception&) {
      throw ParseError(path.string() + ", row " + std::to_string(n) + ": bad number");
    }
  }
  return rows;
}

}  // namespace iptdet
