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

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace iptdet {

namespace {

std::string normalize_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c == ' ' || c == '-' || c == '_') {
      if (!out.empty() && out.back() != '_') {
        out.push_back('_');
      }
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  while (!out.empty() && out.back() == '_') {
    out.pop_back();
  }
  return out;
}

// alias -> canonical class name (both normalized)
const std::map<std::string, std::string>& technique_aliases() {
  static const std::map<std::string, std::string> aliases{
      {"pn", "point_note"},
      {"up", "upward_portamento"},
      {"upward", "upward_portamento"},
      {"dp", "downward_portamento"},
      {"downward", "downward_portamento"},
      {"pluck", "plucks"},
      {"gliss", "glissando"},
      {"trill", "vibrato"},
      {"pull_off", "pull"},
      {"pulloff", "pull"},
      {"hammer_on", "hammer"},
      {"hammeron", "hammer"},
      {"tapping", "tap"},
      {"harmonics", "harmonic"},
      {"fluttertongue", "flutter_tongue"},
      {"flutter", "flutter_tongue"},
  };
  return aliases;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  // Accept "64" and "64.0" (some native files store MIDI numbers as floats).
  auto d = parse_double(s);
  if (!d || std::floor(*d) != *d) {
    return std::nullopt;
  }
  return static_cast<int>(*d);
}

int find_column(const std::vector<std::string>& header, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = std::find(header.begin(), header.end(), n);
    if (it != header.end()) {
      return static_cast<int>(it - header.begin());
    }
  }
  return -1;
}

}  // namespace

Schema parse_schema(std::string_view name) {
  const std::string n = normalize_name(name);
  if (n == "guzheng_tech99" || n == "guzheng") {
    return Schema::guzheng_tech99;
  }
  if (n == "eg_solo" || n == "egsolo") {
    return Schema::eg_solo;
  }
  if (n == "cbf" || n == "cbfdataset") {
    return Schema::cbf;
  }
  throw ConfigError("unknown dataset schema '" + std::string(name) +
                    "' (expected guzheng_tech99, eg_solo or cbf)");
}

std::string_view schema_name(Schema schema) {
  switch (schema) {
    case Schema::guzheng_tech99:
      return "guzheng_tech99";
    case Schema::eg_solo:
      return "eg_solo";
    case Schema::cbf:
      return "cbf";
  }
  return "unknown";
}

int ClassMap::index_of(std::string_view name) const {
  const std::string n = normalize_name(name);
  for (int i = 0; i < n_ipt(); ++i) {
    if (normalize_name(ipt_names[static_cast<std::size_t>(i)]) == n) {
      return i;
    }
  }
  const auto& aliases = technique_aliases();
  if (auto it = aliases.find(n); it != aliases.end()) {
    for (int i = 0; i < n_ipt(); ++i) {
      if (normalize_name(ipt_names[static_cast<std::size_t>(i)]) == it->second) {
        return i;
      }
    }
  }
  return -1;
}

void ClassMap::validate() const {
  if (ipt_names.empty()) {
    throw ConfigError("class map has no technique classes");
  }
  if (n_pitch() < 1) {
    throw ConfigError("pitch range [" + std::to_string(midi_min) + ", " +
                      std::to_string(midi_max) + "] is empty");
  }
  if (!(frame_rate > 0.0)) {
    throw ConfigError("frame rate must be positive");
  }
  std::set<std::string> seen;
  for (const auto& n : ipt_names) {
    if (!seen.insert(normalize_name(n)).second) {
      throw ConfigError("duplicate technique class '" + n + "'");
    }
  }
}

ClassMap ClassMap::for_schema(Schema schema) {
  ClassMap cm;
  switch (schema) {
    case Schema::guzheng_tech99:
      cm.ipt_names = {"vibrato",  "point_note", "upward_portamento", "downward_portamento",
                      "glissando", "tremolo",   "plucks"};
      // 21-string guzheng, D2..D6.
      cm.midi_min = 38;
      cm.midi_max = 86;
      break;
    case Schema::eg_solo:
      cm.ipt_names = {"normal", "slide",    "bend",   "vibrato", "mute",
                      "pull",   "harmonic", "hammer", "tap"};
      // 24-fret guitar plus bends, E2..E6.
      cm.midi_min = 40;
      cm.midi_max = 88;
      break;
    case Schema::cbf:
      cm.ipt_names = {"vibrato",      "tremolo",    "trill",    "flutter_tongue",
                      "acciaccatura", "portamento", "glissando"};
      cm.midi_min = 0;
      cm.midi_max = 0;
      cm.has_pitch = false;
      break;
  }
  return cm;
}

FrameGrid FrameGrid::zeros(int n_time, const ClassMap& class_map) {
  FrameGrid g;
  g.ipt = BinaryGrid::Zero(n_time, class_map.n_ipt());
  g.pitch = BinaryGrid::Zero(n_time, class_map.n_pitch());
  g.onset = BinaryVector::Zero(n_time);
  g.mask = BinaryVector::Ones(n_time);
  g.frame_rate = class_map.frame_rate;
  return g;
}

void FrameGrid::validate(bool ground_truth) const {
  const Eigen::Index n = mask.size();
  if (ipt.rows() != n || pitch.rows() != n || onset.size() != n) {
    throw ContractError("frame grid components disagree on frame count");
  }
  auto binary = [](auto const& a) { return (a <= 1).all(); };
  if (!binary(ipt) || !binary(pitch) || !binary(onset) || !binary(mask)) {
    throw ContractError("frame grid holds non-binary entries");
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    if (mask(t) == 0 && (onset(t) != 0 || ipt.row(t).any() || pitch.row(t).any())) {
      throw ContractError("masked frame " + std::to_string(t) + " carries labels");
    }
    if (ground_truth && onset(t) != 0 && !ipt.row(t).any()) {
      throw ContractError("onset at frame " + std::to_string(t) + " has no active class");
    }
  }
}

void SplitPlan::validate() const {
  for (std::size_t k = 0; k < folds.size(); ++k) {
    std::set<std::string> seen;
    for (const auto* part : {&folds[k].train, &folds[k].val, &folds[k].test}) {
      for (const auto& id : *part) {
        if (!seen.insert(id).second) {
          throw ContractError("fold " + std::to_string(k) + " lists '" + id +
                              "' in more than one subset");
        }
      }
    }
  }
}

std::vector<IPTEvent> parse_annotations(std::istream& in, Schema schema,
                                        const ClassMap& class_map,
                                        std::string_view source_name) {
  const std::string src(source_name);
  std::vector<IPTEvent> events;
  std::vector<std::string> unknown;
  std::string line;
  int line_no = 0;
  int c_onset = 0, c_offset = 1, c_tech = 2, c_pitch = 3;
  char delim = ',';
  bool header_done = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
      line.erase(0, 3);
    }
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') {
      continue;
    }
    if (!header_done) {
      header_done = true;
      if (view.find(',') == std::string_view::npos && view.find('\t') != std::string_view::npos) {
        delim = '\t';
      }
      auto fields = split_fields(view, delim);
      if (!parse_double(fields.front())) {
        std::vector<std::string> header;
        for (auto f : fields) {
          header.push_back(normalize_name(f));
        }
        c_onset = find_column(header, {"onset_sec", "onset", "onset_time", "start", "start_time"});
        c_offset =
            find_column(header, {"offset_sec", "offset", "offset_time", "end", "end_time"});
        c_tech = find_column(header, {"technique", "ipt", "tech", "label", "class"});
        c_pitch = find_column(header, {"midi_pitch", "pitch", "note", "midi"});
        if (c_onset < 0 || c_offset < 0 || c_tech < 0) {
          throw ParseError(src + ": row " + std::to_string(line_no) +
                           ": header lacks onset/offset/technique columns");
        }
        continue;
      }
    }
    auto fields = split_fields(view, delim);
    const int needed = std::max({c_onset, c_offset, c_tech});
    if (static_cast<int>(fields.size()) <= needed) {
      throw ParseError(src + ": row " + std::to_string(line_no) + ": expected at least " +
                       std::to_string(needed + 1) + " fields, got " +
                       std::to_string(fields.size()));
    }
    auto on = parse_double(fields[static_cast<std::size_t>(c_onset)]);
    auto off = parse_double(fields[static_cast<std::size_t>(c_offset)]);
    if (!on || !off) {
      throw ParseError(src + ": row " + std::to_string(line_no) + ": onset/offset not numeric");
    }
    if (*on < 0.0 || !(*off > *on)) {
      throw ParseError(src + ": row " + std::to_string(line_no) +
                       ": requires 0 <= onset < offset");
    }
    IPTEvent ev;
    ev.onset = *on;
    ev.offset = *off;
    const std::string_view tech = fields[static_cast<std::size_t>(c_tech)];
    ev.label = class_map.index_of(tech);
    if (ev.label < 0) {
      unknown.emplace_back(tech);
      continue;
    }
    if (c_pitch >= 0 && c_pitch < static_cast<int>(fields.size()) && schema != Schema::cbf) {
      const std::string_view pf = fields[static_cast<std::size_t>(c_pitch)];
      if (!pf.empty()) {
        auto p = parse_int(pf);
        if (!p) {
          throw ParseError(src + ": row " + std::to_string(line_no) + ": pitch '" +
                           std::string(pf) + "' is not a MIDI note number");
        }
        if (class_map.has_pitch && (*p < class_map.midi_min || *p > class_map.midi_max)) {
          throw SchemaError(src + ": row " + std::to_string(line_no) + ": pitch " +
                            std::to_string(*p) + " outside [" +
                            std::to_string(class_map.midi_min) + ", " +
                            std::to_string(class_map.midi_max) + "]");
        }
        if (class_map.has_pitch) {
          ev.pitch = *p;
        }
      }
    }
    events.push_back(ev);
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
    std::string list;
    for (const auto& u : unknown) {
      list += (list.empty() ? "" : ", ") + ("'" + u + "'");
    }
    throw SchemaError(src + ": unknown technique name(s) for schema " +
                      std::string(schema_name(schema)) + ": " + list);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const IPTEvent& a, const IPTEvent& b) { return a.onset < b.onset; });
  return events;
}

std::vector<IPTEvent> load_annotations(const std::filesystem::path& path, Schema schema,
                                       const ClassMap& class_map) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open annotation file " + path.string());
  }
  return parse_annotations(in, schema, class_map, path.string());
}

void write_annotations(std::ostream& out, std::span<const IPTEvent> events,
                       const ClassMap& class_map) {
  out << "onset_sec,offset_sec,technique,midi_pitch\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& e : events) {
    if (e.label < 0 || e.label >= class_map.n_ipt()) {
      throw RangeError("event label " + std::to_string(e.label) + " outside class map");
    }
    out << e.onset << ',' << e.offset << ','
        << class_map.ipt_names[static_cast<std::size_t>(e.label)] << ',';
    if (e.pitch) {
      out << *e.pitch;
    }
    out << '\n';
  }
}

void write_annotations(const std::filesystem::path& path, std::span<const IPTEvent> events,
                       const ClassMap& class_map) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  write_annotations(out, events, class_map);
}

namespace {

// First frame whose center is at or after `time`.
int first_center_at_or_after(double time, double fr) {
  int t = static_cast<int>(std::ceil(time * fr - 0.5));
  t = std::max(t, 0);
  while (t > 0 && (t - 1 + 0.5) / fr >= time) {
    --t;
  }
  while ((t + 0.5) / fr < time) {
    ++t;
  }
  return t;
}

}  // namespace

FrameGrid rasterize(std::span<const IPTEvent> events, const std::vector<bool>& has_onset,
                    int n_frames, const ClassMap& class_map) {
  if (n_frames < 1) {
    throw ContractError("rasterize: n_frames must be >= 1");
  }
  if (!has_onset.empty() && has_onset.size() != events.size()) {
    throw ContractError("rasterize: onset flags do not match event count");
  }
  const double fr = class_map.frame_rate;
  const double span_end = n_frames / fr;
  FrameGrid grid = FrameGrid::zeros(n_frames, class_map);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const IPTEvent& e = events[i];
    if (e.onset < 0.0 || e.offset > span_end + 1e-9 || !(e.offset > e.onset)) {
      std::ostringstream msg;
      msg << "rasterize: event [" << e.onset << ", " << e.offset << ") outside [0, " << span_end
          << "]";
      throw RangeError(msg.str());
    }
    if (e.label < 0 || e.label >= class_map.n_ipt()) {
      throw RangeError("rasterize: label " + std::to_string(e.label) + " outside [0, " +
                       std::to_string(class_map.n_ipt()) + ")");
    }
    int pitch_col = -1;
    if (e.pitch && class_map.has_pitch) {
      if (*e.pitch < class_map.midi_min || *e.pitch > class_map.midi_max) {
        throw RangeError("rasterize: pitch " + std::to_string(*e.pitch) +
                         " outside the pitch vocabulary");
      }
      pitch_col = *e.pitch - class_map.midi_min;
    }
    const int t0 = first_center_at_or_after(e.onset, fr);
    const int t1 = std::min(first_center_at_or_after(e.offset, fr), n_frames);
    if (t0 >= t1) {
      continue;  // shorter than a frame and straddles no frame center
    }
    for (int t = t0; t < t1; ++t) {
      grid.ipt(t, e.label) = 1;
      if (pitch_col >= 0) {
        grid.pitch(t, pitch_col) = 1;
      }
    }
    if (has_onset.empty() || has_onset[i]) {
      grid.onset(t0) = 1;
    }
  }
  return grid;
}

FrameGrid rasterize(std::span<const IPTEvent> events, int n_frames, const ClassMap& class_map) {
  return rasterize(events, std::vector<bool>{}, n_frames, class_map);
}

std::vector<Sample> segment(std::span<const float> waveform, std::span<const IPTEvent> events,
                            const ClassMap& class_map, int n_time, std::string_view source_id,
                            double window_seconds) {
  if (n_time < 1) {
    throw ContractError("segment: n_time must be >= 1");
  }
  const double fr = class_map.frame_rate;
  const auto hop = static_cast<std::size_t>(std::lround(kSampleRate / fr));
  const auto window = static_cast<std::size_t>(std::lround(window_seconds * kSampleRate));
  std::vector<Sample> out;
  if (waveform.size() < hop) {
    spdlog::warn("segment: '{}' is shorter than one frame ({} samples); no windows produced",
                 source_id, waveform.size());
    return out;
  }
  const double grid_span = n_time / fr;
  for (std::size_t start = 0; start < waveform.size(); start += window) {
    const std::size_t valid = std::min(window, waveform.size() - start);
    if (valid < hop) {
      break;
    }
    Sample s;
    s.source_id = std::string(source_id);
    s.window_offset = static_cast<double>(start) / kSampleRate;
    s.valid_seconds = static_cast<double>(valid) / kSampleRate;
    s.waveform.assign(window, 0.0f);
    std::copy_n(waveform.begin() + static_cast<std::ptrdiff_t>(start), valid, s.waveform.begin());

    const double limit = std::min({s.valid_seconds, grid_span, window_seconds});
    std::vector<bool> flags;
    for (const auto& e : events) {
      double lo = e.onset - s.window_offset;
      double hi = e.offset - s.window_offset;
      if (hi <= 0.0 || lo >= limit) {
        continue;
      }
      const bool starts_here = lo >= 0.0;
      lo = std::max(lo, 0.0);
      hi = std::min(hi, limit);
      if (hi <= lo) {
        continue;
      }
      IPTEvent local = e;
      local.onset = lo;
      local.offset = hi;
      s.events.push_back(local);
      flags.push_back(starts_here);
    }
    s.labels = rasterize(s.events, flags, n_time, class_map);
    for (int t = 0; t < n_time; ++t) {
      if ((t + 0.5) / fr >= s.valid_seconds) {
        s.labels.mask(t) = 0;
        s.labels.onset(t) = 0;
        s.labels.ipt.row(t).setZero();
        s.labels.pitch.row(t).setZero();
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

SplitPlan read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open split manifest " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("split manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) {
    throw ParseError("split manifest " + path.string() + " must map fold -> {train,val,test}");
  }
  std::vector<std::pair<int, SplitPlan::Fold>> folds;
  for (auto it = j.begin(); it != j.end(); ++it) {
    int k = 0;
    auto [ptr, ec] = std::from_chars(it.key().data(), it.key().data() + it.key().size(), k);
    if (ec != std::errc() || ptr != it.key().data() + it.key().size()) {
      throw ParseError("split manifest " + path.string() + ": fold key '" + it.key() +
                       "' is not an integer");
    }
    SplitPlan::Fold f;
    try {
      f.train = it.value().at("train").get<std::vector<std::string>>();
      f.val = it.value().value("val", std::vector<std::string>{});
      f.test = it.value().at("test").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("split manifest " + path.string() + ", fold " + it.key() + ": " +
                       e.what());
    }
    folds.emplace_back(k, std::move(f));
  }
  std::sort(folds.begin(), folds.end(), [](auto& a, auto& b) { return a.first < b.first; });
  SplitPlan plan;
  plan.policy = "manifest";
  for (auto& [k, f] : folds) {
    plan.folds.push_back(std::move(f));
  }
  plan.validate();
  return plan;
}

void write_split_manifest(const std::filesystem::path& path, const SplitPlan& plan) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    j[std::to_string(k)] = {{"train", plan.folds[k].train},
                            {"val", plan.folds[k].val},
                            {"test", plan.folds[k].test}};
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

SplitPlan make_splits(Schema schema, std::span<const RecordingInfo> recordings, std::uint64_t seed,
                      const std::optional<std::filesystem::path>& manifest) {
  std::mt19937_64 rng(seed);
  if (schema == Schema::cbf) {
    std::set<std::string> performer_set;
    for (const auto& r : recordings) {
      if (r.performer.empty()) {
        throw ConfigError("CBF split needs performer metadata; recording '" + r.id +
                          "' has none");
      }
      performer_set.insert(r.performer);
    }
    constexpr std::size_t kFolds = 5;
    if (performer_set.size() < kFolds) {
      throw ConfigError("CBF split needs at least 5 performers, found " +
                        std::to_string(performer_set.size()));
    }
    std::vector<std::string> performers(performer_set.begin(), performer_set.end());
    std::shuffle(performers.begin(), performers.end(), rng);
    SplitPlan plan;
    plan.policy = "cbf_performer_5fold";
    const std::size_t n = performers.size();
    for (std::size_t k = 0; k < kFolds; ++k) {
      std::set<std::string> held(performers.begin() + static_cast<std::ptrdiff_t>(k * n / kFolds),
                                 performers.begin() +
                                     static_cast<std::ptrdiff_t>((k + 1) * n / kFolds));
      SplitPlan::Fold fold;
      std::vector<std::string> train;
      for (const auto& r : recordings) {
        (held.contains(r.performer) ? fold.test : train).push_back(r.id);
      }
      // Validation: one in eight training recordings, drawn by seed.
      std::shuffle(train.begin(), train.end(), rng);
      const std::size_t n_val = train.size() >= 2 ? std::max<std::size_t>(1, train.size() / 8) : 0;
      fold.val.assign(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
      fold.train.assign(train.begin() + static_cast<std::ptrdiff_t>(n_val), train.end());
      std::sort(fold.train.begin(), fold.train.end());
      std::sort(fold.val.begin(), fold.val.end());
      std::sort(fold.test.begin(), fold.test.end());
      plan.folds.push_back(std::move(fold));
    }
    plan.validate();
    return plan;
  }

  if (manifest) {
    SplitPlan plan = read_split_manifest(*manifest);
    plan.policy = std::string(schema_name(schema)) + "_manifest";
    return plan;
  }
  spdlog::warn("no split manifest for {}; using a seeded 80/10/10 recording split",
               schema_name(schema));
  std::vector<std::string> ids;
  for (const auto& r : recordings) {
    ids.push_back(r.id);
  }
  std::sort(ids.begin(), ids.end());
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t n = ids.size();
  const std::size_t n_test = n / 10;
  const std::size_t n_val = n / 10;
  SplitPlan::Fold fold;
  fold.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  fold.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test),
                  ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  fold.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), ids.end());
  for (auto* v : {&fold.train, &fold.val, &fold.test}) {
    std::sort(v->begin(), v->end());
  }
  SplitPlan plan;
  plan.policy = std::string(schema_name(schema)) + "_seeded_80_10_10";
  plan.folds.push_back(std::move(fold));
  return plan;
}

std::vector<double> class_weights(std::span<const FrameGrid> train_grids) {
  if (train_grids.empty()) {
    throw ContractError("class_weights: no training grids");
  }
  const auto n_classes = train_grids.front().ipt.cols();
  std::vector<double> pos(static_cast<std::size_t>(n_classes), 0.0);
  double valid = 0.0;
  for (const auto& g : train_grids) {
    if (g.ipt.cols() != n_classes) {
      throw ContractError("class_weights: grids disagree on class count");
    }
    for (Eigen::Index t = 0; t < g.mask.size(); ++t) {
      if (g.mask(t) == 0) {
        continue;
      }
      valid += 1.0;
      for (Eigen::Index c = 0; c < n_classes; ++c) {
        pos[static_cast<std::size_t>(c)] += g.ipt(t, c);
      }
    }
  }
  if (valid == 0.0) {
    throw ContractError("class_weights: no valid frames");
  }
  std::vector<double> w(pos.size());
  for (std::size_t c = 0; c < pos.size(); ++c) {
    if (pos[c] == 0.0) {
      w[c] = 100.0;
      continue;
    }
    w[c] = std::clamp((valid - pos[c]) / std::max(pos[c], 1.0), 1.0, 100.0);
  }
  return w;
}

}  // namespace iptdet
