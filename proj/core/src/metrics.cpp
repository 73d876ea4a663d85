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

#include "iptdet/metrics.hpp"

#include "iptdet/error.hpp"
#include "plot.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace iptdet {

using nlohmann::ordered_json;

double Counts::f1() const {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Result F1Result::from_counts(std::vector<Counts> per_class) {
  F1Result r;
  double sum = 0.0;
  for (const auto& c : per_class) {
    r.pooled += c;
    sum += c.f1();
  }
  r.macro = per_class.empty() ? 0.0 : sum / static_cast<double>(per_class.size());
  r.micro = r.pooled.f1();
  r.micro_zero_support = r.pooled.empty();
  r.per_class = std::move(per_class);
  return r;
}

std::vector<Counts> frame_counts(const BinaryGrid& pred, const BinaryGrid& ref,
                                 const BinaryVector& mask) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols() || mask.size() != ref.rows()) {
    throw ContractError("frame_f1: prediction, reference and mask shapes differ");
  }
  std::vector<Counts> out(static_cast<std::size_t>(ref.cols()));
  for (Eigen::Index t = 0; t < ref.rows(); ++t) {
    if (mask(t) == 0) {
      continue;
    }
    for (Eigen::Index c = 0; c < ref.cols(); ++c) {
      const bool p = pred(t, c) != 0;
      const bool r = ref(t, c) != 0;
      auto& k = out[static_cast<std::size_t>(c)];
      k.tp += p && r;
      k.fp += p && !r;
      k.fn += !p && r;
    }
  }
  return out;
}

F1Result frame_f1(const BinaryGrid& pred, const BinaryGrid& ref, const BinaryVector& mask) {
  return F1Result::from_counts(frame_counts(pred, ref, mask));
}

namespace {

bool within(double a, double b, double tolerance) {
  // Distances are rounded to 4 decimals before comparison so that
  // tolerance-boundary cases do not hinge on float noise.
  const double d = std::round(std::abs(a - b) * 1e4) / 1e4;
  return d <= tolerance;
}

bool augment(int u, const std::vector<std::vector<int>>& adj, std::vector<char>& seen,
             std::vector<int>& match_ref) {
  for (int v : adj[static_cast<std::size_t>(u)]) {
    if (seen[static_cast<std::size_t>(v)]) {
      continue;
    }
    seen[static_cast<std::size_t>(v)] = 1;
    int& owner = match_ref[static_cast<std::size_t>(v)];
    if (owner < 0 || augment(owner, adj, seen, match_ref)) {
      owner = u;
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<std::pair<int, int>> match_events(std::span<const IPTEvent> pred,
                                              std::span<const IPTEvent> ref, double tolerance) {
  std::vector<std::vector<int>> adj(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (pred[i].label == ref[j].label && within(pred[i].onset, ref[j].onset, tolerance)) {
        adj[i].push_back(static_cast<int>(j));
      }
    }
  }
  std::vector<int> match_ref(ref.size(), -1);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<char> seen(ref.size(), 0);
    augment(static_cast<int>(i), adj, seen, match_ref);
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    if (match_ref[j] >= 0) {
      pairs.emplace_back(match_ref[j], static_cast<int>(j));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::vector<Counts> event_counts(std::span<const IPTEvent> pred, std::span<const IPTEvent> ref,
                                 double tolerance, int n_classes) {
  std::vector<Counts> out(static_cast<std::size_t>(n_classes));
  auto check = [n_classes](const IPTEvent& e) {
    if (e.label < 0 || e.label >= n_classes) {
      throw ContractError("event label " + std::to_string(e.label) + " outside [0, " +
                          std::to_string(n_classes) + ")");
    }
  };
  for (const auto& e : pred) {
    check(e);
    out[static_cast<std::size_t>(e.label)].fp++;
  }
  for (const auto& e : ref) {
    check(e);
    out[static_cast<std::size_t>(e.label)].fn++;
  }
  for (const auto& [i, j] : match_events(pred, ref, tolerance)) {
    auto& c = out[static_cast<std::size_t>(pred[static_cast<std::size_t>(i)].label)];
    c.tp++;
    c.fp--;
    c.fn--;
  }
  return out;
}

F1Result event_f1(std::span<const IPTEvent> pred, std::span<const IPTEvent> ref, double tolerance,
                  const ClassMap& class_map) {
  return F1Result::from_counts(event_counts(pred, ref, tolerance, class_map.n_ipt()));
}

namespace {

EvalReport report_from_counts(const std::vector<std::string>& names, std::vector<Counts> frame,
                              std::vector<Counts> event, double tolerance) {
  if (frame.size() != names.size() || event.size() != names.size()) {
    throw ContractError("report: per-class counts do not match the class map");
  }
  const F1Result f = F1Result::from_counts(std::move(frame));
  const F1Result e = F1Result::from_counts(std::move(event));
  EvalReport r;
  r.frame_micro_f1 = f.micro;
  r.frame_macro_f1 = f.macro;
  r.event_micro_f1 = e.micro;
  r.event_macro_f1 = e.macro;
  r.frame_micro_zero_support = f.micro_zero_support;
  r.event_micro_zero_support = e.micro_zero_support;
  r.tolerance = tolerance;
  for (std::size_t c = 0; c < names.size(); ++c) {
    ClassReport cr;
    cr.name = names[c];
    cr.frame = f.per_class[c];
    cr.event = e.per_class[c];
    cr.frame_f1 = cr.frame.f1();
    cr.event_f1 = cr.event.f1();
    cr.support = cr.frame.tp + cr.frame.fn;
    cr.event_support = cr.event.tp + cr.event.fn;
    cr.zero_support = cr.frame.empty();
    r.per_class.push_back(std::move(cr));
  }
  return r;
}

ordered_json counts_json(const Counts& c) {
  return ordered_json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
}

Counts counts_from(const nlohmann::json& j) {
  return Counts{j.at("tp").get<long>(), j.at("fp").get<long>(), j.at("fn").get<long>()};
}

}  // namespace

EvalReport EvalReport::from_counts(const ClassMap& class_map, std::vector<Counts> frame,
                                   std::vector<Counts> event, double tolerance) {
  return report_from_counts(class_map.ipt_names, std::move(frame), std::move(event), tolerance);
}

void EvalReport::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(frame_micro_f1) || !unit(frame_macro_f1) || !unit(event_micro_f1) ||
      !unit(event_macro_f1)) {
    throw ContractError("report: F1 outside [0, 1]");
  }
  if (per_class.empty()) {
    return;
  }
  double fsum = 0.0;
  double esum = 0.0;
  for (const auto& c : per_class) {
    if (!unit(c.frame_f1) || !unit(c.event_f1)) {
      throw ContractError("report: per-class F1 outside [0, 1] for " + c.name);
    }
    fsum += c.frame_f1;
    esum += c.event_f1;
  }
  const double n = static_cast<double>(per_class.size());
  if (std::abs(fsum / n - frame_macro_f1) > 1e-9 || std::abs(esum / n - event_macro_f1) > 1e-9) {
    throw ContractError("report: macro F1 differs from the mean of per-class values");
  }
}

std::string EvalReport::to_json() const {
  ordered_json j;
  j["frame_micro_f1"] = frame_micro_f1;
  j["frame_macro_f1"] = frame_macro_f1;
  j["event_micro_f1"] = event_micro_f1;
  j["event_macro_f1"] = event_macro_f1;
  j["tolerance"] = tolerance;
  j["frame_micro_zero_support"] = frame_micro_zero_support;
  j["event_micro_zero_support"] = event_micro_zero_support;
  j["variant"] = variant;
  j["split"] = split;
  j["aggregation"] = aggregation;
  j["recordings"] = recordings;
  j["per_class"] = ordered_json::array();
  for (const auto& c : per_class) {
    j["per_class"].push_back(ordered_json{{"name", c.name},
                                          {"frame_f1", c.frame_f1},
                                          {"event_f1", c.event_f1},
                                          {"support", c.support},
                                          {"event_support", c.event_support},
                                          {"zero_support", c.zero_support},
                                          {"frame", counts_json(c.frame)},
                                          {"event", counts_json(c.event)}});
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.frame_micro_f1 = j.at("frame_micro_f1").get<double>();
    r.frame_macro_f1 = j.at("frame_macro_f1").get<double>();
    r.event_micro_f1 = j.at("event_micro_f1").get<double>();
    r.event_macro_f1 = j.at("event_macro_f1").get<double>();
    r.tolerance = j.at("tolerance").get<double>();
    r.frame_micro_zero_support = j.value("frame_micro_zero_support", false);
    r.event_micro_zero_support = j.value("event_micro_zero_support", false);
    r.variant = j.value("variant", "");
    r.split = j.value("split", "");
    r.aggregation = j.value("aggregation", "");
    r.recordings = j.value("recordings", 0);
    for (const auto& c : j.at("per_class")) {
      ClassReport cr;
      cr.name = c.at("name").get<std::string>();
      cr.frame_f1 = c.at("frame_f1").get<double>();
      cr.event_f1 = c.at("event_f1").get<double>();
      cr.support = c.value("support", 0L);
      cr.event_support = c.value("event_support", 0L);
      cr.zero_support = c.value("zero_support", false);
      if (c.contains("frame")) {
        cr.frame = counts_from(c.at("frame"));
      }
      if (c.contains("event")) {
        cr.event = counts_from(c.at("event"));
      }
      r.per_class.push_back(std::move(cr));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed evaluation report: ") + e.what());
  }
}

void EvalReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << to_json() << '\n';
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

EvalReport EvalReport::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

EvalReport aggregate_reports(std::span<const EvalReport> reports, Aggregation mode) {
  if (reports.empty()) {
    throw ContractError("no reports to aggregate");
  }
  const auto& first = reports.front();
  std::vector<std::string> names;
  for (const auto& c : first.per_class) {
    names.push_back(c.name);
  }
  for (const auto& r : reports) {
    bool same = r.per_class.size() == names.size();
    for (std::size_t c = 0; same && c < names.size(); ++c) {
      same = r.per_class[c].name == names[c];
    }
    if (!same) {
      throw CompatibilityError("reports use different class maps");
    }
    if (r.tolerance != first.tolerance) {
      throw CompatibilityError("reports use different onset tolerances");
    }
  }
  std::vector<Counts> frame(names.size());
  std::vector<Counts> event(names.size());
  int recordings = 0;
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      frame[c] += r.per_class[c].frame;
      event[c] += r.per_class[c].event;
    }
    recordings += r.recordings;
  }
  EvalReport out = report_from_counts(names, frame, event, first.tolerance);
  if (mode == Aggregation::mean) {
    const double n = static_cast<double>(reports.size());
    auto mean = [&](auto member) {
      double s = 0.0;
      for (const auto& r : reports) {
        s += member(r);
      }
      return s / n;
    };
    out.frame_micro_f1 = mean([](const EvalReport& r) { return r.frame_micro_f1; });
    out.frame_macro_f1 = mean([](const EvalReport& r) { return r.frame_macro_f1; });
    out.event_micro_f1 = mean([](const EvalReport& r) { return r.event_micro_f1; });
    out.event_macro_f1 = mean([](const EvalReport& r) { return r.event_macro_f1; });
    for (std::size_t c = 0; c < names.size(); ++c) {
      out.per_class[c].frame_f1 =
          mean([c](const EvalReport& r) { return r.per_class[c].frame_f1; });
      out.per_class[c].event_f1 =
          mean([c](const EvalReport& r) { return r.per_class[c].event_f1; });
    }
    // Keep the macro figures consistent with the averaged per-class values.
    double fsum = 0.0;
    double esum = 0.0;
    for (const auto& c : out.per_class) {
      fsum += c.frame_f1;
      esum += c.event_f1;
    }
    out.frame_macro_f1 = fsum / static_cast<double>(names.size());
    out.event_macro_f1 = esum / static_cast<double>(names.size());
  }
  out.aggregation = mode == Aggregation::mean ? "mean" : "pooled";
  out.variant = first.variant;
  out.split = first.split;
  out.recordings = recordings;
  return out;
}

std::pair<std::filesystem::path, std::filesystem::path> per_class_histogram(
    const EvalReport& report, const std::filesystem::path& output) {
  if (report.per_class.empty()) {
    throw ContractError("histogram needs per-class entries");
  }
  auto stem = output;
  if (stem.extension() == ".png" || stem.extension() == ".csv") {
    stem.replace_extension();
  }
  const auto png_path = std::filesystem::path(stem.string() + ".png");
  const auto csv_path = std::filesystem::path(stem.string() + ".csv");
  if (stem.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(stem.parent_path(), ec);
  }

  {
    std::ofstream csv(csv_path);
    if (!csv) {
      throw IoError("cannot write " + csv_path.string());
    }
    csv << "class,frame_f1,event_f1,support\n";
    char buf[64];
    for (const auto& c : report.per_class) {
      csv << c.name;
      std::snprintf(buf, sizeof buf, ",%.17g", c.frame_f1);
      csv << buf;
      std::snprintf(buf, sizeof buf, ",%.17g", c.event_f1);
      csv << buf << ',' << c.support << '\n';
    }
    if (!csv) {
      throw IoError("failed writing " + csv_path.string());
    }
  }

  constexpr int scale = 2;
  constexpr int bar_w = 48;
  constexpr int gap = 24;
  constexpr int plot_h = 300;
  constexpr int left = 70;
  constexpr int top = 50;
  std::size_t longest = 1;
  for (const auto& c : report.per_class) {
    longest = std::max(longest, c.name.size());
  }
  const int n = static_cast<int>(report.per_class.size());
  const int label_h = static_cast<int>(longest) * 8 * scale + 10;
  const int width = left + n * (bar_w + gap) + gap;
  const int height = top + plot_h + label_h + 20;
  const plot::Rgb white{255, 255, 255};
  const plot::Rgb black{0, 0, 0};
  const plot::Rgb grid{220, 220, 220};
  const plot::Rgb bar{70, 110, 170};
  plot::Canvas canvas(std::max(width, 360), height, white);
  canvas.text(left, 15, "FRAME-LEVEL F1 PER CLASS", black, scale);
  for (int k = 0; k <= 4; ++k) {
    const int y = top + plot_h - k * plot_h / 4;
    canvas.fill_rect(left, y, n * (bar_w + gap) + gap, 1, grid);
    char tick[8];
    std::snprintf(tick, sizeof tick, "%.2f", k / 4.0);
    canvas.text(left - plot::Canvas::text_width(tick, scale) - 6, y - 7, tick, black, scale);
  }
  canvas.fill_rect(left, top, 2, plot_h + 1, black);
  for (int i = 0; i < n; ++i) {
    const auto& c = report.per_class[static_cast<std::size_t>(i)];
    const double f = std::clamp(c.frame_f1, 0.0, 1.0);
    const int h = static_cast<int>(std::lround(f * plot_h));
    const int x = left + gap + i * (bar_w + gap);
    canvas.fill_rect(x, top + plot_h - h, bar_w, h, bar);
    // Class names run top to bottom, one glyph per line.
    for (std::size_t k = 0; k < c.name.size(); ++k) {
      canvas.text(x + bar_w / 2 - 3 * scale, top + plot_h + 8 + static_cast<int>(k) * 8 * scale,
                  std::string_view(&c.name[k], 1), black, scale);
    }
  }
  canvas.write_png(png_path);
  return {png_path, csv_path};
}

}  // namespace iptdet
