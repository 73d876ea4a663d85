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


#include "iptdet/audio.hpp"
#include "iptdet/cli.hpp"
#include "iptdet/config.hpp"
#include "iptdet/error.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace iptdet {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<float> tone(double seconds, double hz) {
  std::vector<float> s(static_cast<std::size_t>(seconds * kSampleRate));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<float>(0.3 * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate));
  }
  return s;
}

// Ten 2.5 s Guzheng-style recordings spread over two subdirectories.
void write_raw(const fs::path& root) {
  for (int i = 0; i < 10; ++i) {
    const fs::path dir = root / (i < 5 ? "a" : "b");
    fs::create_directories(dir);
    const std::string stem = "rec" + std::to_string(i);
    write_wav(dir / (stem + ".wav"), tone(2.5, 220.0 + 20 * i), kSampleRate);
    std::ofstream csv(dir / (stem + ".csv"));
    csv << "onset_sec,offset_sec,technique,midi_pitch\n"
        << "0.2,1.0,vibrato,57\n"
        << "1.2,2.0,point_note,60\n";
  }
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::temp_directory_path() / ("iptdet_cli_" + std::to_string(::getpid())));
    fs::remove_all(*root_);
    write_raw(*root_ / "raw");
    cmd_prepare(Schema::guzheng_tech99, *root_ / "raw", *root_ / "prepared", 0);

    CliOverrides o;
    o.variant = "MERTech";
    o.output = *root_ / "run";
    config_ = new RunConfig(resolve_config(std::nullopt, o));
    config_->dataset_root = *root_ / "prepared";
    config_->train.max_steps = 2;
    config_->train.epochs = 1;
    config_->head.hidden = 32;
    outcome_ = new TrainOutcome(cmd_train(*config_));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete outcome_;
    delete config_;
    delete root_;
  }

  static fs::path* root_;
  static RunConfig* config_;
  static TrainOutcome* outcome_;
};

fs::path* CliPipeline::root_ = nullptr;
RunConfig* CliPipeline::config_ = nullptr;
TrainOutcome* CliPipeline::outcome_ = nullptr;

TEST_F(CliPipeline, PrepareWritesManifestSplitsStats) {
  const auto ds = PreparedDataset::load(*root_ / "prepared");
  EXPECT_EQ(ds.recordings.size(), 10u);
  EXPECT_EQ(ds.class_map.n_ipt(), 7);
  const auto& r = ds.find("rec3");
  EXPECT_NEAR(r.duration, 2.5, 1e-6);
  EXPECT_TRUE(r.audio.is_absolute());
  EXPECT_EQ(slurp(r.annotations).substr(0, 41), "onset_sec,offset_sec,technique,midi_pitch");
  EXPECT_THROW(ds.find("rec99"), ConfigError);

  const auto rec = ds.load_recording(r);
  ASSERT_EQ(rec.events.size(), 2u);
  EXPECT_EQ(rec.events[1].label, 1);
  EXPECT_EQ(rec.events[1].pitch, 60);

  const auto plan = read_split_manifest(*root_ / "prepared" / "splits.json");
  ASSERT_EQ(plan.folds.size(), 1u);
  const auto& f = plan.folds[0];
  EXPECT_EQ(f.train.size(), 8u);
  EXPECT_EQ(f.val.size(), 1u);
  EXPECT_EQ(f.test.size(), 1u);

  const auto stats = nlohmann::json::parse(slurp(*root_ / "prepared" / "stats.json"));
  EXPECT_EQ(stats["recordings"], 10);
  EXPECT_EQ(stats["classes"][0]["name"], "vibrato");
  EXPECT_EQ(stats["classes"][0]["events"], 10);
  EXPECT_EQ(stats["classes"][6]["events"], 0);
}

TEST_F(CliPipeline, PrepareListsEveryProblem) {
  const fs::path raw = *root_ / "raw_bad";
  write_raw(raw);
  fs::remove(raw / "a" / "rec1.csv");
  fs::remove(raw / "b" / "rec7.csv");
  try {
    cmd_prepare(Schema::guzheng_tech99, raw, *root_ / "prepared_bad", 0);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rec1"), std::string::npos);
    EXPECT_NE(msg.find("rec7"), std::string::npos);
  }
  EXPECT_THROW(cmd_prepare(Schema::guzheng_tech99, *root_ / "nothing", *root_ / "p2", 0), IoError);
}

TEST_F(CliPipeline, TrainWritesCheckpointAndLog) {
  ASSERT_TRUE(outcome_->checkpoint.has_value());
  EXPECT_TRUE(fs::exists(*outcome_->checkpoint / "model.json"));
  EXPECT_TRUE(fs::exists(config_->output_dir / "train_log.jsonl"));
  EXPECT_TRUE(fs::exists(config_->output_dir / "run.json"));
  const auto meta = read_checkpoint_meta(*outcome_->checkpoint);
  EXPECT_EQ(meta.variant, Variant::mertech);
  EXPECT_EQ(meta.schema, "guzheng_tech99");
}

TEST_F(CliPipeline, EvaluateIsDeterministic) {
  RunConfig cfg = *config_;
  cfg.checkpoint = *outcome_->checkpoint;
  cfg.output_dir = *root_ / "eval";
  cfg.split = "train";
  const auto a = cmd_evaluate(cfg);
  const auto first = slurp(cfg.output_dir / "report.json");
  const auto b = cmd_evaluate(cfg);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(first, slurp(cfg.output_dir / "report.json"));
  EXPECT_EQ(a.split, "train");
  EXPECT_TRUE(fs::exists(cfg.output_dir / "per_class.png"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "per_class.csv"));

  cfg.checkpoint.reset();
  EXPECT_THROW(cmd_evaluate(cfg), ConfigError);
  cfg.checkpoint = *outcome_->checkpoint;
  cfg.fold = 7;
  EXPECT_THROW(cmd_evaluate(cfg), ConfigError);
}

TEST_F(CliPipeline, PredictDeterministicAndPadsShortClips) {
  const fs::path clip = *root_ / "clip.wav";
  write_wav(clip, tone(1.0, 330.0), kSampleRate);
  const auto a = cmd_predict(*outcome_->checkpoint, clip, *root_ / "pred1", DecodeConfig{});
  const auto b = cmd_predict(*outcome_->checkpoint, clip, *root_ / "pred2", DecodeConfig{});
  EXPECT_EQ(a.events_csv.filename(), "clip.events.csv");
  EXPECT_EQ(slurp(a.events_csv), slurp(b.events_csv));
  EXPECT_EQ(slurp(a.posteriors_csv), slurp(b.posteriors_csv));
  for (const auto& e : a.events) {
    EXPECT_LE(e.offset, 1.0 + 1.0 / 75.0);
  }
  std::ifstream post(a.posteriors_csv);
  std::string header;
  std::getline(post, header);
  EXPECT_EQ(header.substr(0, 26), "frame,time_sec,valid,onset");
  EXPECT_THROW(cmd_predict(*root_ / "missing", clip, *root_ / "pred3", DecodeConfig{}), IoError);
}

EvalReport report_for(const std::string& variant, const ClassMap& cm, long tp) {
  std::vector<Counts> frame(static_cast<std::size_t>(cm.n_ipt()), Counts{tp, 2, 3});
  std::vector<Counts> event(static_cast<std::size_t>(cm.n_ipt()), Counts{tp, 1, 1});
  auto r = EvalReport::from_counts(cm, frame, event, 0.05);
  r.variant = variant;
  return r;
}

TEST_F(CliPipeline, ReportTableRoundTrip) {
  const auto cm = ClassMap::for_schema(Schema::guzheng_tech99);
  std::vector<fs::path> paths;
  const char* variants[] = {"IPT_probing", "IPT_finetune", "IPT+Pitch", "IPT+Pitch+Onset",
                            "MERTech"};
  for (int i = 0; i < 5; ++i) {
    paths.push_back(*root_ / "reports" / (std::to_string(i) + ".json"));
    fs::create_directories(paths.back().parent_path());
    report_for(variants[i], cm, 5 + i).save(paths.back());
  }
  // A second fold of MERTech folds into the same row.
  paths.push_back(*root_ / "reports" / "5.json");
  report_for("MERTech", cm, 20).save(paths.back());

  const auto out = cmd_report(paths, *root_ / "table", Aggregation::mean);
  ASSERT_EQ(out.rows.size(), 5u);
  EXPECT_EQ(out.rows[4].variant, "MERTech");
  EXPECT_EQ(out.figures.size(), 5u);
  EXPECT_EQ(read_report_table(out.table_csv), out.rows);
  EXPECT_NE(slurp(out.table_md).find("mean"), std::string::npos);

  auto other = cm;
  other.ipt_names[0] = "tremolo";
  paths.push_back(*root_ / "reports" / "bad.json");
  report_for("MERTech", other, 5).save(paths.back());
  EXPECT_THROW(cmd_report(paths, *root_ / "table_bad", Aggregation::mean), CompatibilityError);
}

}  // namespace
}  // namespace iptdet
