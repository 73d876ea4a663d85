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
#include "iptdet/error.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace iptdet;

namespace {

struct Flags {
  std::optional<fs::path> config;
  CliOverrides overrides;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "TOML run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--variant", f.overrides.variant,
                  "IPT_probing, IPT_finetune, IPT+Pitch, IPT+Pitch+Onset or MERTech");
  cmd->add_option("--fold", f.overrides.fold, "fold index in the split manifest");
  cmd->add_option("--output", f.overrides.output, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrument playing technique detection"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "normalize a raw dataset and write splits");
  std::string schema;
  fs::path raw_root;
  fs::path prepared = "prepared";
  std::uint64_t seed = 0;
  std::optional<fs::path> manifest;
  prepare->add_option("--dataset", schema, "guzheng_tech99, eg_solo or cbf")->required();
  prepare->add_option("--root", raw_root, "raw dataset directory")->required();
  prepare->add_option("--output", prepared, "prepared dataset directory");
  prepare->add_option("--seed", seed, "seed for generated splits");
  prepare->add_option("--split-manifest", manifest, "published split manifest (JSON)")
      ->check(CLI::ExistingFile);

  // train
  Flags train_flags;
  auto* train = app.add_subcommand("train", "finetune a model on one fold");
  add_common(train, train_flags);

  // evaluate
  Flags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a split");
  add_common(evaluate, eval_flags);
  evaluate->add_option("--checkpoint", eval_flags.overrides.checkpoint, "checkpoint directory");
  evaluate->add_option("--split", eval_flags.overrides.split, "train, val or test");
  evaluate->add_option("--tolerance", eval_flags.overrides.tolerance, "onset tolerance (s)");

  // predict
  Flags predict_flags;
  fs::path audio;
  auto* predict = app.add_subcommand("predict", "export events and posteriors for one file");
  predict->add_option("--config", predict_flags.config, "TOML run configuration (decode keys)")
      ->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", predict_flags.overrides.checkpoint, "checkpoint directory")
      ->required();
  predict->add_option("audio", audio, "WAV or FLAC file")->required()->check(CLI::ExistingFile);
  predict->add_option("--output", predict_flags.overrides.output, "output directory");

  // report
  Flags report_flags;
  std::vector<fs::path> reports;
  auto* report = app.add_subcommand("report", "tabulate evaluation reports");
  report->add_option("--config", report_flags.config, "TOML run configuration")
      ->check(CLI::ExistingFile);
  report->add_option("reports", reports, "report.json files")->required()->check(CLI::ExistingFile);
  report->add_option("--output", report_flags.overrides.output, "output directory");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*prepare) {
      cmd_prepare(parse_schema(schema), raw_root, prepared, seed, manifest);
    } else if (*train) {
      static constexpr std::string_view kRequired[] = {"dataset.root", "model.variant"};
      const auto cfg = resolve_config(train_flags.config, train_flags.overrides, kRequired);
      const auto outcome = cmd_train(cfg);
      spdlog::info("{} steps, {} epochs, best validation frame macro-F1 {:.4f} (epoch {})",
                   outcome.steps, outcome.epochs_run, outcome.best_val_frame_macro_f1,
                   outcome.best_epoch);
    } else if (*evaluate) {
      static constexpr std::string_view kRequired[] = {"dataset.root", "output.checkpoint"};
      const auto cfg = resolve_config(eval_flags.config, eval_flags.overrides, kRequired);
      const auto r = cmd_evaluate(cfg);
      std::printf("%s\n", r.to_json().c_str());
    } else if (*predict) {
      const auto cfg = resolve_config(predict_flags.config, predict_flags.overrides);
      const fs::path out = predict_flags.overrides.output.value_or(".");
      cmd_predict(*cfg.checkpoint, audio, out, cfg.decode);
    } else if (*report) {
      const auto cfg = resolve_config(report_flags.config, report_flags.overrides);
      const auto r = cmd_report(reports, cfg.output_dir, cfg.aggregation);
      std::printf("table written to %s\n", r.table_csv.string().c_str());
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
