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

#include "iptdet/trainer.hpp"

#include "iptdet/error.hpp"

#include <spdlog/spdlog.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace iptdet {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) {
    throw ConfigError("train.lr must be > 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("train.momentum must lie in [0, 1)");
  }
  if (batch_size < 1) {
    throw ConfigError("train.batch_size must be >= 1");
  }
  if (!(grad_clip_norm > 0.0)) {
    throw ConfigError("train.grad_clip_norm must be > 0");
  }
  if (epochs < 1 && max_steps < 1) {
    throw ConfigError("train.epochs must be >= 1");
  }
  if (patience < 0 || max_steps < 0) {
    throw ConfigError("train.patience and train.max_steps must be >= 0");
  }
}

double cosine_lr(double base, long step, long total) {
  if (total <= 0) {
    return base;
  }
  const double s = static_cast<double>(std::clamp(step, 0L, total));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * s / static_cast<double>(total)));
}

namespace {

template <typename F>
void for_each_trainable(std::span<const ParamGroup> groups, F&& f) {
  for (const auto& g : groups) {
    if (g.params == nullptr) {
      continue;
    }
    for (const auto& e : g.params->entries()) {
      if (e.var.requires_grad() && e.var.has_grad()) {
        f(g, e);
      }
    }
  }
}

}  // namespace

ClipResult clip_gradients(std::span<const ParamGroup> groups, double max_norm) {
  double sq = 0.0;
  for_each_trainable(groups, [&](const ParamGroup& g, const nn::ParameterSet::Entry& e) {
    const double s = e.var.grad().cast<double>().squaredNorm();
    if (!std::isfinite(s)) {
      throw NumericError("non-finite gradient in parameter group '" + g.name + "' (" + e.name +
                         ")");
    }
    sq += s;
  });
  ClipResult r;
  r.norm = std::sqrt(sq);
  r.clipped_norm = r.norm;
  if (r.norm > max_norm) {
    const auto scale = static_cast<nn::Scalar>(max_norm / r.norm);
    for_each_trainable(groups, [&](const ParamGroup&, const nn::ParameterSet::Entry& e) {
      e.var.node()->grad *= scale;
    });
    double after = 0.0;
    for_each_trainable(groups, [&](const ParamGroup&, const nn::ParameterSet::Entry& e) {
      after += e.var.grad().cast<double>().squaredNorm();
    });
    r.clipped_norm = std::sqrt(after);
  }
  return r;
}

void Sgd::step(std::span<const ParamGroup> groups, double lr) {
  for_each_trainable(groups, [&](const ParamGroup&, const nn::ParameterSet::Entry& e) {
    const nn::Node* key = e.var.node().get();
    auto it = velocity_.find(key);
    if (it == velocity_.end()) {
      it = velocity_.emplace(key, e.var.grad()).first;
    } else {
      it->second = static_cast<nn::Scalar>(momentum_) * it->second + e.var.grad();
    }
    e.var.node()->value -= static_cast<nn::Scalar>(lr) * it->second;
  });
}

std::string StepLog::to_json() const {
  nlohmann::ordered_json j{{"step", step},
                           {"epoch", epoch},
                           {"lr", lr},
                           {"loss", loss},
                           {"loss_ipt", loss_ipt},
                           {"loss_pitch", loss_pitch},
                           {"loss_onset", loss_onset},
                           {"grad_norm", grad_norm},
                           {"clipped_norm", clipped_norm}};
  return j.dump();
}

void configure_backbone(const IptModel& model, Encoder& encoder, bool freeze_extractor) {
  if (traits(model.variant()).backbone_trainable) {
    encoder.set_trainable(true);
    encoder.set_extractor_frozen(freeze_extractor);
  } else {
    encoder.set_trainable(false);
  }
}

namespace {

bool backbone_has_trainable(const Encoder& encoder) {
  for (const auto& e : encoder.parameters().entries()) {
    if (e.var.requires_grad()) {
      return true;
    }
  }
  return false;
}

std::vector<Counts> window_counts(const IptModel& model, const Encoder& encoder,
                                  const Sample& s, double threshold) {
  const PosteriorSet p = model.infer(encoder.encode(s.waveform));
  return frame_counts(decode_frames(p.y_ipt, threshold), s.labels.ipt, s.labels.mask);
}

void dump_batch(const std::optional<std::filesystem::path>& dir, long step,
                std::span<const Sample* const> batch) {
  if (!dir) {
    return;
  }
  nlohmann::ordered_json j;
  j["step"] = step;
  j["samples"] = nlohmann::ordered_json::array();
  for (const Sample* s : batch) {
    j["samples"].push_back({{"source_id", s->source_id}, {"window_offset", s->window_offset}});
  }
  std::ofstream(*dir / "nan_batch.json") << j.dump(2) << '\n';
}

}  // namespace

double window_frame_macro_f1(const IptModel& model, const Encoder& encoder,
                             std::span<const Sample> samples, double threshold) {
  nn::NoGradGuard guard;
  std::vector<Counts> total(static_cast<std::size_t>(model.class_map().n_ipt()));
  for (const auto& s : samples) {
    const auto c = window_counts(model, encoder, s, threshold);
    for (std::size_t k = 0; k < total.size(); ++k) {
      total[k] += c[k];
    }
  }
  return F1Result::from_counts(std::move(total)).macro;
}

TrainOutcome train(IptModel& model, Encoder& encoder, const TrainConfig& cfg,
                   const TrainInputs& inputs,
                   const std::optional<std::filesystem::path>& output_dir, CheckpointMeta meta) {
  cfg.validate();
  inputs.loss.validate();
  inputs.decode.validate();
  if (inputs.train.empty()) {
    throw ContractError("training split is empty");
  }
  if (encoder.feature_dim() != model.feature_dim() ||
      encoder.num_layers() != model.num_layers()) {
    throw ContractError("encoder output shape does not match the model head");
  }
  configure_backbone(model, encoder, cfg.freeze_extractor);
  const bool backbone_trainable = backbone_has_trainable(encoder);
  const bool pitch_labels = model.class_map().has_pitch;

  std::optional<std::ofstream> log_file;
  if (output_dir) {
    std::filesystem::create_directories(*output_dir);
    log_file.emplace(*output_dir / "train_log.jsonl");
    if (!*log_file) {
      throw IoError("cannot write " + (*output_dir / "train_log.jsonl").string());
    }
  }

  const std::size_t n = inputs.train.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const long batches_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total_steps = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * batches_per_epoch;

  // Frozen backbones produce the same features every epoch.
  const std::size_t bytes_per_stack = static_cast<std::size_t>(encoder.num_layers()) *
                                      encoder.frames_per_window() * encoder.feature_dim() *
                                      sizeof(nn::Scalar);
  const bool use_cache =
      !backbone_trainable && n * bytes_per_stack <= cfg.feature_cache_mib * (std::size_t{1} << 20);
  std::vector<std::optional<LayerStack>> cache(use_cache ? n : 0);
  auto features = [&](std::size_t i) -> LayerStack {
    if (!use_cache) {
      if (backbone_trainable) {
        return encoder.encode(inputs.train[i].waveform);
      }
      nn::NoGradGuard guard;
      return encoder.encode(inputs.train[i].waveform);
    }
    if (!cache[i]) {
      nn::NoGradGuard guard;
      cache[i] = encoder.encode(inputs.train[i].waveform);
    }
    return *cache[i];
  };

  std::vector<ParamGroup> groups{{"head", &model.parameters()},
                                 {"encoder", &encoder.parameters()}};
  Sgd sgd(cfg.momentum);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x5DEECE66DULL);

  TrainOutcome out;
  std::map<std::string, nn::Matrix> best_head;
  std::map<std::string, nn::Matrix> best_encoder;
  bool have_best = false;
  int bad_epochs = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto snapshot = [&](int epoch, double metric) {
    best_head = model.parameters().values();
    if (backbone_trainable) {
      best_encoder = encoder.parameters().values();
    }
    have_best = true;
    out.best_epoch = epoch;
    out.best_val_frame_macro_f1 = metric;
    if (output_dir) {
      CheckpointMeta m = meta;
      m.epoch = epoch;
      m.step = out.steps;
      m.val_frame_macro_f1 = metric;
      m.class_weights = inputs.class_weights;
      save_checkpoint(*output_dir / "checkpoint", model, encoder, m);
      out.checkpoint = *output_dir / "checkpoint";
    }
  };

  long step = 0;
  int epoch = 0;
  while (step < total_steps) {
    ++epoch;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b0 = 0; b0 < n && step < total_steps; b0 += batch) {
      const std::size_t b1 = std::min(n, b0 + batch);
      std::vector<const Sample*> members;
      std::size_t valid_total = 0;
      for (std::size_t k = b0; k < b1; ++k) {
        members.push_back(&inputs.train[order[k]]);
        valid_total += static_cast<std::size_t>((members.back()->labels.mask != 0).count());
      }
      model.parameters().zero_grad();
      encoder.parameters().zero_grad();

      StepLog entry;
      entry.step = step;
      entry.epoch = epoch;
      entry.lr = cosine_lr(cfg.lr, step, total_steps);
      if (valid_total > 0) {
        for (std::size_t k = b0; k < b1; ++k) {
          const Sample& s = inputs.train[order[k]];
          const auto valid = static_cast<double>((s.labels.mask != 0).count());
          if (valid == 0.0) {
            continue;
          }
          const double w = valid / static_cast<double>(valid_total);
          const auto outputs = model.forward(features(order[k]), true, &dropout_rng);
          const auto lb = total_loss(IptModel::to_posteriors(outputs), s.labels, inputs.loss,
                                     inputs.class_weights, pitch_labels);
          if (!std::isfinite(lb.total)) {
            dump_batch(output_dir, step, members);
            throw NumericError("non-finite loss at step " + std::to_string(step) + ", batch " +
                               std::to_string(b0 / batch) + " of epoch " +
                               std::to_string(epoch) + " (sample " + s.source_id + " @ " +
                               std::to_string(s.window_offset) + " s)");
          }
          entry.loss += w * lb.total;
          entry.loss_ipt += w * lb.ipt;
          entry.loss_pitch += w * lb.pitch;
          entry.loss_onset += w * lb.onset;
          std::vector<std::pair<nn::Var, nn::Matrix>> seeds;
          seeds.emplace_back(outputs.y_ipt, (w * lb.grad_ipt).cast<nn::Scalar>());
          if (outputs.y_pitch.defined() && lb.grad_pitch.size() > 0) {
            seeds.emplace_back(outputs.y_pitch, (w * lb.grad_pitch).cast<nn::Scalar>());
          }
          if (outputs.onset.defined() && lb.grad_onset.size() > 0) {
            seeds.emplace_back(outputs.onset, (w * lb.grad_onset).cast<nn::Scalar>());
          }
          nn::backward(seeds);
        }
      }
      ClipResult clip;
      try {
        clip = clip_gradients(groups, cfg.grad_clip_norm);
      } catch (const NumericError&) {
        dump_batch(output_dir, step, members);
        throw;
      }
      entry.grad_norm = clip.norm;
      entry.clipped_norm = clip.clipped_norm;
      sgd.step(groups, entry.lr);
      if (log_file) {
        *log_file << entry.to_json() << '\n';
      }
      out.log.push_back(entry);
      ++step;
      out.steps = step;
    }
    out.epochs_run = epoch;

    if (!inputs.val.empty()) {
      const double metric =
          window_frame_macro_f1(model, encoder, inputs.val, inputs.decode.frame_threshold);
      spdlog::info("epoch {} step {} loss {:.5f} val frame macro-F1 {:.4f}", epoch, step,
                   out.log.back().loss, metric);
      if (!have_best || metric > out.best_val_frame_macro_f1) {
        snapshot(epoch, metric);
        bad_epochs = 0;
      } else if (cfg.patience > 0 && ++bad_epochs >= cfg.patience) {
        out.early_stopped = true;
        spdlog::info("early stopping after {} epochs without improvement", bad_epochs);
        break;
      }
    } else {
      spdlog::debug("epoch {} step {} loss {:.5f}", epoch, step, out.log.back().loss);
    }
  }

  if (inputs.val.empty()) {
    snapshot(epoch, 0.0);
  } else if (have_best) {
    model.parameters().assign(best_head);
    if (backbone_trainable) {
      encoder.parameters().assign(best_encoder);
    }
  }
  return out;
}

namespace {

FrameGrid concat_grids(std::span<const FrameGrid> grids, const ClassMap& cm) {
  int total = 0;
  for (const auto& g : grids) {
    total += g.n_time();
  }
  FrameGrid out = FrameGrid::zeros(total, cm);
  int row = 0;
  for (const auto& g : grids) {
    const int n = g.n_time();
    out.ipt.middleRows(row, n) = g.ipt;
    out.pitch.middleRows(row, n) = g.pitch;
    out.onset.segment(row, n) = g.onset;
    out.mask.segment(row, n) = g.mask;
    row += n;
  }
  return out;
}

nn::Matrix concat_rows(const std::vector<const nn::Matrix*>& parts) {
  if (parts.empty()) {
    return {};
  }
  Eigen::Index rows = 0;
  for (const auto* p : parts) {
    rows += p->rows();
  }
  nn::Matrix out(rows, parts.front()->cols());
  Eigen::Index r = 0;
  for (const auto* p : parts) {
    out.middleRows(r, p->rows()) = *p;
    r += p->rows();
  }
  return out;
}

}  // namespace

RecordingPrediction predict_recording(const IptModel& model, const Encoder& encoder,
                                      const Recording& recording, const DecodeConfig& decode) {
  decode.validate();
  const ClassMap& cm = model.class_map();
  const int n_time = encoder.frames_per_window();
  const auto windows = segment(recording.waveform, recording.events, cm, n_time, recording.id);

  std::vector<PosteriorSet> parts;
  std::vector<FrameGrid> grids;
  {
    nn::NoGradGuard guard;
    for (const auto& w : windows) {
      parts.push_back(model.infer(encoder.encode(w.waveform)));
      grids.push_back(w.labels);
    }
  }
  auto gather = [&](nn::Matrix PosteriorSet::*member) {
    std::vector<const nn::Matrix*> ptrs;
    for (const auto& p : parts) {
      ptrs.push_back(&(p.*member));
    }
    return concat_rows(ptrs);
  };
  RecordingPrediction out;
  out.posteriors.onset = gather(&PosteriorSet::onset);
  out.posteriors.p_ipt = gather(&PosteriorSet::p_ipt);
  out.posteriors.p_pitch = gather(&PosteriorSet::p_pitch);
  out.posteriors.y_ipt = gather(&PosteriorSet::y_ipt);
  out.posteriors.y_pitch = gather(&PosteriorSet::y_pitch);
  out.targets = concat_grids(grids, cm);
  out.time_map = FrameTimeMap{n_time, kWindowSeconds, cm.frame_rate};

  for (int t = 0; t < out.targets.n_time(); ++t) {
    if (out.targets.mask(t) == 0) {
      out.posteriors.onset.row(t).setZero();
      out.posteriors.y_ipt.row(t).setZero();
      out.posteriors.y_pitch.row(t).setZero();
    }
  }

  std::optional<BinaryVector> gate;
  if (traits(model.variant()).gated_decoding) {
    gate = binarize_onsets(out.posteriors.onset, decode.onset_threshold);
  }
  const auto frames = decode_frame_events(out.posteriors.y_ipt, gate, decode);
  const nn::Matrix no_pitch;
  const bool with_pitch = cm.has_pitch && out.posteriors.has_pitch();
  out.events = to_timed_events(frames, out.time_map, with_pitch ? out.posteriors.y_pitch : no_pitch,
                               cm.midi_min);
  return out;
}

EvalReport evaluate_recordings(const IptModel& model, const Encoder& encoder,
                               std::span<const Recording> recordings, const DecodeConfig& decode,
                               double tolerance) {
  if (recordings.empty()) {
    throw ContractError("evaluation split is empty");
  }
  if (!(tolerance >= 0.0)) {
    throw ConfigError("onset tolerance must be non-negative");
  }
  const ClassMap& cm = model.class_map();
  std::vector<Counts> frame(static_cast<std::size_t>(cm.n_ipt()));
  std::vector<Counts> event(frame.size());
  for (const auto& rec : recordings) {
    const auto pred = predict_recording(model, encoder, rec, decode);
    const auto fc = frame_counts(decode_frames(pred.posteriors.y_ipt, decode.frame_threshold),
                                 pred.targets.ipt, pred.targets.mask);
    const auto ec = event_counts(pred.events, rec.events, tolerance, cm.n_ipt());
    for (std::size_t c = 0; c < frame.size(); ++c) {
      frame[c] += fc[c];
      event[c] += ec[c];
    }
  }
  EvalReport r = EvalReport::from_counts(cm, std::move(frame), std::move(event), tolerance);
  r.variant = std::string(variant_name(model.variant()));
  r.recordings = static_cast<int>(recordings.size());
  return r;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               std::span<const Recording> recordings, const ClassMap& class_map,
                               const DecodeConfig& decode, double tolerance) {
  if (recordings.empty()) {
    throw ContractError("evaluation split is empty");
  }
  const Checkpoint ck = load_checkpoint(checkpoint, &class_map);
  return evaluate_recordings(*ck.model, *ck.encoder, recordings, decode, tolerance);
}

}  // namespace iptdet
