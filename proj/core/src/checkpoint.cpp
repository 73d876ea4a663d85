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

#include "iptdet/checkpoint.hpp"

#include "iptdet/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace iptdet {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json class_map_json(const ClassMap& cm) {
  return ordered_json{{"ipt_names", cm.ipt_names},
                      {"midi_min", cm.midi_min},
                      {"midi_max", cm.midi_max},
                      {"has_pitch", cm.has_pitch},
                      {"frame_rate", cm.frame_rate}};
}

ClassMap class_map_from(const json& j) {
  ClassMap cm;
  cm.ipt_names = j.at("ipt_names").get<std::vector<std::string>>();
  cm.midi_min = j.at("midi_min").get<int>();
  cm.midi_max = j.at("midi_max").get<int>();
  cm.has_pitch = j.at("has_pitch").get<bool>();
  cm.frame_rate = j.at("frame_rate").get<double>();
  return cm;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const IptModel& model,
                     const Encoder& encoder, CheckpointMeta meta) {
  std::filesystem::create_directories(dir);
  meta.variant = model.variant();
  meta.class_map = model.class_map();
  meta.head = model.head_config();
  meta.feature_dim = model.feature_dim();
  meta.num_layers = model.num_layers();
  meta.n_time = encoder.frames_per_window();
  const auto& raw = model.layer_weights().raw.value();
  meta.layer_weights.assign(raw.data(), raw.data() + raw.size());
  const Eigen::VectorXd norm = model.layer_weights().normalized();
  meta.layer_weights_normalized.assign(norm.data(), norm.data() + norm.size());

  ordered_json j;
  j["format"] = 1;
  j["variant"] = std::string(variant_name(meta.variant));
  j["class_map"] = class_map_json(meta.class_map);
  j["head"] = ordered_json{{"hidden", meta.head.hidden},
                           {"dropout", meta.head.dropout},
                           {"attention_heads", meta.head.attention_heads},
                           {"detach_onset", meta.head.detach_onset}};
  j["feature_dim"] = meta.feature_dim;
  j["num_layers"] = meta.num_layers;
  j["n_time"] = meta.n_time;
  j["layer_weights"] = meta.layer_weights;
  j["layer_weights_normalized"] = meta.layer_weights_normalized;
  j["class_weights"] = meta.class_weights;
  j["model_seed"] = meta.model_seed;
  j["encoder_backend"] = std::string(backend_name(encoder.backend()));
  j["schema"] = meta.schema;
  j["epoch"] = meta.epoch;
  j["step"] = meta.step;
  j["val_frame_macro_f1"] = meta.val_frame_macro_f1;

  nn::write_tensor_file(dir / "head.bin", model.parameters().values());
  encoder.save(dir / "encoder");
  std::ofstream out(dir / "model.json");
  out << j.dump(2) << '\n';
  if (!out) {
    throw IoError("failed writing " + (dir / "model.json").string());
  }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("checkpoint directory not found: " + dir.string());
  }
  const json j = read_json(dir / "model.json");
  try {
    CheckpointMeta m;
    m.variant = parse_variant(j.at("variant").get<std::string>());
    m.class_map = class_map_from(j.at("class_map"));
    const auto& h = j.at("head");
    m.head.hidden = h.at("hidden").get<int>();
    m.head.dropout = h.at("dropout").get<float>();
    m.head.attention_heads = h.at("attention_heads").get<int>();
    m.head.detach_onset = h.at("detach_onset").get<bool>();
    m.feature_dim = j.at("feature_dim").get<int>();
    m.num_layers = j.at("num_layers").get<int>();
    m.n_time = j.at("n_time").get<int>();
    m.layer_weights = j.at("layer_weights").get<std::vector<double>>();
    m.layer_weights_normalized = j.value("layer_weights_normalized", std::vector<double>{});
    m.class_weights = j.value("class_weights", std::vector<double>{});
    m.model_seed = j.value("model_seed", std::uint64_t{0});
    m.schema = j.value("schema", "");
    m.epoch = j.value("epoch", 0);
    m.step = j.value("step", 0L);
    m.val_frame_macro_f1 = j.value("val_frame_macro_f1", 0.0);
    return m;
  } catch (const json::exception& e) {
    throw ParseError((dir / "model.json").string() + ": " + e.what());
  }
}

std::unique_ptr<Encoder> load_encoder(const std::filesystem::path& dir) {
  const json j = read_json(dir / "config.json");
  if (j.value("backend", "") == "stub") {
    return std::make_unique<StubEncoder>(j.at("seed").get<std::uint64_t>(),
                                         j.value("feature_dim", kDefaultFeatureDim),
                                         j.value("num_layers", kDefaultLayers));
  }
  return PretrainedEncoder::load(dir);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const ClassMap* expected) {
  Checkpoint ck;
  ck.meta = read_checkpoint_meta(dir);
  if (expected != nullptr && !(*expected == ck.meta.class_map)) {
    throw CompatibilityError("checkpoint " + dir.string() +
                             " was trained with a different class map than the dataset");
  }
  ck.encoder = load_encoder(dir / "encoder");
  if (ck.encoder->frames_per_window() != ck.meta.n_time ||
      ck.encoder->feature_dim() != ck.meta.feature_dim ||
      ck.encoder->num_layers() != ck.meta.num_layers) {
    throw CompatibilityError("checkpoint encoder does not match the head's recorded shape");
  }
  ck.model = std::make_unique<IptModel>(ck.meta.variant, ck.meta.class_map, ck.meta.head,
                                        ck.meta.feature_dim, ck.meta.num_layers,
                                        ck.meta.model_seed);
  ck.model->parameters().assign(nn::read_tensor_file(dir / "head.bin"));
  return ck;
}

}  // namespace iptdet
