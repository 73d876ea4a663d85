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

#include "iptdet/config.hpp"

#include "iptdet/error.hpp"

#include <toml.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace iptdet {

namespace {

using Setter = std::function<void(const toml::node&, const std::string&)>;

[[noreturn]] void type_error(const std::string& key, std::string_view expected) {
  throw ConfigError("config key '" + key + "' must be " + std::string(expected));
}

double as_double(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>()) {
    return *v;
  }
  type_error(key, "a number");
}

std::int64_t as_int(const toml::node& n, const std::string& key) {
  if (n.is_integer()) {
    return *n.value<std::int64_t>();
  }
  type_error(key, "an integer");
}

bool as_bool(const toml::node& n, const std::string& key) {
  if (n.is_boolean()) {
    return *n.value<bool>();
  }
  type_error(key, "a boolean");
}

std::string as_string(const toml::node& n, const std::string& key) {
  if (n.is_string()) {
    return *n.value<std::string>();
  }
  type_error(key, "a string");
}

template <typename T>
Setter number(T& field) {
  return [&field](const toml::node& n, const std::string& key) {
    field = static_cast<T>(as_double(n, key));
  };
}

template <typename T>
Setter integer(T& field) {
  return [&field](const toml::node& n, const std::string& key) {
    const auto v = as_int(n, key);
    if constexpr (std::is_unsigned_v<T>) {
      if (v < 0) {
        type_error(key, "non-negative");
      }
    }
    field = static_cast<T>(v);
  };
}

Setter boolean(bool& field) {
  return [&field](const toml::node& n, const std::string& key) { field = as_bool(n, key); };
}

Setter path(std::filesystem::path& field) {
  return [&field](const toml::node& n, const std::string& key) { field = as_string(n, key); };
}

Setter optional_path(std::optional<std::filesystem::path>& field) {
  return [&field](const toml::node& n, const std::string& key) {
    const auto s = as_string(n, key);
    if (s.empty()) {
      field.reset();
    } else {
      field = s;
    }
  };
}

template <typename F>
Setter text(F&& apply) {
  return [apply = std::forward<F>(apply)](const toml::node& n, const std::string& key) {
    const auto s = as_string(n, key);
    try {
      apply(s);
    } catch (const Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  };
}

std::map<std::string, Setter> setters(RunConfig& c) {
  std::map<std::string, Setter> m;
  m["seed"] = [&c](const toml::node& n, const std::string& key) {
    const auto v = as_int(n, key);
    if (v < 0) {
      type_error(key, "non-negative");
    }
    c.seed = static_cast<std::uint64_t>(v);
    c.train.seed = c.seed;
  };
  m["dataset.schema"] = text([&c](const std::string& s) { c.schema = parse_schema(s); });
  m["dataset.root"] = path(c.dataset_root);
  m["dataset.split_manifest"] = optional_path(c.split_manifest);
  m["dataset.fold"] = integer(c.fold);
  m["dataset.split"] = text([&c](const std::string& s) { c.split = s; });
  m["encoder.backend"] = text([&c](const std::string& s) { c.backend = parse_backend(s); });
  m["encoder.checkpoint_dir"] = optional_path(c.encoder_dir);
  m["model.variant"] = text([&c](const std::string& s) { c.variant = parse_variant(s); });
  m["model.hidden"] = integer(c.head.hidden);
  m["model.dropout"] = number(c.head.dropout);
  m["model.attention_heads"] = integer(c.head.attention_heads);
  m["model.detach_onset"] = boolean(c.head.detach_onset);
  m["train.lr"] = number(c.train.lr);
  m["train.momentum"] = number(c.train.momentum);
  m["train.batch_size"] = integer(c.train.batch_size);
  m["train.grad_clip_norm"] = number(c.train.grad_clip_norm);
  m["train.epochs"] = integer(c.train.epochs);
  m["train.patience"] = integer(c.train.patience);
  m["train.max_steps"] = integer(c.train.max_steps);
  m["train.freeze_extractor"] = boolean(c.train.freeze_extractor);
  m["train.feature_cache_mib"] = integer(c.train.feature_cache_mib);
  m["loss.lambda_ipt"] = number(c.loss.lambda_ipt);
  m["loss.lambda_pitch"] = number(c.loss.lambda_pitch);
  m["loss.lambda_onset"] = number(c.loss.lambda_onset);
  m["loss.class_weighting"] = boolean(c.class_weighting);
  m["decode.onset_threshold"] = number(c.decode.onset_threshold);
  m["decode.frame_threshold"] = number(c.decode.frame_threshold);
  m["decode.min_event_frames"] = integer(c.decode.min_event_frames);
  m["eval.tolerance"] = number(c.tolerance);
  m["eval.aggregation"] = text([&c](const std::string& s) {
    if (s == "mean") {
      c.aggregation = Aggregation::mean;
    } else if (s == "pooled") {
      c.aggregation = Aggregation::pooled;
    } else {
      throw ConfigError("expected 'mean' or 'pooled', got '" + s + "'");
    }
  });
  m["output.dir"] = path(c.output_dir);
  m["output.checkpoint"] = optional_path(c.checkpoint);
  return m;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text_in, std::string_view source) {
  toml::table table;
  try {
    table = toml::parse(text_in, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
  RunConfig c;
  const auto known = setters(c);
  auto apply = [&](const std::string& key, const toml::node& node) {
    const auto it = known.find(key);
    if (it == known.end()) {
      throw ConfigError("unknown config key '" + key + "' in " + std::string(source));
    }
    it->second(node, key);
    c.provided.push_back(key);
  };
  for (const auto& [k, node] : table) {
    const std::string name(k.str());
    if (const auto* section = node.as_table()) {
      for (const auto& [k2, inner] : *section) {
        if (inner.is_table()) {
          throw ConfigError("unexpected nested table '" + name + "." + std::string(k2.str()) +
                            "' in " + std::string(source));
        }
        apply(name + "." + std::string(k2.str()), inner);
      }
    } else {
      apply(name, node);
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw IoError("cannot read config " + file.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.string());
}

bool RunConfig::has(std::string_view key) const {
  return std::find(provided.begin(), provided.end(), key) != provided.end();
}

void RunConfig::validate(std::span<const std::string_view> required) const {
  for (auto key : required) {
    if (!has(key)) {
      throw ConfigError("missing required config key '" + std::string(key) + "'");
    }
  }
  train.validate();
  loss.validate();
  decode.validate();
  if (head.hidden < 1 || head.attention_heads < 1 || head.dropout < 0.0f ||
      head.dropout >= 1.0f) {
    throw ConfigError("model.hidden, model.attention_heads and model.dropout are out of range");
  }
  if (!(tolerance >= 0.0)) {
    throw ConfigError("eval.tolerance must be non-negative");
  }
  if (fold < 0) {
    throw ConfigError("dataset.fold must be non-negative");
  }
  if (split != "train" && split != "val" && split != "test") {
    throw ConfigError("dataset.split must be train, val or test");
  }
  if (has("dataset.root") && !std::filesystem::is_directory(dataset_root)) {
    throw ConfigError("dataset.root does not exist: " + dataset_root.string());
  }
  if (split_manifest && !std::filesystem::is_regular_file(*split_manifest)) {
    throw ConfigError("dataset.split_manifest does not exist: " + split_manifest->string());
  }
  if (encoder_dir && !std::filesystem::is_directory(*encoder_dir)) {
    throw ConfigError("encoder.checkpoint_dir does not exist: " + encoder_dir->string());
  }
}

}  // namespace iptdet
