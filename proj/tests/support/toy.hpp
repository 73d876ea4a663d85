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
#include "iptdet/trainer.hpp"

#include <cstdint>
#include <vector>

namespace iptdet::testing {

/// Four techniques over MIDI 72..83, each marked by a fixed low partial.
ClassMap toy_class_map();

/// One synthetic recording of notes separated by short gaps, each starting
/// with a noise burst. Polyphonic recordings give every technique its own
/// voice, so techniques overlap in time.
Recording toy_recording(std::uint64_t seed, double seconds, const ClassMap& class_map,
                        const std::string& id, bool polyphonic = true);

struct ToyDataset {
  ClassMap class_map;
  std::vector<Recording> recordings;
  std::vector<Sample> samples;
};

/// `count` five-second recordings, one window each.
ToyDataset toy_dataset(std::uint64_t seed, int count, int n_time, bool polyphonic = true);

}  // namespace iptdet::testing
