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


#include "iptdet/downstream.hpp"
#include "iptdet/encoder.hpp"
#include "iptdet/metrics.hpp"
#include "iptdet/postprocess.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace iptdet;

ClassMap guzheng() { return ClassMap::for_schema(Schema::guzheng_tech99); }

std::vector<float> noise_window(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 0.1f);
  std::vector<float> w(kWindowSamples);
  for (auto& x : w) {
    x = g(rng);
  }
  return w;
}

void BM_StubEncode(benchmark::State& state) {
  StubEncoder enc(0);
  const auto w = noise_window(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(enc.encode(w));
  }
}
BENCHMARK(BM_StubEncode)->Unit(benchmark::kMillisecond);

void BM_HeadInfer(benchmark::State& state) {
  StubEncoder enc(0);
  const auto stack = enc.encode(noise_window(2));
  IptModel model(static_cast<Variant>(state.range(0)), guzheng(), HeadConfig{}, enc.feature_dim(),
                 enc.num_layers(), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.infer(stack));
  }
  state.SetLabel(std::string(variant_name(model.variant())));
}
BENCHMARK(BM_HeadInfer)
    ->Arg(static_cast<int>(Variant::ipt_finetune))
    ->Arg(static_cast<int>(Variant::mertech))
    ->Unit(benchmark::kMillisecond);

void BM_HeadTrainStep(benchmark::State& state) {
  StubEncoder enc(0);
  const auto stack = enc.encode(noise_window(3));
  IptModel model(Variant::mertech, guzheng(), HeadConfig{}, enc.feature_dim(), enc.num_layers(),
                 0);
  std::mt19937_64 rng(0);
  for (auto _ : state) {
    model.parameters().zero_grad();
    const auto out = model.forward(stack, true, &rng);
    const std::pair<nn::Var, nn::Matrix> seeds[] = {
        {out.y_ipt, nn::Matrix::Ones(out.y_ipt.rows(), out.y_ipt.cols())},
        {out.y_pitch, nn::Matrix::Ones(out.y_pitch.rows(), out.y_pitch.cols())},
        {out.onset, nn::Matrix::Ones(out.onset.rows(), 1)}};
    nn::backward(seeds);
  }
}
BENCHMARK(BM_HeadTrainStep)->Unit(benchmark::kMillisecond);

void BM_DecodeEvents(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  nn::Matrix y(n, 7);
  nn::Matrix onset(n, 1);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y.data()[i] = u(rng);
  }
  for (int t = 0; t < n; ++t) {
    onset(t, 0) = u(rng);
  }
  const auto mask = binarize_onsets(onset);
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_events(y, mask, DecodeConfig{}, 75.0));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_DecodeEvents)->Arg(375)->Arg(375 * 60);

void BM_MatchEvents(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, n * 0.5);
  std::vector<IPTEvent> pred(static_cast<std::size_t>(n)), ref(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng);
    pred[static_cast<std::size_t>(i)] = {i % 7, a, a + 0.3, {}};
    ref[static_cast<std::size_t>(i)] = {i % 7, b, b + 0.3, {}};
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(match_events(pred, ref, 0.05));
  }
}
BENCHMARK(BM_MatchEvents)->Arg(100)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
