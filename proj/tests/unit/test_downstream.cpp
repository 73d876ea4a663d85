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
#include "iptdet/error.hpp"
#include "iptdet/nn/ops.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace iptdet {
namespace {

using nn::Matrix;
using nn::Var;

ClassMap map_with(int n_ipt, int n_pitch) {
  ClassMap cm;
  for (int i = 0; i < n_ipt; ++i) {
    cm.ipt_names.push_back("t" + std::to_string(i));
  }
  cm.midi_min = 50;
  cm.midi_max = 50 + n_pitch - 1;
  return cm;
}

FeatureSeq random_features(int n_time, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  Matrix m(n_time, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = g(rng);
  }
  return FeatureSeq{Var(m), 75.0};
}

TEST(Variant, NamesRoundTrip) {
  for (auto v : {Variant::ipt_probing, Variant::ipt_finetune, Variant::ipt_pitch,
                 Variant::ipt_pitch_onset, Variant::mertech}) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_EQ(variant_name(Variant::ipt_pitch_onset), "IPT+Pitch+Onset");
  EXPECT_THROW(parse_variant("MERTek"), ConfigError);
}

TEST(Variant, AblationTraits) {
  EXPECT_FALSE(traits(Variant::ipt_probing).backbone_trainable);
  EXPECT_FALSE(traits(Variant::ipt_finetune).factorized);
  EXPECT_TRUE(traits(Variant::ipt_pitch).factorized);
  EXPECT_FALSE(traits(Variant::ipt_pitch).onset_branch);
  EXPECT_TRUE(traits(Variant::ipt_pitch_onset).onset_branch);
  EXPECT_FALSE(traits(Variant::ipt_pitch_onset).gated_decoding);
  EXPECT_TRUE(traits(Variant::mertech).gated_decoding);
}

TEST(Marginalize, ConstantTensor) {
  FactorTensor d{Matrix::Ones(2, 12), 3, 4};
  const auto [pi, pp] = marginalize(d);
  EXPECT_TRUE(pi.isApprox(Matrix::Constant(2, 3, 4.0f)));
  EXPECT_TRUE(pp.isApprox(Matrix::Constant(2, 4, 3.0f)));
}

TEST(Marginalize, ZeroTensor) {
  FactorTensor d{Matrix::Zero(3, 10), 2, 5};
  const auto [pi, pp] = marginalize(d);
  EXPECT_EQ(pi.cwiseAbs().maxCoeff(), 0.0f);
  EXPECT_EQ(pp.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Marginalize, RandomMatchesTripleLoop) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  FactorTensor d{Matrix(3, 10), 2, 5};
  for (Eigen::Index i = 0; i < d.d.size(); ++i) {
    d.d.data()[i] = u(rng);
  }
  testing::DGrid oi, op;
  testing::marginal_oracle(d.d.cast<double>(), 2, 5, oi, op);
  const auto [pi, pp] = marginalize(d);
  EXPECT_LT((pi.cast<double>() - oi).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((pp.cast<double>() - op).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Marginalize, ReshapeOrdering) {
  FactorTensor d{Matrix::Zero(2, 3 * 4), 3, 4};
  for (int i = 0; i < 3; ++i) {
    for (int p = 0; p < 4; ++p) {
      d.d(1, i * 4 + p) = static_cast<float>(10 * i + p);
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int p = 0; p < 4; ++p) {
      EXPECT_EQ(d.at(1, i, p), static_cast<float>(10 * i + p));
    }
  }
}

TEST(Marginalize, GraphVersionAgrees) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> g;
  FactorTensor d{Matrix(4, 6 * 7), 6, 7};
  for (Eigen::Index i = 0; i < d.d.size(); ++i) {
    d.d.data()[i] = g(rng);
  }
  const auto [pi, pp] = marginalize(d);
  const auto [vi, vp] = marginalize(Var(d.d), 6, 7);
  EXPECT_LT((vi.value() - pi).cwiseAbs().maxCoeff(), 1e-5f);
  EXPECT_LT((vp.value() - pp).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(OnsetBranch, ShapeRangeAndZeroHead) {
  IptModel model(Variant::mertech, map_with(7, 12), HeadConfig{}, 32, 13, 1);
  const auto f = random_features(20, 32, 3);
  const Var o = model.onset_branch(f, false, nullptr);
  EXPECT_EQ(o.rows(), 20);
  EXPECT_EQ(o.cols(), 1);
  EXPECT_TRUE((o.value().array() > 0.0f).all() && (o.value().array() < 1.0f).all());
  EXPECT_TRUE(model.onset_branch(f, false, nullptr).value() == o.value());

  model.parameters().get("onset_mlp.fc2.weight").mutable_value().setZero();
  model.parameters().get("onset_mlp.fc2.bias").mutable_value().setZero();
  EXPECT_TRUE((model.onset_branch(f, false, nullptr).value().array() == 0.5f).all());
}

TEST(OnsetBranch, DropoutOnlyInTraining) {
  IptModel model(Variant::mertech, map_with(2, 3), HeadConfig{}, 16, 13, 1);
  const auto f = random_features(30, 16, 4);
  std::mt19937_64 rng(9);
  const Matrix a = model.onset_branch(f, true, &rng).value();
  const Matrix b = model.onset_branch(f, true, &rng).value();
  EXPECT_FALSE(a == b);
  EXPECT_THROW(model.onset_branch(f, true, nullptr), ContractError);
}

TEST(FactorBranch, WidthAndZeroHead) {
  IptModel model(Variant::mertech, map_with(7, 40), HeadConfig{}, 24, 13, 1);
  EXPECT_EQ(model.factor_mlp().output_layer().out_features(), 280);
  const auto f = random_features(10, 24, 5);
  EXPECT_EQ(model.factor_branch(f, false, nullptr).cols(), 280);
  model.parameters().get("factor_mlp.fc2.weight").mutable_value().setZero();
  model.parameters().get("factor_mlp.fc2.bias").mutable_value().setZero();
  EXPECT_EQ(model.factor_branch(f, false, nullptr).value().cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Refine, ShapeAndRange) {
  IptModel model(Variant::mertech, map_with(7, 5), HeadConfig{}, 8, 13, 1);
  std::mt19937_64 rng(6);
  std::normal_distribution<float> g(0.0f, 3.0f);
  Matrix m(15, 7);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = g(rng);
  }
  const Var onset(Matrix::Constant(15, 1, 0.3f));
  const Var y = model.refine_ipt(Var(m), onset);
  EXPECT_EQ(y.rows(), 15);
  EXPECT_EQ(y.cols(), 7);
  EXPECT_TRUE((y.value().array() > 0.0f).all() && (y.value().array() < 1.0f).all());
  EXPECT_THROW(model.refine_ipt(Var(m), Var(Matrix::Zero(14, 1))), ContractError);
  EXPECT_THROW(model.refine_ipt(Var(Matrix::Zero(15, 6)), onset), ContractError);
}

// Gradient of L_IPT + L_pitch w.r.t. every onset-branch parameter.
double onset_grad_max(bool detach) {
  HeadConfig head;
  head.detach_onset = detach;
  IptModel model(Variant::mertech, map_with(4, 6), head, 16, 13, 3);
  const auto f = random_features(12, 16, 8);
  model.parameters().zero_grad();
  const auto out = model.forward(f, false, nullptr);
  const std::pair<Var, Matrix> seeds[] = {
      {out.y_ipt, Matrix::Ones(out.y_ipt.rows(), out.y_ipt.cols())},
      {out.y_pitch, Matrix::Ones(out.y_pitch.rows(), out.y_pitch.cols())}};
  nn::backward(seeds);
  double g = 0.0;
  for (const auto& e : model.parameters().entries()) {
    if (e.name.starts_with(IptModel::kOnsetPrefix) && e.var.has_grad()) {
      g = std::max(g, static_cast<double>(e.var.grad().cwiseAbs().maxCoeff()));
    }
  }
  return g;
}

TEST(Refine, DetachBlocksOnsetGradient) {
  EXPECT_LT(onset_grad_max(true), 1e-9);
  EXPECT_GT(onset_grad_max(false), 0.0);
}

TEST(Forward, FullPosteriorSet) {
  const auto cm = map_with(7, 12);
  IptModel model(Variant::mertech, cm, HeadConfig{}, 32, 13, 2);
  const auto f = random_features(25, 32, 10);
  const auto p = IptModel::to_posteriors(model.forward(f, false, nullptr));
  EXPECT_EQ(p.onset.rows(), 25);
  EXPECT_EQ(p.onset.cols(), 1);
  EXPECT_EQ(p.p_ipt.cols(), 7);
  EXPECT_EQ(p.y_ipt.cols(), 7);
  EXPECT_EQ(p.p_pitch.cols(), 12);
  EXPECT_EQ(p.y_pitch.cols(), 12);
  EXPECT_NO_THROW(p.validate());
  const Eigen::VectorXf diff = p.p_ipt.rowwise().sum() - p.p_pitch.rowwise().sum();
  EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-4f);

  const auto q = IptModel::to_posteriors(model.forward(f, false, nullptr));
  EXPECT_TRUE(p.y_ipt == q.y_ipt && p.y_pitch == q.y_pitch && p.onset == q.onset);
}

TEST(Forward, VariantsShapes) {
  const auto cm = map_with(3, 4);
  const auto f = random_features(9, 8, 11);
  for (auto v : {Variant::ipt_probing, Variant::ipt_finetune, Variant::ipt_pitch,
                 Variant::ipt_pitch_onset, Variant::mertech}) {
    IptModel model(v, cm, HeadConfig{}, 8, 13, 0);
    const auto p = IptModel::to_posteriors(model.forward(f, false, nullptr));
    const auto t = traits(v);
    EXPECT_EQ(p.y_ipt.cols(), 3) << variant_name(v);
    EXPECT_EQ(p.has_onset(), t.onset_branch) << variant_name(v);
    EXPECT_EQ(p.has_pitch(), t.factorized) << variant_name(v);
    EXPECT_NO_THROW(p.validate()) << variant_name(v);
  }
}

TEST(Forward, LayerStackInput) {
  const auto cm = map_with(2, 3);
  IptModel model(Variant::mertech, cm, HeadConfig{}, 6, 4, 0);
  LayerStack s;
  for (int k = 0; k < 4; ++k) {
    s.layers.emplace_back(Matrix::Constant(5, 6, static_cast<float>(k)));
  }
  const auto p = model.infer(s);
  EXPECT_EQ(p.n_time(), 5);
  EXPECT_THROW(model.forward(random_features(5, 7, 1), false, nullptr), ContractError);
}

TEST(PosteriorSet, ValidateRejectsBadValues) {
  IptModel model(Variant::mertech, map_with(2, 3), HeadConfig{}, 6, 13, 0);
  auto p = IptModel::to_posteriors(model.forward(random_features(4, 6, 2), false, nullptr));
  auto bad = p;
  bad.y_ipt(0, 0) = 1.5f;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = p;
  bad.p_pitch(1, 1) += 1.0f;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = p;
  bad.onset(2, 0) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(bad.validate(), ContractError);
}

}  // namespace
}  // namespace iptdet
