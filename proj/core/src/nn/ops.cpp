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

#include "iptdet/nn/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace iptdet::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) {
    throw std::invalid_argument(std::string("nn: ") + what);
  }
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

}  // namespace

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(x.cols() == weight.cols(), "linear: input width does not match weight");
  Matrix y = x.value() * weight.value().transpose();
  const bool has_bias = bias.defined();
  if (has_bias) {
    require(bias.rows() == 1 && bias.cols() == weight.rows(), "linear: bias shape");
    y.rowwise() += bias.value().row(0);
  }
  std::vector<Var> parents{x, weight};
  if (has_bias) {
    parents.push_back(bias);
  }
  return make_result(std::move(y), std::move(parents), [has_bias](Node& self) {
    const Matrix& g = self.grad;
    const Matrix& xv = self.parents[0]->value;
    const Matrix& wv = self.parents[1]->value;
    if (wants(self, 0)) {
      self.parents[0]->accumulate_expr(g * wv);
    }
    if (wants(self, 1)) {
      self.parents[1]->accumulate_expr(g.transpose() * xv);
    }
    if (has_bias && wants(self, 2)) {
      self.parents[2]->accumulate_expr(g.colwise().sum());
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  return make_result(a.value() * b.value(), {a, b}, [](Node& self) {
    const Matrix& g = self.grad;
    if (wants(self, 0)) {
      self.parents[0]->accumulate_expr(g * self.parents[1]->value.transpose());
    }
    if (wants(self, 1)) {
      self.parents[1]->accumulate_expr(self.parents[0]->value.transpose() * g);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  return make_result(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    const Matrix& g = self.grad;
    if (wants(self, 0)) {
      self.parents[0]->accumulate_expr(g * self.parents[1]->value);
    }
    if (wants(self, 1)) {
      self.parents[1]->accumulate_expr(g.transpose() * self.parents[0]->value);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (wants(self, i)) {
        self.parents[i]->accumulate(self.grad);
      }
    }
  });
}

Var scale(const Var& a, Scalar s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    self.parents[0]->accumulate_expr(self.grad * s);
  });
}

Var relu(const Var& x) {
  return make_result(x.value().cwiseMax(Scalar(0)), {x}, [](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    self.parents[0]->accumulate_expr(
        (xv.array() > Scalar(0)).select(self.grad.array(), Scalar(0)).matrix());
  });
}

Var gelu(const Var& x) {
  const Scalar inv_sqrt2 = Scalar(1.0 / std::numbers::sqrt2);
  Matrix y = x.value().unaryExpr(
      [=](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * inv_sqrt2)); });
  return make_result(std::move(y), {x}, [=](Node& self) {
    const Scalar inv_sqrt_2pi = Scalar(1.0 / std::sqrt(2.0 * std::numbers::pi));
    const Matrix& xv = self.parents[0]->value;
    Matrix d = xv.unaryExpr([=](Scalar v) {
      return Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2)) +
             v * inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v);
    });
    self.parents[0]->accumulate_expr(self.grad.cwiseProduct(d));
  });
}

Var sigmoid(const Var& x) {
  Matrix y = x.value().unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
  return make_result(std::move(y), {x}, [](Node& self) {
    const Matrix& yv = self.value;
    self.parents[0]->accumulate_expr(
        (self.grad.array() * yv.array() * (Scalar(1) - yv.array())).matrix());
  });
}

Var dropout(const Var& x, Scalar p, std::mt19937_64& rng) {
  if (p <= Scalar(0)) {
    return x;
  }
  require(p < Scalar(1), "dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  const Scalar inv = Scalar(1) / (Scalar(1) - p);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = keep(rng) ? inv : Scalar(0);
  }
  Matrix y = x.value().cwiseProduct(mask);
  return make_result(std::move(y), {x}, [mask = std::move(mask)](Node& self) {
    self.parents[0]->accumulate_expr(self.grad.cwiseProduct(mask));
  });
}

Var softmax_rows(const Var& x) {
  Matrix y = x.value();
  for (Index r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    const Scalar m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row /= row.sum();
  }
  return make_result(std::move(y), {x}, [](Node& self) {
    const Matrix& yv = self.value;
    Matrix gy = self.grad.cwiseProduct(yv);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = gy.rowwise().sum();
    Matrix dx = gy - (yv.array().colwise() * dots.array()).matrix();
    self.parents[0]->accumulate(dx);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps) {
  const Index n = x.cols();
  require(gamma.cols() == n && beta.cols() == n, "layer_norm: affine width");
  Matrix xhat(x.rows(), n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    auto row = x.value().row(r);
    const double mean = row.template cast<double>().mean();
    const double var = (row.template cast<double>().array() - mean).square().mean();
    inv_std(r) = Scalar(1.0 / std::sqrt(var + eps));
    xhat.row(r) = (row.array() - Scalar(mean)) * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  return make_result(std::move(y), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const Matrix& g = self.grad;
                       const Matrix& gam = self.parents[1]->value;
                       if (wants(self, 0)) {
                         Matrix dxhat = (g.array().rowwise() * gam.row(0).array()).matrix();
                         const Scalar n = Scalar(dxhat.cols());
                         Matrix dx(dxhat.rows(), dxhat.cols());
                         for (Index r = 0; r < dxhat.rows(); ++r) {
                           const Scalar m1 = dxhat.row(r).sum() / n;
                           const Scalar m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                           dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 -
                                                     xhat.row(r).array() * m2)
                                                        .matrix();
                         }
                         self.parents[0]->accumulate(dx);
                       }
                       if (wants(self, 1)) {
                         self.parents[1]->accumulate_expr(g.cwiseProduct(xhat).colwise().sum());
                       }
                       if (wants(self, 2)) {
                         self.parents[2]->accumulate_expr(g.colwise().sum());
                       }
                     });
}

Var instance_norm_time(const Var& x, const Var& gamma, const Var& beta, Scalar eps) {
  const Index c = x.cols();
  require(gamma.cols() == c && beta.cols() == c, "instance_norm_time: affine width");
  const Matrix& xv = x.value();
  Matrix xhat(x.rows(), c);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inv_std(c);
  for (Index j = 0; j < c; ++j) {
    auto col = xv.col(j);
    const double mean = col.template cast<double>().mean();
    const double var = (col.template cast<double>().array() - mean).square().mean();
    inv_std(j) = Scalar(1.0 / std::sqrt(var + eps));
    xhat.col(j) = (col.array() - Scalar(mean)) * inv_std(j);
  }
  Matrix y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  return make_result(std::move(y), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const Matrix& g = self.grad;
                       const Matrix& gam = self.parents[1]->value;
                       if (wants(self, 0)) {
                         Matrix dxhat = (g.array().rowwise() * gam.row(0).array()).matrix();
                         const Scalar n = Scalar(dxhat.rows());
                         Matrix dx(dxhat.rows(), dxhat.cols());
                         for (Index j = 0; j < dxhat.cols(); ++j) {
                           const Scalar m1 = dxhat.col(j).sum() / n;
                           const Scalar m2 = dxhat.col(j).dot(xhat.col(j)) / n;
                           dx.col(j) = inv_std(j) * (dxhat.col(j).array() - m1 -
                                                     xhat.col(j).array() * m2)
                                                        .matrix();
                         }
                         self.parents[0]->accumulate(dx);
                       }
                       if (wants(self, 1)) {
                         self.parents[1]->accumulate_expr(g.cwiseProduct(xhat).colwise().sum());
                       }
                       if (wants(self, 2)) {
                         self.parents[2]->accumulate_expr(g.colwise().sum());
                       }
                     });
}

Var slice_cols(const Var& x, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.cols(), "slice_cols: out of range");
  Matrix y = x.value().middleCols(start, count);
  return make_result(std::move(y), {x}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.size() == 0) {
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    p.grad.middleCols(start, count) += self.grad;
  });
}

Var slice_rows(const Var& x, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.rows(), "slice_rows: out of range");
  Matrix y = x.value().middleRows(start, count);
  return make_result(std::move(y), {x}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.size() == 0) {
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    p.grad.middleRows(start, count) += self.grad;
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index total = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols: row counts differ");
    total += p.cols();
  }
  Matrix y(rows, total);
  Index at = 0;
  for (const auto& p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(y), parts, [](Node& self) {
    Index off = 0;
    for (auto& p : self.parents) {
      const Index w = p->value.cols();
      if (p->requires_grad) {
        p->accumulate_expr(self.grad.middleCols(off, w));
      }
      off += w;
    }
  });
}

Index conv1d_output_length(Index input_length, Index kernel, Index stride, Index padding) {
  const Index span = input_length + 2 * padding - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

namespace {

// cols(t, c*K + k) = x(t*stride + k - padding, c0 + c)
Matrix im2col(const Matrix& x, Index c0, Index channels, Index kernel, Index stride,
              Index padding, Index out_len) {
  Matrix cols = Matrix::Zero(out_len, channels * kernel);
  const Index in_len = x.rows();
  for (Index t = 0; t < out_len; ++t) {
    Scalar* dst = cols.row(t).data();
    const Index base = t * stride - padding;
    for (Index k = 0; k < kernel; ++k) {
      const Index src = base + k;
      if (src < 0 || src >= in_len) {
        continue;
      }
      const Scalar* row = x.row(src).data() + c0;
      for (Index c = 0; c < channels; ++c) {
        dst[c * kernel + k] = row[c];
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& dcols, Matrix& dx, Index c0, Index channels, Index kernel,
                Index stride, Index padding) {
  const Index in_len = dx.rows();
  for (Index t = 0; t < dcols.rows(); ++t) {
    const Scalar* src = dcols.row(t).data();
    const Index base = t * stride - padding;
    for (Index k = 0; k < kernel; ++k) {
      const Index dst_row = base + k;
      if (dst_row < 0 || dst_row >= in_len) {
        continue;
      }
      Scalar* row = dx.row(dst_row).data() + c0;
      for (Index c = 0; c < channels; ++c) {
        row[c] += src[c * kernel + k];
      }
    }
  }
}

}  // namespace

Var conv1d(const Var& x, const Var& weight, const Var& bias, Index kernel, Index stride,
           Index padding, Index groups) {
  const Index c_in = x.cols();
  const Index c_out = weight.rows();
  require(groups >= 1 && c_in % groups == 0 && c_out % groups == 0, "conv1d: groups");
  const Index cg_in = c_in / groups;
  const Index cg_out = c_out / groups;
  require(weight.cols() == cg_in * kernel, "conv1d: weight shape");
  const Index out_len = conv1d_output_length(x.rows(), kernel, stride, padding);
  require(out_len > 0, "conv1d: input shorter than kernel");
  const bool has_bias = bias.defined();

  Matrix y(out_len, c_out);
  for (Index g = 0; g < groups; ++g) {
    Matrix cols = im2col(x.value(), g * cg_in, cg_in, kernel, stride, padding, out_len);
    y.middleCols(g * cg_out, cg_out).noalias() =
        cols * weight.value().middleRows(g * cg_out, cg_out).transpose();
  }
  if (has_bias) {
    y.rowwise() += bias.value().row(0);
  }
  std::vector<Var> parents{x, weight};
  if (has_bias) {
    parents.push_back(bias);
  }
  return make_result(
      std::move(y), std::move(parents),
      [=](Node& self) {
        const Matrix& g = self.grad;
        const Matrix& xv = self.parents[0]->value;
        const Matrix& wv = self.parents[1]->value;
        Matrix dx;
        if (wants(self, 0)) {
          dx = Matrix::Zero(xv.rows(), xv.cols());
        }
        Matrix dw;
        if (wants(self, 1)) {
          dw = Matrix::Zero(wv.rows(), wv.cols());
        }
        for (Index grp = 0; grp < groups; ++grp) {
          auto g_grp = g.middleCols(grp * cg_out, cg_out);
          if (wants(self, 1)) {
            Matrix cols = im2col(xv, grp * cg_in, cg_in, kernel, stride, padding, g.rows());
            dw.middleRows(grp * cg_out, cg_out).noalias() = g_grp.transpose() * cols;
          }
          if (wants(self, 0)) {
            Matrix dcols = g_grp * wv.middleRows(grp * cg_out, cg_out);
            col2im_add(dcols, dx, grp * cg_in, cg_in, kernel, stride, padding);
          }
        }
        if (wants(self, 0)) {
          self.parents[0]->accumulate(dx);
        }
        if (wants(self, 1)) {
          self.parents[1]->accumulate(dw);
        }
        if (has_bias && wants(self, 2)) {
          self.parents[2]->accumulate_expr(g.colwise().sum());
        }
      });
}

Var softmax_weighted_sum(const std::vector<Var>& layers, const Var& raw) {
  const Index n = static_cast<Index>(layers.size());
  require(n > 0, "softmax_weighted_sum: no layers");
  require(raw.rows() == 1 && raw.cols() == n, "softmax_weighted_sum: weight count");
  Eigen::Matrix<double, 1, Eigen::Dynamic> w = raw.value().row(0).cast<double>();
  w = (w.array() - w.maxCoeff()).exp().matrix();
  w /= w.sum();
  Matrix y = Matrix::Zero(layers[0].rows(), layers[0].cols());
  for (Index k = 0; k < n; ++k) {
    require(layers[k].rows() == y.rows() && layers[k].cols() == y.cols(),
            "softmax_weighted_sum: layer shapes differ");
    y += Scalar(w(k)) * layers[k].value();
  }
  std::vector<Var> parents(layers);
  parents.push_back(raw);
  return make_result(std::move(y), std::move(parents), [w, n](Node& self) {
    const Matrix& g = self.grad;
    Eigen::Matrix<double, 1, Eigen::Dynamic> dw(n);
    for (Index k = 0; k < n; ++k) {
      Node& layer = *self.parents[k];
      if (layer.requires_grad) {
        layer.accumulate_expr(g * Scalar(w(k)));
      }
      dw(k) = (g.cast<double>().cwiseProduct(layer.value.cast<double>())).sum();
    }
    Node& rawn = *self.parents[n];
    if (rawn.requires_grad) {
      const double dot = w.dot(dw);
      Matrix dr(1, n);
      for (Index k = 0; k < n; ++k) {
        dr(0, k) = Scalar(w(k) * (dw(k) - dot));
      }
      rawn.accumulate(dr);
    }
  });
}

Var sum_blocks(const Var& x, Index groups, Index size) {
  require(x.cols() == groups * size, "sum_blocks: width is not groups*size");
  Matrix y(x.rows(), groups);
  for (Index i = 0; i < groups; ++i) {
    y.col(i) = x.value().middleCols(i * size, size).rowwise().sum();
  }
  return make_result(std::move(y), {x}, [groups, size](Node& self) {
    Matrix dx(self.grad.rows(), groups * size);
    for (Index i = 0; i < groups; ++i) {
      dx.middleCols(i * size, size) = self.grad.col(i).replicate(1, size);
    }
    self.parents[0]->accumulate(dx);
  });
}

Var sum_across_blocks(const Var& x, Index groups, Index size) {
  require(x.cols() == groups * size, "sum_across_blocks: width is not groups*size");
  Matrix y = Matrix::Zero(x.rows(), size);
  for (Index i = 0; i < groups; ++i) {
    y += x.value().middleCols(i * size, size);
  }
  return make_result(std::move(y), {x}, [groups, size](Node& self) {
    Matrix dx(self.grad.rows(), groups * size);
    for (Index i = 0; i < groups; ++i) {
      dx.middleCols(i * size, size) = self.grad;
    }
    self.parents[0]->accumulate(dx);
  });
}

}  // namespace iptdet::nn
