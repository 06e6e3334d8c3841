#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "gnnmp/nn/autograd.hpp"

namespace gnnmp::nn {

namespace detail {
inline void require(bool cond, const char* what) {
  if (!cond) throw InvalidInput(what);
}
inline Matrix& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
inline bool pneeds(Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
}  // namespace detail

/// A (n x k) * B (k x m), or A * B^T when `transpose_b`.
inline Var matmul(const Var& a, const Var& b, bool transpose_b = false) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  const std::size_t inner = transpose_b ? B.cols : B.rows;
  const std::size_t out_cols = transpose_b ? B.rows : B.cols;
  detail::require(A.cols == inner, "matmul shape mismatch");
  Matrix out(A.rows, out_cols);
  if (A.rows > 0 && out_cols > 0 && inner > 0) {
    if (transpose_b) as_eigen(out).noalias() = as_eigen(A) * as_eigen(B).transpose();
    else as_eigen(out).noalias() = as_eigen(A) * as_eigen(B);
  }
  return make_op(std::move(out), {a, b}, [transpose_b](Node& self) {
    const Matrix& A = self.parents[0]->value;
    const Matrix& B = self.parents[1]->value;
    const auto G = as_eigen(self.grad);
    if (A.rows == 0 || A.cols == 0 || self.grad.cols == 0) return;
    if (detail::pneeds(self, 0)) {
      auto gA = as_eigen(detail::pgrad(self, 0));
      if (transpose_b) gA.noalias() += G * as_eigen(B);
      else gA.noalias() += G * as_eigen(B).transpose();
    }
    if (detail::pneeds(self, 1)) {
      auto gB = as_eigen(detail::pgrad(self, 1));
      if (transpose_b) gB.noalias() += G.transpose() * as_eigen(A);
      else gB.noalias() += as_eigen(A).transpose() * G;
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::require(a.value().same_shape(b.value()), "add shape mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!detail::pneeds(self, p)) continue;
      Matrix& g = detail::pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require(a.value().same_shape(b.value()), "sub shape mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!detail::pneeds(self, p)) continue;
      const double sign = p == 0 ? 1.0 : -1.0;
      Matrix& g = detail::pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += sign * self.grad.data[i];
    }
  });
}

/// A + row vector b broadcast over rows.
inline Var add_row(const Var& a, const Var& b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  detail::require(B.rows == 1 && B.cols == A.cols, "add_row shape mismatch");
  Matrix out = A;
  for (std::size_t r = 0; r < out.rows; ++r) {
    double* o = out.row_ptr(r);
    for (std::size_t c = 0; c < out.cols; ++c) o[c] += B.data[c];
  }
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (detail::pneeds(self, 0)) {
      Matrix& g = detail::pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    }
    if (detail::pneeds(self, 1)) {
      Matrix& g = detail::pgrad(self, 1);
      for (std::size_t r = 0; r < self.grad.rows; ++r) {
        const double* s = self.grad.row_ptr(r);
        for (std::size_t c = 0; c < g.cols; ++c) g.data[c] += s[c];
      }
    }
  });
}

inline Var scale(const Var& a, double s) {
  Matrix out = a.value();
  for (double& v : out.data) v *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    Matrix& g = detail::pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += s * self.grad.data[i];
  });
}

inline Var relu(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix& g = detail::pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data[i] > 0.0) g.data[i] += self.grad.data[i];
  });
}

/// Elementwise max; ties route the gradient to `a`.
inline Var maximum(const Var& a, const Var& b) {
  detail::require(a.value().same_shape(b.value()), "maximum shape mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::max(out.data[i], b.value().data[i]);
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Matrix& A = self.parents[0]->value;
    const Matrix& B = self.parents[1]->value;
    const bool na = detail::pneeds(self, 0);
    const bool nb = detail::pneeds(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.data[i] >= B.data[i]) {
        if (na) detail::pgrad(self, 0).data[i] += self.grad.data[i];
      } else if (nb) {
        detail::pgrad(self, 1).data[i] += self.grad.data[i];
      }
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Matrix& m = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(m.row_ptr(r), m.cols, out.row_ptr(r) + off);
    off += m.cols;
  }
  return make_op(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t c = self.parents[p]->value.cols;
      if (detail::pneeds(self, p)) {
        Matrix& g = detail::pgrad(self, p);
        for (std::size_t r = 0; r < g.rows; ++r) {
          const double* s = self.grad.row_ptr(r) + off;
          double* d = g.row_ptr(r);
          for (std::size_t j = 0; j < c; ++j) d[j] += s[j];
        }
      }
      off += c;
    }
  });
}

/// Stacks a on top of b.
inline Var concat_rows(const Var& a, const Var& b) {
  detail::require(a.cols() == b.cols(), "concat column mismatch");
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
  std::copy(b.value().data.begin(), b.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.value().size()));
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const std::size_t split = self.parents[0]->value.size();
    if (detail::pneeds(self, 0)) {
      Matrix& g = detail::pgrad(self, 0);
      for (std::size_t i = 0; i < split; ++i) g.data[i] += self.grad.data[i];
    }
    if (detail::pneeds(self, 1)) {
      Matrix& g = detail::pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[split + i];
    }
  });
}

/// out[i] = a[index[i]]; backward scatter-adds.
inline Var gather_rows(const Var& a, std::vector<std::size_t> index) {
  const Matrix& A = a.value();
  Matrix out(index.size(), A.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::require(index[i] < A.rows, "gather index out of range");
    std::copy_n(A.row_ptr(index[i]), A.cols, out.row_ptr(i));
  }
  return make_op(std::move(out), {a}, [index = std::move(index)](Node& self) {
    Matrix& g = detail::pgrad(self, 0);
    for (std::size_t i = 0; i < index.size(); ++i) {
      const double* s = self.grad.row_ptr(i);
      double* d = g.row_ptr(index[i]);
      for (std::size_t c = 0; c < g.cols; ++c) d[c] += s[c];
    }
  });
}

/// Rows [r0, r1) of a, e.g. one input block of a weight matrix.
inline Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
  const Matrix& A = a.value();
  detail::require(r0 <= r1 && r1 <= A.rows, "slice out of range");
  Matrix out(r1 - r0, A.cols);
  std::copy(A.data.begin() + static_cast<std::ptrdiff_t>(r0 * A.cols), A.data.begin() + static_cast<std::ptrdiff_t>(r1 * A.cols),
            out.data.begin());
  return make_op(std::move(out), {a}, [r0](Node& self) {
    Matrix& g = detail::pgrad(self, 0);
    double* d = g.data.data() + r0 * g.cols;
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad.data[i];
  });
}

/// Multiplies row r by mask[r] (0 or 1).
inline Var mask_rows(const Var& a, std::vector<double> mask) {
  Matrix out = a.value();
  detail::require(mask.size() == out.rows, "mask size mismatch");
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) *= mask[r];
  return make_op(std::move(out), {a}, [mask = std::move(mask)](Node& self) {
    Matrix& g = detail::pgrad(self, 0);
    for (std::size_t r = 0; r < g.rows; ++r)
      for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += mask[r] * self.grad(r, c);
  });
}

/// Componentwise max of rows grouped by segment id. Empty segments take `fill` when provided and
/// raise otherwise. Gradient goes to the argmax row per component, lowest row index on ties.
inline Var segment_max(const Var& a, const std::vector<std::size_t>& segment, std::size_t num_segments,
                       std::optional<double> fill = std::nullopt) {
  const Matrix& A = a.value();
  detail::require(segment.size() == A.rows, "segment id count mismatch");
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> arg(num_segments * A.cols, none);
  Matrix out(num_segments, A.cols);
  for (std::size_t r = 0; r < A.rows; ++r) {
    const std::size_t s = segment[r];
    detail::require(s < num_segments, "segment id out of range");
    const double* row = A.row_ptr(r);
    for (std::size_t c = 0; c < A.cols; ++c) {
      std::size_t& best = arg[s * A.cols + c];
      if (best == none || row[c] > A(best, c)) best = r;
    }
  }
  for (std::size_t s = 0; s < num_segments; ++s) {
    for (std::size_t c = 0; c < A.cols; ++c) {
      const std::size_t best = arg[s * A.cols + c];
      if (best == none) {
        if (!fill) throw InvalidInput("segment_max: empty segment without a neutral fill");
        out(s, c) = *fill;
      } else {
        out(s, c) = A(best, c);
      }
    }
  }
  return make_op(std::move(out), {a}, [arg = std::move(arg), none](Node& self) {
    Matrix& g = detail::pgrad(self, 0);
    const std::size_t cols = g.cols;
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] != none) g(arg[i], i % cols) += self.grad.data[i];
    }
  });
}

/// Row-wise softmax.
inline Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    double* row = out.row_ptr(r);
    const double mx = *std::max_element(row, row + out.cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) sum += (row[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < out.cols; ++c) row[c] /= sum;
  }
  Matrix saved = out;
  return make_op(std::move(out), {a}, [saved = std::move(saved)](Node& self) {
    Matrix& g = detail::pgrad(self, 0);
    for (std::size_t r = 0; r < g.rows; ++r) {
      const double* y = saved.row_ptr(r);
      const double* gy = self.grad.row_ptr(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) dot += y[c] * gy[c];
      double* gx = g.row_ptr(r);
      for (std::size_t c = 0; c < g.cols; ++c) gx[c] += y[c] * (gy[c] - dot);
    }
  });
}

/// softmax(Q K^T / sqrt(d_k)) V. With no keys the result is an all-zero matrix.
inline Var attention(const Var& keys, const Var& queries, const Var& values) {
  detail::require(keys.cols() == queries.cols(), "attention key/query width mismatch");
  detail::require(keys.rows() == values.rows(), "attention key/value count mismatch");
  if (keys.rows() == 0) return constant(Matrix(queries.rows(), values.cols()));
  const double s = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
  Var weights = softmax_rows(scale(matmul(queries, keys, true), s));
  return matmul(weights, values);
}

/// Per-row layer normalization with learned gain and bias (1 x c each).
inline Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5) {
  const Matrix& A = a.value();
  const std::size_t n = A.cols;
  Matrix xhat(A.rows, n);
  std::vector<double> inv_std(A.rows);
  for (std::size_t r = 0; r < A.rows; ++r) {
    const double* x = A.row_ptr(r);
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += x[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) xhat(r, c) = (x[c] - mean) * inv_std[r];
  }
  Matrix out(A.rows, n);
  for (std::size_t r = 0; r < A.rows; ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = xhat(r, c) * gain.value().data[c] + bias.value().data[c];
  return make_op(std::move(out), {a, gain, bias}, [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const Matrix& G = self.grad;
    const Matrix& gamma = self.parents[1]->value;
    const std::size_t n = G.cols;
    if (detail::pneeds(self, 1) || detail::pneeds(self, 2)) {
      for (std::size_t r = 0; r < G.rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          if (detail::pneeds(self, 1)) detail::pgrad(self, 1).data[c] += G(r, c) * xhat(r, c);
          if (detail::pneeds(self, 2)) detail::pgrad(self, 2).data[c] += G(r, c);
        }
      }
    }
    if (detail::pneeds(self, 0)) {
      Matrix& gx = detail::pgrad(self, 0);
      for (std::size_t r = 0; r < G.rows; ++r) {
        double mean_g = 0.0;
        double mean_gx = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          const double gh = G(r, c) * gamma.data[c];
          mean_g += gh;
          mean_gx += gh * xhat(r, c);
        }
        mean_g /= static_cast<double>(n);
        mean_gx /= static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) {
          const double gh = G(r, c) * gamma.data[c];
          gx(r, c) += inv_std[r] * (gh - mean_g - xhat(r, c) * mean_gx);
        }
      }
    }
  });
}

/// Batch normalization over the row axis. In training mode batch statistics are used and the running
/// buffers are updated with `momentum`; otherwise the running statistics are used.
inline Var batch_norm(const Var& a, const Var& gain, const Var& bias, Parameter& running_mean, Parameter& running_var,
                      bool training, double momentum = 0.1, double eps = 1e-5) {
  const Matrix& A = a.value();
  const std::size_t n = A.rows;
  const std::size_t c = A.cols;
  if (!training || n == 0) {
    Matrix out(n, c);
    std::vector<double> mul(c);
    for (std::size_t j = 0; j < c; ++j) mul[j] = gain.value().data[j] / std::sqrt(running_var.value.data[j] + eps);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) out(r, j) = (A(r, j) - running_mean.value.data[j]) * mul[j] + bias.value().data[j];
    return make_op(std::move(out), {a, gain, bias}, [mul, &running_mean, &running_var, eps](Node& self) {
      const Matrix& X = self.parents[0]->value;
      const Matrix& G = self.grad;
      for (std::size_t r = 0; r < G.rows; ++r) {
        for (std::size_t j = 0; j < G.cols; ++j) {
          if (detail::pneeds(self, 0)) detail::pgrad(self, 0)(r, j) += G(r, j) * mul[j];
          if (detail::pneeds(self, 1))
            detail::pgrad(self, 1).data[j] +=
                G(r, j) * (X(r, j) - running_mean.value.data[j]) / std::sqrt(running_var.value.data[j] + eps);
          if (detail::pneeds(self, 2)) detail::pgrad(self, 2).data[j] += G(r, j);
        }
      }
    });
  }
  std::vector<double> mean(c, 0.0);
  std::vector<double> var(c, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) mean[j] += A(r, j);
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) var[j] += (A(r, j) - mean[j]) * (A(r, j) - mean[j]);
  for (auto& v : var) v /= static_cast<double>(n);
  if (grad_enabled()) {
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      running_mean.value.data[j] = (1.0 - momentum) * running_mean.value.data[j] + momentum * mean[j];
      running_var.value.data[j] = (1.0 - momentum) * running_var.value.data[j] + momentum * var[j] * unbias;
    }
  }
  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  Matrix xhat(n, c);
  Matrix out(n, c);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      xhat(r, j) = (A(r, j) - mean[j]) * inv_std[j];
      out(r, j) = xhat(r, j) * gain.value().data[j] + bias.value().data[j];
    }
  }
  return make_op(std::move(out), {a, gain, bias}, [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const Matrix& G = self.grad;
    const Matrix& gamma = self.parents[1]->value;
    const std::size_t n = G.rows;
    const std::size_t c = G.cols;
    std::vector<double> sum_g(c, 0.0);
    std::vector<double> sum_gx(c, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        sum_g[j] += G(r, j);
        sum_gx[j] += G(r, j) * xhat(r, j);
      }
    }
    if (detail::pneeds(self, 1))
      for (std::size_t j = 0; j < c; ++j) detail::pgrad(self, 1).data[j] += sum_gx[j];
    if (detail::pneeds(self, 2))
      for (std::size_t j = 0; j < c; ++j) detail::pgrad(self, 2).data[j] += sum_g[j];
    if (detail::pneeds(self, 0)) {
      Matrix& gx = detail::pgrad(self, 0);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j)
          gx(r, j) += gamma.data[j] * inv_std[j] * (G(r, j) - inv_n * sum_g[j] - xhat(r, j) * inv_n * sum_gx[j]);
    }
  });
}

inline Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return make_op(Matrix(1, 1, s), {a}, [](Node& self) {
    Matrix& g = detail::pgrad(self, 0);
    for (double& v : g.data) v += self.grad.data[0];
  });
}

/// One cross-entropy term: softmax over `candidates` rows of a column of logits, target index into candidates.
struct SoftmaxTerm {
  std::vector<std::size_t> candidates;
  std::size_t target = 0;
};

/// Mean over terms of -log softmax(logits[candidates])[target]. logits is m x 1.
inline Var mean_cross_entropy(const Var& logits, std::vector<SoftmaxTerm> terms) {
  const Matrix& L = logits.value();
  detail::require(L.cols == 1, "logits must be a column");
  detail::require(!terms.empty(), "cross entropy needs at least one term");
  double total = 0.0;
  std::vector<std::vector<double>> probs(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& term = terms[t];
    detail::require(term.target < term.candidates.size(), "cross entropy target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c : term.candidates) mx = std::max(mx, L.data[c]);
    double z = 0.0;
    probs[t].resize(term.candidates.size());
    for (std::size_t i = 0; i < term.candidates.size(); ++i) z += (probs[t][i] = std::exp(L.data[term.candidates[i]] - mx));
    for (double& p : probs[t]) p /= z;
    total += -(L.data[term.candidates[term.target]] - mx - std::log(z));
  }
  const double inv = 1.0 / static_cast<double>(terms.size());
  return make_op(Matrix(1, 1, total * inv), {logits},
                 [terms = std::move(terms), probs = std::move(probs), inv](Node& self) {
                   Matrix& g = detail::pgrad(self, 0);
                   const double s = self.grad.data[0] * inv;
                   for (std::size_t t = 0; t < terms.size(); ++t) {
                     const auto& term = terms[t];
                     for (std::size_t i = 0; i < term.candidates.size(); ++i) {
                       g.data[term.candidates[i]] += s * (probs[t][i] - (i == term.target ? 1.0 : 0.0));
                     }
                   }
                 });
}

/// (1/|rows|) * sum over the selected rows of ||pred_r - target_r||^2.
inline Var mean_squared_rows(const Var& pred, const Matrix& target, const std::vector<std::size_t>& rows) {
  const Matrix& P = pred.value();
  detail::require(P.same_shape(target), "mse shape mismatch");
  detail::require(!rows.empty(), "mse needs at least one row");
  double total = 0.0;
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < P.cols; ++c) {
      const double d = P(r, c) - target(r, c);
      total += d * d;
    }
  const double inv = 1.0 / static_cast<double>(rows.size());
  return make_op(Matrix(1, 1, total * inv), {pred}, [target, rows, inv](Node& self) {
    const Matrix& P = self.parents[0]->value;
    Matrix& g = detail::pgrad(self, 0);
    const double s = 2.0 * inv * self.grad.data[0];
    for (std::size_t r : rows)
      for (std::size_t c = 0; c < P.cols; ++c) g(r, c) += s * (P(r, c) - target(r, c));
  });
}

}  // namespace gnnmp::nn
