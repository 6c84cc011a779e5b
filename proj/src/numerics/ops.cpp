#include "rmgen/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "rmgen/common/error.hpp"

namespace rmgen::num {

namespace kernel {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate) {
  // Transpose B once so the inner loop is contiguous; the summation order
  // over k is unchanged.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, k, n, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernel

namespace {

void require_same_tape(const Var& a, const Var& b) {
  require(a.valid() && b.valid() && &a.tape() == &b.tape(),
          "op inputs must live on the same tape");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require_same_tape(a, b);
  require(a.value().shape() == b.value().shape(),
          std::string(op) + ": shape mismatch " + shape_string(a.value().shape()) +
              " vs " + shape_string(b.value().shape()));
}

template <class Fwd, class Deriv>
Var unary(const Var& a, const char* op, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(y), {a},
      [ia, deriv](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value_of(ia);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += g[i] * deriv(xv[i]);
      },
      op);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  return 1.0 - 1.0 / (1.0 + std::exp(x));
}

double log_logistic(double x) {
  if (x < 0.0) return x - std::log1p(std::exp(x));
  return -std::log1p(std::exp(-x));
}

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(bv.rank() == 2 && av.cols() == bv.rows(),
          "matmul: shape mismatch " + shape_string(av.shape()) + " . " +
              shape_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor c({m, n});
  kernel::gemm_nn(m, k, n, av.data(), bv.data(), c.data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(c), {a, b},
      [ia, ib, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia))
          kernel::gemm_nt(m, n, k, g.data(), t.value_of(ib).data(),
                          t.grad_buffer(ia).data(), true);
        if (t.needs_grad(ib))
          kernel::gemm_tn(k, m, n, t.value_of(ia).data(), g.data(),
                          t.grad_buffer(ib).data(), true);
      },
      "matmul");
}

Var matmul_nt(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.cols(), "matmul_nt: shape mismatch " +
                                      shape_string(av.shape()) + " . " +
                                      shape_string(bv.shape()) + "^T");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor c({m, n});
  kernel::gemm_nt(m, k, n, av.data(), bv.data(), c.data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(c), {a, b},
      [ia, ib, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia))
          kernel::gemm_nn(m, n, k, g.data(), t.value_of(ib).data(),
                          t.grad_buffer(ia).data(), true);
        if (t.needs_grad(ib))
          kernel::gemm_tn(n, m, k, g.data(), t.value_of(ia).data(),
                          t.grad_buffer(ib).data(), true);
      },
      "matmul_nt");
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor z(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] + y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(z), {a, b},
      [ia, ib](Tape& t, const Tensor& g) {
        for (std::size_t id : {ia, ib}) {
          if (!t.needs_grad(id)) continue;
          Tensor& gb = t.grad_buffer(id);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
      },
      "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor z(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] - y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(z), {a, b},
      [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
          Tensor& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor z(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(z), {a, b},
      [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value_of(ia);
        const Tensor& yv = t.value_of(ib);
        if (t.needs_grad(ia)) {
          Tensor& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
        }
        if (t.needs_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
        }
      },
      "mul");
}

Var scale(const Var& a, double s) {
  return unary(
      a, "scale", [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  require(r.size() == x.cols(), "add_row: row extent " + std::to_string(r.size()) +
                                    " does not match " + std::to_string(x.cols()) +
                                    " columns");
  Tensor z(x.shape());
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) z.at(i, j) = x.at(i, j) + r[j];
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(
      std::move(z), {a, row},
      [ia, ir, rows, cols](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
          Tensor& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ir)) {
          Tensor& gr = t.grad_buffer(ir);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) gr[j] += g[i * cols + j];
        }
      },
      "add_row");
}

Var gelu(const Var& a) {
  return unary(
      a, "gelu",
      [](double x) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double th = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var tanh(const Var& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double x) {
        const double th = std::tanh(x);
        return 1.0 - th * th;
      });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid", [](double x) { return logistic(x); },
      [](double x) {
        const double s = logistic(x);
        return s * (1.0 - s);
      });
}

Var log_sigmoid(const Var& a) {
  return unary(
      a, "log_sigmoid", [](double x) { return log_logistic(x); },
      [](double x) { return logistic(-x); });
}

Var square(const Var& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var minimum(const Var& a, const Var& b) {
  require_same_shape(a, b, "minimum");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor z(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = std::min(x[i], y[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(z), {a, b},
      [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value_of(ia);
        const Tensor& yv = t.value_of(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t to = xv[i] <= yv[i] ? ia : ib;
          if (t.needs_grad(to)) t.grad_buffer(to)[i] += g[i];
        }
      },
      "minimum");
}

namespace {

void softmax_into(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= total;
}

// dx_j += y_j * (g_j - sum_k g_k y_k) over the first n entries of a row.
void softmax_backward_row(const double* y, const double* g, double* dx, std::size_t n) {
  double inner = 0.0;
  for (std::size_t j = 0; j < n; ++j) inner += g[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - inner);
}

}  // namespace

Tensor softmax(std::span<const double> v) {
  require(!v.empty(), "softmax of an empty vector");
  Tensor y({v.size()});
  softmax_into(v.data(), y.data(), v.size());
  return y;
}

Tensor log_softmax_row(std::span<const double> v) {
  require(!v.empty(), "log_softmax of an empty vector");
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double total = 0.0;
  for (double x : v) total += std::exp(x - mx);
  const double lse = mx + std::log(total);
  Tensor y({v.size()});
  for (std::size_t j = 0; j < v.size(); ++j) y[j] = v[j] - lse;
  return y;
}

Var softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < rows; ++i)
    softmax_into(x.data() + i * cols, y.data() + i * cols, cols);
  const std::size_t ia = a.id();
  auto holder = std::make_shared<Tensor>(y);
  return a.tape().record(
      std::move(y), {a},
      [ia, rows, cols, holder](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < rows; ++i)
          softmax_backward_row(holder->data() + i * cols, g.data() + i * cols,
                               ga.data() + i * cols, cols);
      },
      "softmax_rows");
}

Var causal_softmax(const Var& scores) {
  const Tensor& x = scores.value();
  require(x.rank() == 2 && x.rows() == x.cols(), "causal_softmax needs a square matrix");
  const std::size_t n = x.rows();
  Tensor y({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) softmax_into(x.data() + i * n, y.data() + i * n, i + 1);
  const std::size_t ia = scores.id();
  auto holder = std::make_shared<Tensor>(y);
  return scores.tape().record(
      std::move(y), {scores},
      [ia, n, holder](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < n; ++i)
          softmax_backward_row(holder->data() + i * n, g.data() + i * n,
                               ga.data() + i * n, i + 1);
      },
      "causal_softmax");
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(gamma.value().size() == cols && beta.value().size() == cols,
          "layer_norm_rows: affine parameters must match the column count");
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor y(xv.shape());
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = xv.data() + i * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += r[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (r[j] - mu) * rs;
      xhat->at(i, j) = h;
      y.at(i, j) = gv[j] * h + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(
      std::move(y), {x, gamma, beta},
      [ix, ig, ib, rows, cols, xhat, rstd](Tape& t, const Tensor& g) {
        const Tensor& gam = t.value_of(ig);
        if (t.needs_grad(ig)) {
          Tensor& gg = t.grad_buffer(ig);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
              gg[j] += g[i * cols + j] * xhat->at(i, j);
        }
        if (t.needs_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
        }
        if (t.needs_grad(ix)) {
          Tensor& gx = t.grad_buffer(ix);
          std::vector<double> dh(cols);
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t i = 0; i < rows; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              dh[j] = g[i * cols + j] * gam[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * xhat->at(i, j);
            }
            mean_dh *= inv_n;
            mean_dh_h *= inv_n;
            const double rs = (*rstd)[i];
            for (std::size_t j = 0; j < cols; ++j)
              gx[i * cols + j] += rs * (dh[j] - mean_dh - xhat->at(i, j) * mean_dh_h);
          }
        }
      },
      "layer_norm_rows");
}

Var embedding(const Var& table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  require(tv.rank() == 2, "embedding table must be rank 2");
  require(!ids.empty(), "embedding lookup of an empty id list");
  const std::size_t vocab = tv.rows(), dim = tv.cols();
  Tensor out({ids.size(), dim});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] < vocab, "embedding id " + std::to_string(ids[r]) + " out of range");
    std::copy_n(tv.data() + ids[r] * dim, dim, out.data() + r * dim);
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape().record(
      std::move(out), {table},
      [it, dim, idv = std::move(idv)](Tape& t, const Tensor& g) {
        Tensor& gt = t.grad_buffer(it);
        for (std::size_t r = 0; r < idv.size(); ++r)
          for (std::size_t j = 0; j < dim; ++j) gt[idv[r] * dim + j] += g[r * dim + j];
      },
      "embedding");
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const Tensor& x = logits.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  require(targets.size() == rows, "cross_entropy: one target per logit row required");
  auto probs = std::make_shared<Tensor>(Shape{rows, cols});
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    softmax_into(x.data() + i * cols, probs->data() + i * cols, cols);
    if (targets[i] == kIgnoreTarget) continue;
    require(targets[i] < cols, "cross_entropy: target out of range");
    const Tensor lsm = log_softmax_row(x.row(i));
    total -= lsm[targets[i]];
    ++count;
  }
  require(count > 0, "cross_entropy: every target is ignored");
  const double inv = 1.0 / static_cast<double>(count);
  const std::size_t il = logits.id();
  std::vector<std::size_t> tv(targets.begin(), targets.end());
  return logits.tape().record(
      Tensor::scalar(total * inv), {logits},
      [il, rows, cols, inv, probs, tv = std::move(tv)](Tape& t, const Tensor& g) {
        Tensor& gl = t.grad_buffer(il);
        const double s = g[0] * inv;
        for (std::size_t i = 0; i < rows; ++i) {
          if (tv[i] == kIgnoreTarget) continue;
          for (std::size_t j = 0; j < cols; ++j) {
            const double onehot = (j == tv[i]) ? 1.0 : 0.0;
            gl[i * cols + j] += s * (probs->at(i, j) - onehot);
          }
        }
      },
      "cross_entropy");
}

Var sum(const Var& a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  const std::size_t ia = a.id();
  return a.tape().record(
      Tensor::scalar(s), {a},
      [ia](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      },
      "sum");
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require(a.value().size() == b.value().size(), "dot: size mismatch");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      Tensor::scalar(s), {a, b},
      [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value_of(ia);
        const Tensor& yv = t.value_of(ib);
        if (t.needs_grad(ia)) {
          Tensor& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * yv[i];
        }
        if (t.needs_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * xv[i];
        }
      },
      "dot");
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t cols = x.cols();
  require(count > 0 && start + count <= x.rows(), "slice_rows: range out of bounds");
  Tensor y({count, cols});
  std::copy_n(x.data() + start * cols, count * cols, y.data());
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(y), {a},
      [ia, start, count, cols](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < count * cols; ++i) ga[start * cols + i] += g[i];
      },
      "slice_rows");
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  require(count > 0 && start + count <= cols, "slice_cols: range out of bounds");
  Tensor y({rows, count});
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(x.data() + i * cols + start, count, y.data() + i * count);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(y), {a},
      [ia, start, count, rows, cols](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < count; ++j)
            ga[i * cols + start + j] += g[i * count + j];
      },
      "slice_cols");
}

namespace {

Var join_rows(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.cols() == y.cols(), "concat_rows: column mismatch");
  const std::size_t cols = x.cols(), ra = x.rows(), rb = y.rows();
  Tensor z({ra + rb, cols});
  std::copy_n(x.data(), ra * cols, z.data());
  std::copy_n(y.data(), rb * cols, z.data() + ra * cols);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(z), {a, b},
      [ia, ib, ra, rb, cols](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
          Tensor& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < ra * cols; ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < rb * cols; ++i) gb[i] += g[ra * cols + i];
        }
      },
      "concat_rows");
}

}  // namespace

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows of nothing");
  Var acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = join_rows(acc, parts[i]);
  return acc;
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    require(p.value().rows() == rows, "concat_cols: row mismatch");
    total += p.value().cols();
  }
  Tensor z({rows, total});
  std::vector<std::size_t> ids, widths;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t w = v.cols();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.data() + i * w, w, z.data() + i * total + off);
    ids.push_back(p.id());
    widths.push_back(w);
    off += w;
  }
  return parts.front().tape().record(
      std::move(z), std::span<const Var>(parts),
      [ids = std::move(ids), widths = std::move(widths), rows, total](Tape& t,
                                                                     const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          const std::size_t w = widths[p];
          if (t.needs_grad(ids[p])) {
            Tensor& gp = t.grad_buffer(ids[p]);
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + offset + j];
          }
          offset += w;
        }
      },
      "concat_cols");
}

}  // namespace rmgen::num
