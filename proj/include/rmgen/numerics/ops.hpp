#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rmgen/numerics/tape.hpp"

// Differentiable primitives. Every op validates shapes (ContractViolation on
// mismatch) and rejects non-finite outputs (NumericError). Sums run in a
// fixed left-to-right order so results are bitwise reproducible.
namespace rmgen::num {

// [m x k] . [k x n]
Var matmul(const Var& a, const Var& b);
// [m x k] . [n x k]^T
Var matmul_nt(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Adds a row vector (extent = a.cols()) to every row of `a`.
Var add_row(const Var& a, const Var& row);

Var gelu(const Var& a);  // tanh approximation
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var log_sigmoid(const Var& a);
Var minimum(const Var& a, const Var& b);
Var square(const Var& a);

// Row-wise softmax.
Var softmax_rows(const Var& a);
// Row-wise softmax of a square score matrix where entry (i, j) with j > i is
// masked out.
Var causal_softmax(const Var& scores);
// Per-row standardisation followed by gamma * x_hat + beta.
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Gathers rows of `table` ([V x d]) -> [ids.size() x d].
Var embedding(const Var& table, std::span<const std::size_t> ids);

inline constexpr std::size_t kIgnoreTarget = static_cast<std::size_t>(-1);
// Mean over non-ignored rows of -log softmax(logits)[row, target].
// The adjoint is (softmax - one_hot) / count.
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);

Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);

Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

// Plain-tensor helpers (no tape).
Tensor softmax(std::span<const double> v);
Tensor log_softmax_row(std::span<const double> v);
// Numerically symmetric logistic: sigmoid(x) + sigmoid(-x) == 1 exactly.
double logistic(double x);
double log_logistic(double x);

namespace kernel {
// C (+)= A . B with A [m x k], B [k x n].
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate);
// C (+)= A . B^T with A [m x k], B [n x k].
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate);
// C (+)= A^T . B with A [k x m], B [k x n].
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate);
}  // namespace kernel

}  // namespace rmgen::num
