#include "rmgen/numerics/grad.hpp"

#include <algorithm>
#include <cmath>

#include "rmgen/common/error.hpp"

namespace rmgen::num {

TensorMap reverse_grad(const TapeObjective& objective, const TensorMap& params) {
  Tape tape(true);
  VarMap vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.leaf(value, true));
  const Var out = objective(tape, vars);
  require(out.value().size() == 1, "reverse_grad: objective must be scalar");
  if (!std::isfinite(out.value()[0])) throw NumericError("reverse_grad: non-finite objective");
  tape.backward(out);
  TensorMap grads;
  for (const auto& [name, var] : vars) {
    Tensor g = tape.grad(var);
    if (!g.all_finite()) throw NumericError("reverse_grad: non-finite gradient for " + name);
    grads.emplace(name, std::move(g));
  }
  return grads;
}

double evaluate(const TapeObjective& objective, const TensorMap& params) {
  Tape tape(false);
  VarMap vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.leaf(value, false));
  const Var out = objective(tape, vars);
  require(out.value().size() == 1, "evaluate: objective must be scalar");
  return out.value()[0];
}

TensorMap finite_diff_grad(const PlainObjective& objective, const TensorMap& params,
                           double step) {
  require(step > 0.0, "finite_diff_grad: step must be positive");
  TensorMap work = params;
  TensorMap grads;
  for (auto& [name, tensor] : work) {
    Tensor g(tensor.shape(), 0.0);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      tensor[i] = saved + step;
      const double up = objective(work);
      tensor[i] = saved - step;
      const double down = objective(work);
      tensor[i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    if (!g.all_finite()) throw NumericError("finite_diff_grad: non-finite gradient for " + name);
    grads.emplace(name, std::move(g));
  }
  return grads;
}

TensorMap finite_diff_grad(const TapeObjective& objective, const TensorMap& params,
                           double step) {
  return finite_diff_grad(
      PlainObjective([&objective](const TensorMap& p) { return evaluate(objective, p); }),
      params, step);
}

double max_relative_error(const TensorMap& a, const TensorMap& b, double floor) {
  require(a.size() == b.size(), "max_relative_error: maps differ in size");
  double worst = 0.0;
  for (const auto& [name, ta] : a) {
    auto it = b.find(name);
    require(it != b.end(), "max_relative_error: missing entry " + name);
    const Tensor& tb = it->second;
    require(ta.shape() == tb.shape(), "max_relative_error: shape mismatch for " + name);
    for (std::size_t i = 0; i < ta.size(); ++i) {
      const double denom = std::max({std::abs(ta[i]), std::abs(tb[i]), floor});
      worst = std::max(worst, std::abs(ta[i] - tb[i]) / denom);
    }
  }
  return worst;
}

}  // namespace rmgen::num
