#pragma once

#include <functional>
#include <map>
#include <string>

#include "rmgen/numerics/tape.hpp"
#include "rmgen/numerics/tensor.hpp"

namespace rmgen::num {

using VarMap = std::map<std::string, Var>;

// A scalar objective written against the primitive suite. The same callable
// serves the reverse-mode and finite-difference routes.
using TapeObjective = std::function<Var(Tape&, const VarMap&)>;
using PlainObjective = std::function<double(const TensorMap&)>;

// Reverse-mode gradient of `objective` with respect to every entry of
// `params`. Parameters the objective never touches get a zero gradient.
// Throws NumericError on a non-finite objective or gradient.
TensorMap reverse_grad(const TapeObjective& objective, const TensorMap& params);

// Value of `objective` evaluated on a non-recording tape.
double evaluate(const TapeObjective& objective, const TensorMap& params);

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h per coordinate.
TensorMap finite_diff_grad(const PlainObjective& objective, const TensorMap& params,
                           double step = 1e-3);
TensorMap finite_diff_grad(const TapeObjective& objective, const TensorMap& params,
                           double step = 1e-3);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor) over all entries of all tensors.
double max_relative_error(const TensorMap& a, const TensorMap& b, double floor = 1e-6);

}  // namespace rmgen::num
