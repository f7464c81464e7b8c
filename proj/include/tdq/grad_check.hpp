#pragma once

#include <functional>
#include <vector>

#include "tdq/tensor.hpp"

namespace tdq {

// Compares backward() against central differences
// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps, componentwise. Returns the max
// relative error, with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

// Same check over every element of every parameter; `f` must read the
// parameters through Parameter::tensor().
double grad_check(const std::function<Tensor()>& f, const std::vector<ParameterPtr>& params,
                  double eps = 1e-5);

}  // namespace tdq
