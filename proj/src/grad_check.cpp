#include "tdq/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace tdq {

namespace {

double scalar_value(const Tensor& y) {
  if (y.numel() != 1) throw AutogradError("grad_check: function is not scalar-valued");
  return y.item();
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double grad_check(const std::function<Tensor()>& f, const std::vector<ParameterPtr>& params, double eps) {
  for (const auto& p : params) p->zero_grad();
  {
    Tape tape;
    const Tensor y = f();
    scalar_value(y);
    backward(y);
  }
  double worst = 0.0;
  NoGradGuard guard;
  for (const auto& p : params) {
    const Tensor original = p->value();
    const auto grad = p->grad();
    const auto n = original.numel();
    std::vector<double> base = original.to_vector();
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> shifted = base;
      shifted[i] = base[i] + eps;
      p->assign(Tensor::from_data(original.shape(), shifted, original.dtype()));
      const double up = scalar_value(f());
      shifted[i] = base[i] - eps;
      p->assign(Tensor::from_data(original.shape(), shifted, original.dtype()));
      const double down = scalar_value(f());
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grad ? grad->flat(i) : 0.0;
      worst = std::max(worst, relative_error(analytic, numeric));
    }
    p->assign(original);
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  auto param = std::make_shared<Parameter>("x", x);
  return grad_check([&] { return f(param->tensor()); }, {param}, eps);
}

}  // namespace tdq
