#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdq/tensor.hpp"

namespace tdq::nn {

// y = x W + b with W [in, out]. Weights and bias start uniform in
// +-1/sqrt(in), drawn from a generator seeded with `seed`.
class Linear {
 public:
  Linear(const std::string& name, std::int64_t in, std::int64_t out, std::uint64_t seed);

  Tensor forward(const Tensor& x) const;
  std::vector<ParameterPtr> parameters() const { return {weight_, bias_}; }
  std::int64_t in_features() const noexcept { return in_; }
  std::int64_t out_features() const noexcept { return out_; }

 private:
  std::int64_t in_, out_;
  ParameterPtr weight_, bias_;
};

// Linear layers with ReLU between them; the last layer is left linear.
class Mlp {
 public:
  Mlp(const std::string& name, const std::vector<std::int64_t>& sizes, std::uint64_t seed);

  Tensor forward(const Tensor& x) const;
  std::vector<ParameterPtr> parameters() const;

 private:
  std::vector<Linear> layers_;
};

}  // namespace tdq::nn
