#include "tdq/nn.hpp"

#include <cmath>
#include <random>

namespace tdq::nn {

Linear::Linear(const std::string& name, std::int64_t in, std::int64_t out, std::uint64_t seed) : in_(in), out_(out) {
  if (in < 1 || out < 1) throw ShapeError("linear layer extents must be positive");
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(static_cast<std::size_t>(in * out)), b(static_cast<std::size_t>(out));
  for (auto& v : w) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  weight_ = std::make_shared<Parameter>(name + ".weight", Tensor::from_data({in, out}, std::move(w)));
  bias_ = std::make_shared<Parameter>(name + ".bias", Tensor::from_data({out}, std::move(b)));
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ShapeError("linear layer expects [n, " + std::to_string(in_) + "], got " + shape_to_string(x.shape()));
  }
  return matmul(x, weight_->tensor()) + bias_->tensor();
}

Mlp::Mlp(const std::string& name, const std::vector<std::int64_t>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ShapeError("an MLP needs at least an input and an output size");
  std::seed_seq seq{seed};
  std::vector<std::uint64_t> seeds(sizes.size() - 1);
  seq.generate(seeds.begin(), seeds.end());
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), sizes[i], sizes[i + 1], seeds[i]);
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

std::vector<ParameterPtr> Mlp::parameters() const {
  std::vector<ParameterPtr> out;
  for (const auto& l : layers_) {
    auto p = l.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace tdq::nn
