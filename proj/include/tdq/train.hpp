#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tdq/compiler.hpp"

namespace tdq {

Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Updates every parameter with requires_grad from its accumulated gradient.
// A trainable parameter without a gradient is an error.
void sgd_step(const std::vector<ParameterPtr>& params, double lr);

struct AdamState {
  std::vector<Tensor> m, v;
  std::int64_t t = 0;
};

void adam_step(const std::vector<ParameterPtr>& params, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

enum class OptimizerKind { Sgd, Adam };

class Optimizer {
 public:
  Optimizer(std::vector<ParameterPtr> params, OptimizerKind kind, double lr);

  void zero_grad();
  void step();
  const std::vector<ParameterPtr>& parameters() const noexcept { return params_; }
  const AdamState& adam_state() const noexcept { return adam_; }

 private:
  std::vector<ParameterPtr> params_;
  OptimizerKind kind_;
  double lr_;
  AdamState adam_;
};

struct TrainConfig {
  std::int64_t iterations = 2000;
  double lr = 0.01;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  std::string loss = "mse";

  // Keys: iterations, lr, optimizer ("sgd" | "adam"), seed, loss ("mse").
  // Missing keys keep their defaults.
  static TrainConfig from_json(std::string_view text);
  void validate() const;
};

// One training example: tables to register before the run, and the target
// for the flattened last result column.
struct Batch {
  std::vector<std::pair<std::string, Table>> inputs;
  Tensor target;
};

// Prediction of a query result: its last column flattened to a float vector.
// Dense soft group-by grids flatten in key order, first key most significant.
Tensor prediction(const Table& result);

using TrainCallback = std::function<void(std::int64_t iteration, double loss)>;

// Each iteration registers one batch, runs the query, and takes an optimizer
// step on the loss. Batches are visited in an order reshuffled every epoch
// from cfg.seed. Returns the per-iteration losses.
std::vector<double> train(const CompiledQuery& query, Catalog& catalog, const std::vector<Batch>& batches,
                          const TrainConfig& cfg, const TrainCallback& callback = {});

struct PrivacyParams {
  double epsilon = 0.1;
  double sensitivity = 2.0;

  double scale() const;
};

// Adds i.i.d. Laplace(0, sensitivity / epsilon) noise to every entry.
Tensor laplace_noise(const Tensor& counts, const PrivacyParams& pp, std::mt19937_64& rng);

}  // namespace tdq
