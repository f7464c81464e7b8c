#include "tdq/train.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

namespace tdq {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + shape_to_string(pred.shape()) + " vs target " +
                     shape_to_string(target.shape()));
  }
  return mean(square(pred - target));
}

namespace {

std::vector<double> gradient_of(const Parameter& p) {
  auto g = p.grad();
  if (!g) throw AutogradError("parameter '" + p.name() + "' has no gradient");
  if (g->shape() != p.value().shape()) throw ShapeError("gradient shape mismatch for '" + p.name() + "'");
  return g->to_vector();
}

}  // namespace

void sgd_step(const std::vector<ParameterPtr>& params, double lr) {
  NoGradGuard guard;
  for (const auto& p : params) {
    if (!p->requires_grad()) continue;
    const auto g = gradient_of(*p);
    auto v = p->value().to_vector();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    p->assign(Tensor::from_data(p->value().shape(), std::move(v), p->value().dtype()));
  }
}

void adam_step(const std::vector<ParameterPtr>& params, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  NoGradGuard guard;
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros(p->value().shape()));
      state.v.push_back(Tensor::zeros(p->value().shape()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam state does not match the parameter list");
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (!p->requires_grad()) continue;
    const auto g = gradient_of(*p);
    auto m = state.m[k].to_vector();
    auto v = state.v[k].to_vector();
    auto x = p->value().to_vector();
    if (m.size() != x.size()) throw ShapeError("adam state shape mismatch for '" + p->name() + "'");
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    const auto& shape = p->value().shape();
    state.m[k] = Tensor::from_data(shape, std::move(m));
    state.v[k] = Tensor::from_data(shape, std::move(v));
    p->assign(Tensor::from_data(shape, std::move(x), p->value().dtype()));
  }
}

Optimizer::Optimizer(std::vector<ParameterPtr> params, OptimizerKind kind, double lr)
    : params_(std::move(params)), kind_(kind), lr_(lr) {
  if (!(lr > 0)) throw Error("learning rate must be positive");
}

void Optimizer::zero_grad() {
  for (const auto& p : params_) p->zero_grad();
}

void Optimizer::step() {
  if (kind_ == OptimizerKind::Sgd) {
    sgd_step(params_, lr_);
  } else {
    adam_step(params_, adam_, lr_);
  }
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid training config: ") + e.what());
  }
  if (!j.is_object()) throw Error("training config must be a JSON object");
  TrainConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "iterations") {
        cfg.iterations = value.get<std::int64_t>();
      } else if (key == "lr") {
        cfg.lr = value.get<double>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "loss") {
        cfg.loss = value.get<std::string>();
      } else if (key == "optimizer") {
        const auto name = value.get<std::string>();
        if (name == "sgd") {
          cfg.optimizer = OptimizerKind::Sgd;
        } else if (name == "adam") {
          cfg.optimizer = OptimizerKind::Adam;
        } else {
          throw Error("unknown optimizer '" + name + "' (expected sgd or adam)");
        }
      } else {
        throw Error("unknown training config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid training config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw Error("iterations must be non-negative");
  if (!(lr > 0)) throw Error("lr must be positive");
  if (loss != "mse") throw Error("unknown loss '" + loss + "' (expected mse)");
}

Tensor prediction(const Table& result) {
  if (result.columns.empty()) throw ExecutionError("query result has no columns");
  const Tensor& v = result.columns.back().values;
  const Tensor f = v.is_floating() ? v : v.to(DType::Float64);
  return reshape(f, {f.numel()});
}

std::vector<double> train(const CompiledQuery& query, Catalog& catalog, const std::vector<Batch>& batches,
                          const TrainConfig& cfg, const TrainCallback& callback) {
  cfg.validate();
  if (!query.config().trainable) throw CompileError("train needs a query compiled with trainable=true");
  const auto params = query.parameters();
  if (params.empty()) throw Error("query has no parameters to train");
  if (batches.empty() && cfg.iterations > 0) throw Error("no training batches");

  Optimizer opt(params, cfg.optimizer, cfg.lr);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(batches.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.iterations));
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    const auto pos = static_cast<std::size_t>(it) % batches.size();
    if (pos == 0) std::shuffle(order.begin(), order.end(), rng);
    const Batch& batch = batches[order[pos]];

    opt.zero_grad();
    for (const auto& [name, table] : batch.inputs) catalog.register_table(name, table);
    const Tensor pred = prediction(query.run(catalog));
    const Tensor target = reshape(batch.target.is_floating() ? batch.target : batch.target.to(DType::Float64),
                                  {batch.target.numel()});
    if (pred.numel() != target.numel()) {
      throw ShapeError("target has " + std::to_string(target.numel()) + " values but the query produced " +
                       std::to_string(pred.numel()));
    }
    const Tensor loss = mse_loss(pred, target);
    if (!loss.tracked()) throw AutogradError("loss does not depend on any trainable parameter");
    backward(loss);
    opt.step();
    history.push_back(loss.item());
    if (callback) callback(it, history.back());
  }
  return history;
}

double PrivacyParams::scale() const {
  if (!(epsilon > 0)) throw Error("epsilon must be positive");
  if (!(sensitivity > 0)) throw Error("sensitivity must be positive");
  return sensitivity / epsilon;
}

Tensor laplace_noise(const Tensor& counts, const PrivacyParams& pp, std::mt19937_64& rng) {
  const double b = pp.scale();
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  auto values = counts.to_vector();
  for (auto& x : values) {
    double u = 0.0;
    do {
      u = uniform(rng);
    } while (1.0 - 2.0 * std::abs(u) <= 0.0);
    const double sign = u < 0 ? -1.0 : (u > 0 ? 1.0 : 0.0);
    x += -b * sign * std::log(1.0 - 2.0 * std::abs(u));
  }
  return Tensor::from_data(counts.shape(), std::move(values));
}

}  // namespace tdq
