#include "grad_cases.hpp"

#include <algorithm>
#include <numeric>

#include "tdq/compiler.hpp"
#include "tdq/experiments.hpp"
#include "tdq/grad_check.hpp"
#include "tdq/nn.hpp"
#include "tdq/train.hpp"

namespace tdq::support {

namespace {

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tensor random_tensor(std::mt19937_64& rng, const Shape& shape, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = u(rng);
  return Tensor::from_data(shape, std::move(v));
}

// Values bounded away from zero, either sign.
Tensor nonzero_tensor(std::mt19937_64& rng, const Shape& shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return Tensor::from_data(shape, std::move(v));
}

// Distinct values at least 0.1 apart, so max has no near ties.
Tensor spread_tensor(std::mt19937_64& rng, const Shape& shape) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  for (auto& x : v) x = 0.1 * x - 1.0;
  return Tensor::from_data(shape, std::move(v));
}

// Scalar probe of a tensor-valued function: a fixed random weighting of its
// outputs, so every output element contributes a distinct gradient.
std::function<Tensor(const Tensor&)> probe(std::mt19937_64& rng, const Tensor& sample_out,
                                           std::function<Tensor(const Tensor&)> f) {
  const Tensor w = random_tensor(rng, sample_out.shape(), -1.0, 1.0);
  return [w, f = std::move(f)](const Tensor& x) { return sum(f(x) * w); };
}

double check(std::mt19937_64& rng, const Tensor& x, std::function<Tensor(const Tensor&)> f) {
  Tensor sample;
  {
    NoGradGuard guard;
    sample = f(x);
  }
  return grad_check(probe(rng, sample, std::move(f)), x);
}

Shape random_shape(std::mt19937_64& rng, int rank) {
  Shape s;
  for (int i = 0; i < rank; ++i) s.push_back(uniform(rng, 1, 4));
  return s;
}

// A random shape for the second operand that broadcasts against `a`.
Shape broadcast_partner(std::mt19937_64& rng, const Shape& a) {
  Shape b(a.begin() + uniform(rng, 0, static_cast<int>(a.size())), a.end());
  for (auto& d : b) {
    if (uniform(rng, 0, 2) == 0) d = 1;
  }
  return b;
}

double binary_case(std::mt19937_64& rng, BinaryOp op) {
  Shape sa = random_shape(rng, uniform(rng, 1, 3));
  Shape sb = broadcast_partner(rng, sa);
  if (uniform(rng, 0, 1) == 0) std::swap(sa, sb);
  const Tensor a = random_tensor(rng, sa);
  const Tensor b = op == BinaryOp::Div ? nonzero_tensor(rng, sb, 0.5, 2.0) : random_tensor(rng, sb);
  const double ea = check(rng, a, [&](const Tensor& x) { return binary(op, x, b); });
  const double eb = check(rng, b, [&](const Tensor& x) { return binary(op, a, x); });
  return std::max(ea, eb);
}

double unary_case(std::mt19937_64& rng, UnaryOp op) {
  const Shape s = random_shape(rng, uniform(rng, 1, 3));
  Tensor x;
  switch (op) {
    case UnaryOp::Log: x = random_tensor(rng, s, 0.5, 3.0); break;
    case UnaryOp::Relu: x = nonzero_tensor(rng, s, 0.1, 2.0); break;
    default: x = random_tensor(rng, s);
  }
  return check(rng, x, [op](const Tensor& t) { return unary(op, t); });
}

double reduce_case(std::mt19937_64& rng, ReduceOp op) {
  const Shape s = random_shape(rng, uniform(rng, 1, 3));
  const Tensor x = op == ReduceOp::Max ? spread_tensor(rng, s) : random_tensor(rng, s);
  std::optional<int> axis;
  if (uniform(rng, 0, 2) > 0) axis = uniform(rng, -static_cast<int>(s.size()), static_cast<int>(s.size()) - 1);
  const bool keep = uniform(rng, 0, 1) == 1;
  return check(rng, x, [=](const Tensor& t) { return reduce(op, t, axis, keep); });
}

Table pe_table(const Tensor& logits, const Tensor& values) {
  return assemble({{"k", {}, false}, {"v", {}, false}}, {pe_encode(logits), plain(values)});
}

double groupby_soft_case(std::mt19937_64& rng, sql::AggFunc func) {
  const int n = uniform(rng, 2, 6), k = uniform(rng, 2, 4);
  const Tensor logits = random_tensor(rng, {n, k});
  const Tensor values = random_tensor(rng, {n});
  const std::vector<AggSpec> aggs = {{func, 1, "agg"}};
  const auto run = [&](const Tensor& l, const Tensor& v) {
    const Table t = groupby_soft(pe_table(l, v), {0}, aggs);
    return t.columns.back().values;
  };
  const double el = check(rng, logits, [&](const Tensor& x) { return run(x, values); });
  const double ev = check(rng, values, [&](const Tensor& x) { return run(logits, x); });
  return std::max(el, ev);
}

// classify_incomes over a small bag, trained end to end against noisy counts.
double pipeline_case(std::mt19937_64& rng) {
  const int n = 4, features = uniform(rng, 1, 3);
  UdfRegistry registry;
  const auto udf = register_income_classifier(registry, static_cast<std::size_t>(features), rng());
  Catalog catalog;
  std::vector<ColumnDef> defs;
  std::vector<EncodedTensor> cols;
  for (int f = 0; f < features; ++f) {
    defs.push_back({"x" + std::to_string(f), LogicalType::floating(), false});
    cols.push_back(plain(random_tensor(rng, {n}, -3.0, 3.0)));
  }
  catalog.register_table("Bag", Table::make(Schema(defs), cols));
  const auto q = compile_sql("SELECT Income, COUNT(*) FROM classify_incomes(Bag) GROUP BY Income", catalog, registry,
                             {true, "cpu"});
  const Tensor target = random_tensor(rng, {2}, 0.0, 4.0);
  return grad_check([&] { return mse_loss(prediction(q.run(catalog)), target); }, q.parameters());
}

// Two PE outputs grouped jointly, with a SUM over a plain column.
double two_key_pipeline_case(std::mt19937_64& rng) {
  const int n = 4;
  auto a = std::make_shared<nn::Linear>("a", 2, 2, rng());
  auto b = std::make_shared<nn::Linear>("b", 2, 3, rng());
  UdfRegistry registry;
  UdfEntry e;
  e.name = "split";
  e.arity = 3;
  e.outputs = Schema::parse("A tensor[2], B tensor[3], w float");
  e.params = a->parameters();
  for (const auto& p : b->parameters()) e.params.push_back(p);
  e.body = [a, b](std::span<const EncodedTensor> in) {
    const Tensor x = concat({reshape(in[0].values, {-1, 1}), reshape(in[1].values, {-1, 1})}, 1);
    return std::vector<EncodedTensor>{pe_encode(a->forward(x)), pe_encode(b->forward(x)), in[2]};
  };
  registry.register_udf(std::move(e));
  Catalog catalog;
  catalog.register_table("T", Table::make(Schema::parse("x float, y float, w float"),
                                          {plain(random_tensor(rng, {n})), plain(random_tensor(rng, {n})),
                                           plain(random_tensor(rng, {n}))}));
  const auto q = compile_sql("SELECT A, B, SUM(w) FROM split(T) GROUP BY A, B", catalog, registry, {true, "cpu"});
  const Tensor target = random_tensor(rng, {6});
  return grad_check([&] { return mse_loss(prediction(q.run(catalog)), target); }, q.parameters());
}

std::vector<GradCase> build() {
  std::vector<GradCase> cases;
  const std::pair<const char*, BinaryOp> binaries[] = {
      {"add", BinaryOp::Add}, {"sub", BinaryOp::Sub}, {"mul", BinaryOp::Mul}, {"div", BinaryOp::Div}};
  for (const auto& [name, op] : binaries) {
    cases.push_back({name, [op = op](std::mt19937_64& rng) { return binary_case(rng, op); }});
  }
  const std::pair<const char*, UnaryOp> unaries[] = {{"neg", UnaryOp::Neg},
                                                     {"log", UnaryOp::Log},
                                                     {"exp", UnaryOp::Exp},
                                                     {"square", UnaryOp::Square},
                                                     {"relu", UnaryOp::Relu}};
  for (const auto& [name, op] : unaries) {
    cases.push_back({name, [op = op](std::mt19937_64& rng) { return unary_case(rng, op); }});
  }
  const std::pair<const char*, ReduceOp> reduces[] = {
      {"sum", ReduceOp::Sum}, {"mean", ReduceOp::Mean}, {"max", ReduceOp::Max}};
  for (const auto& [name, op] : reduces) {
    cases.push_back({name, [op = op](std::mt19937_64& rng) { return reduce_case(rng, op); }});
  }
  cases.push_back({"matmul", [](std::mt19937_64& rng) {
                     const int m = uniform(rng, 1, 4), k = uniform(rng, 1, 4), n = uniform(rng, 1, 4);
                     const Tensor a = random_tensor(rng, {m, k}), b = random_tensor(rng, {k, n});
                     return std::max(check(rng, a, [&](const Tensor& x) { return matmul(x, b); }),
                                     check(rng, b, [&](const Tensor& x) { return matmul(a, x); }));
                   }});
  cases.push_back({"softmax", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, random_shape(rng, 2), -4.0, 4.0);
                     const int axis = uniform(rng, 0, 1) == 0 ? -1 : 0;
                     return check(rng, x, [axis](const Tensor& t) { return softmax(t, axis); });
                   }});
  cases.push_back({"reshape", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, {2, 3, 2});
                     return check(rng, x, [](const Tensor& t) { return reshape(t, {3, -1}); });
                   }});
  cases.push_back({"permute", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, random_shape(rng, 3));
                     std::vector<int> order = {0, 1, 2};
                     std::shuffle(order.begin(), order.end(), rng);
                     return check(rng, x, [order](const Tensor& t) { return permute(t, order); });
                   }});
  cases.push_back({"transpose", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, random_shape(rng, 2));
                     return check(rng, x, [](const Tensor& t) { return transpose(t); });
                   }});
  cases.push_back({"concat", [](std::mt19937_64& rng) {
                     const int axis = uniform(rng, 0, 1);
                     Shape sa = {uniform(rng, 1, 3), uniform(rng, 1, 3)}, sb = sa;
                     sb[axis] = uniform(rng, 1, 3);
                     const Tensor a = random_tensor(rng, sa), b = random_tensor(rng, sb);
                     return std::max(check(rng, a, [&](const Tensor& x) { return concat({x, b}, axis); }),
                                     check(rng, b, [&](const Tensor& x) { return concat({a, x}, axis); }));
                   }});
  cases.push_back({"slice", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, {uniform(rng, 2, 5), uniform(rng, 2, 5)});
                     const int axis = uniform(rng, 0, 1);
                     const auto start = uniform(rng, 0, static_cast<int>(x.dim(axis)) - 1);
                     const auto end = uniform(rng, start + 1, static_cast<int>(x.dim(axis)));
                     return check(rng, x, [=](const Tensor& t) { return slice(t, axis, start, end); });
                   }});
  cases.push_back({"gather", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, {uniform(rng, 1, 5), 3});
                     std::vector<std::int64_t> idx(static_cast<std::size_t>(uniform(rng, 1, 6)));
                     for (auto& i : idx) i = uniform(rng, 0, static_cast<int>(x.dim(0)) - 1);
                     const Tensor index = Tensor::from_ints({static_cast<std::int64_t>(idx.size())}, idx);
                     return check(rng, x, [=](const Tensor& t) { return gather(t, index, 0); });
                   }});
  cases.push_back({"broadcast_to", [](std::mt19937_64& rng) {
                     const Shape target = random_shape(rng, 3);
                     const Tensor x = random_tensor(rng, broadcast_partner(rng, target));
                     return check(rng, x, [=](const Tensor& t) { return broadcast_to(t, target); });
                   }});
  cases.push_back({"sum_to", [](std::mt19937_64& rng) {
                     const Shape source = random_shape(rng, 3);
                     const Shape target = broadcast_partner(rng, source);
                     const Tensor x = random_tensor(rng, source);
                     return check(rng, x, [=](const Tensor& t) { return sum_to(t, target); });
                   }});
  cases.push_back({"pe_encode", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, {uniform(rng, 1, 5), uniform(rng, 1, 4)}, -3.0, 3.0);
                     return check(rng, x, [](const Tensor& t) { return pe_encode(t).values; });
                   }});
  cases.push_back({"soft_count", [](std::mt19937_64& rng) {
                     const Tensor x = random_tensor(rng, {uniform(rng, 1, 6), uniform(rng, 2, 4)}, -3.0, 3.0);
                     return check(rng, x, [](const Tensor& t) { return soft_count(pe_encode(t)); });
                   }});
  cases.push_back({"soft_groupby", [](std::mt19937_64& rng) {
                     const int n = uniform(rng, 1, 5);
                     const Tensor a = random_tensor(rng, {n, uniform(rng, 2, 3)}, -3.0, 3.0);
                     const Tensor b = random_tensor(rng, {n, uniform(rng, 2, 4)}, -3.0, 3.0);
                     const auto run = [](const Tensor& x, const Tensor& y) {
                       return soft_groupby({pe_encode(x), pe_encode(y)}).counts;
                     };
                     return std::max(check(rng, a, [&](const Tensor& x) { return run(x, b); }),
                                     check(rng, b, [&](const Tensor& x) { return run(a, x); }));
                   }});
  cases.push_back({"groupby_soft_sum", [](std::mt19937_64& rng) { return groupby_soft_case(rng, sql::AggFunc::Sum); }});
  cases.push_back({"groupby_soft_avg", [](std::mt19937_64& rng) { return groupby_soft_case(rng, sql::AggFunc::Avg); }});
  cases.push_back({"take_rows", [](std::mt19937_64& rng) {
                     const int n = uniform(rng, 1, 5);
                     const Tensor x = random_tensor(rng, {n});
                     std::vector<std::int64_t> rows(static_cast<std::size_t>(uniform(rng, 1, 6)));
                     for (auto& r : rows) r = uniform(rng, 0, n - 1);
                     return check(rng, x, [=](const Tensor& t) {
                       const Table tb = Table::make(Schema::parse("v float"), {plain(t)});
                       return take_rows(tb, rows).columns[0].values;
                     });
                   }});
  cases.push_back({"mse_loss", [](std::mt19937_64& rng) {
                     const Shape s = random_shape(rng, uniform(rng, 1, 2));
                     const Tensor target = random_tensor(rng, s);
                     return grad_check([=](const Tensor& t) { return mse_loss(t, target); }, random_tensor(rng, s));
                   }});
  cases.push_back({"linear", [](std::mt19937_64& rng) {
                     const int in = uniform(rng, 1, 4), out = uniform(rng, 1, 4);
                     nn::Linear layer("l", in, out, rng());
                     const Tensor x = random_tensor(rng, {uniform(rng, 1, 4), in});
                     const Tensor w = random_tensor(rng, {x.dim(0), out});
                     return grad_check([&] { return sum(layer.forward(x) * w); }, layer.parameters());
                   }});
  cases.push_back({"mlp", [](std::mt19937_64& rng) {
                     nn::Mlp mlp("m", {3, 4, 2}, rng());
                     const Tensor x = random_tensor(rng, {3, 3});
                     const Tensor w = random_tensor(rng, {3, 2});
                     return grad_check([&] { return sum(mlp.forward(x) * w); }, mlp.parameters());
                   }});
  cases.push_back({"pipeline_llp", pipeline_case});
  cases.push_back({"pipeline_two_keys", two_key_pipeline_case});
  return cases;
}

}  // namespace

const std::vector<GradCase>& grad_cases() {
  static const std::vector<GradCase> cases = build();
  return cases;
}

}  // namespace tdq::support
