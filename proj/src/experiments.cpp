#include <algorithm>
#include <cmath>
#include <numeric>

#include "tdq/experiments.hpp"

namespace tdq {

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::int64_t argmax_row(std::span<const double> v, std::int64_t row, std::int64_t k) {
  std::int64_t best = 0;
  for (std::int64_t c = 1; c < k; ++c) {
    if (v[row * k + c] > v[row * k + best]) best = c;
  }
  return best;
}

std::pair<LlpDataset, LlpDataset> split_llp(const LlpDataset& d, std::int64_t test_size, std::uint64_t seed) {
  std::vector<std::int64_t> order(d.labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cut = order.end() - test_size;
  auto part = [&](std::vector<std::int64_t> rows) {
    LlpDataset p;
    for (auto r : rows) p.labels.push_back(d.labels[r]);
    p.features = take_rows(d.features, rows);
    return p;
  };
  return {part({order.begin(), cut}), part({cut, order.end()})};
}

constexpr const char* kLlpQuery = "SELECT Income, COUNT(*) FROM classify_incomes(Bag) GROUP BY Income";

}  // namespace

UdfPtr register_income_classifier(UdfRegistry& registry, std::size_t features, std::uint64_t seed) {
  auto model = std::make_shared<nn::Linear>("classify_incomes", static_cast<std::int64_t>(features), 2, seed);
  UdfEntry e;
  e.name = "classify_incomes";
  e.kind = UdfKind::Table;
  e.arity = features;
  e.outputs = Schema::parse("Income tensor[2]");
  e.params = model->parameters();
  e.body = [model](std::span<const EncodedTensor> in) {
    std::vector<Tensor> cols;
    for (const auto& c : in) cols.push_back(reshape(c.values.is_floating() ? c.values : c.values.to(DType::Float64), {-1, 1}));
    return std::vector<EncodedTensor>{pe_encode(model->forward(concat(cols, 1)))};
  };
  return registry.register_udf(std::move(e));
}

double run_llp_point(const LlpDataset& train_set, const LlpDataset& test_set, std::int64_t bag_size,
                     const TrainConfig& cfg, const std::optional<PrivacyParams>& privacy, std::uint64_t seed) {
  std::mt19937_64 rng(derive(seed, 100 + static_cast<std::uint64_t>(bag_size)));
  const auto bags = make_bags(train_set.features, train_set.labels, {bag_size, 0}, privacy, rng);

  UdfRegistry registry;
  Catalog catalog;
  const auto udf = register_income_classifier(registry, train_set.features.columns.size(), derive(seed, 1));
  catalog.register_table("Bag", bags.front().bag);
  const auto query = compile_sql(kLlpQuery, catalog, registry, {true, "cpu"});

  std::vector<Batch> batches;
  batches.reserve(bags.size());
  for (const auto& b : bags) batches.push_back({{{"Bag", b.bag}}, b.target});
  TrainConfig c = cfg;
  c.seed = derive(seed, 2);
  train(query, catalog, batches, c);

  NoGradGuard guard;
  const auto out = invoke_udf(*udf, test_set.features.columns);
  const auto codes = pe_decode(out.front()).values.ints();
  std::int64_t wrong = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) wrong += codes[i] != test_set.labels[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(codes.size());
}

std::vector<LlpResult> run_llp_experiment(const LlpConfig& cfg) {
  for (auto b : cfg.bag_sizes) {
    if (b < 1) throw Error("bag sizes must be at least 1");
  }
  if (cfg.data && (cfg.test_size < 1 || cfg.test_size >= cfg.data->features.row_count)) {
    throw Error("test size must leave at least one training row");
  }
  std::vector<LlpResult> results;
  for (auto seed : cfg.seeds) {
    LlpDataset train_set, test_set;
    if (cfg.data) {
      std::tie(train_set, test_set) = split_llp(*cfg.data, cfg.test_size, derive(seed, 12));
    } else {
      train_set = gen_llp_dataset(cfg.train_size, derive(seed, 10));
      test_set = gen_llp_dataset(cfg.test_size, derive(seed, 11));
    }
    if (cfg.baseline) {
      results.push_back({"baseline", 1, seed, run_llp_point(train_set, test_set, 1, cfg.train, std::nullopt, seed)});
    }
    for (auto b : cfg.bag_sizes) {
      results.push_back({"llp", b, seed, run_llp_point(train_set, test_set, b, cfg.train, cfg.privacy, seed)});
    }
  }
  return results;
}

LlpDataset load_llp_csv(std::string_view text) {
  const Table t = parse_csv(text);
  LlpDataset d;
  std::vector<ColumnDef> defs;
  std::vector<EncodedTensor> cols;
  bool found = false;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    const auto& c = t.columns[i];
    if (!t.schema[i].type.is_numeric_scalar()) throw Error("column '" + t.schema[i].name + "' is not numeric");
    if (t.schema[i].name == "label") {
      for (std::int64_t r = 0; r < t.row_count; ++r) {
        const double v = c.values.flat(r);
        if (v != 0.0 && v != 1.0) throw Error("labels must be 0 or 1");
        d.labels.push_back(static_cast<std::int64_t>(v));
      }
      found = true;
    } else {
      defs.push_back({t.schema[i].name, LogicalType::floating(), false});
      cols.push_back(plain(c.values.to(DType::Float64)));
    }
  }
  if (!found) throw Error("LLP data needs a 'label' column");
  if (defs.empty()) throw Error("LLP data needs at least one feature column");
  if (t.row_count < 2) throw Error("LLP data needs at least 2 rows");
  d.features = Table::make(Schema(std::move(defs)), std::move(cols));
  return d;
}

GridModel register_grid_parser(UdfRegistry& registry, std::uint64_t seed) {
  GridModel m;
  m.digit = std::make_shared<nn::Mlp>("digit_parser", std::vector<std::int64_t>{kTile * kTile, 32, kDigits},
                                      derive(seed, 1));
  m.size = std::make_shared<nn::Mlp>("size_parser", std::vector<std::int64_t>{kTile * kTile, 32, kSizes},
                                     derive(seed, 2));
  UdfEntry e;
  e.name = "parse_grid";
  e.kind = UdfKind::Table;
  e.arity = 1;
  e.outputs = Schema::parse("Digit tensor[10], Size tensor[2]");
  e.params = m.digit->parameters();
  const auto sp = m.size->parameters();
  e.params.insert(e.params.end(), sp.begin(), sp.end());
  e.body = [m](std::span<const EncodedTensor> in) {
    const Tensor tiles = grid_tiles(in[0].values);
    return std::vector<EncodedTensor>{pe_encode(m.digit->forward(tiles)), pe_encode(m.size->forward(tiles))};
  };
  registry.register_udf(std::move(e));
  return m;
}

namespace {

Table grid_table(const Tensor& image) {
  return Table::make(Schema::parse("grid image[24,24]"), {plain(reshape(image, {1, kGridSide, kGridSide}))});
}

double mean_abs(const Tensor& a, const Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

std::int64_t checkpoint_interval(std::int64_t iterations, std::int64_t eval_every) {
  if (eval_every > 0) return eval_every;
  return std::max<std::int64_t>(1, iterations / 10);
}

// Exact result densified to the full 10x2 grid.
Tensor densify(const Table& exact) {
  std::vector<double> grid(static_cast<std::size_t>(kDigits * kSizes), 0.0);
  const auto d = exact.columns[0].values.ints(), s = exact.columns[1].values.ints();
  const auto c = exact.columns[2].values.ints();
  for (std::int64_t i = 0; i < exact.row_count; ++i) grid[d[i] * kSizes + s[i]] = static_cast<double>(c[i]);
  return Tensor::from_data({kDigits * kSizes}, std::move(grid));
}

}  // namespace

GridResult run_grid_experiment(const GridConfig& cfg) {
  cfg.train.validate();
  const auto seed = cfg.train.seed;
  const auto train_set = gen_glyph_grids(cfg.train_size, derive(seed, 20));
  const auto test_set = gen_glyph_grids(cfg.test_size, derive(seed, 21));

  GridResult result;
  UdfRegistry registry;
  Catalog catalog;
  result.model = register_grid_parser(registry, derive(seed, 22));
  catalog.register_table("Grids", grid_table(train_set.front().image));
  const auto query = compile_sql(kGridQuery, catalog, registry, {true, "cpu"});

  const auto evaluate = [&]() {
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& g : test_set) {
      catalog.register_table("Grids", grid_table(g.image));
      total += mean_abs(prediction(query.run(catalog)), reshape(g.target, {kDigits * kSizes}));
    }
    return total / static_cast<double>(test_set.size());
  };

  const auto every = checkpoint_interval(cfg.train.iterations, cfg.eval_every);
  result.initial_mae = evaluate();
  result.final_mae = result.initial_mae;
  result.rows.push_back({"neurosymbolic", 0, "count_mae", result.initial_mae});

  std::vector<Batch> batches;
  for (const auto& g : train_set) batches.push_back({{{"Grids", grid_table(g.image)}}, g.target});
  TrainConfig tc = cfg.train;
  tc.seed = derive(seed, 23);
  const auto history = train(query, catalog, batches, tc, [&](std::int64_t it, double) {
    const auto done = it + 1;
    if (done % every == 0 || done == cfg.train.iterations) {
      result.final_mae = evaluate();
      result.rows.push_back({"neurosymbolic", done, "count_mae", result.final_mae});
    }
  });
  if (!history.empty()) result.rows.push_back({"neurosymbolic", cfg.train.iterations, "final_loss", history.back()});

  // Standalone digit classifier on held-out tiles.
  {
    NoGradGuard guard;
    std::vector<double> images;
    for (const auto& g : test_set) {
      const auto v = g.image.to_vector();
      images.insert(images.end(), v.begin(), v.end());
    }
    const auto n = static_cast<std::int64_t>(test_set.size());
    const Tensor tiles = grid_tiles(Tensor::from_data({n, kGridSide, kGridSide}, std::move(images)));
    const Tensor logits = result.model.digit->forward(tiles);
    const Tensor size_logits = result.model.size->forward(tiles);
    std::int64_t digit_ok = 0, size_ok = 0;
    for (std::int64_t i = 0; i < n * 9; ++i) {
      const auto& g = test_set[i / 9];
      digit_ok += argmax_row(logits.values(), i, kDigits) == g.digits[i % 9] ? 1 : 0;
      size_ok += argmax_row(size_logits.values(), i, kSizes) == g.sizes[i % 9] ? 1 : 0;
    }
    result.tile_accuracy = static_cast<double>(digit_ok) / static_cast<double>(n * 9);
    result.rows.push_back({"neurosymbolic", cfg.train.iterations, "digit_tile_accuracy", result.tile_accuracy});
    result.rows.push_back(
        {"neurosymbolic", cfg.train.iterations, "size_tile_accuracy", static_cast<double>(size_ok) / (n * 9.0)});
  }

  // Inference swap: exact integer counts against the rounded soft counts.
  {
    NoGradGuard guard;
    const auto exact = swap_to_exact(query);
    std::int64_t agree = 0;
    double exact_mae = 0.0;
    for (const auto& g : test_set) {
      catalog.register_table("Grids", grid_table(g.image));
      const auto soft = prediction(query.run(catalog)).to_vector();
      const Tensor hard = densify(exact.run(catalog));
      const auto h = hard.to_vector();
      bool same = true;
      for (std::size_t i = 0; i < soft.size(); ++i) same = same && std::round(soft[i]) == h[i];
      agree += same ? 1 : 0;
      exact_mae += mean_abs(hard, reshape(g.target, {kDigits * kSizes}));
    }
    result.swap_agreement = static_cast<double>(agree) / static_cast<double>(test_set.size());
    result.rows.push_back({"neurosymbolic", cfg.train.iterations, "swap_agreement", result.swap_agreement});
    result.rows.push_back(
        {"neurosymbolic", cfg.train.iterations, "exact_count_mae", exact_mae / static_cast<double>(test_set.size())});
  }

  if (cfg.baseline) {
    auto rows = run_baseline_regression(train_set, test_set, tc, cfg.eval_every);
    for (const auto& r : rows) {
      if (r.metric == "count_mae") result.baseline_final_mae = r.value;
    }
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  return result;
}

std::vector<MetricRow> run_baseline_regression(const std::vector<GlyphGridSample>& train_set,
                                               const std::vector<GlyphGridSample>& test_set, const TrainConfig& cfg,
                                               std::int64_t eval_every) {
  cfg.validate();
  if (train_set.empty() || test_set.empty()) throw Error("baseline needs training and test grids");
  constexpr std::int64_t pixels = kGridSide * kGridSide;
  nn::Mlp model("baseline", {pixels, 128, 64, kDigits * kSizes}, derive(cfg.seed, 30));
  Optimizer opt(model.parameters(), cfg.optimizer, cfg.lr);

  const auto flat = [](const GlyphGridSample& g) { return reshape(g.image, {1, pixels}); };
  const auto evaluate = [&]() {
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& g : test_set) total += mean_abs(model.forward(flat(g)), reshape(g.target, {1, kDigits * kSizes}));
    return total / static_cast<double>(test_set.size());
  };

  std::vector<MetricRow> rows;
  rows.push_back({"baseline", 0, "count_mae", evaluate()});
  const auto every = checkpoint_interval(cfg.iterations, eval_every);

  // Same visiting order as train() for the same seed.
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double last = 0.0;
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    const auto pos = static_cast<std::size_t>(it) % order.size();
    if (pos == 0) std::shuffle(order.begin(), order.end(), rng);
    const auto& g = train_set[order[pos]];
    opt.zero_grad();
    Tensor loss;
    {
      Tape tape;
      loss = mse_loss(model.forward(flat(g)), reshape(g.target, {1, kDigits * kSizes}));
    }
    backward(loss);
    opt.step();
    last = loss.item();
    const auto done = it + 1;
    if (done % every == 0 || done == cfg.iterations) rows.push_back({"baseline", done, "count_mae", evaluate()});
  }
  if (cfg.iterations > 0) rows.push_back({"baseline", cfg.iterations, "final_loss", last});
  return rows;
}

std::string llp_report_csv(const std::vector<LlpResult>& results, double epsilon) {
  std::string out = "model,bag_size,epsilon,seed,error\n";
  for (const auto& r : results) {
    out += r.model + "," + std::to_string(r.bag_size) + "," + format_float(epsilon) + "," + std::to_string(r.seed) +
           "," + format_float(r.error) + "\n";
  }
  return out;
}

std::string grid_report_csv(const std::vector<MetricRow>& rows) {
  std::string out = "model,iteration,metric,value\n";
  for (const auto& r : rows) {
    out += r.model + "," + std::to_string(r.iteration) + "," + r.metric + "," + format_float(r.value) + "\n";
  }
  return out;
}

}  // namespace tdq
