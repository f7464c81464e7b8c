#include "tdq/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdq/compiler.hpp"
#include "tdq/experiments.hpp"

namespace fs = std::filesystem;

namespace tdq {

namespace {

constexpr const char* kCatalogFile = "catalog.json";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path report_path(const std::string& out, const std::string& demo) {
  if (!out.empty()) return out;
  return fs::path("out") / (demo + "-" + timestamp() + ".csv");
}

void collect_calls(const sql::Query& q, std::vector<std::pair<std::string, std::vector<sql::Expr>>>& calls) {
  if (q.from.kind == sql::FromClause::Kind::Function) calls.emplace_back(q.from.name, q.from.args);
  if (q.from.kind == sql::FromClause::Kind::Subquery) collect_calls(*q.from.subquery, calls);
  for (const auto& s : q.select) {
    if (s.expr.kind == sql::Expr::Kind::Call) calls.emplace_back(s.expr.name, s.expr.args);
  }
}

// Rows grouped by the value of the `bag` column, in order of first appearance.
std::vector<std::pair<std::string, std::vector<std::int64_t>>> group_by_bag(const Table& t, const std::string& file) {
  const auto idx = t.schema.find("bag");
  if (!idx) throw Error("'" + file + "' has no 'bag' column");
  const auto& col = t.columns[*idx];
  std::vector<std::string> keys;
  if (col.is_dictionary()) {
    keys = dict_decode(col);
  } else {
    for (std::int64_t r = 0; r < t.row_count; ++r) keys.push_back(format_float(col.values.flat(r)));
  }
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> groups;
  std::map<std::string, std::size_t> where;
  for (std::int64_t r = 0; r < t.row_count; ++r) {
    auto [it, fresh] = where.emplace(keys[r], groups.size());
    if (fresh) groups.push_back({keys[r], {}});
    groups[it->second].second.push_back(r);
  }
  return groups;
}

Table without_column(const Table& t, const std::string& name) {
  std::vector<ColumnDef> defs;
  std::vector<EncodedTensor> cols;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (t.schema[i].name == name) continue;
    defs.push_back(t.schema[i]);
    cols.push_back(t.columns[i]);
  }
  return Table::make(Schema(std::move(defs)), std::move(cols));
}

struct Options {
  std::string db = ".tdq";

  std::string csv, table, schema, device = "cpu";

  std::string sql, format = "csv";
  bool trainable = false, explain_plan = false, explain_compiled = false;

  std::string query_file, data, targets, config, train_table = "Bag", out;

  std::vector<std::int64_t> bag_sizes;
  double epsilon = 0.0;
  std::int64_t iters = 2000, seeds = 1, train_size = 0, test_size = 0, eval_every = 0;
  double lr = 0.01;
  bool baseline = false;

  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* epsilon_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
};

std::optional<std::uint64_t> seed_flag(const Options& o) {
  if (o.seed_opt && o.seed_opt->count() > 0) return o.seed;
  return std::nullopt;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  static const std::regex ident("[A-Za-z_][A-Za-z0-9_]*");
  if (!std::regex_match(o.table, ident)) throw Error("table name '" + o.table + "' is not an identifier");
  const Schema schema = Schema::parse(o.schema);
  Catalog scratch;
  const auto t = scratch.register_csv(o.csv, o.table, schema, o.device);
  save_to_workspace(o.db, o.table, o.csv, schema, o.device);
  out << "ingested " << t->row_count << " rows into '" << o.table << "' (" << schema.to_string() << ")\n";
  return 0;
}

int cmd_query(const Options& o, std::ostream& out) {
  Catalog catalog;
  load_workspace(o.db, catalog);
  UdfRegistry registry;
  const auto ast = sql::parse(o.sql);
  register_builtins(registry, catalog, ast, resolve_seed(seed_flag(o), 0));
  const auto plan = lower(bind(ast, catalog, registry));
  const auto q = compile(plan, {o.trainable, o.device}, registry);
  if (o.explain_plan || o.explain_compiled) {
    if (o.explain_plan) out << explain(q.plan());
    if (o.explain_compiled) out << q.explain_compiled();
    return 0;
  }
  out << export_table(q.run(catalog), o.format == "json" ? ExportFormat::Json : ExportFormat::Csv);
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : TrainConfig::from_json(read_file(o.config));
  cfg.seed = resolve_seed(seed_flag(o), cfg.seed);

  Catalog catalog;
  load_workspace(o.db, catalog);
  const Table data = parse_csv(read_file(o.data));
  const Table targets = parse_csv(read_file(o.targets));
  const auto data_groups = group_by_bag(data, o.data);
  const auto target_groups = group_by_bag(targets, o.targets);
  const Table features = without_column(data, "bag");
  const Table target_values = without_column(targets, "bag");

  std::map<std::string, Tensor> target_of;
  for (const auto& [key, rows] : target_groups) {
    if (rows.size() != 1) throw Error("bag '" + key + "' has " + std::to_string(rows.size()) + " target rows");
    std::vector<double> v;
    for (const auto& c : target_values.columns) {
      if (c.is_dictionary()) throw Error("target columns must be numeric");
      v.push_back(c.values.flat(rows.front()));
    }
    const auto n = static_cast<std::int64_t>(v.size());
    target_of[key] = Tensor::from_data({n}, std::move(v));
  }
  std::vector<Batch> batches;
  for (const auto& [key, rows] : data_groups) {
    auto it = target_of.find(key);
    if (it == target_of.end()) throw Error("bag '" + key + "' has no target row");
    batches.push_back({{{o.train_table, take_rows(features, rows)}}, it->second});
  }
  if (batches.empty()) throw Error("'" + o.data + "' has no rows");

  catalog.register_table(o.train_table, batches.front().inputs.front().second);
  UdfRegistry registry;
  const auto ast = sql::parse(read_file(o.query_file));
  register_builtins(registry, catalog, ast, cfg.seed);
  const auto q = compile(lower(bind(ast, catalog, registry)), {true, o.device}, registry);
  const auto history = train(q, catalog, batches, cfg);

  std::string csv = "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) csv += std::to_string(i + 1) + "," + format_float(history[i]) + "\n";
  if (o.out.empty()) {
    out << csv;
  } else {
    write_file(o.out, csv);
    out << "wrote " << o.out << "\n";
  }
  return 0;
}

int cmd_demo_llp(const Options& o, std::ostream& out) {
  LlpConfig cfg;
  if (!o.bag_sizes.empty()) cfg.bag_sizes = o.bag_sizes;
  if (o.train_size > 0) cfg.train_size = o.train_size;
  if (o.test_size > 0) cfg.test_size = o.test_size;
  cfg.train.iterations = o.iters;
  cfg.train.lr = o.lr;
  const auto seed = resolve_seed(seed_flag(o), 0);
  cfg.seeds.clear();
  for (std::int64_t i = 0; i < o.seeds; ++i) cfg.seeds.push_back(seed + static_cast<std::uint64_t>(i));
  if (!o.data.empty()) cfg.data = load_llp_csv(read_file(o.data));
  if (o.epsilon_opt->count() > 0) cfg.privacy = PrivacyParams{o.epsilon, 2.0};

  const auto results = run_llp_experiment(cfg);
  const auto path = report_path(o.out, "llp");
  write_file(path, llp_report_csv(results, cfg.privacy ? cfg.privacy->epsilon : 0.0));

  std::map<std::pair<std::string, std::int64_t>, std::pair<double, int>> mean;
  for (const auto& r : results) {
    auto& m = mean[{r.model, r.bag_size}];
    m.first += r.error;
    ++m.second;
  }
  out << "model,bag_size,mean_error\n";
  for (const auto& [key, m] : mean) out << key.first << "," << key.second << "," << format_float(m.first / m.second) << "\n";
  out << "report: " << path.string() << "\n";
  return 0;
}

int cmd_demo_grid(const Options& o, std::ostream& out) {
  GridConfig cfg;
  if (o.train_size > 0) cfg.train_size = o.train_size;
  if (o.test_size > 0) cfg.test_size = o.test_size;
  cfg.train.iterations = o.iters;
  cfg.train.lr = o.lr;
  cfg.train.seed = resolve_seed(seed_flag(o), 0);
  cfg.eval_every = o.eval_every;
  cfg.baseline = o.baseline;

  const auto r = run_grid_experiment(cfg);
  const auto path = report_path(o.out, "grid");
  write_file(path, grid_report_csv(r.rows));
  out << "count_mae: " << format_float(r.initial_mae) << " -> " << format_float(r.final_mae) << "\n";
  out << "digit_tile_accuracy: " << format_float(r.tile_accuracy) << "\n";
  out << "swap_agreement: " << format_float(r.swap_agreement) << "\n";
  if (r.baseline_final_mae) out << "baseline_count_mae: " << format_float(*r.baseline_final_mae) << "\n";
  out << "report: " << path.string() << "\n";
  return 0;
}

}  // namespace

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TDP_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(std::string("TDP_SEED must be a non-negative integer, got '") + env + "'");
  }
  return fallback;
}

void register_builtins(UdfRegistry& registry, const Catalog& catalog, const sql::Query& query, std::uint64_t seed) {
  std::vector<std::pair<std::string, std::vector<sql::Expr>>> calls;
  collect_calls(query, calls);
  for (const auto& [name, args] : calls) {
    if (registry.find(name)) continue;
    if (name == "parse_grid") {
      register_grid_parser(registry, seed);
    } else if (name == "classify_incomes") {
      std::size_t arity = 0;
      for (const auto& a : args) {
        const auto t = a.kind == sql::Expr::Kind::Column ? catalog.find(a.name) : nullptr;
        arity += t ? t->visible().schema.size() : 1;
      }
      register_income_classifier(registry, arity, seed);
    }
  }
}

void load_workspace(const std::string& dir, Catalog& catalog) {
  const fs::path manifest = fs::path(dir) / kCatalogFile;
  if (!fs::exists(manifest)) return;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest.string()));
    for (const auto& [name, entry] : j.at("tables").items()) {
      const auto file = (fs::path(dir) / entry.at("file").get<std::string>()).string();
      catalog.register_csv(file, name, Schema::parse(entry.at("schema").get<std::string>()),
                           entry.at("device").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt workspace manifest '" + manifest.string() + "': " + e.what());
  }
}

void save_to_workspace(const std::string& dir, const std::string& table, const std::string& csv_path,
                       const Schema& schema, const std::string& device) {
  const fs::path root(dir);
  fs::create_directories(root);
  const fs::path manifest = root / kCatalogFile;
  nlohmann::ordered_json j = {{"tables", nlohmann::ordered_json::object()}};
  if (fs::exists(manifest)) {
    try {
      j = nlohmann::ordered_json::parse(read_file(manifest.string()));
    } catch (const nlohmann::json::exception& e) {
      throw Error("corrupt workspace manifest '" + manifest.string() + "': " + e.what());
    }
  }
  const std::string file = table + ".csv";
  write_file(root / file, read_file(csv_path));
  j["tables"][table] = {{"file", file}, {"schema", schema.to_string()}, {"device", device}};
  write_file(manifest, j.dump(2) + "\n");
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const CLI::Validator at_least_one(
      [](std::string& v) {
        std::int64_t n = 0;
        return CLI::detail::lexical_cast(v, n) && n >= 1 ? std::string() : "must be an integer >= 1, got " + v;
      },
      "INT>=1");
  Options o;
  CLI::App app{"Differentiable tensor query engine", "tdq"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.add_option("--db", o.db, "Workspace directory holding ingested tables")->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Load a CSV file into the workspace");
  ingest->add_option("--csv", o.csv, "CSV file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--table", o.table, "Table name")->required();
  ingest->add_option("--schema", o.schema, "Schema, e.g. \"Digits int, Sizes int\"")->required();
  ingest->add_option("--device", o.device, "Device recorded for the table")->capture_default_str();

  auto* query = app.add_subcommand("query", "Compile and run a SQL query");
  query->add_option("sql", o.sql, "Query text")->required();
  query->add_flag("--trainable", o.trainable, "Compile with differentiable operators");
  query->add_flag("--explain", o.explain_plan, "Print the physical plan and exit");
  query->add_flag("--explain-compiled", o.explain_compiled, "Print the operator program and exit");
  query->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  query->add_option("--device", o.device, "Execution device")->capture_default_str();
  o.seed_opt = query->add_option("--seed", o.seed, "Seed for built-in model weights");

  auto* trainc = app.add_subcommand("train", "Train a query's model parameters on bag count targets");
  trainc->add_option("--query-file", o.query_file, "File holding the trainable query")->required()->check(CLI::ExistingFile);
  trainc->add_option("--data", o.data, "CSV with a 'bag' column plus feature columns")->required()->check(CLI::ExistingFile);
  trainc->add_option("--targets", o.targets, "CSV with a 'bag' column plus the flattened count cells")
      ->required()
      ->check(CLI::ExistingFile);
  trainc->add_option("--config", o.config, "JSON training config")->check(CLI::ExistingFile);
  trainc->add_option("--table", o.train_table, "Name each bag is registered under")->capture_default_str();
  trainc->add_option("--out", o.out, "Write the loss history here instead of stdout");
  trainc->add_option("--device", o.device, "Execution device")->capture_default_str();
  auto* train_seed = trainc->add_option("--seed", o.seed, "Seed (overrides the config and TDP_SEED)");

  auto* demo = app.add_subcommand("demo", "Run a built-in experiment");
  demo->require_subcommand(1);
  auto* llp = demo->add_subcommand("llp", "Learning from label proportions over a bag-size sweep");
  llp->add_option("--bag-size", o.bag_sizes, "Bag size (repeatable; default sweep 1..512)")
      ->check(at_least_one);
  o.epsilon_opt = llp->add_option("--epsilon", o.epsilon, "Label-DP privacy budget")->check(CLI::PositiveNumber);
  llp->add_option("--iters", o.iters, "Training iterations per run")->check(CLI::NonNegativeNumber)->capture_default_str();
  llp->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  llp->add_option("--seeds", o.seeds, "Number of consecutive seeds")->check(at_least_one)->capture_default_str();
  llp->add_option("--train-size", o.train_size, "Training rows (default 4000)")->check(at_least_one);
  llp->add_option("--test-size", o.test_size, "Test rows (default 1000)")->check(at_least_one);
  llp->add_option("--data", o.data, "CSV with numeric features and a 0/1 'label' column instead of generated data")
      ->check(CLI::ExistingFile);
  llp->add_option("--out", o.out, "Report path (default out/llp-<timestamp>.csv)");
  auto* llp_seed = llp->add_option("--seed", o.seed, "Seed");

  auto* grid = demo->add_subcommand("grid", "Count-supervised glyph grid training");
  grid->add_option("--iters", o.iters, "Training iterations")->check(CLI::NonNegativeNumber)->capture_default_str();
  grid->add_flag("--baseline", o.baseline, "Also train the monolithic regression baseline");
  grid->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  grid->add_option("--train-size", o.train_size, "Training grids (default 500)")->check(at_least_one);
  grid->add_option("--test-size", o.test_size, "Held-out grids (default 100)")->check(at_least_one);
  grid->add_option("--eval-every", o.eval_every, "Iterations between checkpoints (default: ten checkpoints)")
      ->check(CLI::NonNegativeNumber);
  grid->add_option("--out", o.out, "Report path (default out/grid-<timestamp>.csv)");
  auto* grid_seed = grid->add_option("--seed", o.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(o, out);
    if (*query) return cmd_query(o, out);
    if (*trainc) {
      o.seed_opt = train_seed;
      return cmd_train(o, out);
    }
    if (*llp) {
      o.seed_opt = llp_seed;
      return cmd_demo_llp(o, out);
    }
    if (*grid) {
      o.seed_opt = grid_seed;
      return cmd_demo_grid(o, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  err << "no command given\n";
  return 1;
}

}  // namespace tdq
