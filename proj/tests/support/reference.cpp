#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tdq::support {

namespace {

using sql::AggFunc;
using sql::CompareOp;
using sql::Expr;

int column_of(const RefTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.names.size(); ++i) {
    if (t.names[i] == name) return static_cast<int>(i);
  }
  throw std::runtime_error("reference: no column " + name);
}

// NaN sorts after every number.
int cmp_values(const Value& a, const Value& b) {
  if (a.index() == 2) {
    const auto& x = std::get<std::string>(a);
    const auto& y = std::get<std::string>(b);
    return x < y ? -1 : (y < x ? 1 : 0);
  }
  if (a.index() == 0 && b.index() == 0) {
    const auto x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b);
    return x < y ? -1 : (y < x ? 1 : 0);
  }
  const double x = a.index() == 0 ? static_cast<double>(std::get<std::int64_t>(a)) : std::get<double>(a);
  const double y = b.index() == 0 ? static_cast<double>(std::get<std::int64_t>(b)) : std::get<double>(b);
  if (std::isnan(x) || std::isnan(y)) return std::isnan(x) == std::isnan(y) ? 0 : (std::isnan(x) ? 1 : -1);
  return x < y ? -1 : (y < x ? 1 : 0);
}

bool holds(CompareOp op, int c) {
  switch (op) {
    case CompareOp::Eq: return c == 0;
    case CompareOp::Ne: return c != 0;
    case CompareOp::Lt: return c < 0;
    case CompareOp::Le: return c <= 0;
    case CompareOp::Gt: return c > 0;
    case CompareOp::Ge: return c >= 0;
  }
  return false;
}

bool matches(const Value& v, const sql::Comparison& c) {
  if (v.index() == 2) {
    const auto& s = std::get<std::string>(v);
    const auto& lit = std::get<std::string>(c.value.value);
    return holds(c.op, s < lit ? -1 : (lit < s ? 1 : 0));
  }
  if (v.index() == 1 && std::isnan(std::get<double>(v))) return false;
  Value lit = std::holds_alternative<std::int64_t>(c.value.value) ? Value(std::get<std::int64_t>(c.value.value))
                                                                  : Value(std::get<double>(c.value.value));
  return holds(c.op, cmp_values(v, lit));
}

std::string label(const Expr& e) {
  std::string s = sql::to_string(e.agg);
  return s + "(" + (e.args.empty() ? "*" : e.args.front().name) + ")";
}

struct Aggregated {
  Value value;
  char kind;
};

Aggregated aggregate(const Expr& e, const RefTable& src, const std::vector<std::size_t>& members) {
  if (e.agg == AggFunc::Count) return {static_cast<std::int64_t>(members.size()), 'i'};
  const int c = column_of(src, e.args.front().name);
  const bool is_int = src.kinds[c] == 'i';
  std::int64_t isum = 0;
  double fsum = 0.0;
  for (auto r : members) {
    if (is_int) {
      isum += std::get<std::int64_t>(src.rows[r][c]);
    } else {
      fsum += std::get<double>(src.rows[r][c]);
    }
  }
  if (e.agg == AggFunc::Sum) return is_int ? Aggregated{isum, 'i'} : Aggregated{fsum, 'f'};
  const double total = is_int ? static_cast<double>(isum) : fsum;
  return {members.empty() ? std::nan("") : total / static_cast<double>(members.size()), 'f'};
}

struct Keyed {
  std::vector<Value> row;
  std::vector<Value> keys;
};

void sort_rows(std::vector<Keyed>& rows, const std::vector<sql::OrderItem>& order) {
  // Insertion sort: stable and obviously so.
  for (std::size_t i = 1; i < rows.size(); ++i) {
    for (std::size_t j = i; j > 0; --j) {
      int c = 0;
      for (std::size_t k = 0; k < order.size() && c == 0; ++k) {
        c = cmp_values(rows[j - 1].keys[k], rows[j].keys[k]);
        if (order[k].descending) c = -c;
      }
      if (c <= 0) break;
      std::swap(rows[j - 1], rows[j]);
    }
  }
}

RefTable run(const sql::Query& q, const std::map<std::string, RefTable>& tables) {
  RefTable src;
  if (q.from.kind == sql::FromClause::Kind::Subquery) {
    src = run(*q.from.subquery, tables);
  } else if (q.from.kind == sql::FromClause::Kind::Table) {
    src = tables.at(q.from.name);
  } else {
    throw std::runtime_error("reference: table functions are not supported");
  }

  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < src.rows.size(); ++r) {
    bool ok = true;
    for (const auto& c : q.where) ok = ok && matches(src.rows[r][column_of(src, c.column)], c);
    if (ok) kept.push_back(r);
  }

  bool grouped = !q.group_by.empty();
  for (const auto& s : q.select) grouped = grouped || s.expr.kind == Expr::Kind::Aggregate;
  for (const auto& o : q.order_by) grouped = grouped || o.expr.kind == Expr::Kind::Aggregate;

  RefTable out;
  std::vector<Keyed> rows;
  if (!grouped) {
    std::vector<int> cols;
    for (const auto& s : q.select) {
      if (s.expr.kind == Expr::Kind::Star) {
        for (std::size_t c = 0; c < src.names.size(); ++c) {
          cols.push_back(static_cast<int>(c));
          out.names.push_back(src.names[c]);
        }
      } else {
        cols.push_back(column_of(src, s.expr.name));
        out.names.push_back(s.alias.value_or(s.expr.name));
      }
    }
    for (auto c : cols) out.kinds.push_back(src.kinds[c]);
    for (auto r : kept) {
      Keyed k;
      for (auto c : cols) k.row.push_back(src.rows[r][c]);
      for (const auto& o : q.order_by) {
        const auto hit = std::find(out.names.begin(), out.names.end(), o.expr.name);
        k.keys.push_back(hit != out.names.end() ? k.row[hit - out.names.begin()]
                                                : src.rows[r][column_of(src, o.expr.name)]);
      }
      rows.push_back(std::move(k));
    }
  } else {
    std::vector<int> key_cols;
    for (const auto& g : q.group_by) key_cols.push_back(column_of(src, g));
    std::vector<std::vector<Value>> group_keys;
    std::vector<std::vector<std::size_t>> members;
    for (auto r : kept) {
      std::vector<Value> key;
      for (auto c : key_cols) key.push_back(src.rows[r][c]);
      std::size_t g = 0;
      while (g < group_keys.size() && group_keys[g] != key) ++g;
      if (g == group_keys.size()) {
        group_keys.push_back(key);
        members.emplace_back();
      }
      members[g].push_back(r);
    }
    if (key_cols.empty() && group_keys.empty()) {
      group_keys.emplace_back();
      members.emplace_back();
    }
    // Groups ascend by key tuple.
    std::vector<std::size_t> order(group_keys.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
      for (std::size_t k = 0; k < key_cols.size(); ++k) {
        const int c = cmp_values(group_keys[a][k], group_keys[b][k]);
        if (c != 0) return c < 0;
      }
      return false;
    });

    const auto value_of = [&](const Expr& e, std::size_t g, char* kind) -> Value {
      if (e.kind == Expr::Kind::Aggregate) {
        auto a = aggregate(e, src, members[g]);
        if (kind) *kind = a.kind;
        return a.value;
      }
      const auto pos = std::find(q.group_by.begin(), q.group_by.end(), e.name) - q.group_by.begin();
      if (kind) *kind = src.kinds[key_cols[pos]];
      return group_keys[g][pos];
    };

    for (const auto& s : q.select) {
      out.names.push_back(s.alias.value_or(s.expr.kind == Expr::Kind::Aggregate ? label(s.expr) : s.expr.name));
    }
    out.kinds.resize(q.select.size(), 'i');
    for (auto g : order) {
      Keyed k;
      for (std::size_t i = 0; i < q.select.size(); ++i) k.row.push_back(value_of(q.select[i].expr, g, &out.kinds[i]));
      for (const auto& o : q.order_by) {
        const auto hit = o.expr.kind == Expr::Kind::Column ? std::find(out.names.begin(), out.names.end(), o.expr.name)
                                                           : out.names.end();
        k.keys.push_back(hit != out.names.end() ? k.row[hit - out.names.begin()] : value_of(o.expr, g, nullptr));
      }
      rows.push_back(std::move(k));
    }
    if (order.empty()) {
      for (std::size_t i = 0; i < q.select.size(); ++i) {
        const auto& e = q.select[i].expr;
        if (e.kind == Expr::Kind::Column) {
          out.kinds[i] = src.kinds[column_of(src, e.name)];
        } else if (e.agg != AggFunc::Count) {
          out.kinds[i] = e.agg == AggFunc::Avg || src.kinds[column_of(src, e.args.front().name)] == 'f' ? 'f' : 'i';
        }
      }
    }
  }

  sort_rows(rows, q.order_by);
  if (q.limit && static_cast<std::size_t>(*q.limit) < rows.size()) rows.resize(static_cast<std::size_t>(*q.limit));
  for (auto& r : rows) out.rows.push_back(std::move(r.row));
  return out;
}

std::string show(const Value& v) {
  std::ostringstream s;
  std::visit([&](const auto& x) { s << x; }, v);
  return s.str();
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool chance(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }

const std::vector<CompareOp> kOps = {CompareOp::Eq, CompareOp::Ne, CompareOp::Lt,
                                     CompareOp::Le, CompareOp::Gt, CompareOp::Ge};

sql::Literal literal_for(std::mt19937_64& rng, const RefTable& t, int c) {
  if (!t.rows.empty() && chance(rng, 0.6)) {
    const Value& v = pick(rng, t.rows)[c];
    if (v.index() == 0) return {std::get<std::int64_t>(v)};
    if (v.index() == 1 && !std::isnan(std::get<double>(v))) return {std::get<double>(v)};
    if (v.index() == 2) return {std::get<std::string>(v)};
  }
  switch (t.kinds[c]) {
    case 's': return {std::string(1, static_cast<char>('a' + uniform(rng, 0, 5)))};
    case 'i': return chance(rng, 0.8) ? sql::Literal{std::int64_t{uniform(rng, -6, 6)}} : sql::Literal{uniform(rng, -12, 12) / 2.0};
    default: return chance(rng, 0.5) ? sql::Literal{std::int64_t{uniform(rng, -3, 3)}} : sql::Literal{uniform(rng, -12, 12) / 4.0};
  }
}

std::vector<int> columns_where(const RefTable& t, const std::string& kinds) {
  std::vector<int> out;
  for (std::size_t c = 0; c < t.kinds.size(); ++c) {
    if (kinds.find(t.kinds[c]) != std::string::npos) out.push_back(static_cast<int>(c));
  }
  return out;
}

sql::Query query_over(std::mt19937_64& rng, const RefTable& t, sql::FromClause from, bool simple_names,
                      const std::string& alias_prefix) {
  sql::Query q;
  q.from = std::move(from);
  for (int i = uniform(rng, 0, 2); i > 0; --i) {
    const int c = uniform(rng, 0, static_cast<int>(t.names.size()) - 1);
    q.where.push_back({t.names[c], pick(rng, kOps), literal_for(rng, t, c)});
  }
  int alias = 0;
  const auto next_alias = [&] { return alias_prefix + std::to_string(alias++); };

  const auto keyable = columns_where(t, "is");
  const auto numeric = columns_where(t, "if");
  const int shape = keyable.empty() ? 0 : uniform(rng, 0, 2);

  const auto random_agg = [&]() {
    const int f = numeric.empty() ? 0 : uniform(rng, 0, 2);
    if (f == 0) return Expr::aggregate(AggFunc::Count);
    return Expr::aggregate(f == 1 ? AggFunc::Sum : AggFunc::Avg, t.names[pick(rng, numeric)]);
  };

  if (shape == 0) {
    if (!simple_names && chance(rng, 0.2)) {
      q.select.push_back({Expr::star(), std::nullopt});
    } else {
      std::vector<int> cols(t.names.size());
      for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<int>(i);
      std::shuffle(cols.begin(), cols.end(), rng);
      cols.resize(static_cast<std::size_t>(uniform(rng, 1, static_cast<int>(cols.size()))));
      for (auto c : cols) {
        std::optional<std::string> a;
        if (chance(rng, 0.3)) a = next_alias();
        q.select.push_back({Expr::column(t.names[c]), a});
      }
    }
    for (int i = uniform(rng, 0, 2); i > 0; --i) {
      std::string name = t.names[uniform(rng, 0, static_cast<int>(t.names.size()) - 1)];
      for (const auto& s : q.select) {
        if (s.alias && s.expr.name == name && chance(rng, 0.5)) name = *s.alias;
      }
      q.order_by.push_back({Expr::column(name), chance(rng, 0.5)});
    }
  } else {
    std::vector<int> keys;
    if (shape == 1) {
      keys = keyable;
      std::shuffle(keys.begin(), keys.end(), rng);
      keys.resize(static_cast<std::size_t>(uniform(rng, 1, std::min<int>(2, static_cast<int>(keys.size())))));
      for (auto k : keys) q.group_by.push_back(t.names[k]);
      for (auto k : keys) {
        if (chance(rng, 0.75)) {
          std::optional<std::string> a;
          if (chance(rng, 0.3)) a = next_alias();
          q.select.push_back({Expr::column(t.names[k]), a});
        }
      }
    }
    std::set<std::string> labels;
    for (int i = uniform(rng, 1, 2); i > 0; --i) {
      const auto e = random_agg();
      if (!labels.insert(label(e)).second) continue;
      std::optional<std::string> a;
      if (simple_names || chance(rng, 0.3)) a = next_alias();
      q.select.push_back({e, a});
    }
    for (int i = uniform(rng, 0, 2); i > 0; --i) {
      if (!keys.empty() && chance(rng, 0.5)) {
        q.order_by.push_back({Expr::column(t.names[pick(rng, keys)]), chance(rng, 0.5)});
      } else {
        q.order_by.push_back({random_agg(), chance(rng, 0.5)});
      }
    }
  }
  if (chance(rng, 0.4)) q.limit = uniform(rng, 0, static_cast<int>(t.rows.size()) + 2);
  return q;
}

std::string random_ident(std::mt19937_64& rng) {
  static const std::vector<std::string> names = {"x", "Digit", "Size", "col_1", "t", "numbers", "_tmp", "Income", "score9"};
  return pick(rng, names);
}

sql::Literal random_literal(std::mt19937_64& rng) {
  switch (uniform(rng, 0, 3)) {
    case 0: return {std::int64_t{uniform(rng, -1000, 1000)}};
    case 1: return {std::uniform_real_distribution<double>(-1e3, 1e3)(rng)};
    case 2: return {std::ldexp(static_cast<double>(uniform(rng, -9, 9)), uniform(rng, -30, 30))};
    default: {
      static const std::vector<std::string> strings = {"", "a b", "2022:08:10", "say \"hi\"", "it's", "x,y;z"};
      return {pick(rng, strings)};
    }
  }
}

Expr random_agg_ast(std::mt19937_64& rng) {
  const int f = uniform(rng, 0, 2);
  const auto agg = f == 0 ? AggFunc::Count : (f == 1 ? AggFunc::Sum : AggFunc::Avg);
  if (agg == AggFunc::Count) return Expr::aggregate(agg);
  return Expr::aggregate(agg, random_ident(rng));
}

std::vector<Expr> random_args(std::mt19937_64& rng) {
  std::vector<Expr> args;
  for (int i = uniform(rng, 0, 3); i > 0; --i) {
    args.push_back(chance(rng, 0.6) ? Expr::column(random_ident(rng)) : Expr::lit(random_literal(rng)));
  }
  return args;
}

}  // namespace

RefTable to_ref(const Table& table) {
  const Table t = table.visible();
  RefTable out;
  out.rows.resize(static_cast<std::size_t>(t.row_count));
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const auto& col = t.columns[c];
    out.names.push_back(t.schema[c].name);
    if (col.is_dictionary()) {
      out.kinds.push_back('s');
      const auto s = dict_decode(col);
      for (std::size_t r = 0; r < s.size(); ++r) out.rows[r].push_back(s[r]);
    } else if (col.is_plain() && col.values.rank() == 1 && col.values.is_floating()) {
      out.kinds.push_back('f');
      const auto v = col.values.values();
      for (std::size_t r = 0; r < v.size(); ++r) out.rows[r].push_back(v[r]);
    } else if (col.is_plain() && col.values.rank() == 1) {
      out.kinds.push_back('i');
      const auto v = col.values.ints();
      for (std::size_t r = 0; r < v.size(); ++r) out.rows[r].push_back(v[r]);
    } else {
      throw std::runtime_error("to_ref: unsupported column " + t.schema[c].name);
    }
  }
  return out;
}

Table from_ref(const RefTable& ref) {
  std::vector<ColumnDef> defs;
  std::vector<EncodedTensor> cols;
  const auto n = static_cast<std::int64_t>(ref.rows.size());
  for (std::size_t c = 0; c < ref.names.size(); ++c) {
    if (ref.kinds[c] == 's') {
      std::vector<std::string> v;
      for (const auto& r : ref.rows) v.push_back(std::get<std::string>(r[c]));
      cols.push_back(dict_encode(v));
      defs.push_back({ref.names[c], LogicalType::string(), false});
    } else if (ref.kinds[c] == 'i') {
      std::vector<std::int64_t> v;
      for (const auto& r : ref.rows) v.push_back(std::get<std::int64_t>(r[c]));
      cols.push_back(plain(Tensor::from_ints({n}, v)));
      defs.push_back({ref.names[c], LogicalType::integer(), false});
    } else {
      std::vector<double> v;
      for (const auto& r : ref.rows) v.push_back(std::get<double>(r[c]));
      cols.push_back(plain(Tensor::from_data({n}, v)));
      defs.push_back({ref.names[c], LogicalType::floating(), false});
    }
  }
  return Table::make(Schema(std::move(defs)), std::move(cols));
}

RefTable reference_execute(const sql::Query& query, const std::map<std::string, RefTable>& tables) {
  return run(query, tables);
}

bool same_result(const RefTable& a, const RefTable& b, std::string& why) {
  if (a.names != b.names) {
    why = "column names differ";
    return false;
  }
  if (a.kinds != b.kinds) {
    why = "column types differ: " + std::string(a.kinds.begin(), a.kinds.end()) + " vs " +
          std::string(b.kinds.begin(), b.kinds.end());
    return false;
  }
  if (a.rows.size() != b.rows.size()) {
    why = "row counts differ: " + std::to_string(a.rows.size()) + " vs " + std::to_string(b.rows.size());
    return false;
  }
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    for (std::size_t c = 0; c < a.names.size(); ++c) {
      const auto& x = a.rows[r][c];
      const auto& y = b.rows[r][c];
      const bool both_nan = x.index() == 1 && y.index() == 1 && std::isnan(std::get<double>(x)) &&
                            std::isnan(std::get<double>(y));
      if (!both_nan && x != y) {
        why = "row " + std::to_string(r) + " column " + a.names[c] + ": " + show(x) + " vs " + show(y);
        return false;
      }
    }
  }
  return true;
}

RefTable random_table(std::mt19937_64& rng, int max_rows, int max_cols, bool with_floats) {
  RefTable t;
  const int cols = uniform(rng, 1, max_cols);
  const int rows = uniform(rng, 0, max_rows);
  const std::string kinds = with_floats ? "iisf" : "is";
  for (int c = 0; c < cols; ++c) {
    t.names.push_back("c" + std::to_string(c));
    t.kinds.push_back(kinds[uniform(rng, 0, static_cast<int>(kinds.size()) - 1)]);
  }
  static const std::vector<std::string> words = {"a", "b", "ba", "c", "cab", "d", "e"};
  const int spread = uniform(rng, 1, 6);
  for (int r = 0; r < rows; ++r) {
    std::vector<Value> row;
    for (int c = 0; c < cols; ++c) {
      switch (t.kinds[c]) {
        case 'i': row.emplace_back(std::int64_t{uniform(rng, -spread, spread)}); break;
        case 'f': row.emplace_back(uniform(rng, -4 * spread, 4 * spread) / 4.0); break;
        default: row.emplace_back(words[uniform(rng, 0, std::min<int>(spread, static_cast<int>(words.size()) - 1))]);
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

sql::Query random_query(std::mt19937_64& rng, const RefTable& table, const std::string& name) {
  sql::FromClause from;
  from.kind = sql::FromClause::Kind::Table;
  from.name = name;
  if (!chance(rng, 0.3)) return query_over(rng, table, from, false, "a");

  // Nested: the inner query names every output so the outer one can use it.
  sql::Query inner = query_over(rng, table, from, true, "a");
  const RefTable derived = reference_execute(inner, {{name, table}});
  sql::FromClause sub;
  sub.kind = sql::FromClause::Kind::Subquery;
  sub.subquery = std::make_shared<sql::Query>(std::move(inner));
  if (chance(rng, 0.5)) sub.alias = "s";
  return query_over(rng, derived, sub, false, "b");
}

sql::Query random_ast(std::mt19937_64& rng, int depth) {
  sql::Query q;
  switch (uniform(rng, 0, depth < 2 ? 2 : 1)) {
    case 0:
      q.from.kind = sql::FromClause::Kind::Table;
      q.from.name = random_ident(rng);
      break;
    case 1:
      q.from.kind = sql::FromClause::Kind::Function;
      q.from.name = random_ident(rng);
      q.from.args = random_args(rng);
      break;
    default:
      q.from.kind = sql::FromClause::Kind::Subquery;
      q.from.subquery = std::make_shared<sql::Query>(random_ast(rng, depth + 1));
  }
  if (chance(rng, 0.3)) q.from.alias = random_ident(rng);

  if (chance(rng, 0.15)) {
    q.select.push_back({Expr::star(), std::nullopt});
  } else {
    for (int i = uniform(rng, 1, 4); i > 0; --i) {
      Expr e;
      switch (uniform(rng, 0, 2)) {
        case 0: e = Expr::column(random_ident(rng)); break;
        case 1: e = Expr::call(random_ident(rng), random_args(rng)); break;
        default: e = random_agg_ast(rng);
      }
      std::optional<std::string> alias;
      if (chance(rng, 0.3)) alias = random_ident(rng);
      q.select.push_back({e, alias});
    }
  }
  for (int i = uniform(rng, 0, 3); i > 0; --i) q.where.push_back({random_ident(rng), pick(rng, kOps), random_literal(rng)});
  for (int i = uniform(rng, 0, 2); i > 0; --i) q.group_by.push_back(random_ident(rng));
  for (int i = uniform(rng, 0, 2); i > 0; --i) {
    q.order_by.push_back({chance(rng, 0.7) ? Expr::column(random_ident(rng)) : random_agg_ast(rng), chance(rng, 0.5)});
  }
  if (chance(rng, 0.4)) q.limit = uniform(rng, 0, 1000);
  return q;
}

}  // namespace tdq::support
