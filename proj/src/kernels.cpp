#include "tdq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tdq {

namespace {

Tensor index_tensor(const std::vector<std::int64_t>& rows) {
  return Tensor::from_ints({static_cast<std::int64_t>(rows.size())}, rows);
}

bool compare(sql::CompareOp op, int c) {
  switch (op) {
    case sql::CompareOp::Eq: return c == 0;
    case sql::CompareOp::Ne: return c != 0;
    case sql::CompareOp::Lt: return c < 0;
    case sql::CompareOp::Le: return c <= 0;
    case sql::CompareOp::Gt: return c > 0;
    case sql::CompareOp::Ge: return c >= 0;
  }
  return false;
}

template <typename T>
int three_way(T a, T b) {
  return a < b ? -1 : (b < a ? 1 : 0);
}

// Total order on doubles with NaN last.
int three_way_double(double a, double b) {
  const bool na = std::isnan(a), nb = std::isnan(b);
  if (na || nb) return na == nb ? 0 : (na ? 1 : -1);
  return three_way(a, b);
}

void require_scalar_column(const EncodedTensor& col, const std::string& name, const char* what) {
  if (col.is_probability() || col.values.rank() != 1) {
    throw TypeError(std::string(what) + ": column '" + name + "' is not a scalar column");
  }
}

// Dense rank of each row's value within one key column.
std::vector<std::int64_t> dense_ranks(const EncodedTensor& col, std::int64_t& distinct) {
  const auto n = col.rows();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto v = col.values.ints();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<std::int64_t> rank(static_cast<std::size_t>(n));
  distinct = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && v[order[i]] != v[order[i - 1]]) ++distinct;
    rank[order[i]] = distinct;
  }
  if (n > 0) ++distinct;
  return rank;
}

Tensor as_float(const Tensor& t) { return t.is_floating() ? t : t.to(DType::Float64); }

}  // namespace

Table assemble(const std::vector<ColumnDef>& defs, std::vector<EncodedTensor> columns) {
  if (defs.size() != columns.size()) {
    throw ExecutionError("expected " + std::to_string(defs.size()) + " columns, got " + std::to_string(columns.size()));
  }
  std::vector<ColumnDef> actual = defs;
  for (std::size_t i = 0; i < defs.size(); ++i) actual[i].type = type_of(columns[i]);
  return Table::make(Schema(std::move(actual)), std::move(columns));
}

Table take_rows(const Table& table, const std::vector<std::int64_t>& rows) {
  const Tensor idx = index_tensor(rows);
  std::vector<EncodedTensor> cols;
  cols.reserve(table.columns.size());
  for (const auto& c : table.columns) cols.push_back({gather(c.values, idx, 0), c.encoding});
  Table out;
  out.schema = table.schema;
  out.columns = std::move(cols);
  out.row_count = static_cast<std::int64_t>(rows.size());
  return out;
}

std::vector<bool> predicate_mask(const Table& table, const std::vector<Predicate>& predicates) {
  const auto n = table.row_count;
  std::vector<bool> mask(static_cast<std::size_t>(n), true);
  for (const auto& p : predicates) {
    if (p.column >= table.columns.size()) throw ExecutionError("filter column out of range");
    const auto& col = table.columns[p.column];
    const auto& name = table.schema[p.column].name;
    require_scalar_column(col, name, "filter");
    if (col.is_dictionary()) {
      if (!p.value.is_string()) throw TypeError("filter: column '" + name + "' is a string column");
      const auto& s = std::get<std::string>(p.value.value);
      const auto& dict = col.dictionary();
      const auto lo = dict.lower_bound(s), hi = dict.upper_bound(s);
      const auto codes = col.values.ints();
      for (std::int64_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const auto c = codes[i];
        // Position of the literal relative to code c in dictionary order.
        const int cmp = c < lo ? -1 : (c >= hi ? 1 : 0);
        mask[i] = compare(p.op, cmp);
      }
      continue;
    }
    if (p.value.is_string()) throw TypeError("filter: column '" + name + "' is numeric");
    if (col.values.is_floating()) {
      const auto v = col.values.values();
      const double lit = p.value.number();
      for (std::int64_t i = 0; i < n; ++i) {
        if (mask[i]) mask[i] = !std::isnan(v[i]) && compare(p.op, three_way(v[i], lit));
      }
    } else {
      const auto v = col.values.ints();
      const auto* ilit = std::get_if<std::int64_t>(&p.value.value);
      for (std::int64_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const int cmp = ilit ? three_way(v[i], *ilit) : three_way(static_cast<double>(v[i]), p.value.number());
        mask[i] = compare(p.op, cmp);
      }
    }
  }
  return mask;
}

Table filter_exact(const Table& table, const std::vector<Predicate>& predicates) {
  if (predicates.empty()) return table;
  const auto mask = predicate_mask(table, predicates);
  std::vector<std::int64_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) rows.push_back(static_cast<std::int64_t>(i));
  }
  return take_rows(table, rows);
}

Table groupby_exact(const Table& table, const std::vector<std::size_t>& keys, const std::vector<AggSpec>& aggs) {
  const auto n = table.row_count;
  std::vector<std::int64_t> combined(static_cast<std::size_t>(n), 0);
  for (auto k : keys) {
    const auto& col = table.columns.at(k);
    const auto& name = table.schema[k].name;
    require_scalar_column(col, name, "group by");
    if (col.values.is_floating()) throw TypeError("group by: key '" + name + "' is a float column");
    std::int64_t distinct = 0;
    const auto rank = dense_ranks(col, distinct);
    for (std::int64_t i = 0; i < n; ++i) {
      if (distinct > 0 && combined[i] > (std::numeric_limits<std::int64_t>::max() - rank[i]) / distinct) {
        throw ExecutionError("group by: combined key space overflows 64 bits");
      }
      combined[i] = combined[i] * distinct + rank[i];
    }
  }

  // Groups in ascending combined-key order, each with its member rows.
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return combined[a] < combined[b]; });
  std::vector<std::int64_t> representative, group_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || combined[order[i]] != combined[order[i - 1]]) representative.push_back(order[i]);
    group_of[order[i]] = static_cast<std::int64_t>(representative.size()) - 1;
  }
  if (keys.empty()) representative.assign(1, -1);
  const auto groups = static_cast<std::int64_t>(representative.size());

  std::vector<EncodedTensor> cols;
  std::vector<ColumnDef> defs;
  if (!keys.empty()) {
    const Tensor idx = index_tensor(representative);
    for (auto k : keys) {
      const auto& col = table.columns[k];
      cols.push_back({gather(col.values, idx, 0).detach(), col.encoding});
      defs.push_back({table.schema[k].name, {}, false});
    }
  }

  std::vector<std::int64_t> counts(static_cast<std::size_t>(groups), 0);
  for (std::int64_t i = 0; i < n; ++i) ++counts[group_of[i]];

  for (const auto& a : aggs) {
    defs.push_back({a.label, {}, false});
    if (a.func == sql::AggFunc::Count) {
      cols.push_back(plain(Tensor::from_ints({groups}, counts)));
      continue;
    }
    const auto& col = table.columns.at(*a.column);
    require_scalar_column(col, table.schema[*a.column].name, "aggregate");
    if (col.is_dictionary()) throw TypeError("aggregate: '" + table.schema[*a.column].name + "' is a string column");
    const bool is_int = !col.values.is_floating();
    std::vector<std::int64_t> isum(static_cast<std::size_t>(groups), 0);
    std::vector<double> fsum(static_cast<std::size_t>(groups), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      if (is_int) {
        isum[group_of[i]] += col.values.ints()[i];
      } else {
        fsum[group_of[i]] += col.values.values()[i];
      }
    }
    if (a.func == sql::AggFunc::Sum) {
      cols.push_back(is_int ? plain(Tensor::from_ints({groups}, isum)) : plain(Tensor::from_data({groups}, fsum)));
      continue;
    }
    std::vector<double> avg(static_cast<std::size_t>(groups));
    for (std::int64_t g = 0; g < groups; ++g) {
      const double s = is_int ? static_cast<double>(isum[g]) : fsum[g];
      avg[g] = counts[g] == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(counts[g]);
    }
    cols.push_back(plain(Tensor::from_data({groups}, std::move(avg))));
  }
  return assemble(defs, std::move(cols));
}

GroupedCounts count_exact(const std::vector<Tensor>& codes, const std::vector<std::int64_t>& key_spaces) {
  if (codes.size() != key_spaces.size()) throw ShapeError("count_exact: one key space per code column");
  std::int64_t cells = 1;
  for (auto k : key_spaces) {
    if (k < 1) throw ShapeError("count_exact: key spaces must be positive");
    cells *= k;
  }
  const std::int64_t n = codes.empty() ? 0 : codes.front().numel();
  std::vector<std::int64_t> counts(static_cast<std::size_t>(cells), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t cell = 0;
    for (std::size_t j = 0; j < codes.size(); ++j) {
      if (codes[j].numel() != n) throw ShapeError("count_exact: code columns differ in length");
      const auto c = codes[j].ints()[i];
      if (c < 0 || c >= key_spaces[j]) throw ShapeError("count_exact: code out of range");
      cell = cell * key_spaces[j] + c;
    }
    ++counts[cell];
  }
  return {key_spaces, Tensor::from_ints(Shape(key_spaces.begin(), key_spaces.end()), std::move(counts))};
}

Tensor soft_count(const EncodedTensor& pe) {
  if (!pe.is_probability()) throw EncodingError("soft_count expects a probability-encoded column");
  return sum(pe.values, 0);
}

Tensor soft_joint(const std::vector<EncodedTensor>& pes) {
  if (pes.empty()) throw ShapeError("soft_joint: no key columns");
  for (const auto& p : pes) {
    if (!p.is_probability()) throw EncodingError("soft_groupby expects probability-encoded columns");
  }
  const auto n = pes.front().rows();
  Tensor joint = as_float(pes.front().values);
  std::int64_t cells = pes.front().num_classes();
  for (std::size_t j = 1; j < pes.size(); ++j) {
    if (pes[j].rows() != n) {
      throw ShapeError("soft_groupby: key columns have " + std::to_string(n) + " and " +
                       std::to_string(pes[j].rows()) + " rows");
    }
    const auto k = pes[j].num_classes();
    joint = reshape(reshape(joint, {n, cells, 1}) * reshape(as_float(pes[j].values), {n, 1, k}), {n, cells * k});
    cells *= k;
  }
  return joint;
}

GroupedCounts soft_groupby(const std::vector<EncodedTensor>& pes) {
  const Tensor joint = soft_joint(pes);
  std::vector<std::int64_t> spaces;
  for (const auto& p : pes) spaces.push_back(p.num_classes());
  return {spaces, reshape(sum(joint, 0), Shape(spaces.begin(), spaces.end()))};
}

Table groupby_soft(const Table& table, const std::vector<std::size_t>& keys, const std::vector<AggSpec>& aggs) {
  const auto n = table.row_count;
  std::vector<EncodedTensor> key_cols;
  for (auto k : keys) key_cols.push_back(table.columns.at(k));
  const Tensor joint = keys.empty() ? Tensor::ones({n, 1}) : soft_joint(key_cols);
  const auto cells = joint.shape()[1];

  std::vector<EncodedTensor> cols;
  std::vector<ColumnDef> defs;
  std::int64_t stride = cells;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const auto k = key_cols[j].num_classes();
    stride /= k;
    std::vector<std::int64_t> codes(static_cast<std::size_t>(cells));
    for (std::int64_t c = 0; c < cells; ++c) codes[c] = (c / stride) % k;
    Tensor values = Tensor::from_ints({cells}, std::move(codes));
    const auto& pe = std::get<ProbabilityEncoding>(key_cols[j].encoding);
    if (pe.labels) {
      cols.push_back({std::move(values), DictionaryEncoding{pe.labels}});
    } else {
      cols.push_back(plain(std::move(values)));
    }
    defs.push_back({table.schema[keys[j]].name, {}, false});
  }

  const Tensor counts = sum(joint, 0);
  for (const auto& a : aggs) {
    defs.push_back({a.label, {}, false});
    if (a.func == sql::AggFunc::Count) {
      cols.push_back(plain(counts));
      continue;
    }
    const auto& col = table.columns.at(*a.column);
    require_scalar_column(col, table.schema[*a.column].name, "aggregate");
    if (col.is_dictionary()) throw TypeError("aggregate: '" + table.schema[*a.column].name + "' is a string column");
    const Tensor x = reshape(as_float(col.values), {n, 1});
    const Tensor sums = reshape(matmul(transpose(joint), x), {cells});
    cols.push_back(plain(a.func == sql::AggFunc::Sum ? sums : sums / (counts + 1e-12)));
  }
  return assemble(defs, std::move(cols));
}

Table sort_limit(const Table& table, const std::vector<SortKey>& keys, std::optional<std::int64_t> k) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(table.row_count));
  std::iota(order.begin(), order.end(), 0);
  for (const auto& key : keys) {
    const auto& col = table.columns.at(key.column);
    require_scalar_column(col, table.schema[key.column].name, "sort");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    for (const auto& key : keys) {
      const auto& v = table.columns[key.column].values;
      const int c = v.is_floating() ? three_way_double(v.values()[a], v.values()[b]) : three_way(v.ints()[a], v.ints()[b]);
      if (c != 0) return key.descending ? c > 0 : c < 0;
    }
    return false;
  });
  if (k && *k < static_cast<std::int64_t>(order.size())) order.resize(static_cast<std::size_t>(std::max<std::int64_t>(*k, 0)));
  return take_rows(table, order);
}

Table limit_rows(const Table& table, std::int64_t k) {
  if (k >= table.row_count) return table;
  std::vector<std::int64_t> rows(static_cast<std::size_t>(std::max<std::int64_t>(k, 0)));
  std::iota(rows.begin(), rows.end(), 0);
  return take_rows(table, rows);
}

Table pe_decode_table(const Table& table) {
  std::vector<EncodedTensor> cols;
  for (const auto& c : table.columns) cols.push_back(c.is_probability() ? pe_decode(c) : c);
  return assemble(table.schema.columns(), std::move(cols));
}

}  // namespace tdq
