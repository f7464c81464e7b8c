#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tdq/plan.hpp"

namespace tdq {

// Dense grid of (soft or exact) group counts over m key columns.
struct GroupedCounts {
  std::vector<std::int64_t> key_spaces;  // k1, ..., km
  Tensor counts;                          // [k1, ..., km]; float when soft, int64 when exact
};

// Rows of `table` at the given positions, in order. Float columns stay
// differentiable.
Table take_rows(const Table& table, const std::vector<std::int64_t>& rows);

// Row mask for a conjunction of predicates.
std::vector<bool> predicate_mask(const Table& table, const std::vector<Predicate>& predicates);
Table filter_exact(const Table& table, const std::vector<Predicate>& predicates);

// Output columns: the keys (representative values), then one column per
// aggregate. Only occupied groups, ascending by combined key. Without keys the
// result always has exactly one row.
Table groupby_exact(const Table& table, const std::vector<std::size_t>& keys, const std::vector<AggSpec>& aggs);

// Integer bincount over per-key codes in [0, k_j).
GroupedCounts count_exact(const std::vector<Tensor>& codes, const std::vector<std::int64_t>& key_spaces);

Tensor soft_count(const EncodedTensor& pe);
// Row-wise Kronecker product of the PE columns: [n, k1 * ... * km], first key
// most significant.
Tensor soft_joint(const std::vector<EncodedTensor>& pes);
GroupedCounts soft_groupby(const std::vector<EncodedTensor>& pes);

// Dense-grid counterpart of groupby_exact over PE keys: every cell is emitted,
// key columns hold class indices (or labels), aggregates are differentiable.
Table groupby_soft(const Table& table, const std::vector<std::size_t>& keys, const std::vector<AggSpec>& aggs);

// Stable multi-key sort, then truncation to the first k rows when given.
Table sort_limit(const Table& table, const std::vector<SortKey>& keys, std::optional<std::int64_t> k = std::nullopt);
Table limit_rows(const Table& table, std::int64_t k);

// Replaces every PE column by its hard argmax decoding.
Table pe_decode_table(const Table& table);

// Rebuilds a table whose column types come from the data itself.
Table assemble(const std::vector<ColumnDef>& defs, std::vector<EncodedTensor> columns);

}  // namespace tdq
