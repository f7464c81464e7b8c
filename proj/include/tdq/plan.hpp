#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tdq/sql.hpp"
#include "tdq/table.hpp"
#include "tdq/udf.hpp"

namespace tdq {

enum class PlanKind { Scan, TvfCall, Filter, Project, GroupAggregate, Sort, Limit };
enum class Impl { Exact, Soft };

const char* to_string(PlanKind kind);
const char* to_string(Impl impl);

// A function argument: a column of the node's input, a whole catalog table
// (every visible column, in order), or a literal broadcast as a 1-row column.
struct BoundArg {
  enum class Kind { Column, Table, Literal };
  Kind kind = Kind::Column;
  std::size_t column = 0;
  std::string name;
  sql::Literal literal;
};

struct Predicate {
  std::size_t column = 0;
  std::string name;
  sql::CompareOp op = sql::CompareOp::Eq;
  sql::Literal value;
};

struct ProjectItem {
  enum class Kind { Column, ScalarCall, TableCall };
  Kind kind = Kind::Column;
  std::size_t column = 0;  // Column
  std::string function;    // calls
  std::vector<BoundArg> args;
};

struct AggSpec {
  sql::AggFunc func = sql::AggFunc::Count;
  std::optional<std::size_t> column;  // input column; absent for COUNT(*)
  std::string label;                  // e.g. "SUM(x)"
};

// Output column of a GroupAggregate: a key or an aggregate, by index.
struct GroupOutput {
  bool is_key = true;
  std::size_t index = 0;
};

struct SortKey {
  std::size_t column = 0;
  bool descending = false;
};

struct PlanNode;
using PlanNodePtr = std::shared_ptr<PlanNode>;

struct PlanNode {
  PlanKind kind = PlanKind::Scan;
  Impl impl = Impl::Exact;
  Schema output;
  PlanNodePtr input;

  std::string table;          // Scan
  Schema source_schema;       // Scan: catalog schema seen at bind time
  std::string function;       // TvfCall
  std::vector<BoundArg> args;  // TvfCall
  std::vector<Schema> arg_schemas;  // TvfCall: schema of each Table argument
  std::vector<Predicate> predicates;
  std::vector<ProjectItem> items;
  std::vector<std::size_t> keys;
  std::vector<AggSpec> aggs;
  std::vector<GroupOutput> layout;
  std::vector<SortKey> sort_keys;
  std::int64_t limit = 0;

  const Schema& input_schema() const;
};

struct LogicalPlan {
  PlanNodePtr root;
};

struct PhysicalPlan {
  PlanNodePtr root;
};

// Resolves every name against the catalog and registry and enforces the
// grouping rules. Throws BindError.
LogicalPlan bind(const sql::Query& query, const Catalog& catalog, const UdfRegistry& registry);

// Copies the plan, drops identity projections and tags every node exact.
PhysicalPlan lower(const LogicalPlan& logical);

// Walks the tree and throws BindError on any unresolved or ill-typed reference.
void validate_plan(const PlanNode& root);

// Indented tree, two spaces per level, root first.
std::string explain(const PhysicalPlan& plan);
std::string describe(const PlanNode& node);

PhysicalPlan plan_sql(std::string_view sql, const Catalog& catalog, const UdfRegistry& registry);

}  // namespace tdq
