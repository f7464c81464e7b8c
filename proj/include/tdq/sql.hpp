#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tdq/error.hpp"

namespace tdq::sql {

struct Literal {
  std::variant<std::int64_t, double, std::string> value;

  bool is_string() const noexcept { return std::holds_alternative<std::string>(value); }
  bool is_number() const noexcept { return !is_string(); }
  double number() const;
  bool operator==(const Literal&) const = default;
};

enum class AggFunc { Count, Sum, Avg };
enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

const char* to_string(AggFunc f);
const char* to_string(CompareOp op);

struct Expr {
  enum class Kind { Column, Literal, Call, Aggregate, Star };

  Kind kind = Kind::Column;
  std::string name;  // column or function name
  Literal literal;
  std::vector<Expr> args;  // call arguments; the aggregated column (absent for COUNT(*))
  AggFunc agg = AggFunc::Count;

  static Expr column(std::string name);
  static Expr lit(Literal value);
  static Expr call(std::string name, std::vector<Expr> args);
  static Expr aggregate(AggFunc f, std::optional<std::string> column = std::nullopt);
  static Expr star();

  bool operator==(const Expr&) const = default;
};

struct SelectItem {
  Expr expr;
  std::optional<std::string> alias;
  bool operator==(const SelectItem&) const = default;
};

struct Comparison {
  std::string column;
  CompareOp op = CompareOp::Eq;
  Literal value;
  bool operator==(const Comparison&) const = default;
};

struct OrderItem {
  Expr expr;
  bool descending = false;
  bool operator==(const OrderItem&) const = default;
};

struct Query;

struct FromClause {
  enum class Kind { Table, Function, Subquery };

  Kind kind = Kind::Table;
  std::string name;
  std::vector<Expr> args;
  std::shared_ptr<Query> subquery;
  std::optional<std::string> alias;

  bool operator==(const FromClause& other) const;
};

struct Query {
  std::vector<SelectItem> select;
  FromClause from;
  std::vector<Comparison> where;  // conjunction
  std::vector<std::string> group_by;
  std::vector<OrderItem> order_by;
  std::optional<std::int64_t> limit;

  bool operator==(const Query&) const = default;
};

// Keywords are case-insensitive, identifiers case-sensitive, string literals
// in double (or single) quotes with the quote doubled to escape it.
Query parse(std::string_view text);

// Canonical SQL text; parse(to_sql(q)) == q.
std::string to_sql(const Query& query);
std::string to_sql(const Expr& expr);
std::string to_sql(const Literal& literal);

}  // namespace tdq::sql
