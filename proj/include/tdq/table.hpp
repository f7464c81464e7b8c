#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "tdq/encoding.hpp"

namespace tdq {

struct LogicalType {
  enum class Kind { Int, Float, String, Probability, Array };

  Kind kind = Kind::Float;
  // Probability: {num_classes}. Array: per-row extents, e.g. {24, 24} for an
  // image or {f} for a feature vector.
  std::vector<std::int64_t> dims;

  static LogicalType integer() { return {Kind::Int, {}}; }
  static LogicalType floating() { return {Kind::Float, {}}; }
  static LogicalType string() { return {Kind::String, {}}; }
  static LogicalType probability(std::int64_t k) { return {Kind::Probability, {k}}; }
  static LogicalType array(std::vector<std::int64_t> dims) { return {Kind::Array, std::move(dims)}; }
  static LogicalType image(std::int64_t h, std::int64_t w) { return {Kind::Array, {h, w}}; }

  bool is_numeric_scalar() const noexcept { return kind == Kind::Int || kind == Kind::Float; }

  // "int", "float", "string", "tensor[k]", "image[h,w]", "array[d1,...]".
  std::string to_string() const;
  bool operator==(const LogicalType&) const = default;
};

// Parses the textual form produced by LogicalType::to_string.
LogicalType parse_type(std::string_view text);

// Logical type implied by an encoded column.
LogicalType type_of(const EncodedTensor& column);

struct ColumnDef {
  std::string name;
  LogicalType type;
  // Hidden columns ride along for ORDER BY keys and are dropped from results.
  bool hidden = false;

  bool operator==(const ColumnDef&) const = default;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnDef> columns);

  // "name type, name type, ..." e.g. "Digits int, Sizes int".
  static Schema parse(std::string_view text);

  const std::vector<ColumnDef>& columns() const noexcept { return columns_; }
  std::size_t size() const noexcept { return columns_.size(); }
  const ColumnDef& operator[](std::size_t i) const { return columns_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t visible_size() const;
  std::vector<std::string> names() const;
  std::string to_string() const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<ColumnDef> columns_;
};

struct Table {
  Schema schema;
  std::vector<EncodedTensor> columns;
  std::int64_t row_count = 0;

  // Builds a table and checks every invariant (row counts, encodings, types).
  static Table make(Schema schema, std::vector<EncodedTensor> columns);
  static Table empty(Schema schema);

  const EncodedTensor& column(std::string_view name) const;
  void validate() const;
  // Table restricted to its non-hidden columns.
  Table visible() const;
};

using TablePtr = std::shared_ptr<const Table>;

struct CsvOptions {
  std::optional<Schema> schema;  // inferred from the data when absent
};

// Parses CSV text (comma separator, double-quote escaping, header line).
Table parse_csv(std::string_view text, const CsvOptions& options = {});

enum class ExportFormat { Csv, Json };

std::string export_table(const Table& table, ExportFormat format);
std::string format_float(double value);

// Named tables. Registration replaces any table of the same name. Readers may
// run concurrently; registrations are exclusive.
class Catalog {
 public:
  TablePtr register_table(const std::string& name, Table table, std::string device = "cpu");
  TablePtr register_csv(const std::string& path, const std::string& name,
                        std::optional<Schema> schema = std::nullopt, std::string device = "cpu");
  TablePtr register_csv_text(std::string_view text, const std::string& name,
                             std::optional<Schema> schema = std::nullopt, std::string device = "cpu");
  // Leading dimension is the row dimension; [n, h, w] becomes n image rows.
  TablePtr register_tensor(const Tensor& values, const std::string& table_name,
                           const std::string& column_name, std::string device = "cpu");
  TablePtr register_tensor(const EncodedTensor& values, const std::string& table_name,
                           const std::string& column_name, std::string device = "cpu");

  TablePtr get(const std::string& name) const;
  TablePtr find(const std::string& name) const;
  std::string device_of(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  struct Entry {
    TablePtr table;
    std::string device;
  };
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> tables_;
};

}  // namespace tdq
