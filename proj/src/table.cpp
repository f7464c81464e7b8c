#include "tdq/table.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tdq {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::vector<std::int64_t> parse_dims(std::string_view body) {
  std::vector<std::int64_t> dims;
  std::size_t start = 0;
  while (start <= body.size()) {
    const auto comma = body.find(',', start);
    const auto part = body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const auto v = parse_int(part);
    if (!v || *v < 0) throw TypeError("bad extent '" + std::string(part) + "' in type");
    dims.push_back(*v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return dims;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

std::vector<CsvRecord> split_csv(std::string_view text) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = 1;
  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current = CsvRecord{};
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (field_started && !field.empty()) throw IngestError("unexpected quote inside unquoted field", line);
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      end_record();
      ++line;
      current.line = line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw IngestError("unterminated quoted field", line);
  if (field_started || !current.fields.empty()) end_record();
  return records;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

LogicalType infer_type(const std::vector<CsvRecord>& rows, std::size_t col) {
  bool all_int = true;
  bool all_float = true;
  for (const auto& r : rows) {
    const auto& f = r.fields[col];
    if (all_int && !parse_int(f)) all_int = false;
    if (all_float && !parse_double(f)) all_float = false;
  }
  if (rows.empty()) return LogicalType::string();
  if (all_int) return LogicalType::integer();
  if (all_float) return LogicalType::floating();
  return LogicalType::string();
}

}  // namespace

// ---------------------------------------------------------------------------

std::string LogicalType::to_string() const {
  auto join = [this] {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims[i]);
    }
    return s;
  };
  switch (kind) {
    case Kind::Int: return "int";
    case Kind::Float: return "float";
    case Kind::String: return "string";
    case Kind::Probability: return "tensor[" + join() + "]";
    case Kind::Array: return (dims.size() == 2 ? "image[" : "array[") + join() + "]";
  }
  return "?";
}

LogicalType parse_type(std::string_view text) {
  const std::string t = lower(trim(text));
  if (t == "int" || t == "integer" || t == "bigint") return LogicalType::integer();
  if (t == "float" || t == "double" || t == "real") return LogicalType::floating();
  if (t == "string" || t == "text" || t == "varchar") return LogicalType::string();
  const auto open = t.find('[');
  if (open != std::string::npos && t.back() == ']') {
    const std::string head = t.substr(0, open);
    const auto dims = parse_dims(std::string_view(t).substr(open + 1, t.size() - open - 2));
    if (head == "tensor") {
      if (dims.size() != 1 || dims[0] < 1) throw TypeError("tensor[k] needs one positive class count");
      return LogicalType::probability(dims[0]);
    }
    if (head == "image") {
      if (dims.size() != 2) throw TypeError("image[h,w] needs two extents");
      return LogicalType::array(dims);
    }
    if (head == "array") return LogicalType::array(dims);
  }
  throw TypeError("unknown column type '" + std::string(text) + "'");
}

LogicalType type_of(const EncodedTensor& column) {
  if (column.is_dictionary()) return LogicalType::string();
  if (column.is_probability()) return LogicalType::probability(column.num_classes());
  const Tensor& v = column.values;
  if (v.rank() == 0) throw ShapeError("zero-dimensional column");
  if (v.rank() == 1) return v.is_floating() ? LogicalType::floating() : LogicalType::integer();
  return LogicalType::array(Shape(v.shape().begin() + 1, v.shape().end()));
}

Schema::Schema(std::vector<ColumnDef> columns) : columns_(std::move(columns)) {
  std::set<std::string> seen;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw TypeError("column names must be non-empty");
    if (!seen.insert(c.name).second) throw TypeError("duplicate column name '" + c.name + "'");
  }
}

Schema Schema::parse(std::string_view text) {
  std::vector<ColumnDef> cols;
  // Split on commas that are not inside brackets.
  int depth = 0;
  std::size_t start = 0;
  auto take = [&](std::size_t end) {
    const auto part = trim(text.substr(start, end - start));
    if (part.empty()) throw TypeError("empty column definition in schema");
    const auto space = part.find_first_of(" \t");
    if (space == std::string_view::npos) throw TypeError("column definition '" + std::string(part) + "' lacks a type");
    cols.push_back({std::string(part.substr(0, space)), parse_type(part.substr(space + 1))});
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '[') ++depth;
    if (text[i] == ']') --depth;
    if (text[i] == ',' && depth == 0) {
      take(i);
      start = i + 1;
    }
  }
  if (!trim(text).empty()) take(text.size());
  return Schema(std::move(cols));
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name && !columns_[i].hidden) return i;
  }
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::visible_size() const {
  return static_cast<std::size_t>(std::count_if(columns_.begin(), columns_.end(), [](const auto& c) { return !c.hidden; }));
}

std::vector<std::string> Schema::names() const {
  std::vector<std::string> out;
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

std::string Schema::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i) s += ", ";
    s += columns_[i].name + " " + columns_[i].type.to_string();
  }
  return s;
}

// ---------------------------------------------------------------------------

Table Table::make(Schema schema, std::vector<EncodedTensor> columns) {
  Table t;
  t.schema = std::move(schema);
  t.columns = std::move(columns);
  t.row_count = t.columns.empty() ? 0 : t.columns.front().rows();
  t.validate();
  return t;
}

Table Table::empty(Schema schema) {
  std::vector<EncodedTensor> cols;
  for (const auto& c : schema.columns()) {
    switch (c.type.kind) {
      case LogicalType::Kind::Int: cols.push_back(plain(Tensor::zeros({0}, DType::Int64))); break;
      case LogicalType::Kind::Float: cols.push_back(plain(Tensor::zeros({0}))); break;
      case LogicalType::Kind::String: cols.push_back(dict_encode({})); break;
      case LogicalType::Kind::Probability:
        cols.push_back({Tensor::zeros({0, c.type.dims[0]}), ProbabilityEncoding{c.type.dims[0], nullptr}});
        break;
      case LogicalType::Kind::Array: {
        Shape s{0};
        s.insert(s.end(), c.type.dims.begin(), c.type.dims.end());
        cols.push_back(plain(Tensor::zeros(s)));
        break;
      }
    }
  }
  Table t;
  t.schema = std::move(schema);
  t.columns = std::move(cols);
  t.row_count = 0;
  return t;
}

const EncodedTensor& Table::column(std::string_view name) const {
  const auto idx = schema.find(name);
  if (!idx) throw BindError("no column '" + std::string(name) + "'");
  return columns[*idx];
}

void Table::validate() const {
  if (columns.size() != schema.size()) {
    throw TypeError("table has " + std::to_string(columns.size()) + " columns but schema lists " +
                    std::to_string(schema.size()));
  }
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto& col = columns[i];
    if (col.rows() != row_count) {
      throw ShapeError("column '" + schema[i].name + "' has " + std::to_string(col.rows()) + " rows, expected " +
                       std::to_string(row_count));
    }
    const auto actual = type_of(col);
    const auto& declared = schema[i].type;
    const bool float_int_ok = declared.kind == LogicalType::Kind::Float && actual.kind == LogicalType::Kind::Int;
    if (!(actual == declared) && !float_int_ok) {
      throw TypeError("column '" + schema[i].name + "' declared " + declared.to_string() + " but holds " +
                      actual.to_string());
    }
    if (col.is_dictionary()) col.validate();
  }
}

Table Table::visible() const {
  if (schema.visible_size() == schema.size()) return *this;
  std::vector<ColumnDef> defs;
  std::vector<EncodedTensor> cols;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (schema[i].hidden) continue;
    defs.push_back(schema[i]);
    cols.push_back(columns[i]);
  }
  Table t;
  t.schema = Schema(std::move(defs));
  t.columns = std::move(cols);
  t.row_count = row_count;
  return t;
}

// ---------------------------------------------------------------------------

Table parse_csv(std::string_view text, const CsvOptions& options) {
  auto records = split_csv(text);
  if (records.empty()) throw IngestError("missing header line", 1);
  const auto header = records.front().fields;
  std::vector<CsvRecord> rows(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  // A trailing blank line is not a row.
  rows.erase(std::remove_if(rows.begin(), rows.end(),
                            [](const CsvRecord& r) { return r.fields.size() == 1 && r.fields[0].empty(); }),
             rows.end());

  std::vector<std::string> names;
  for (const auto& h : header) names.emplace_back(trim(h));
  for (const auto& r : rows) {
    if (r.fields.size() != names.size()) {
      throw IngestError("expected " + std::to_string(names.size()) + " fields, found " +
                        std::to_string(r.fields.size()),
                        r.line);
    }
  }

  Schema schema;
  if (options.schema) {
    schema = *options.schema;
    if (schema.size() != names.size()) {
      throw IngestError("header has " + std::to_string(names.size()) + " columns but schema lists " +
                        std::to_string(schema.size()),
                        1);
    }
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (names[c] != schema[c].name) {
        throw IngestError("header column '" + names[c] + "' does not match schema column '" + schema[c].name + "'", 1);
      }
    }
  } else {
    std::vector<ColumnDef> defs;
    for (std::size_t c = 0; c < names.size(); ++c) defs.push_back({names[c], infer_type(rows, c)});
    try {
      schema = Schema(std::move(defs));
    } catch (const TypeError& e) {
      throw IngestError(e.what(), 1);
    }
  }

  const auto n = static_cast<std::int64_t>(rows.size());
  std::vector<EncodedTensor> columns;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& def = schema[c];
    switch (def.type.kind) {
      case LogicalType::Kind::Int: {
        std::vector<std::int64_t> data;
        for (const auto& r : rows) {
          const auto v = parse_int(r.fields[c]);
          if (!v) {
            throw IngestError("column '" + def.name + "': '" + r.fields[c] + "' is not an int", r.line);
          }
          data.push_back(*v);
        }
        columns.push_back(plain(Tensor::from_ints({n}, std::move(data))));
        break;
      }
      case LogicalType::Kind::Float: {
        std::vector<double> data;
        for (const auto& r : rows) {
          const auto v = parse_double(r.fields[c]);
          if (!v) {
            throw IngestError("column '" + def.name + "': '" + r.fields[c] + "' is not a float", r.line);
          }
          data.push_back(*v);
        }
        columns.push_back(plain(Tensor::from_data({n}, std::move(data))));
        break;
      }
      case LogicalType::Kind::String: {
        std::vector<std::string> data;
        for (const auto& r : rows) data.push_back(r.fields[c]);
        columns.push_back(dict_encode(data));
        break;
      }
      default:
        throw IngestError("column '" + def.name + "': type " + def.type.to_string() + " cannot be read from CSV", 1);
    }
  }
  Table t;
  t.schema = std::move(schema);
  t.columns = std::move(columns);
  t.row_count = n;
  return t;
}

std::string format_float(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

namespace {

nlohmann::ordered_json json_cell(const EncodedTensor& col, std::int64_t row) {
  if (col.is_dictionary()) return col.dictionary().at(col.values.ints()[row]);
  const Tensor& v = col.values;
  if (v.rank() == 1) {
    if (v.is_floating()) return std::stod(format_float(v.values()[row]));
    return v.ints()[row];
  }
  // Nested lists for per-row tensors (probability vectors, images).
  const Shape row_shape(v.shape().begin() + 1, v.shape().end());
  const auto width = shape_numel(row_shape);
  std::function<nlohmann::ordered_json(std::size_t, std::int64_t)> build = [&](std::size_t d, std::int64_t offset) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    const auto stride = shape_numel(Shape(row_shape.begin() + d + 1, row_shape.end()));
    for (std::int64_t i = 0; i < row_shape[d]; ++i) {
      if (d + 1 == row_shape.size()) {
        const double x = v.flat(offset + i);
        if (v.is_floating()) {
          arr.push_back(std::stod(format_float(x)));
        } else {
          arr.push_back(static_cast<std::int64_t>(x));
        }
      } else {
        arr.push_back(build(d + 1, offset + i * stride));
      }
    }
    return arr;
  };
  return build(0, row * width);
}

}  // namespace

std::string export_table(const Table& input, ExportFormat format) {
  const Table table = input.visible();
  if (format == ExportFormat::Csv) {
    std::string out;
    for (std::size_t c = 0; c < table.schema.size(); ++c) {
      const auto& t = table.schema[c].type;
      if (t.kind == LogicalType::Kind::Probability || t.kind == LogicalType::Kind::Array) {
        throw TypeError("column '" + table.schema[c].name + "' of type " + t.to_string() + " cannot be exported as CSV");
      }
      if (c) out += ',';
      out += csv_escape(table.schema[c].name);
    }
    out += '\n';
    std::vector<std::vector<std::string>> decoded(table.columns.size());
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (table.columns[c].is_dictionary()) decoded[c] = dict_decode(table.columns[c]);
    }
    for (std::int64_t r = 0; r < table.row_count; ++r) {
      for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c) out += ',';
        const auto& col = table.columns[c];
        if (col.is_dictionary()) {
          out += csv_escape(decoded[c][r]);
        } else if (col.values.is_floating()) {
          out += format_float(col.values.values()[r]);
        } else {
          out += std::to_string(col.values.ints()[r]);
        }
      }
      out += '\n';
    }
    return out;
  }
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::int64_t r = 0; r < table.row_count; ++r) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < table.columns.size(); ++c) obj[table.schema[c].name] = json_cell(table.columns[c], r);
    rows.push_back(std::move(obj));
  }
  return rows.dump() + "\n";
}

// ---------------------------------------------------------------------------

TablePtr Catalog::register_table(const std::string& name, Table table, std::string device) {
  if (name.empty()) throw TypeError("table name must be non-empty");
  table.validate();
  auto ptr = std::make_shared<const Table>(std::move(table));
  std::unique_lock lock(mutex_);
  tables_[name] = Entry{ptr, std::move(device)};
  return ptr;
}

TablePtr Catalog::register_csv_text(std::string_view text, const std::string& name, std::optional<Schema> schema,
                                    std::string device) {
  return register_table(name, parse_csv(text, CsvOptions{std::move(schema)}), std::move(device));
}

TablePtr Catalog::register_csv(const std::string& path, const std::string& name, std::optional<Schema> schema,
                               std::string device) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path + "'", 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return register_csv_text(buf.str(), name, std::move(schema), std::move(device));
}

TablePtr Catalog::register_tensor(const Tensor& values, const std::string& table_name, const std::string& column_name,
                                  std::string device) {
  return register_tensor(plain(values), table_name, column_name, std::move(device));
}

TablePtr Catalog::register_tensor(const EncodedTensor& values, const std::string& table_name,
                                  const std::string& column_name, std::string device) {
  if (values.values.rank() == 0) throw ShapeError("cannot register a zero-dimensional tensor as a table");
  Schema schema({ColumnDef{column_name, type_of(values)}});
  return register_table(table_name, Table::make(std::move(schema), {values}), std::move(device));
}

TablePtr Catalog::find(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : it->second.table;
}

TablePtr Catalog::get(const std::string& name) const {
  auto t = find(name);
  if (!t) throw BindError("unknown table '" + name + "'");
  return t;
}

std::string Catalog::device_of(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = tables_.find(name);
  if (it == tables_.end()) throw BindError("unknown table '" + name + "'");
  return it->second.device;
}

bool Catalog::contains(const std::string& name) const { return find(name) != nullptr; }

std::vector<std::string> Catalog::names() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : tables_) out.push_back(name);
  return out;
}

}  // namespace tdq
