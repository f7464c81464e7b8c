#include "tdq/udf.hpp"

#include <mutex>

namespace tdq {

std::vector<EncodedTensor> invoke_udf(const UdfEntry& entry, std::span<const EncodedTensor> inputs,
                                      std::optional<std::int64_t> expected_rows) {
  if (inputs.size() != entry.arity) {
    throw ExecutionError("function '" + entry.name + "' takes " + std::to_string(entry.arity) + " argument(s), got " +
                         std::to_string(inputs.size()));
  }
  auto outputs = entry.body(inputs);
  const auto& declared = entry.outputs;
  if (outputs.size() != declared.size()) {
    throw ExecutionError("function '" + entry.name + "' declared " + std::to_string(declared.size()) +
                         " output column(s) but returned " + std::to_string(outputs.size()));
  }
  std::optional<std::int64_t> rows = expected_rows;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& out = outputs[i];
    const auto& want = declared[i].type;
    const auto got = type_of(out);
    const bool ok = got == want || (want.kind == LogicalType::Kind::Float && got.kind == LogicalType::Kind::Int);
    if (!ok) {
      throw ExecutionError("function '" + entry.name + "' output '" + declared[i].name + "' declared " +
                           want.to_string() + " but returned " + got.to_string());
    }
    const auto n = out.rows();
    if (rows && *rows != n) {
      throw ExecutionError("function '" + entry.name + "' output '" + declared[i].name + "' has " + std::to_string(n) +
                           " rows, expected " + std::to_string(*rows));
    }
    rows = n;
  }
  return outputs;
}

UdfPtr UdfRegistry::register_udf(UdfEntry entry) {
  if (entry.name.empty()) throw BindError("function name must be non-empty");
  if (!entry.body) throw BindError("function '" + entry.name + "' has no body");
  if (entry.kind == UdfKind::Scalar && entry.outputs.size() != 1) {
    throw BindError("scalar function '" + entry.name + "' must declare exactly one output");
  }
  std::unique_lock lock(mutex_);
  if (entries_.count(entry.name)) throw BindError("function '" + entry.name + "' is already registered");
  entry.sequence = next_sequence_++;
  auto ptr = std::make_shared<const UdfEntry>(std::move(entry));
  entries_.emplace(ptr->name, ptr);
  return ptr;
}

UdfPtr UdfRegistry::find(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : it->second;
}

UdfPtr UdfRegistry::get(const std::string& name) const {
  auto p = find(name);
  if (!p) throw BindError("unknown function '" + name + "'");
  return p;
}

std::vector<EncodedTensor> UdfRegistry::invoke(const std::string& name, std::span<const EncodedTensor> inputs) const {
  return invoke_udf(*get(name), inputs);
}

std::vector<std::string> UdfRegistry::names() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

}  // namespace tdq
