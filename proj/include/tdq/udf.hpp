#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "tdq/table.hpp"

namespace tdq {

enum class UdfKind {
  Scalar,  // one output column, one value per input row
  Table,   // any number of output columns and rows
};

using UdfBody = std::function<std::vector<EncodedTensor>(std::span<const EncodedTensor>)>;

// A user function callable from SQL. The body is built from tensor kernels, so
// gradients flow through it into `params` when a query is trained.
struct UdfEntry {
  std::string name;
  UdfKind kind = UdfKind::Table;
  std::size_t arity = 1;
  Schema outputs;
  UdfBody body;
  std::vector<ParameterPtr> params;
  std::uint64_t sequence = 0;  // registration order, assigned by the registry
};

using UdfPtr = std::shared_ptr<const UdfEntry>;

// Runs the body and checks its outputs against the declared schema.
// `expected_rows` is enforced for scalar functions.
std::vector<EncodedTensor> invoke_udf(const UdfEntry& entry, std::span<const EncodedTensor> inputs,
                                      std::optional<std::int64_t> expected_rows = std::nullopt);

class UdfRegistry {
 public:
  UdfPtr register_udf(UdfEntry entry);
  UdfPtr find(const std::string& name) const;
  UdfPtr get(const std::string& name) const;
  std::vector<EncodedTensor> invoke(const std::string& name, std::span<const EncodedTensor> inputs) const;
  std::vector<std::string> names() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, UdfPtr> entries_;
  std::uint64_t next_sequence_ = 1;
};

}  // namespace tdq
