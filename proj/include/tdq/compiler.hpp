#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tdq/kernels.hpp"
#include "tdq/plan.hpp"

namespace tdq {

struct CompileConfig {
  bool trainable = false;
  std::string device = "cpu";
};

enum class OpKind { Scan, TvfCall, PeDecode, Filter, Project, GroupBy, SoftGroupBy, Sort, Limit };

const char* to_string(OpKind kind);

struct ProgramOp {
  OpKind kind = OpKind::Scan;
  Impl impl = Impl::Exact;
  PlanNodePtr node;

  // "kind[impl] details", one line of --explain-compiled.
  std::string describe() const;
};

class CompiledQuery {
 public:
  const std::vector<ProgramOp>& program() const noexcept { return program_; }
  const PhysicalPlan& plan() const noexcept { return plan_; }
  const CompileConfig& config() const noexcept { return config_; }
  // Functions referenced by the plan, in registration order.
  const std::vector<UdfPtr>& functions() const noexcept { return functions_; }
  // Visible result schema as declared by the plan.
  Schema output_schema() const;

  // Parameters of the referenced functions: registration order, then each
  // function's own parameter order.
  std::vector<ParameterPtr> parameters() const;

  // Executes the program. When trainable, parameters are tape-tracked so a
  // loss on the result can be differentiated back to them.
  Table run(const Catalog& catalog) const;

  std::string explain_compiled() const;

 private:
  friend CompiledQuery compile_with(const PhysicalPlan&, const CompileConfig&, const std::map<std::string, UdfPtr>&);

  Table execute(const ProgramOp& op, const Table& input, const Catalog& catalog) const;
  const UdfEntry& udf(const std::string& name) const;

  PhysicalPlan plan_;
  CompileConfig config_;
  std::vector<ProgramOp> program_;
  std::map<std::string, UdfPtr> udfs_;
  std::vector<UdfPtr> functions_;
};

CompiledQuery compile(const PhysicalPlan& plan, const CompileConfig& config, const UdfRegistry& registry);

// Recompiles with exact operators; the result shares the same parameters.
CompiledQuery swap_to_exact(const CompiledQuery& query);

CompiledQuery compile_sql(std::string_view sql, const Catalog& catalog, const UdfRegistry& registry,
                          const CompileConfig& config = {});

}  // namespace tdq
