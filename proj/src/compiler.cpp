#include "tdq/compiler.hpp"

#include <algorithm>
#include <optional>
#include <set>

namespace tdq {

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Scan: return "scan";
    case OpKind::TvfCall: return "tvf_call";
    case OpKind::PeDecode: return "pe_decode";
    case OpKind::Filter: return "filter";
    case OpKind::Project: return "project";
    case OpKind::GroupBy: return "groupby";
    case OpKind::SoftGroupBy: return "soft_groupby";
    case OpKind::Sort: return "sort";
    case OpKind::Limit: return "limit";
  }
  return "?";
}

namespace {

bool has_pe(const Schema& s) {
  return std::any_of(s.columns().begin(), s.columns().end(),
                     [](const ColumnDef& c) { return c.type.kind == LogicalType::Kind::Probability; });
}

std::vector<std::string> referenced_functions(const PhysicalPlan& plan) {
  std::vector<std::string> out;
  for (auto n = plan.root.get(); n; n = n->input.get()) {
    if (n->kind == PlanKind::TvfCall) out.push_back(n->function);
    for (const auto& item : n->items) {
      if (item.kind != ProjectItem::Kind::Column) out.push_back(item.function);
    }
  }
  return out;
}

EncodedTensor literal_column(const sql::Literal& lit) {
  if (const auto* i = std::get_if<std::int64_t>(&lit.value)) return plain(Tensor::from_ints({1}, {*i}));
  if (const auto* d = std::get_if<double>(&lit.value)) return plain(Tensor::from_data({1}, {*d}));
  return dict_encode({std::get<std::string>(lit.value)});
}

void check_device(const std::string& device, const std::string& what) {
  if (device != "cpu") throw ExecutionError(what + " device '" + device + "' is not supported; only cpu executes");
}

}  // namespace

std::string ProgramOp::describe() const {
  std::string s = std::string(to_string(kind)) + "[" + to_string(impl) + "]";
  const std::string detail = tdq::describe(*node);
  // Reuse the plan node's details, minus its own "Kind[impl]" prefix.
  const auto space = detail.find(' ');
  switch (kind) {
    case OpKind::PeDecode: {
      const Schema& in = node->input_schema();
      std::string cols;
      for (const auto& c : in.columns()) {
        if (c.type.kind == LogicalType::Kind::Probability) cols += (cols.empty() ? " " : ", ") + c.name;
      }
      return s + cols;
    }
    default: return space == std::string::npos ? s : s + detail.substr(space);
  }
}

CompiledQuery compile_with(const PhysicalPlan& plan, const CompileConfig& config,
                           const std::map<std::string, UdfPtr>& udfs) {
  if (!plan.root) throw CompileError("empty plan");
  CompiledQuery q;
  q.config_ = config;
  q.udfs_ = udfs;

  // Copy the tree so impl tags never leak into the caller's plan.
  PlanNodePtr root;
  {
    PlanNodePtr* slot = &root;
    for (auto n = plan.root; n; n = n->input) {
      *slot = std::make_shared<PlanNode>(*n);
      slot = &(*slot)->input;
    }
  }
  q.plan_ = {root};

  std::set<std::string> seen;
  for (const auto& name : referenced_functions(q.plan_)) {
    auto it = udfs.find(name);
    if (it == udfs.end() || !it->second) throw CompileError("unknown function '" + name + "'");
    if (seen.insert(name).second) q.functions_.push_back(it->second);
  }
  std::sort(q.functions_.begin(), q.functions_.end(),
            [](const UdfPtr& a, const UdfPtr& b) { return a->sequence < b->sequence; });

  std::vector<PlanNodePtr> chain;
  for (auto n = root; n; n = n->input) chain.push_back(n);
  std::reverse(chain.begin(), chain.end());

  bool live_pe = false;    // the current runtime table holds PE columns
  bool after_pe = false;   // some upstream operator produced PE
  for (const auto& node : chain) {
    auto emit = [&](OpKind kind, Impl impl) {
      node->impl = impl;
      q.program_.push_back({kind, impl, node});
    };
    switch (node->kind) {
      case PlanKind::Scan:
        emit(OpKind::Scan, Impl::Exact);
        break;
      case PlanKind::TvfCall:
        emit(OpKind::TvfCall, Impl::Exact);
        break;
      case PlanKind::Filter:
      case PlanKind::Project:
      case PlanKind::GroupAggregate:
      case PlanKind::Sort:
      case PlanKind::Limit: {
        if (config.trainable) {
          if (node->kind == PlanKind::Sort || node->kind == PlanKind::Limit) {
            throw CompileError(std::string(to_string(node->kind)) +
                               " has no differentiable implementation; compile without trainable");
          }
          if (node->kind == PlanKind::GroupAggregate) {
            const Schema& in = node->input_schema();
            for (auto k : node->keys) {
              if (in[k].type.kind != LogicalType::Kind::Probability) {
                throw CompileError("trainable GROUP BY needs probability-encoded keys; '" + in[k].name + "' is " +
                                   in[k].type.to_string());
              }
            }
            emit(OpKind::SoftGroupBy, Impl::Soft);
          } else {
            const OpKind kind = node->kind == PlanKind::Filter ? OpKind::Filter : OpKind::Project;
            emit(kind, after_pe ? Impl::Soft : Impl::Exact);
          }
          break;
        }
        if (live_pe) {
          q.program_.push_back({OpKind::PeDecode, Impl::Exact, node});
          live_pe = false;
        }
        static const std::map<PlanKind, OpKind> exact_kind = {
            {PlanKind::Filter, OpKind::Filter},     {PlanKind::Project, OpKind::Project},
            {PlanKind::GroupAggregate, OpKind::GroupBy}, {PlanKind::Sort, OpKind::Sort},
            {PlanKind::Limit, OpKind::Limit}};
        emit(exact_kind.at(node->kind), Impl::Exact);
        break;
      }
    }
    // PE columns become live when an operator creates them.
    const bool creates_pe = node->kind == PlanKind::TvfCall ||
                            (node->kind == PlanKind::Project &&
                             std::any_of(node->items.begin(), node->items.end(),
                                         [](const ProjectItem& i) { return i.kind != ProjectItem::Kind::Column; }));
    if (creates_pe && has_pe(node->output)) {
      live_pe = true;
      after_pe = true;
    }
    if (node->kind == PlanKind::Scan && has_pe(node->output)) {
      live_pe = true;
      after_pe = true;
    }
  }
  return q;
}

CompiledQuery compile(const PhysicalPlan& plan, const CompileConfig& config, const UdfRegistry& registry) {
  std::map<std::string, UdfPtr> udfs;
  for (const auto& name : referenced_functions(plan)) {
    auto f = registry.find(name);
    if (!f) throw CompileError("unknown function '" + name + "'");
    udfs[name] = f;
  }
  return compile_with(plan, config, udfs);
}

CompiledQuery swap_to_exact(const CompiledQuery& query) {
  CompileConfig cfg = query.config();
  cfg.trainable = false;
  std::map<std::string, UdfPtr> udfs;
  for (const auto& f : query.functions()) udfs[f->name] = f;
  return compile_with(query.plan(), cfg, udfs);
}

CompiledQuery compile_sql(std::string_view sql, const Catalog& catalog, const UdfRegistry& registry,
                          const CompileConfig& config) {
  return compile(plan_sql(sql, catalog, registry), config, registry);
}

Schema CompiledQuery::output_schema() const {
  std::vector<ColumnDef> defs;
  for (const auto& c : plan_.root->output.columns()) {
    if (!c.hidden) defs.push_back(c);
  }
  return Schema(std::move(defs));
}

std::vector<ParameterPtr> CompiledQuery::parameters() const {
  std::vector<ParameterPtr> out;
  std::set<const Parameter*> seen;
  for (const auto& f : functions_) {
    for (const auto& p : f->params) {
      if (seen.insert(p.get()).second) out.push_back(p);
    }
  }
  return out;
}

std::string CompiledQuery::explain_compiled() const {
  std::string out;
  for (const auto& op : program_) out += op.describe() + "\n";
  return out;
}

const UdfEntry& CompiledQuery::udf(const std::string& name) const {
  auto it = udfs_.find(name);
  if (it == udfs_.end()) throw ExecutionError("unknown function '" + name + "'");
  return *it->second;
}

Table CompiledQuery::run(const Catalog& catalog) const {
  check_device(config_.device, "compiled query");
  std::optional<Tape> tape;
  if (config_.trainable) {
    const auto params = parameters();
    if (std::any_of(params.begin(), params.end(), [](const ParameterPtr& p) { return p->requires_grad(); })) {
      tape.emplace();
    }
  }
  Table current;
  for (const auto& op : program_) current = execute(op, current, catalog);
  return current.visible();
}

Table CompiledQuery::execute(const ProgramOp& op, const Table& input, const Catalog& catalog) const {
  const PlanNode& node = *op.node;
  const auto fetch = [&](const std::string& name, const Schema& expected) {
    auto t = catalog.find(name);
    if (!t) throw ExecutionError("table '" + name + "' is not registered");
    check_device(catalog.device_of(name), "table '" + name + "'");
    Table v = t->visible();
    if (!(v.schema == expected)) {
      throw ExecutionError("table '" + name + "' changed schema since compile: expected (" + expected.to_string() +
                           "), found (" + v.schema.to_string() + ")");
    }
    return v;
  };

  switch (op.kind) {
    case OpKind::Scan: return fetch(node.table, node.source_schema);
    case OpKind::TvfCall: {
      std::vector<EncodedTensor> inputs;
      std::size_t table_arg = 0;
      for (const auto& a : node.args) {
        if (a.kind == BoundArg::Kind::Literal) {
          inputs.push_back(literal_column(a.literal));
        } else {
          const Table t = fetch(a.name, node.arg_schemas.at(table_arg++));
          inputs.insert(inputs.end(), t.columns.begin(), t.columns.end());
        }
      }
      return assemble(node.output.columns(), invoke_udf(udf(node.function), inputs));
    }
    case OpKind::PeDecode: return pe_decode_table(input);
    case OpKind::Filter: return filter_exact(input, node.predicates);
    case OpKind::Project: {
      std::vector<EncodedTensor> cols;
      for (const auto& item : node.items) {
        if (item.kind == ProjectItem::Kind::Column) {
          cols.push_back(input.columns.at(item.column));
          continue;
        }
        std::vector<EncodedTensor> args;
        for (const auto& a : item.args) {
          args.push_back(a.kind == BoundArg::Kind::Literal ? literal_column(a.literal) : input.columns.at(a.column));
        }
        const bool scalar = item.kind == ProjectItem::Kind::ScalarCall;
        auto out = invoke_udf(udf(item.function), args,
                              scalar ? std::optional<std::int64_t>(input.row_count) : std::nullopt);
        cols.insert(cols.end(), out.begin(), out.end());
      }
      return assemble(node.output.columns(), std::move(cols));
    }
    case OpKind::GroupBy:
    case OpKind::SoftGroupBy: {
      const Table g = op.kind == OpKind::GroupBy ? groupby_exact(input, node.keys, node.aggs)
                                                 : groupby_soft(input, node.keys, node.aggs);
      std::vector<EncodedTensor> cols;
      for (const auto& l : node.layout) cols.push_back(g.columns.at(l.is_key ? l.index : node.keys.size() + l.index));
      return assemble(node.output.columns(), std::move(cols));
    }
    case OpKind::Sort: return sort_limit(input, node.sort_keys);
    case OpKind::Limit: return limit_rows(input, node.limit);
  }
  throw ExecutionError("unknown operator");
}

}  // namespace tdq
