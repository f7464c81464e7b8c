#include "tdq/plan.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace tdq {

const char* to_string(PlanKind kind) {
  switch (kind) {
    case PlanKind::Scan: return "Scan";
    case PlanKind::TvfCall: return "TvfCall";
    case PlanKind::Filter: return "Filter";
    case PlanKind::Project: return "Project";
    case PlanKind::GroupAggregate: return "GroupAggregate";
    case PlanKind::Sort: return "Sort";
    case PlanKind::Limit: return "Limit";
  }
  return "?";
}

const char* to_string(Impl impl) { return impl == Impl::Soft ? "soft" : "exact"; }

const Schema& PlanNode::input_schema() const {
  if (!input) throw BindError(std::string(to_string(kind)) + " node has no input");
  return input->output;
}

namespace {

using LT = LogicalType::Kind;

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest(const std::string& name, const std::vector<std::string>& candidates) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& c : candidates) scored.emplace_back(edit_distance(name, c), c);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (std::size_t i = 0; i < scored.size() && i < 3; ++i) {
    out += (i ? ", '" : "'") + scored[i].second + "'";
  }
  return out;
}

std::size_t resolve(const Schema& schema, const std::string& name, const char* what = "column") {
  if (auto i = schema.find(name); i && !schema[*i].hidden) return *i;
  std::vector<std::string> visible;
  for (const auto& c : schema.columns()) {
    if (!c.hidden) visible.push_back(c.name);
  }
  std::string msg = std::string("unknown ") + what + " '" + name + "'";
  if (!visible.empty()) msg += "; did you mean " + nearest(name, visible) + "?";
  throw BindError(msg);
}

bool comparable(const LogicalType& type, const sql::Literal& lit) {
  if (type.kind == LT::String) return lit.is_string();
  if (type.is_numeric_scalar()) return lit.is_number();
  return false;
}

std::string render_arg(const BoundArg& a) {
  return a.kind == BoundArg::Kind::Literal ? sql::to_sql(a.literal) : a.name;
}

std::string render_call(const std::string& fn, const std::vector<BoundArg>& args) {
  std::string s = fn + "(";
  for (std::size_t i = 0; i < args.size(); ++i) s += (i ? ", " : "") + render_arg(args[i]);
  return s + ")";
}

std::string agg_label(sql::AggFunc f, const std::optional<std::string>& column) {
  return std::string(sql::to_string(f)) + "(" + (column ? *column : "*") + ")";
}

PlanNodePtr make_node(PlanKind kind, PlanNodePtr input = nullptr) {
  auto n = std::make_shared<PlanNode>();
  n->kind = kind;
  n->input = std::move(input);
  return n;
}

// Drops hidden columns so an outer query sees only the visible ones.
PlanNodePtr strip_hidden(PlanNodePtr node) {
  const Schema& s = node->output;
  if (s.visible_size() == s.size()) return node;
  auto p = make_node(PlanKind::Project, node);
  std::vector<ColumnDef> defs;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].hidden) continue;
    ProjectItem item;
    item.column = i;
    p->items.push_back(item);
    defs.push_back(s[i]);
  }
  p->output = Schema(std::move(defs));
  return p;
}

class Binder {
 public:
  Binder(const Catalog& catalog, const UdfRegistry& registry) : catalog_(catalog), registry_(registry) {}

  PlanNodePtr bind_query(const sql::Query& q) {
    auto node = bind_from(q.from);
    if (!q.where.empty()) node = bind_where(q.where, node);

    const auto is_agg = [](const sql::Expr& e) { return e.kind == sql::Expr::Kind::Aggregate; };
    bool grouped = !q.group_by.empty();
    for (const auto& s : q.select) grouped = grouped || is_agg(s.expr);
    for (const auto& o : q.order_by) grouped = grouped || is_agg(o.expr);

    std::vector<SortKey> sort_keys;
    node = grouped ? bind_grouped(q, node, sort_keys) : bind_projection(q, node, sort_keys);

    if (!sort_keys.empty()) {
      auto s = make_node(PlanKind::Sort, node);
      s->sort_keys = std::move(sort_keys);
      s->output = node->output;
      node = s;
    }
    if (q.limit) {
      if (*q.limit < 0) throw BindError("LIMIT must be non-negative");
      auto l = make_node(PlanKind::Limit, node);
      l->limit = *q.limit;
      l->output = node->output;
      node = l;
    }
    return node;
  }

 private:
  UdfPtr function(const std::string& name) const {
    auto f = registry_.find(name);
    if (f) return f;
    auto names = registry_.names();
    std::string msg = "unknown function '" + name + "'";
    if (!names.empty()) msg += "; did you mean " + nearest(name, names) + "?";
    throw BindError(msg);
  }

  TablePtr table(const std::string& name) const {
    auto t = catalog_.find(name);
    if (t) return t;
    auto names = catalog_.names();
    std::string msg = "unknown table '" + name + "'";
    if (!names.empty()) msg += "; did you mean " + nearest(name, names) + "?";
    throw BindError(msg);
  }

  PlanNodePtr bind_from(const sql::FromClause& from) {
    switch (from.kind) {
      case sql::FromClause::Kind::Subquery: return strip_hidden(bind_query(*from.subquery));
      case sql::FromClause::Kind::Table: {
        auto t = table(from.name);
        auto n = make_node(PlanKind::Scan);
        n->table = from.name;
        n->source_schema = t->visible().schema;
        n->output = n->source_schema;
        return n;
      }
      case sql::FromClause::Kind::Function: {
        auto f = function(from.name);
        if (f->kind != UdfKind::Table) throw BindError("'" + from.name + "' is a scalar function, not a table function");
        auto n = make_node(PlanKind::TvfCall);
        n->function = from.name;
        std::size_t arity = 0;
        for (const auto& a : from.args) {
          BoundArg arg;
          if (a.kind == sql::Expr::Kind::Literal) {
            arg.kind = BoundArg::Kind::Literal;
            arg.literal = a.literal;
            ++arity;
          } else if (a.kind == sql::Expr::Kind::Column) {
            auto t = table(a.name);
            arg.kind = BoundArg::Kind::Table;
            arg.name = a.name;
            n->arg_schemas.push_back(t->visible().schema);
            arity += n->arg_schemas.back().size();
          } else {
            throw BindError("arguments of table function '" + from.name + "' must be tables or literals");
          }
          n->args.push_back(std::move(arg));
        }
        if (arity != f->arity) {
          throw BindError("function '" + from.name + "' takes " + std::to_string(f->arity) + " column(s), got " +
                          std::to_string(arity));
        }
        n->output = f->outputs;
        return n;
      }
    }
    throw BindError("bad FROM clause");
  }

  PlanNodePtr bind_where(const std::vector<sql::Comparison>& where, PlanNodePtr input) {
    auto n = make_node(PlanKind::Filter, input);
    const Schema& s = input->output;
    for (const auto& c : where) {
      const auto idx = resolve(s, c.column);
      const auto& type = s[idx].type;
      if (!comparable(type, c.value)) {
        throw BindError("cannot compare column '" + c.column + "' of type " + type.to_string() + " with " +
                        sql::to_sql(c.value));
      }
      n->predicates.push_back({idx, c.column, c.op, c.value});
    }
    n->output = s;
    return n;
  }

  std::vector<BoundArg> scalar_args(const sql::Expr& call, const Schema& s) {
    std::vector<BoundArg> out;
    for (const auto& a : call.args) {
      BoundArg arg;
      if (a.kind == sql::Expr::Kind::Literal) {
        arg.kind = BoundArg::Kind::Literal;
        arg.literal = a.literal;
      } else {
        arg.kind = BoundArg::Kind::Column;
        arg.column = resolve(s, a.name);
        arg.name = a.name;
      }
      out.push_back(std::move(arg));
    }
    return out;
  }

  struct Output {
    ProjectItem item;
    std::vector<ColumnDef> defs;
    sql::Expr expr;
  };

  Output bind_select_expr(const sql::Expr& e, const Schema& s, const std::optional<std::string>& alias) {
    Output out;
    out.expr = e;
    if (e.kind == sql::Expr::Kind::Column) {
      out.item.kind = ProjectItem::Kind::Column;
      out.item.column = resolve(s, e.name);
      out.defs.push_back({alias.value_or(e.name), s[out.item.column].type, false});
      return out;
    }
    if (e.kind == sql::Expr::Kind::Call) {
      auto f = function(e.name);
      out.item.function = e.name;
      out.item.args = scalar_args(e, s);
      if (out.item.args.size() != f->arity) {
        throw BindError("function '" + e.name + "' takes " + std::to_string(f->arity) + " argument(s), got " +
                        std::to_string(out.item.args.size()));
      }
      if (f->kind == UdfKind::Scalar) {
        out.item.kind = ProjectItem::Kind::ScalarCall;
        out.defs.push_back({alias.value_or(e.name), f->outputs[0].type, false});
      } else {
        if (alias) throw BindError("table function '" + e.name + "' cannot take an alias");
        out.item.kind = ProjectItem::Kind::TableCall;
        out.defs = f->outputs.columns();
      }
      return out;
    }
    throw BindError("unsupported select expression '" + sql::to_sql(e) + "'");
  }

  PlanNodePtr bind_projection(const sql::Query& q, PlanNodePtr input, std::vector<SortKey>& sort_keys) {
    const Schema& s = input->output;
    std::vector<Output> outs;
    bool table_call = false;
    for (const auto& item : q.select) {
      if (item.expr.kind == sql::Expr::Kind::Star) {
        if (q.select.size() != 1) throw BindError("'*' must be the only select item");
        for (std::size_t i = 0; i < s.size(); ++i) {
          Output o;
          o.item.column = i;
          o.defs.push_back(s[i]);
          o.expr = sql::Expr::column(s[i].name);
          outs.push_back(std::move(o));
        }
        continue;
      }
      outs.push_back(bind_select_expr(item.expr, s, item.alias));
      if (outs.back().item.kind == ProjectItem::Kind::TableCall) {
        table_call = true;
        if (q.select.size() != 1) throw BindError("a table function must be the only select item");
      }
    }

    std::vector<ColumnDef> defs;
    const auto rebuild = [&] {
      defs.clear();
      for (const auto& o : outs) defs.insert(defs.end(), o.defs.begin(), o.defs.end());
    };
    rebuild();

    std::size_t hidden = 0;
    for (const auto& o : q.order_by) {
      auto idx = match_output(o.expr, defs, outs);
      if (!idx) {
        if (table_call) throw BindError("ORDER BY over a table function must name one of its output columns");
        Output extra = bind_select_expr(o.expr, s, std::nullopt);
        extra.defs[0].name = "$order" + std::to_string(hidden++);
        extra.defs[0].hidden = true;
        outs.push_back(std::move(extra));
        rebuild();
        idx = defs.size() - 1;
      }
      check_sortable(defs[*idx]);
      sort_keys.push_back({*idx, o.descending});
    }

    auto n = make_node(PlanKind::Project, input);
    for (const auto& o : outs) n->items.push_back(o.item);
    n->output = checked_schema(defs);
    return n;
  }

  static std::optional<std::size_t> match_output(const sql::Expr& e, const std::vector<ColumnDef>& defs,
                                                 const std::vector<Output>& outs) {
    if (e.kind == sql::Expr::Kind::Column) {
      for (std::size_t i = 0; i < defs.size(); ++i) {
        if (!defs[i].hidden && defs[i].name == e.name) return i;
      }
    }
    std::size_t offset = 0;
    for (const auto& o : outs) {
      if (o.defs.size() == 1 && o.expr == e) return offset;
      offset += o.defs.size();
    }
    return std::nullopt;
  }

  static void check_sortable(const ColumnDef& c) {
    const auto k = c.type.kind;
    if (k != LT::Int && k != LT::Float && k != LT::String) {
      throw BindError("cannot ORDER BY column '" + c.name + "' of type " + c.type.to_string());
    }
  }

  PlanNodePtr bind_grouped(const sql::Query& q, PlanNodePtr input, std::vector<SortKey>& sort_keys) {
    const Schema& s = input->output;
    auto n = make_node(PlanKind::GroupAggregate, input);
    for (const auto& k : q.group_by) {
      const auto idx = resolve(s, k);
      const auto kind = s[idx].type.kind;
      if (kind == LT::Float) throw BindError("cannot group by float column '" + k + "'");
      if (kind == LT::Array) throw BindError("cannot group by array column '" + k + "'");
      if (std::find(n->keys.begin(), n->keys.end(), idx) != n->keys.end()) {
        throw BindError("duplicate GROUP BY column '" + k + "'");
      }
      n->keys.push_back(idx);
    }

    std::vector<ColumnDef> defs;
    std::vector<sql::Expr> exprs;

    const auto add_agg = [&](const sql::Expr& e, std::string name, bool hidden) {
      AggSpec spec;
      spec.func = e.agg;
      std::optional<std::string> col;
      LogicalType type = LogicalType::integer();
      if (!e.args.empty()) {
        col = e.args.front().name;
        const auto idx = resolve(s, *col);
        const auto& t = s[idx].type;
        if (!t.is_numeric_scalar()) {
          throw BindError(std::string("cannot apply ") + sql::to_string(e.agg) + " to column '" + *col + "' of type " +
                          t.to_string());
        }
        spec.column = idx;
        if (e.agg == sql::AggFunc::Avg || t.kind == LT::Float) type = LogicalType::floating();
      }
      spec.label = agg_label(e.agg, col);
      if (name.empty()) name = spec.label;
      n->aggs.push_back(spec);
      n->layout.push_back({false, n->aggs.size() - 1});
      defs.push_back({std::move(name), type, hidden});
      exprs.push_back(e);
    };

    const auto add_key = [&](const std::string& column, std::string name, bool hidden) {
      const auto idx = resolve(s, column);
      const auto pos = std::find(n->keys.begin(), n->keys.end(), idx);
      if (pos == n->keys.end()) {
        throw BindError("column '" + column + "' must appear in GROUP BY or inside an aggregate");
      }
      n->layout.push_back({true, static_cast<std::size_t>(pos - n->keys.begin())});
      defs.push_back({std::move(name), s[idx].type, hidden});
      exprs.push_back(sql::Expr::column(column));
    };

    for (const auto& item : q.select) {
      const auto& e = item.expr;
      switch (e.kind) {
        case sql::Expr::Kind::Aggregate: add_agg(e, item.alias.value_or(""), false); break;
        case sql::Expr::Kind::Column: add_key(e.name, item.alias.value_or(e.name), false); break;
        case sql::Expr::Kind::Star: throw BindError("'*' cannot be used with GROUP BY or aggregates");
        default: throw BindError("'" + sql::to_sql(e) + "' must appear in GROUP BY or inside an aggregate");
      }
    }

    std::size_t hidden = 0;
    for (const auto& o : q.order_by) {
      std::optional<std::size_t> idx;
      if (o.expr.kind == sql::Expr::Kind::Column) {
        for (std::size_t i = 0; i < defs.size() && !idx; ++i) {
          if (!defs[i].hidden && defs[i].name == o.expr.name) idx = i;
        }
      }
      for (std::size_t i = 0; i < exprs.size() && !idx; ++i) {
        if (exprs[i] == o.expr) idx = i;
      }
      if (!idx) {
        const auto name = "$order" + std::to_string(hidden++);
        if (o.expr.kind == sql::Expr::Kind::Aggregate) {
          add_agg(o.expr, name, true);
        } else if (o.expr.kind == sql::Expr::Kind::Column) {
          add_key(o.expr.name, name, true);
        } else {
          throw BindError("'" + sql::to_sql(o.expr) + "' must appear in GROUP BY or inside an aggregate");
        }
        idx = defs.size() - 1;
      }
      check_sortable(defs[*idx]);
      sort_keys.push_back({*idx, o.descending});
    }
    n->output = checked_schema(std::move(defs));
    return n;
  }

  static Schema checked_schema(std::vector<ColumnDef> defs) {
    std::set<std::string> seen;
    for (const auto& c : defs) {
      if (!seen.insert(c.name).second) throw BindError("duplicate output column '" + c.name + "'");
    }
    return Schema(std::move(defs));
  }

  const Catalog& catalog_;
  const UdfRegistry& registry_;
};

PlanNodePtr copy_tree(const PlanNodePtr& node) {
  if (!node) return nullptr;
  auto c = std::make_shared<PlanNode>(*node);
  c->input = copy_tree(node->input);
  return c;
}

bool is_identity(const PlanNode& n) {
  if (n.kind != PlanKind::Project || !n.input) return false;
  const Schema& in = n.input->output;
  if (!(n.output == in) || n.items.size() != in.size()) return false;
  for (std::size_t i = 0; i < n.items.size(); ++i) {
    if (n.items[i].kind != ProjectItem::Kind::Column || n.items[i].column != i) return false;
  }
  return true;
}

void fail_validate(const PlanNode& n, const std::string& what) {
  throw BindError(std::string("invalid plan at ") + to_string(n.kind) + ": " + what);
}

void check_index(const PlanNode& n, std::size_t idx, const Schema& s) {
  if (idx >= s.size()) fail_validate(n, "column index " + std::to_string(idx) + " out of range");
}

}  // namespace

LogicalPlan bind(const sql::Query& query, const Catalog& catalog, const UdfRegistry& registry) {
  Binder b(catalog, registry);
  LogicalPlan plan{b.bind_query(query)};
  validate_plan(*plan.root);
  return plan;
}

PhysicalPlan lower(const LogicalPlan& logical) {
  auto root = copy_tree(logical.root);
  // Splice out identity projections.
  PlanNodePtr* slot = &root;
  while (*slot) {
    if (is_identity(**slot)) {
      *slot = (*slot)->input;
      continue;
    }
    (*slot)->impl = Impl::Exact;
    slot = &(*slot)->input;
  }
  validate_plan(*root);
  return {root};
}

void validate_plan(const PlanNode& n) {
  const bool leaf = n.kind == PlanKind::Scan || n.kind == PlanKind::TvfCall;
  if (leaf && n.input) fail_validate(n, "leaf node has an input");
  if (!leaf && !n.input) fail_validate(n, "missing input");
  if (n.input) validate_plan(*n.input);
  switch (n.kind) {
    case PlanKind::Scan:
      if (n.table.empty()) fail_validate(n, "no table");
      if (!(n.output == n.source_schema)) fail_validate(n, "output differs from source schema");
      break;
    case PlanKind::TvfCall: {
      if (n.function.empty()) fail_validate(n, "no function");
      std::size_t tables = 0;
      for (const auto& a : n.args) {
        if (a.kind == BoundArg::Kind::Column) fail_validate(n, "column argument without an input");
        if (a.kind == BoundArg::Kind::Table) ++tables;
      }
      if (tables != n.arg_schemas.size()) fail_validate(n, "table arguments unresolved");
      break;
    }
    case PlanKind::Filter: {
      const Schema& in = n.input_schema();
      for (const auto& p : n.predicates) {
        check_index(n, p.column, in);
        if (!comparable(in[p.column].type, p.value)) fail_validate(n, "ill-typed predicate on '" + p.name + "'");
      }
      if (!(n.output == in)) fail_validate(n, "output differs from input");
      break;
    }
    case PlanKind::Project: {
      const Schema& in = n.input_schema();
      std::size_t width = 0;
      for (const auto& item : n.items) {
        if (item.kind == ProjectItem::Kind::Column) {
          check_index(n, item.column, in);
          ++width;
          continue;
        }
        if (item.function.empty()) fail_validate(n, "call without a function");
        for (const auto& a : item.args) {
          if (a.kind == BoundArg::Kind::Column) check_index(n, a.column, in);
          if (a.kind == BoundArg::Kind::Table) fail_validate(n, "table argument in a projection");
        }
        width += item.kind == ProjectItem::Kind::ScalarCall ? 1 : 0;
      }
      const bool has_table_call = std::any_of(n.items.begin(), n.items.end(), [](const ProjectItem& i) {
        return i.kind == ProjectItem::Kind::TableCall;
      });
      if (has_table_call && n.items.size() != 1) fail_validate(n, "table function mixed with other items");
      if (!has_table_call && width != n.output.size()) fail_validate(n, "output width mismatch");
      break;
    }
    case PlanKind::GroupAggregate: {
      const Schema& in = n.input_schema();
      for (auto k : n.keys) {
        check_index(n, k, in);
        const auto kind = in[k].type.kind;
        if (kind == LT::Float || kind == LT::Array) fail_validate(n, "invalid key type");
      }
      for (const auto& a : n.aggs) {
        if (a.func != sql::AggFunc::Count && !a.column) fail_validate(n, "aggregate without a column");
        if (a.column) {
          check_index(n, *a.column, in);
          if (!in[*a.column].type.is_numeric_scalar()) fail_validate(n, "non-numeric aggregate input");
        }
      }
      if (n.layout.size() != n.output.size()) fail_validate(n, "layout width mismatch");
      for (const auto& l : n.layout) {
        if (l.index >= (l.is_key ? n.keys.size() : n.aggs.size())) fail_validate(n, "layout index out of range");
      }
      break;
    }
    case PlanKind::Sort:
      for (const auto& k : n.sort_keys) check_index(n, k.column, n.input_schema());
      if (!(n.output == n.input_schema())) fail_validate(n, "output differs from input");
      break;
    case PlanKind::Limit:
      if (n.limit < 0) fail_validate(n, "negative limit");
      if (!(n.output == n.input_schema())) fail_validate(n, "output differs from input");
      break;
  }
}

std::string describe(const PlanNode& n) {
  std::string s = std::string(to_string(n.kind)) + "[" + to_string(n.impl) + "]";
  switch (n.kind) {
    case PlanKind::Scan: s += " " + n.table; break;
    case PlanKind::TvfCall: s += " " + render_call(n.function, n.args) + " -> (" + n.output.to_string() + ")"; break;
    case PlanKind::Filter:
      for (std::size_t i = 0; i < n.predicates.size(); ++i) {
        const auto& p = n.predicates[i];
        s += (i ? " AND " : " ") + p.name + " " + sql::to_string(p.op) + " " + sql::to_sql(p.value);
      }
      break;
    case PlanKind::Project: {
      const Schema& in = n.input_schema();
      s += " [";
      std::size_t out = 0;
      for (std::size_t i = 0; i < n.items.size(); ++i) {
        const auto& item = n.items[i];
        if (i) s += ", ";
        if (item.kind == ProjectItem::Kind::TableCall) {
          s += render_call(item.function, item.args) + " -> (" + n.output.to_string() + ")";
          continue;
        }
        const auto text =
            item.kind == ProjectItem::Kind::Column ? in[item.column].name : render_call(item.function, item.args);
        const auto& def = n.output[out++];
        s += text;
        if (def.name != text) s += " AS " + def.name;
        if (def.hidden) s += " hidden";
      }
      s += "]";
      break;
    }
    case PlanKind::GroupAggregate: {
      const Schema& in = n.input_schema();
      s += " keys=[";
      for (std::size_t i = 0; i < n.keys.size(); ++i) {
        s += (i ? ", " : "") + in[n.keys[i]].name + " " + in[n.keys[i]].type.to_string();
      }
      s += "] aggs=[";
      for (std::size_t i = 0; i < n.aggs.size(); ++i) s += (i ? ", " : "") + n.aggs[i].label;
      s += "]";
      break;
    }
    case PlanKind::Sort:
      s += " keys=[";
      for (std::size_t i = 0; i < n.sort_keys.size(); ++i) {
        s += (i ? ", " : "") + n.output[n.sort_keys[i].column].name + (n.sort_keys[i].descending ? " DESC" : " ASC");
      }
      s += "]";
      break;
    case PlanKind::Limit: s += " " + std::to_string(n.limit); break;
  }
  return s;
}

std::string explain(const PhysicalPlan& plan) {
  std::string out;
  std::size_t depth = 0;
  for (auto n = plan.root.get(); n; n = n->input.get(), ++depth) {
    out += std::string(2 * depth, ' ') + describe(*n) + "\n";
  }
  return out;
}

PhysicalPlan plan_sql(std::string_view text, const Catalog& catalog, const UdfRegistry& registry) {
  return lower(bind(sql::parse(text), catalog, registry));
}

}  // namespace tdq
