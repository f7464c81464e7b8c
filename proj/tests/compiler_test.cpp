#include <gtest/gtest.h>

#include <algorithm>

#include "tdq/compiler.hpp"
#include "tdq/experiments.hpp"
#include "tdq/nn.hpp"

using namespace tdq;

namespace {

constexpr const char* kCountQuery = "SELECT Digits, Sizes, COUNT(*) FROM numbers GROUP BY Digits, Sizes";
constexpr const char* kIncomeQuery = "SELECT Income, COUNT(*) FROM classify_incomes(census) GROUP BY Income";

struct Fixture {
  Catalog catalog;
  UdfRegistry registry;
  UdfPtr classifier;

  Fixture() {
    catalog.register_csv_text("Digits,Sizes\n1,0\n2,1\n1,1\n", "numbers", Schema::parse("Digits int, Sizes int"));
    catalog.register_csv_text("x1,x2\n0.5,1\n-1,2\n3,-2\n", "census", Schema::parse("x1 float, x2 float"));
    classifier = register_income_classifier(registry, 2, 3);
  }
};

std::vector<OpKind> kinds(const CompiledQuery& q) {
  std::vector<OpKind> out;
  for (const auto& op : q.program()) out.push_back(op.kind);
  return out;
}

UdfPtr linear_udf(UdfRegistry& registry, const std::string& name, UdfKind kind, const std::string& outputs,
                  std::int64_t out, std::uint64_t seed) {
  auto layer = std::make_shared<nn::Linear>(name, 1, out, seed);
  UdfEntry e;
  e.name = name;
  e.kind = kind;
  e.arity = 1;
  e.outputs = Schema::parse(outputs);
  e.params = layer->parameters();
  e.body = [layer, kind](std::span<const EncodedTensor> in) {
    const Tensor y = layer->forward(reshape(in[0].values, {-1, 1}));
    if (kind == UdfKind::Scalar) return std::vector<EncodedTensor>{plain(reshape(y, {-1}))};
    return std::vector<EncodedTensor>{in[0], pe_encode(y)};
  };
  return registry.register_udf(std::move(e));
}

}  // namespace

TEST(Compile, TrainableTableFunctionUsesSoftGroupBy) {
  Fixture f;
  const auto q = compile_sql(kIncomeQuery, f.catalog, f.registry, {true, "cpu"});
  EXPECT_EQ(kinds(q), (std::vector<OpKind>{OpKind::TvfCall, OpKind::SoftGroupBy}));
  EXPECT_EQ(q.program().back().impl, Impl::Soft);
}

TEST(Compile, InferenceInsertsDecodeBeforeExactGroupBy) {
  Fixture f;
  const auto q = compile_sql(kIncomeQuery, f.catalog, f.registry);
  EXPECT_EQ(kinds(q), (std::vector<OpKind>{OpKind::TvfCall, OpKind::PeDecode, OpKind::GroupBy}));
  for (const auto& op : q.program()) EXPECT_EQ(op.impl, Impl::Exact);
}

TEST(Compile, PlainQueryIsScanThenExactGroupBy) {
  Fixture f;
  const auto q = compile_sql(kCountQuery, f.catalog, f.registry);
  EXPECT_EQ(kinds(q), (std::vector<OpKind>{OpKind::Scan, OpKind::GroupBy}));
}

TEST(Compile, TrainableRejectsSortAndLimit) {
  Fixture f;
  EXPECT_THROW(compile_sql(std::string(kIncomeQuery) + " ORDER BY COUNT(*)", f.catalog, f.registry, {true, "cpu"}),
               CompileError);
  EXPECT_THROW(compile_sql(std::string(kIncomeQuery) + " LIMIT 1", f.catalog, f.registry, {true, "cpu"}),
               CompileError);
  EXPECT_NO_THROW(compile_sql(std::string(kIncomeQuery) + " LIMIT 1", f.catalog, f.registry));
}

TEST(Compile, TrainableGroupByNeedsProbabilityKeys) {
  Fixture f;
  EXPECT_THROW(compile_sql(kCountQuery, f.catalog, f.registry, {true, "cpu"}), CompileError);
}

TEST(Compile, UnknownFunctionInPlan) {
  Fixture f;
  const auto plan = plan_sql(kIncomeQuery, f.catalog, f.registry);
  EXPECT_THROW(compile(plan, {}, UdfRegistry{}), CompileError);
}

TEST(Run, GroupedCounts) {
  Fixture f;
  const auto r = compile_sql(kCountQuery, f.catalog, f.registry).run(f.catalog);
  EXPECT_EQ(export_table(r, ExportFormat::Csv), "Digits,Sizes,COUNT(*)\n1,0,1\n1,1,1\n2,1,1\n");
}

TEST(Run, EmptyTableKeepsSchema) {
  Fixture f;
  f.catalog.register_csv_text("Digits,Sizes\n", "numbers", Schema::parse("Digits int, Sizes int"));
  const auto q = compile_sql(kCountQuery, f.catalog, f.registry);
  const auto r = q.run(f.catalog);
  EXPECT_EQ(r.row_count, 0);
  EXPECT_EQ(r.schema, q.output_schema());
  EXPECT_EQ(export_table(r, ExportFormat::Csv), "Digits,Sizes,COUNT(*)\n");
}

TEST(Run, Deterministic) {
  Fixture f;
  for (const auto* sql : {kCountQuery, kIncomeQuery}) {
    const auto q = compile_sql(sql, f.catalog, f.registry);
    EXPECT_EQ(export_table(q.run(f.catalog), ExportFormat::Json), export_table(q.run(f.catalog), ExportFormat::Json));
  }
}

TEST(Run, MissingTableAndDevices) {
  Fixture f;
  const auto q = compile_sql(kCountQuery, f.catalog, f.registry);
  EXPECT_THROW(q.run(Catalog{}), ExecutionError);
  EXPECT_THROW(compile_sql(kCountQuery, f.catalog, f.registry, {false, "cuda"}).run(f.catalog), ExecutionError);
  f.catalog.register_csv_text("Digits,Sizes\n1,0\n", "numbers", Schema::parse("Digits int, Sizes int"), "cuda");
  EXPECT_THROW(q.run(f.catalog), ExecutionError);
}

TEST(Run, TrainableResultDifferentiatesToParameters) {
  Fixture f;
  const auto q = compile_sql(kIncomeQuery, f.catalog, f.registry, {true, "cpu"});
  Tape tape;
  backward(sum(square(q.run(f.catalog).columns.back().values)));
  for (const auto& p : q.parameters()) EXPECT_TRUE(p->grad().has_value()) << p->name();
}

TEST(Parameters, LinearModelWeightsThenBias) {
  Fixture f;
  const auto q = compile_sql(kIncomeQuery, f.catalog, f.registry, {true, "cpu"});
  const auto params = q.parameters();
  ASSERT_EQ(params.size(), 2u);
  EXPECT_EQ(params, f.classifier->params);
  EXPECT_EQ(params[0]->tensor().shape(), (Shape{2, 2}));
  EXPECT_EQ(params[1]->tensor().shape(), (Shape{2}));
}

TEST(Parameters, EmptyWithoutFunctions) {
  Fixture f;
  EXPECT_TRUE(compile_sql(kCountQuery, f.catalog, f.registry).parameters().empty());
}

TEST(Parameters, RegistrationOrderAcrossFunctions) {
  Catalog catalog;
  catalog.register_tensor(Tensor::vector({1, 2, 3}), "t", "x");
  UdfRegistry registry;
  const auto scale = linear_udf(registry, "scale", UdfKind::Scalar, "s float", 1, 1);
  const auto bucket = linear_udf(registry, "bucket", UdfKind::Table, "x float, b tensor[2]", 2, 2);
  const auto q = compile_sql("SELECT b, scale(x) AS s FROM bucket(t)", catalog, registry);
  auto expected = scale->params;
  expected.insert(expected.end(), bucket->params.begin(), bucket->params.end());
  EXPECT_EQ(q.parameters(), expected);
}

TEST(SwapToExact, SharesParameterValues) {
  Fixture f;
  const auto soft = compile_sql(kIncomeQuery, f.catalog, f.registry, {true, "cpu"});
  const auto exact = swap_to_exact(soft);
  EXPECT_FALSE(exact.config().trainable);
  EXPECT_EQ(exact.parameters(), soft.parameters());
  EXPECT_EQ(kinds(exact), (std::vector<OpKind>{OpKind::TvfCall, OpKind::PeDecode, OpKind::GroupBy}));

  const auto params = soft.parameters();
  params[0]->assign(Tensor::zeros({2, 2}));
  params[1]->assign(Tensor::vector({0, 5}));
  EXPECT_EQ(export_table(exact.run(f.catalog), ExportFormat::Csv), "Income,COUNT(*)\n1,3\n");
}

TEST(ExplainCompiled, OneLinePerOperator) {
  Fixture f;
  const auto text = compile_sql(kIncomeQuery, f.catalog, f.registry, {true, "cpu"}).explain_compiled();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.rfind("tvf_call[exact] classify_incomes(census)", 0), 0u) << text;
  EXPECT_NE(text.find("soft_groupby[soft]"), std::string::npos) << text;
}
