#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tdq/nn.hpp"
#include "tdq/train.hpp"

namespace tdq {

// ---------------------------------------------------------------------------
// Learning from label proportions.

struct LlpDataset {
  Table features;  // x1 float, x2 float
  std::vector<std::int64_t> labels;
};

// Two unit-variance Gaussian classes with means (-1,-1) (label 0) and (+1,+1)
// (label 1); labels are fair coin flips.
LlpDataset gen_llp_dataset(std::int64_t n, std::uint64_t seed);

struct BagSpec {
  std::int64_t bag_size = 1;
  std::int64_t num_bags = 0;
};

struct LabeledBag {
  Table bag;      // features only
  Tensor target;  // [2] per-class counts, optionally noised
};

// Shuffles the rows and cuts consecutive bags; each target counts the labels
// in its bag, plus Laplace noise when `privacy` is set.
std::vector<LabeledBag> make_bags(const Table& features, const std::vector<std::int64_t>& labels, const BagSpec& spec,
                                  const std::optional<PrivacyParams>& privacy, std::mt19937_64& rng);

struct LlpConfig {
  std::vector<std::int64_t> bag_sizes = {1, 8, 16, 32, 64, 128, 256, 512};
  std::vector<std::uint64_t> seeds = {0};
  std::int64_t train_size = 4000;
  std::int64_t test_size = 1000;
  TrainConfig train;
  std::optional<PrivacyParams> privacy;
  bool baseline = true;  // also train on exact instance labels
  // Replaces the generated data; each seed shuffles it and holds out the
  // last test_size rows.
  std::optional<LlpDataset> data;
};

struct LlpResult {
  std::string model;  // "llp" or "baseline"
  std::int64_t bag_size = 1;
  std::uint64_t seed = 0;
  double error = 0.0;  // instance-level test error rate
};

// Registers the linear classify_incomes function in `registry`.
UdfPtr register_income_classifier(UdfRegistry& registry, std::size_t features, std::uint64_t seed);

// One LLP training run: bags of `bag_size` with optional noise, then the
// instance-level error on the test set.
double run_llp_point(const LlpDataset& train_set, const LlpDataset& test_set, std::int64_t bag_size,
                     const TrainConfig& cfg, const std::optional<PrivacyParams>& privacy, std::uint64_t seed);

std::vector<LlpResult> run_llp_experiment(const LlpConfig& cfg);

// Reads a CSV with numeric feature columns and an integer 0/1 `label` column.
LlpDataset load_llp_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Count-supervised glyph grids.

constexpr std::int64_t kTile = 8;
constexpr std::int64_t kGridTiles = 3;
constexpr std::int64_t kGridSide = kTile * kGridTiles;
constexpr std::int64_t kDigits = 10;
constexpr std::int64_t kSizes = 2;

struct GlyphGridSample {
  Tensor image;   // [24, 24]
  Tensor target;  // [10, 2] counts of (digit, size); size 0 = small, 1 = large
  std::array<std::int64_t, 9> digits{};
  std::array<std::int64_t, 9> sizes{};
};

// Renders one digit into an 8x8 tile without noise.
Tensor render_glyph(std::int64_t digit, bool large);

std::vector<GlyphGridSample> gen_glyph_grids(std::int64_t n, std::uint64_t seed, double flip_probability = 0.02);

// [n, 24, 24] -> [n * 9, 64], tiles in row-major grid order.
Tensor grid_tiles(const Tensor& grids);

struct GridModel {
  std::shared_ptr<nn::Mlp> digit;  // 64 -> 32 -> 10
  std::shared_ptr<nn::Mlp> size;   // 64 -> 32 -> 2
};

// Registers parse_grid (one image column -> Digit, Size PE columns).
GridModel register_grid_parser(UdfRegistry& registry, std::uint64_t seed);

struct GridConfig {
  std::int64_t train_size = 500;
  std::int64_t test_size = 100;
  TrainConfig train;
  std::int64_t eval_every = 0;  // 0: ten checkpoints
  bool baseline = false;
};

struct MetricRow {
  std::string model;
  std::int64_t iteration = 0;
  std::string metric;
  double value = 0.0;
};

struct GridResult {
  std::vector<MetricRow> rows;
  double final_mae = 0.0;
  double initial_mae = 0.0;
  double tile_accuracy = 0.0;    // extracted digit classifier on held-out tiles
  double swap_agreement = 0.0;   // grids where exact counts equal rounded soft counts
  std::optional<double> baseline_final_mae;
  GridModel model;
};

inline constexpr const char* kGridQuery = "SELECT Digit, Size, COUNT(*) FROM parse_grid(Grids) GROUP BY Digit, Size";

GridResult run_grid_experiment(const GridConfig& cfg);

// Monolithic 576 -> 128 -> 64 -> 20 regressor trained on the same data, loss,
// optimizer and iterations; rows use model "baseline".
std::vector<MetricRow> run_baseline_regression(const std::vector<GlyphGridSample>& train_set,
                                               const std::vector<GlyphGridSample>& test_set, const TrainConfig& cfg,
                                               std::int64_t eval_every);

// ---------------------------------------------------------------------------
// Reports.

std::string llp_report_csv(const std::vector<LlpResult>& results, double epsilon);
std::string grid_report_csv(const std::vector<MetricRow>& rows);

}  // namespace tdq
