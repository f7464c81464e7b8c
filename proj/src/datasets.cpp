#include <algorithm>
#include <numeric>

#include "tdq/experiments.hpp"

namespace tdq {

LlpDataset gen_llp_dataset(std::int64_t n, std::uint64_t seed) {
  if (n < 2) throw Error("an LLP dataset needs at least 2 rows");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> x1(static_cast<std::size_t>(n)), x2(static_cast<std::size_t>(n));
  LlpDataset d;
  d.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const bool positive = coin(rng);
    const double mu = positive ? 1.0 : -1.0;
    d.labels[i] = positive ? 1 : 0;
    x1[i] = mu + noise(rng);
    x2[i] = mu + noise(rng);
  }
  d.features = Table::make(Schema::parse("x1 float, x2 float"),
                           {plain(Tensor::from_data({n}, std::move(x1))), plain(Tensor::from_data({n}, std::move(x2)))});
  return d;
}

std::vector<LabeledBag> make_bags(const Table& features, const std::vector<std::int64_t>& labels, const BagSpec& spec,
                                  const std::optional<PrivacyParams>& privacy, std::mt19937_64& rng) {
  const auto n = features.row_count;
  if (static_cast<std::int64_t>(labels.size()) != n) throw ShapeError("one label per feature row required");
  if (spec.bag_size < 1) throw Error("bag size must be at least 1");
  const auto num_bags = spec.num_bags > 0 ? spec.num_bags : n / spec.bag_size;
  if (num_bags < 1 || spec.bag_size * num_bags > n) {
    throw Error(std::to_string(num_bags) + " bags of " + std::to_string(spec.bag_size) + " do not fit in " +
                std::to_string(n) + " rows");
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<LabeledBag> bags;
  bags.reserve(static_cast<std::size_t>(num_bags));
  for (std::int64_t b = 0; b < num_bags; ++b) {
    const auto first = order.begin() + b * spec.bag_size;
    std::vector<std::int64_t> rows(first, first + spec.bag_size);
    double counts[2] = {0, 0};
    for (auto r : rows) counts[labels[r] == 0 ? 0 : 1] += 1;
    Tensor target = Tensor::vector({counts[0], counts[1]});
    if (privacy) target = laplace_noise(target, *privacy, rng);
    bags.push_back({take_rows(features, rows), target});
  }
  return bags;
}

namespace {

// 5x7 bitmap digits, one string per row.
constexpr const char* kFont[10][7] = {
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
};

double font_pixel(std::int64_t digit, std::int64_t r, std::int64_t c) { return kFont[digit][r][c] == '#' ? 1.0 : 0.0; }

// Overlap of [a0, a1) with [b0, b1).
double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

}  // namespace

Tensor render_glyph(std::int64_t digit, bool large) {
  if (digit < 0 || digit >= kDigits) throw Error("digit out of range");
  std::vector<double> tile(static_cast<std::size_t>(kTile * kTile), 0.0);
  if (large) {
    // Nearest-neighbour upscale of 5x7 to the full 8x8 tile.
    for (std::int64_t r = 0; r < kTile; ++r) {
      for (std::int64_t c = 0; c < kTile; ++c) tile[r * kTile + c] = font_pixel(digit, r * 7 / kTile, c * 5 / kTile);
    }
  } else {
    // Area-averaged downscale to 4 wide by 6 tall, top-left.
    constexpr std::int64_t w = 4, h = 6;
    for (std::int64_t r = 0; r < h; ++r) {
      for (std::int64_t c = 0; c < w; ++c) {
        const double r0 = r * 7.0 / h, r1 = (r + 1) * 7.0 / h;
        const double c0 = c * 5.0 / w, c1 = (c + 1) * 5.0 / w;
        double acc = 0.0;
        for (std::int64_t sr = 0; sr < 7; ++sr) {
          for (std::int64_t sc = 0; sc < 5; ++sc) {
            acc += font_pixel(digit, sr, sc) * overlap(r0, r1, sr, sr + 1) * overlap(c0, c1, sc, sc + 1);
          }
        }
        tile[r * kTile + c] = acc / ((r1 - r0) * (c1 - c0));
      }
    }
  }
  return Tensor::from_data({kTile, kTile}, std::move(tile));
}

std::vector<GlyphGridSample> gen_glyph_grids(std::int64_t n, std::uint64_t seed, double flip_probability) {
  if (n < 1) throw Error("need at least one grid");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick_digit(0, kDigits - 1);
  std::bernoulli_distribution pick_large(0.5);
  std::bernoulli_distribution flip(flip_probability);
  std::vector<GlyphGridSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t g = 0; g < n; ++g) {
    GlyphGridSample s;
    std::vector<double> image(static_cast<std::size_t>(kGridSide * kGridSide), 0.0);
    std::vector<double> counts(static_cast<std::size_t>(kDigits * kSizes), 0.0);
    for (std::int64_t t = 0; t < kGridTiles * kGridTiles; ++t) {
      const auto digit = pick_digit(rng);
      const bool large = pick_large(rng);
      s.digits[t] = digit;
      s.sizes[t] = large ? 1 : 0;
      counts[digit * kSizes + (large ? 1 : 0)] += 1;
      const auto tile = render_glyph(digit, large).to_vector();
      const auto top = (t / kGridTiles) * kTile, left = (t % kGridTiles) * kTile;
      for (std::int64_t r = 0; r < kTile; ++r) {
        for (std::int64_t c = 0; c < kTile; ++c) {
          double v = tile[r * kTile + c];
          if (flip(rng)) v = 1.0 - v;
          image[(top + r) * kGridSide + left + c] = v;
        }
      }
    }
    s.image = Tensor::from_data({kGridSide, kGridSide}, std::move(image));
    s.target = Tensor::from_data({kDigits, kSizes}, std::move(counts));
    out.push_back(std::move(s));
  }
  return out;
}

Tensor grid_tiles(const Tensor& grids) {
  if (grids.rank() != 3 || grids.dim(1) != kGridSide || grids.dim(2) != kGridSide) {
    throw ShapeError("grid_tiles expects [n, 24, 24], got " + shape_to_string(grids.shape()));
  }
  const auto n = grids.dim(0);
  const Tensor split = reshape(grids, {n, kGridTiles, kTile, kGridTiles, kTile});
  return reshape(permute(split, {0, 1, 3, 2, 4}), {n * kGridTiles * kGridTiles, kTile * kTile});
}

}  // namespace tdq
