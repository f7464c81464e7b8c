#include <gtest/gtest.h>

#include <random>

#include "tdq/encoding.hpp"

using namespace tdq;

TEST(DictEncode, CodesAreSortedRanks) {
  const auto e = dict_encode({"b", "a", "b"});
  EXPECT_EQ(e.dictionary().entries(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(std::vector<std::int64_t>(e.values.ints().begin(), e.values.ints().end()),
            (std::vector<std::int64_t>{1, 0, 1}));
}

TEST(DictEncode, Empty) {
  const auto e = dict_encode({});
  EXPECT_EQ(e.values.numel(), 0);
  EXPECT_EQ(e.dictionary().size(), 0u);
  EXPECT_TRUE(dict_decode(e).empty());
}

TEST(DictEncode, Repeated) {
  const auto e = dict_encode({"x", "x"});
  EXPECT_EQ(e.dictionary().size(), 1u);
  EXPECT_EQ(e.values.to_vector(), (std::vector<double>{0, 0}));
}

TEST(DictDecode, RoundTrip) {
  const std::vector<std::string> s = {"b", "a", "b"};
  EXPECT_EQ(dict_decode(dict_encode(s)), s);
}

TEST(DictDecode, CodeOutOfRange) {
  EncodedTensor bad{Tensor::from_ints({1}, {7}),
                    DictionaryEncoding{std::make_shared<StringDictionary>(std::vector<std::string>{"a", "b"})}};
  EXPECT_THROW(bad.validate(), EncodingError);
  EXPECT_THROW(dict_decode(bad), EncodingError);
}

TEST(DictDecode, WrongVariant) { EXPECT_THROW(dict_decode(plain(Tensor::vector({1}))), EncodingError); }

TEST(StringDictionary, RejectsUnsortedOrDuplicate) {
  EXPECT_THROW(StringDictionary({"b", "a"}), EncodingError);
  EXPECT_THROW(StringDictionary({"a", "a"}), EncodingError);
}

TEST(StringDictionary, Bounds) {
  const StringDictionary d({"apple", "kiwi", "pear"});
  EXPECT_EQ(d.lower_bound("kiwi"), 1);
  EXPECT_EQ(d.upper_bound("kiwi"), 2);
  EXPECT_EQ(d.lower_bound("banana"), 1);
  EXPECT_EQ(d.upper_bound("zebra"), 3);
  EXPECT_FALSE(d.find("fig").has_value());
}

TEST(DictEncode, OrderPreservingOverAllPairs) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> len(0, 4), ch(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> s(30);
    for (auto& x : s) {
      for (int i = len(rng); i > 0; --i) x.push_back(static_cast<char>('a' + ch(rng)));
    }
    const auto e = dict_encode(s);
    const auto codes = e.values.ints();
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        ASSERT_EQ(s[i] < s[j], codes[i] < codes[j]);
        ASSERT_EQ(s[i] == s[j], codes[i] == codes[j]);
      }
    }
    EXPECT_EQ(dict_decode(e), s);
  }
}

TEST(PeEncode, UniformLogits) {
  const auto pe = pe_encode(Tensor::matrix({{0, 0}}));
  EXPECT_TRUE(pe.is_probability());
  EXPECT_EQ(pe.num_classes(), 2);
  EXPECT_EQ(pe.values.to_vector(), (std::vector<double>{0.5, 0.5}));
}

TEST(PeEncode, HugeMarginSaturates) {
  const auto v = pe_encode(Tensor::matrix({{500, 0, 0}, {0, 500, 0}, {0, 0, 500}})).values.to_vector();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(v[r * 3 + c], r == c ? 1.0 : 0.0, 1e-12);
  }
}

TEST(PeEncode, RequiresMatrix) { EXPECT_THROW(pe_encode(Tensor::vector({1, 2})), ShapeError); }

TEST(PeDecode, Argmax) {
  EXPECT_EQ(pe_decode(pe_encode(Tensor::matrix({{2, 0}}))).values.flat(0), 0.0);
  EncodedTensor tie{Tensor::matrix({{0.5, 0.5}}), ProbabilityEncoding{2, nullptr}};
  EXPECT_EQ(pe_decode(tie).values.flat(0), 0.0);
}

TEST(PeDecode, OneHotRecoversCodes) {
  const std::vector<std::int64_t> codes = {2, 0, 1, 1};
  EncodedTensor pe{one_hot(Tensor::from_ints({4}, codes), 3), ProbabilityEncoding{3, nullptr}};
  const auto d = pe_decode(pe);
  EXPECT_EQ(std::vector<std::int64_t>(d.values.ints().begin(), d.values.ints().end()), codes);
}

TEST(PeDecode, LabelsYieldDictionaryCodes) {
  auto labels = std::make_shared<StringDictionary>(std::vector<std::string>{"high", "low"});
  const auto d = pe_decode(pe_encode(Tensor::matrix({{0, 3}, {3, 0}}), labels));
  EXPECT_TRUE(d.is_dictionary());
  EXPECT_EQ(dict_decode(d), (std::vector<std::string>{"low", "high"}));
}

TEST(PeDecode, WrongVariant) { EXPECT_THROW(pe_decode(plain(Tensor::vector({1}))), EncodingError); }

TEST(PeEncode, RowsAreStochasticAndDecodeRecoversWideMarginArgmax) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 5.0);
  std::uniform_int_distribution<int> k_dist(1, 6), n_dist(1, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = n_dist(rng), k = k_dist(rng);
    std::vector<double> logits(static_cast<std::size_t>(n * k));
    std::vector<std::int64_t> winner(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
      winner[r] = std::uniform_int_distribution<int>(0, k - 1)(rng);
      for (int c = 0; c < k; ++c) logits[r * k + c] = g(rng);
      double top = -1e300;
      for (int c = 0; c < k; ++c) {
        if (c != winner[r]) top = std::max(top, logits[r * k + c]);
      }
      logits[r * k + winner[r]] = (k == 1 ? 0.0 : top) + 30.5;
    }
    const auto pe = pe_encode(Tensor::from_data({n, k}, logits));
    EXPECT_NO_THROW(pe.validate());
    const auto p = pe.values.to_vector();
    for (int r = 0; r < n; ++r) {
      double s = 0.0;
      for (int c = 0; c < k; ++c) {
        ASSERT_GE(p[r * k + c], 0.0);
        ASSERT_LE(p[r * k + c], 1.0);
        s += p[r * k + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    const auto d = pe_decode(pe);
    EXPECT_EQ(std::vector<std::int64_t>(d.values.ints().begin(), d.values.ints().end()), winner);
  }
}

TEST(ProbabilityEncoding, ValidateRejectsNonStochasticRows) {
  EncodedTensor bad{Tensor::matrix({{0.7, 0.7}}), ProbabilityEncoding{2, nullptr}};
  EXPECT_THROW(bad.validate(), EncodingError);
}
