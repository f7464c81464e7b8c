#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tdq/tensor.hpp"

namespace tdq {

// Distinct strings in strictly ascending order. A string's code is its rank,
// so comparing codes is the same as comparing the strings.
class StringDictionary {
 public:
  StringDictionary() = default;
  // Throws EncodingError unless `entries` is strictly ascending.
  explicit StringDictionary(std::vector<std::string> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& at(std::int64_t code) const;
  const std::vector<std::string>& entries() const noexcept { return entries_; }

  std::optional<std::int64_t> find(std::string_view s) const;
  // First code whose string is >= s (== size() if none).
  std::int64_t lower_bound(std::string_view s) const;
  // First code whose string is > s.
  std::int64_t upper_bound(std::string_view s) const;

  bool operator==(const StringDictionary&) const = default;

 private:
  std::vector<std::string> entries_;
};

using DictionaryPtr = std::shared_ptr<const StringDictionary>;

struct PlainEncoding {};

struct DictionaryEncoding {
  DictionaryPtr dict;
};

// Row-stochastic class-probability matrix [n, num_classes].
struct ProbabilityEncoding {
  std::int64_t num_classes = 1;
  DictionaryPtr labels;  // optional names for the classes
};

using Encoding = std::variant<PlainEncoding, DictionaryEncoding, ProbabilityEncoding>;

struct EncodedTensor {
  Tensor values;
  Encoding encoding = PlainEncoding{};

  bool is_plain() const noexcept { return std::holds_alternative<PlainEncoding>(encoding); }
  bool is_dictionary() const noexcept { return std::holds_alternative<DictionaryEncoding>(encoding); }
  bool is_probability() const noexcept { return std::holds_alternative<ProbabilityEncoding>(encoding); }

  const StringDictionary& dictionary() const;
  std::int64_t num_classes() const;
  std::int64_t rows() const;

  // Checks the invariants of the encoding variant; throws EncodingError.
  void validate() const;
};

EncodedTensor plain(Tensor values);

EncodedTensor dict_encode(const std::vector<std::string>& strings);
// Codes against an existing dictionary (every string must be present).
EncodedTensor dict_encode_with(const std::vector<std::string>& strings, DictionaryPtr dict);
std::vector<std::string> dict_decode(const EncodedTensor& column);

// Row-wise stable softmax of raw scores; differentiable.
EncodedTensor pe_encode(const Tensor& logits, DictionaryPtr labels = nullptr);
// Hard per-row argmax, ties to the lowest class. Yields Dictionary codes when
// the PE column carries labels, plain int64 codes otherwise.
EncodedTensor pe_decode(const EncodedTensor& column);

}  // namespace tdq
