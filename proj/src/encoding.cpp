#include "tdq/encoding.hpp"

#include <algorithm>
#include <cmath>

namespace tdq {

StringDictionary::StringDictionary(std::vector<std::string> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (!(entries_[i - 1] < entries_[i])) {
      throw EncodingError("dictionary entries must be strictly ascending");
    }
  }
}

const std::string& StringDictionary::at(std::int64_t code) const {
  if (code < 0 || code >= static_cast<std::int64_t>(entries_.size())) {
    throw EncodingError("dictionary code " + std::to_string(code) + " outside [0, " +
                        std::to_string(entries_.size()) + ")");
  }
  return entries_[static_cast<std::size_t>(code)];
}

std::optional<std::int64_t> StringDictionary::find(std::string_view s) const {
  const auto code = lower_bound(s);
  if (code < static_cast<std::int64_t>(entries_.size()) && entries_[code] == s) return code;
  return std::nullopt;
}

std::int64_t StringDictionary::lower_bound(std::string_view s) const {
  return std::lower_bound(entries_.begin(), entries_.end(), s,
                          [](const std::string& e, std::string_view v) { return std::string_view(e) < v; }) -
         entries_.begin();
}

std::int64_t StringDictionary::upper_bound(std::string_view s) const {
  return std::upper_bound(entries_.begin(), entries_.end(), s,
                          [](std::string_view v, const std::string& e) { return v < std::string_view(e); }) -
         entries_.begin();
}

const StringDictionary& EncodedTensor::dictionary() const {
  if (const auto* d = std::get_if<DictionaryEncoding>(&encoding)) return *d->dict;
  throw EncodingError("column is not dictionary encoded");
}

std::int64_t EncodedTensor::num_classes() const {
  if (const auto* p = std::get_if<ProbabilityEncoding>(&encoding)) return p->num_classes;
  throw EncodingError("column is not probability encoded");
}

std::int64_t EncodedTensor::rows() const {
  if (values.rank() == 0) throw ShapeError("zero-dimensional column");
  return values.shape()[0];
}

void EncodedTensor::validate() const {
  if (const auto* d = std::get_if<DictionaryEncoding>(&encoding)) {
    if (values.dtype() != DType::Int64 || values.rank() != 1) {
      throw EncodingError("dictionary column must be 1-d int64");
    }
    const auto n = static_cast<std::int64_t>(d->dict->size());
    for (auto code : values.ints()) {
      if (code < 0 || code >= n) {
        throw EncodingError("dictionary code " + std::to_string(code) + " outside [0, " + std::to_string(n) + ")");
      }
    }
  } else if (const auto* p = std::get_if<ProbabilityEncoding>(&encoding)) {
    if (p->num_classes < 1) throw EncodingError("probability encoding needs at least one class");
    if (!values.is_floating() || values.rank() != 2 || values.shape()[1] != p->num_classes) {
      throw EncodingError("probability column must be float [n, " + std::to_string(p->num_classes) + "], got " +
                          shape_to_string(values.shape()));
    }
    const auto v = values.values();
    const auto k = p->num_classes;
    for (std::int64_t i = 0; i < values.shape()[0]; ++i) {
      double total = 0.0;
      for (std::int64_t c = 0; c < k; ++c) {
        const double x = v[i * k + c];
        if (!(x >= 0.0 && x <= 1.0)) throw EncodingError("probability outside [0, 1]");
        total += x;
      }
      if (std::abs(total - 1.0) > 1e-6) throw EncodingError("probability row does not sum to 1");
    }
  }
}

EncodedTensor plain(Tensor values) { return EncodedTensor{std::move(values), PlainEncoding{}}; }

EncodedTensor dict_encode(const std::vector<std::string>& strings) {
  std::vector<std::string> entries = strings;
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
  return dict_encode_with(strings, std::make_shared<const StringDictionary>(std::move(entries)));
}

EncodedTensor dict_encode_with(const std::vector<std::string>& strings, DictionaryPtr dict) {
  std::vector<std::int64_t> codes(strings.size());
  for (std::size_t i = 0; i < strings.size(); ++i) {
    const auto code = dict->find(strings[i]);
    if (!code) throw EncodingError("string '" + strings[i] + "' is not in the dictionary");
    codes[i] = *code;
  }
  const auto n = static_cast<std::int64_t>(codes.size());
  return EncodedTensor{Tensor::from_ints({n}, std::move(codes)), DictionaryEncoding{std::move(dict)}};
}

std::vector<std::string> dict_decode(const EncodedTensor& column) {
  const auto& dict = column.dictionary();
  const auto codes = column.values.ints();
  std::vector<std::string> out;
  out.reserve(codes.size());
  for (auto code : codes) out.push_back(dict.at(code));
  return out;
}

EncodedTensor pe_encode(const Tensor& logits, DictionaryPtr labels) {
  if (logits.rank() != 2) {
    throw ShapeError("pe_encode expects [n, k] logits, got " + shape_to_string(logits.shape()));
  }
  if (!logits.is_floating()) throw TypeError("pe_encode expects floating logits");
  const auto k = logits.shape()[1];
  if (k < 1) throw EncodingError("probability encoding needs at least one class");
  if (labels && static_cast<std::int64_t>(labels->size()) != k) {
    throw EncodingError("label dictionary size does not match class count");
  }
  return EncodedTensor{softmax(logits, 1), ProbabilityEncoding{k, std::move(labels)}};
}

EncodedTensor pe_decode(const EncodedTensor& column) {
  const auto* pe = std::get_if<ProbabilityEncoding>(&column.encoding);
  if (!pe) throw EncodingError("pe_decode expects a probability-encoded column");
  const auto n = column.values.shape()[0];
  const auto k = pe->num_classes;
  const auto v = column.values.values();
  std::vector<std::int64_t> codes(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < k; ++c) {
      if (v[i * k + c] > v[i * k + best]) best = c;
    }
    codes[i] = best;
  }
  Tensor values = Tensor::from_ints({n}, std::move(codes));
  if (pe->labels) return EncodedTensor{std::move(values), DictionaryEncoding{pe->labels}};
  return plain(std::move(values));
}

}  // namespace tdq
