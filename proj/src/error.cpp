#include "tdq/error.hpp"

namespace tdq {

namespace {

std::string describe(std::size_t offset, const std::vector<std::string>& expected, const std::string& found) {
  std::string msg = "syntax error at offset " + std::to_string(offset) + ": expected ";
  if (expected.size() == 1) {
    msg += expected.front();
  } else {
    msg += "one of {";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) msg += ", ";
      msg += expected[i];
    }
    msg += "}";
  }
  msg += ", found " + found;
  return msg;
}

}  // namespace

ParseError::ParseError(std::size_t offset, std::vector<std::string> expected, const std::string& found)
    : Error(describe(offset, expected, found)), offset_(offset), expected_(std::move(expected)) {}

}  // namespace tdq
