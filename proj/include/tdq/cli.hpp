#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "tdq/sql.hpp"
#include "tdq/table.hpp"
#include "tdq/udf.hpp"

namespace tdq {

// Exit codes: 0 ok, 1 user error (bad flags, bad input, bind/parse errors),
// 2 internal error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Registers the built-in model functions (classify_incomes, parse_grid) that
// `query` references and that are not registered yet. classify_incomes takes
// its arity from the argument tables.
void register_builtins(UdfRegistry& registry, const Catalog& catalog, const sql::Query& query, std::uint64_t seed);

// --seed wins over TDP_SEED, which wins over `fallback`.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback);

// Tables ingested into a workspace directory, reloaded on every command.
void load_workspace(const std::string& dir, Catalog& catalog);
void save_to_workspace(const std::string& dir, const std::string& table, const std::string& csv_path,
                       const Schema& schema, const std::string& device);

}  // namespace tdq
