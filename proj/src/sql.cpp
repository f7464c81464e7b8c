#include "tdq/sql.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace tdq::sql {

namespace {

constexpr std::string_view kKeywords[] = {"SELECT", "FROM", "WHERE", "GROUP", "BY",  "ORDER", "LIMIT",
                                          "ASC",    "DESC", "AND",   "AS",    "COUNT", "SUM", "AVG"};

struct Token {
  enum class Type { Ident, Keyword, Int, Float, String, Symbol, End };
  Type type = Type::End;
  std::string text;
  std::size_t offset = 0;
  std::int64_t int_value = 0;
  double float_value = 0.0;
};

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool is_keyword(std::string_view upper_text) {
  return std::find(std::begin(kKeywords), std::end(kKeywords), upper_text) != std::end(kKeywords);
}

std::string describe(const Token& t) {
  switch (t.type) {
    case Token::Type::End: return "end of input";
    case Token::Type::String: return "string \"" + t.text + "\"";
    case Token::Type::Keyword: return t.text;
    default: return "'" + t.text + "'";
  }
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    Token tok;
    tok.offset = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      tok.text = std::string(text.substr(i, j - i));
      const auto up = upper(tok.text);
      if (is_keyword(up)) {
        tok.type = Token::Type::Keyword;
        tok.text = up;
      } else {
        tok.type = Token::Type::Ident;
      }
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      bool is_float = false;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && text[j] == '.') {
        is_float = true;
        ++j;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
        if (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) {
          is_float = true;
          j = k;
          while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        }
      }
      tok.text = std::string(text.substr(i, j - i));
      if (is_float) {
        tok.type = Token::Type::Float;
        std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tok.float_value);
      } else {
        tok.type = Token::Type::Int;
        const auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tok.int_value);
        if (ec != std::errc()) throw ParseError(i, {"integer within 64-bit range"}, "'" + tok.text + "'");
      }
      i = j;
    } else if (c == '"' || c == '\'') {
      const char quote = c;
      std::size_t j = i + 1;
      std::string value;
      bool closed = false;
      while (j < text.size()) {
        if (text[j] == quote) {
          if (j + 1 < text.size() && text[j + 1] == quote) {
            value.push_back(quote);
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        value.push_back(text[j++]);
      }
      if (!closed) throw ParseError(text.size(), {std::string("closing ") + quote}, "end of input");
      tok.type = Token::Type::String;
      tok.text = std::move(value);
      i = j;
    } else {
      static constexpr std::string_view two[] = {"<=", ">=", "<>", "!="};
      tok.type = Token::Type::Symbol;
      const auto rest = text.substr(i, 2);
      if (std::find(std::begin(two), std::end(two), rest) != std::end(two)) {
        tok.text = std::string(rest);
        i += 2;
      } else if (std::string_view("(),*;=<>-").find(c) != std::string_view::npos) {
        tok.text = std::string(1, c);
        ++i;
      } else {
        throw ParseError(i, {"token"}, std::string("'") + c + "'");
      }
    }
    tokens.push_back(std::move(tok));
  }
  Token end;
  end.type = Token::Type::End;
  end.offset = text.size();
  tokens.push_back(end);
  return tokens;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

  Query parse_statement() {
    Query q = parse_query();
    if (symbol(";")) advance();
    if (peek().type != Token::Type::End) fail({"end of input"});
    return q;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& advance() { return tokens_[pos_++]; }

  bool keyword(std::string_view kw) const {
    return peek().type == Token::Type::Keyword && peek().text == kw;
  }
  bool symbol(std::string_view s) const { return peek().type == Token::Type::Symbol && peek().text == s; }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    throw ParseError(peek().offset, std::move(expected), describe(peek()));
  }

  void expect_keyword(std::string_view kw) {
    if (!keyword(kw)) fail({std::string(kw)});
    advance();
  }
  void expect_symbol(std::string_view s) {
    if (!symbol(s)) fail({"'" + std::string(s) + "'"});
    advance();
  }
  std::string expect_ident() {
    if (peek().type != Token::Type::Ident) fail({"identifier"});
    return advance().text;
  }

  Query parse_query() {
    Query q;
    expect_keyword("SELECT");
    if (symbol("*")) {
      advance();
      q.select.push_back({Expr::star(), std::nullopt});
    } else {
      q.select.push_back(parse_select_item());
      while (symbol(",")) {
        advance();
        q.select.push_back(parse_select_item());
      }
    }
    if (!keyword("FROM")) fail({"','", "AS", "FROM"});
    advance();
    q.from = parse_from();
    if (keyword("WHERE")) {
      advance();
      q.where.push_back(parse_comparison());
      while (keyword("AND")) {
        advance();
        q.where.push_back(parse_comparison());
      }
    }
    if (keyword("GROUP")) {
      advance();
      expect_keyword("BY");
      q.group_by.push_back(expect_ident());
      while (symbol(",")) {
        advance();
        q.group_by.push_back(expect_ident());
      }
    }
    if (keyword("ORDER")) {
      advance();
      expect_keyword("BY");
      q.order_by.push_back(parse_order_item());
      while (symbol(",")) {
        advance();
        q.order_by.push_back(parse_order_item());
      }
    }
    if (keyword("LIMIT")) {
      advance();
      if (peek().type != Token::Type::Int) fail({"integer"});
      q.limit = advance().int_value;
    }
    return q;
  }

  SelectItem parse_select_item() {
    SelectItem item;
    item.expr = parse_expr({"'*'", "identifier", "COUNT", "SUM", "AVG"});
    if (keyword("AS")) {
      advance();
      item.alias = expect_ident();
    }
    return item;
  }

  OrderItem parse_order_item() {
    OrderItem item;
    item.expr = parse_expr({"identifier", "COUNT", "SUM", "AVG"});
    if (keyword("ASC")) {
      advance();
    } else if (keyword("DESC")) {
      advance();
      item.descending = true;
    }
    return item;
  }

  Expr parse_expr(std::vector<std::string> expected) {
    if (keyword("COUNT")) {
      advance();
      expect_symbol("(");
      expect_symbol("*");
      expect_symbol(")");
      return Expr::aggregate(AggFunc::Count);
    }
    if (keyword("SUM") || keyword("AVG")) {
      const AggFunc f = peek().text == "SUM" ? AggFunc::Sum : AggFunc::Avg;
      advance();
      expect_symbol("(");
      auto col = expect_ident();
      expect_symbol(")");
      return Expr::aggregate(f, std::move(col));
    }
    if (peek().type != Token::Type::Ident) fail(std::move(expected));
    auto name = advance().text;
    if (symbol("(")) {
      advance();
      return Expr::call(std::move(name), parse_args());
    }
    return Expr::column(std::move(name));
  }

  // After '(' up to and including ')'.
  std::vector<Expr> parse_args() {
    std::vector<Expr> args;
    if (symbol(")")) {
      advance();
      return args;
    }
    while (true) {
      if (peek().type == Token::Type::Ident) {
        args.push_back(Expr::column(advance().text));
      } else {
        args.push_back(Expr::lit(parse_literal({"identifier", "literal"})));
      }
      if (symbol(",")) {
        advance();
        continue;
      }
      if (!symbol(")")) fail({"','", "')'"});
      advance();
      return args;
    }
  }

  Literal parse_literal(std::vector<std::string> expected) {
    bool negative = false;
    if (symbol("-")) {
      advance();
      negative = true;
      if (peek().type != Token::Type::Int && peek().type != Token::Type::Float) fail({"number"});
    }
    const Token& t = peek();
    switch (t.type) {
      case Token::Type::Int:
        advance();
        return Literal{negative ? -t.int_value : t.int_value};
      case Token::Type::Float:
        advance();
        return Literal{negative ? -t.float_value : t.float_value};
      case Token::Type::String:
        advance();
        return Literal{t.text};
      default:
        fail(std::move(expected));
    }
  }

  FromClause parse_from() {
    FromClause from;
    if (symbol("(")) {
      advance();
      from.kind = FromClause::Kind::Subquery;
      from.subquery = std::make_shared<Query>(parse_query());
      expect_symbol(")");
    } else {
      if (peek().type != Token::Type::Ident) fail({"identifier", "'('"});
      from.name = advance().text;
      if (symbol("(")) {
        advance();
        from.kind = FromClause::Kind::Function;
        from.args = parse_args();
      }
    }
    if (keyword("AS")) {
      advance();
      from.alias = expect_ident();
    }
    return from;
  }

  Comparison parse_comparison() {
    Comparison c;
    c.column = expect_ident();
    if (peek().type != Token::Type::Symbol) fail({"'='", "'<>'", "'<'", "'<='", "'>'", "'>='"});
    const auto op = peek().text;
    if (op == "=") {
      c.op = CompareOp::Eq;
    } else if (op == "<>" || op == "!=") {
      c.op = CompareOp::Ne;
    } else if (op == "<") {
      c.op = CompareOp::Lt;
    } else if (op == "<=") {
      c.op = CompareOp::Le;
    } else if (op == ">") {
      c.op = CompareOp::Gt;
    } else if (op == ">=") {
      c.op = CompareOp::Ge;
    } else {
      fail({"'='", "'<>'", "'<'", "'<='", "'>'", "'>='"});
    }
    advance();
    c.value = parse_literal({"literal"});
    return c;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

double Literal::number() const {
  if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&value)) return *d;
  throw TypeError("string literal used as a number");
}

const char* to_string(AggFunc f) {
  switch (f) {
    case AggFunc::Count: return "COUNT";
    case AggFunc::Sum: return "SUM";
    case AggFunc::Avg: return "AVG";
  }
  return "?";
}

const char* to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Ne: return "<>";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
  }
  return "?";
}

Expr Expr::column(std::string name) {
  Expr e;
  e.kind = Kind::Column;
  e.name = std::move(name);
  return e;
}

Expr Expr::lit(Literal value) {
  Expr e;
  e.kind = Kind::Literal;
  e.literal = std::move(value);
  return e;
}

Expr Expr::call(std::string name, std::vector<Expr> args) {
  Expr e;
  e.kind = Kind::Call;
  e.name = std::move(name);
  e.args = std::move(args);
  return e;
}

Expr Expr::aggregate(AggFunc f, std::optional<std::string> column) {
  Expr e;
  e.kind = Kind::Aggregate;
  e.agg = f;
  if (column) e.args.push_back(Expr::column(std::move(*column)));
  return e;
}

Expr Expr::star() {
  Expr e;
  e.kind = Kind::Star;
  return e;
}

bool FromClause::operator==(const FromClause& other) const {
  if (kind != other.kind || name != other.name || args != other.args || alias != other.alias) return false;
  if (!subquery || !other.subquery) return !subquery && !other.subquery;
  return *subquery == *other.subquery;
}

Query parse(std::string_view text) { return Parser(text).parse_statement(); }

std::string to_sql(const Literal& literal) {
  if (const auto* i = std::get_if<std::int64_t>(&literal.value)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&literal.value)) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *d);
    std::string s(buf, ptr);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
  }
  return quote(std::get<std::string>(literal.value));
}

std::string to_sql(const Expr& expr) {
  switch (expr.kind) {
    case Expr::Kind::Column: return expr.name;
    case Expr::Kind::Literal: return to_sql(expr.literal);
    case Expr::Kind::Star: return "*";
    case Expr::Kind::Aggregate:
      return std::string(to_string(expr.agg)) + "(" + (expr.args.empty() ? "*" : to_sql(expr.args.front())) + ")";
    case Expr::Kind::Call: {
      std::string s = expr.name + "(";
      for (std::size_t i = 0; i < expr.args.size(); ++i) {
        if (i) s += ", ";
        s += to_sql(expr.args[i]);
      }
      return s + ")";
    }
  }
  return "?";
}

std::string to_sql(const Query& q) {
  std::string s = "SELECT ";
  for (std::size_t i = 0; i < q.select.size(); ++i) {
    if (i) s += ", ";
    s += to_sql(q.select[i].expr);
    if (q.select[i].alias) s += " AS " + *q.select[i].alias;
  }
  s += " FROM ";
  switch (q.from.kind) {
    case FromClause::Kind::Table: s += q.from.name; break;
    case FromClause::Kind::Function: s += to_sql(Expr::call(q.from.name, q.from.args)); break;
    case FromClause::Kind::Subquery: s += "(" + to_sql(*q.from.subquery) + ")"; break;
  }
  if (q.from.alias) s += " AS " + *q.from.alias;
  for (std::size_t i = 0; i < q.where.size(); ++i) {
    s += i ? " AND " : " WHERE ";
    s += q.where[i].column + " " + to_string(q.where[i].op) + " " + to_sql(q.where[i].value);
  }
  for (std::size_t i = 0; i < q.group_by.size(); ++i) {
    s += i ? ", " : " GROUP BY ";
    s += q.group_by[i];
  }
  for (std::size_t i = 0; i < q.order_by.size(); ++i) {
    s += i ? ", " : " ORDER BY ";
    s += to_sql(q.order_by[i].expr);
    if (q.order_by[i].descending) s += " DESC";
  }
  if (q.limit) s += " LIMIT " + std::to_string(*q.limit);
  return s;
}

}  // namespace tdq::sql
