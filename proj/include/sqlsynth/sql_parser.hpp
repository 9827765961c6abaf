#pragma once

// Hand-written lexer and recursive-descent parser for the SQLite SELECT
// subset the pipeline emits and checks: joins, subqueries, CTEs (incl.
// recursive), window functions, CASE, set operations. DML/DDL is rejected
// as out-of-dialect rather than a syntax error.

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sqlsynth/core.hpp"

namespace sqlsynth::sql {

// ---------------------------------------------------------------------------
// Tokens.
// ---------------------------------------------------------------------------

struct Token {
  enum class Type { identifier, quoted_identifier, number, string, punct, end };
  Type type = Type::end;
  std::string text;   // raw text (unquoted for identifiers/strings)
  std::string upper;  // uppercased text for keyword matching
  size_t pos = 0;     // byte offset in the input
};

class LexFail : public std::runtime_error {
 public:
  LexFail(size_t pos, const std::string& msg)
      : std::runtime_error(msg), pos(pos) {}
  size_t pos;
};

inline std::vector<Token> lex(std::string_view sql) {
  std::vector<Token> out;
  size_t i = 0;
  const size_t n = sql.size();
  auto upper_of = [](std::string_view s) {
    std::string u(s);
    for (char& c : u)
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return u;
  };
  while (i < n) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
      while (i < n && sql[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
      size_t close = sql.find("*/", i + 2);
      if (close == std::string_view::npos)
        throw LexFail(i, "unterminated block comment");
      i = close + 2;
      continue;
    }
    Token tok;
    tok.pos = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t b = i;
      while (i < n && (std::isalnum(static_cast<unsigned char>(sql[i])) ||
                       sql[i] == '_' || sql[i] == '$'))
        ++i;
      tok.type = Token::Type::identifier;
      tok.text = std::string(sql.substr(b, i - b));
      tok.upper = upper_of(tok.text);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < n &&
                std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      size_t b = i;
      if (c == '0' && i + 1 < n && (sql[i + 1] == 'x' || sql[i + 1] == 'X')) {
        i += 2;
        while (i < n && std::isxdigit(static_cast<unsigned char>(sql[i]))) ++i;
      } else {
        while (i < n && std::isdigit(static_cast<unsigned char>(sql[i]))) ++i;
        if (i < n && sql[i] == '.') {
          ++i;
          while (i < n && std::isdigit(static_cast<unsigned char>(sql[i]))) ++i;
        }
        if (i < n && (sql[i] == 'e' || sql[i] == 'E')) {
          ++i;
          if (i < n && (sql[i] == '+' || sql[i] == '-')) ++i;
          while (i < n && std::isdigit(static_cast<unsigned char>(sql[i]))) ++i;
        }
      }
      tok.type = Token::Type::number;
      tok.text = std::string(sql.substr(b, i - b));
      tok.upper = tok.text;
    } else if (c == '\'') {
      std::string s;
      ++i;
      for (;;) {
        if (i >= n) throw LexFail(tok.pos, "unterminated string literal");
        if (sql[i] == '\'') {
          if (i + 1 < n && sql[i + 1] == '\'') {
            s += '\'';
            i += 2;
          } else {
            ++i;
            break;
          }
        } else {
          s += sql[i++];
        }
      }
      tok.type = Token::Type::string;
      tok.text = std::move(s);
    } else if (c == '"' || c == '`' || c == '[') {
      const char close = c == '[' ? ']' : c;
      std::string s;
      ++i;
      for (;;) {
        if (i >= n) throw LexFail(tok.pos, "unterminated quoted identifier");
        if (sql[i] == close) {
          if (close != ']' && i + 1 < n && sql[i + 1] == close) {
            s += close;
            i += 2;
          } else {
            ++i;
            break;
          }
        } else {
          s += sql[i++];
        }
      }
      tok.type = Token::Type::quoted_identifier;
      tok.text = std::move(s);
      tok.upper = upper_of(tok.text);
    } else {
      static const char* two_char[] = {"<=", ">=", "<>", "!=", "==", "||"};
      tok.type = Token::Type::punct;
      tok.text = std::string(1, c);
      if (i + 1 < n) {
        std::string pair = std::string(sql.substr(i, 2));
        for (const char* op : two_char)
          if (pair == op) {
            tok.text = pair;
            break;
          }
      }
      static const std::string singles = "(),.;*+-/%=<>~&|";
      if (tok.text.size() == 1 && singles.find(c) == std::string::npos)
        throw LexFail(i, std::string("unexpected character '") + c + "'");
      i += tok.text.size();
      tok.upper = tok.text;
    }
    out.push_back(std::move(tok));
  }
  Token end;
  end.pos = n;
  out.push_back(end);
  return out;
}

// ---------------------------------------------------------------------------
// AST.
// ---------------------------------------------------------------------------

struct SelectStmt;

struct Expr {
  enum class Kind {
    literal,    // text = raw literal
    column,     // qualifier (optional) + name
    star,       // qualifier optional ("t.*" or "*")
    unary,      // text = op, children[0]
    binary,     // text = op, children[0], children[1]
    func,       // name = function, children = args
    case_when,  // children = [operand?] (when, then)* [else]; layout in text
    subquery,   // select; exists flag distinguishes EXISTS(...)
    in_list,    // children[0] = lhs, rest = list items
    in_select,  // children[0] = lhs, select = rhs
    between,    // children = lhs, lo, hi
    cast        // children[0], text = target type
  };
  Kind kind = Kind::literal;
  std::string text;
  std::string qualifier;
  std::string name;
  bool negated = false;
  bool distinct = false;
  bool star_arg = false;
  bool exists = false;
  bool has_operand = false;  // case_when with a leading operand
  bool has_else = false;
  bool has_over = false;  // func with a window clause
  std::vector<std::unique_ptr<Expr>> children;
  std::vector<std::unique_ptr<Expr>> window_exprs;  // partition/order/frame/filter
  std::unique_ptr<SelectStmt> select;

  Expr();
  ~Expr();
  Expr(Expr&&) noexcept;
  Expr& operator=(Expr&&) noexcept;
};

struct TableRef {
  std::string table;  // empty for subqueries
  std::string alias;
  std::unique_ptr<SelectStmt> subquery;
  bool explicit_join = false;  // introduced by a JOIN keyword
  bool comma_join = false;
  std::string join_kind;  // "inner", "left", "cross", "natural", ...
  std::unique_ptr<Expr> on;
  std::vector<std::string> using_cols;

  TableRef();
  ~TableRef();
  TableRef(TableRef&&) noexcept;
  TableRef& operator=(TableRef&&) noexcept;
};

struct SelectCore {
  bool distinct = false;
  std::vector<std::unique_ptr<Expr>> select_list;
  std::vector<TableRef> from;
  std::unique_ptr<Expr> where;
  std::vector<std::unique_ptr<Expr>> group_by;
  std::unique_ptr<Expr> having;
};

struct SelectStmt {
  struct Cte {
    std::string name;
    std::vector<std::string> columns;
    std::unique_ptr<SelectStmt> select;
  };
  bool recursive = false;
  std::vector<Cte> ctes;
  std::vector<SelectCore> cores;            // compound chain
  std::vector<std::string> compound_ops;    // size == cores.size() - 1
  std::vector<std::unique_ptr<Expr>> order_by;
  std::unique_ptr<Expr> limit;
  std::unique_ptr<Expr> offset;
};

inline Expr::Expr() = default;
inline Expr::~Expr() = default;
inline Expr::Expr(Expr&&) noexcept = default;
inline Expr& Expr::operator=(Expr&&) noexcept = default;
inline TableRef::TableRef() = default;
inline TableRef::~TableRef() = default;
inline TableRef::TableRef(TableRef&&) noexcept = default;
inline TableRef& TableRef::operator=(TableRef&&) noexcept = default;

// ---------------------------------------------------------------------------
// Parser.
// ---------------------------------------------------------------------------

class ParseFail : public std::runtime_error {
 public:
  ParseFail(size_t pos, const std::string& msg)
      : std::runtime_error(msg), pos(pos) {}
  size_t pos;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  std::unique_ptr<SelectStmt> parse_statement() {
    auto stmt = parse_select();
    accept_punct(";");
    if (!at_end()) fail("trailing input after statement");
    return stmt;
  }

 private:
  // -- token plumbing -------------------------------------------------------

  const Token& peek(size_t ahead = 0) const {
    size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  bool at_end() const { return peek().type == Token::Type::end; }
  const Token& advance() { return toks_[pos_++]; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseFail(peek().pos, msg);
  }

  bool at_keyword(std::string_view kw) const {
    return peek().type == Token::Type::identifier && peek().upper == kw;
  }
  bool accept_keyword(std::string_view kw) {
    if (!at_keyword(kw)) return false;
    advance();
    return true;
  }
  void expect_keyword(std::string_view kw) {
    if (!accept_keyword(kw)) fail("expected " + std::string(kw));
  }
  bool at_punct(std::string_view p) const {
    return peek().type == Token::Type::punct && peek().text == p;
  }
  bool accept_punct(std::string_view p) {
    if (!at_punct(p)) return false;
    advance();
    return true;
  }
  void expect_punct(std::string_view p) {
    if (!accept_punct(p)) fail("expected '" + std::string(p) + "'");
  }

  bool at_identifier() const {
    return peek().type == Token::Type::identifier ||
           peek().type == Token::Type::quoted_identifier;
  }

  std::string expect_identifier(const char* what) {
    if (!at_identifier()) fail(std::string("expected ") + what);
    return advance().text;
  }

  // Keywords that terminate an implicit alias position.
  static bool is_clause_keyword(const std::string& upper) {
    static const char* kws[] = {
        "WHERE",  "GROUP",  "HAVING", "ORDER",   "LIMIT",  "OFFSET", "JOIN",
        "INNER",  "LEFT",   "RIGHT",  "FULL",    "CROSS",  "NATURAL", "ON",
        "USING",  "UNION",  "INTERSECT", "EXCEPT", "AS",   "AND",    "OR",
        "NOT",    "WINDOW", "WHEN",   "THEN",    "ELSE",   "END",    "FROM",
        "SELECT", "WITH",   "DESC",   "ASC",     "COLLATE", "NULLS", "IN",
        "IS",     "BETWEEN", "LIKE",  "GLOB",    "ESCAPE", "CASE",   "EXISTS",
        "DISTINCT", "ALL",  "BY",     "OVER",    "FILTER", "VALUES", "RETURNING",
    };
    for (const char* kw : kws)
      if (upper == kw) return true;
    return false;
  }

  // -- statements -----------------------------------------------------------

  std::unique_ptr<SelectStmt> parse_select() {
    auto stmt = std::make_unique<SelectStmt>();
    if (accept_keyword("WITH")) {
      stmt->recursive = accept_keyword("RECURSIVE");
      do {
        SelectStmt::Cte cte;
        cte.name = expect_identifier("CTE name");
        if (accept_punct("(")) {
          do {
            cte.columns.push_back(expect_identifier("CTE column name"));
          } while (accept_punct(","));
          expect_punct(")");
        }
        expect_keyword("AS");
        expect_punct("(");
        cte.select = parse_select();
        expect_punct(")");
        stmt->ctes.push_back(std::move(cte));
      } while (accept_punct(","));
    }

    stmt->cores.push_back(parse_core());
    for (;;) {
      std::string op;
      if (accept_keyword("UNION"))
        op = accept_keyword("ALL") ? "union all" : "union";
      else if (accept_keyword("INTERSECT"))
        op = "intersect";
      else if (accept_keyword("EXCEPT"))
        op = "except";
      else
        break;
      stmt->compound_ops.push_back(op);
      stmt->cores.push_back(parse_core());
    }

    if (accept_keyword("ORDER")) {
      expect_keyword("BY");
      do {
        stmt->order_by.push_back(parse_ordering_term());
      } while (accept_punct(","));
    }
    if (accept_keyword("LIMIT")) {
      stmt->limit = parse_expr();
      if (accept_keyword("OFFSET"))
        stmt->offset = parse_expr();
      else if (accept_punct(","))  // LIMIT o, l
        stmt->offset = std::exchange(stmt->limit, parse_expr());
    }
    return stmt;
  }

  SelectCore parse_core() {
    if (at_keyword("VALUES"))
      fail("VALUES clause is outside the supported dialect");
    SelectCore core;
    expect_keyword("SELECT");
    if (accept_keyword("DISTINCT"))
      core.distinct = true;
    else
      accept_keyword("ALL");
    do {
      core.select_list.push_back(parse_result_column());
    } while (accept_punct(","));
    if (accept_keyword("FROM")) parse_from(core.from);
    if (accept_keyword("WHERE")) core.where = parse_expr();
    if (accept_keyword("GROUP")) {
      expect_keyword("BY");
      do {
        core.group_by.push_back(parse_expr());
      } while (accept_punct(","));
    }
    if (accept_keyword("HAVING")) core.having = parse_expr();
    return core;
  }

  std::unique_ptr<Expr> parse_result_column() {
    if (at_punct("*")) {
      advance();
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::star;
      return e;
    }
    // "name.*"
    if (at_identifier() && peek(1).type == Token::Type::punct &&
        peek(1).text == "." && peek(2).type == Token::Type::punct &&
        peek(2).text == "*") {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::star;
      e->qualifier = advance().text;
      advance();  // .
      advance();  // *
      return e;
    }
    auto e = parse_expr();
    if (accept_keyword("AS")) {
      expect_identifier("column alias");
    } else if (at_identifier() && !is_clause_keyword(peek().upper)) {
      advance();  // bare alias
    }
    return e;
  }

  void parse_from(std::vector<TableRef>& refs) {
    refs.push_back(parse_table_ref());
    for (;;) {
      TableRef ref;
      if (accept_punct(",")) {
        ref.comma_join = true;
      } else {
        bool natural = accept_keyword("NATURAL");
        std::string kind;
        if (accept_keyword("LEFT")) {
          accept_keyword("OUTER");
          kind = "left";
        } else if (accept_keyword("RIGHT")) {
          accept_keyword("OUTER");
          kind = "right";
        } else if (accept_keyword("FULL")) {
          accept_keyword("OUTER");
          kind = "full";
        } else if (accept_keyword("CROSS")) {
          kind = "cross";
        } else if (accept_keyword("INNER")) {
          kind = "inner";
        }
        if (!at_keyword("JOIN")) {
          if (!kind.empty() || natural) fail("expected JOIN");
          break;
        }
        advance();  // JOIN
        ref.explicit_join = true;
        ref.join_kind = kind.empty() ? "inner" : kind;
        if (natural) ref.join_kind = "natural " + ref.join_kind;
      }
      TableRef parsed = parse_table_ref();
      parsed.explicit_join = ref.explicit_join;
      parsed.comma_join = ref.comma_join;
      parsed.join_kind = ref.join_kind;
      if (parsed.explicit_join) {
        if (accept_keyword("ON")) {
          parsed.on = parse_expr();
        } else if (accept_keyword("USING")) {
          expect_punct("(");
          do {
            parsed.using_cols.push_back(expect_identifier("USING column"));
          } while (accept_punct(","));
          expect_punct(")");
        }
      }
      refs.push_back(std::move(parsed));
    }
  }

  TableRef parse_table_ref() {
    TableRef ref;
    if (accept_punct("(")) {
      if (at_keyword("SELECT") || at_keyword("WITH")) {
        ref.subquery = parse_select();
        expect_punct(")");
      } else {
        fail("expected subquery after '(' in FROM");
      }
    } else {
      ref.table = expect_identifier("table name");
      // schema-qualified name: keep the last component
      if (accept_punct(".")) ref.table = expect_identifier("table name");
    }
    if (accept_keyword("AS"))
      ref.alias = expect_identifier("table alias");
    else if (at_identifier() && !is_clause_keyword(peek().upper))
      ref.alias = advance().text;
    return ref;
  }

  std::unique_ptr<Expr> parse_ordering_term() {
    auto e = parse_expr();
    if (accept_keyword("COLLATE")) expect_identifier("collation name");
    if (!accept_keyword("ASC")) accept_keyword("DESC");
    if (accept_keyword("NULLS")) {
      if (!accept_keyword("FIRST")) expect_keyword("LAST");
    }
    return e;
  }

  // -- expressions ----------------------------------------------------------

  std::unique_ptr<Expr> parse_expr() { return parse_or(); }

  std::unique_ptr<Expr> make_binary(const char* op, std::unique_ptr<Expr> l,
                                    std::unique_ptr<Expr> r) {
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::binary;
    e->text = op;
    e->children.push_back(std::move(l));
    e->children.push_back(std::move(r));
    return e;
  }

  std::unique_ptr<Expr> parse_or() {
    auto l = parse_and();
    while (accept_keyword("OR")) l = make_binary("OR", std::move(l), parse_and());
    return l;
  }

  std::unique_ptr<Expr> parse_and() {
    auto l = parse_not();
    while (accept_keyword("AND"))
      l = make_binary("AND", std::move(l), parse_not());
    return l;
  }

  std::unique_ptr<Expr> parse_not() {
    if (accept_keyword("NOT")) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::unary;
      e->text = "NOT";
      e->children.push_back(parse_not());
      return e;
    }
    return parse_predicate();
  }

  std::unique_ptr<Expr> parse_predicate() {
    auto l = parse_additive();
    for (;;) {
      if (peek().type == Token::Type::punct) {
        const std::string& op = peek().text;
        if (op == "=" || op == "==" || op == "!=" || op == "<>" || op == "<" ||
            op == "<=" || op == ">" || op == ">=") {
          advance();
          l = make_binary(op.c_str(), std::move(l), parse_additive());
          continue;
        }
      }
      if (accept_keyword("IS")) {
        bool neg = accept_keyword("NOT");
        std::unique_ptr<Expr> rhs;
        if (accept_keyword("NULL")) {
          rhs = std::make_unique<Expr>();
          rhs->kind = Expr::Kind::literal;
          rhs->text = "NULL";
        } else {
          rhs = parse_additive();
        }
        l = make_binary(neg ? "IS NOT" : "IS", std::move(l), std::move(rhs));
        continue;
      }
      if (accept_keyword("ISNULL")) {
        l = make_binary("IS", std::move(l), make_literal("NULL"));
        continue;
      }
      if (accept_keyword("NOTNULL")) {
        l = make_binary("IS NOT", std::move(l), make_literal("NULL"));
        continue;
      }
      bool neg = false;
      size_t save = pos_;
      if (accept_keyword("NOT")) neg = true;
      if (accept_keyword("BETWEEN")) {
        auto e = std::make_unique<Expr>();
        e->kind = Expr::Kind::between;
        e->negated = neg;
        e->children.push_back(std::move(l));
        e->children.push_back(parse_additive());
        expect_keyword("AND");
        e->children.push_back(parse_additive());
        l = std::move(e);
        continue;
      }
      if (accept_keyword("IN")) {
        expect_punct("(");
        auto e = std::make_unique<Expr>();
        e->negated = neg;
        e->children.push_back(std::move(l));
        if (at_keyword("SELECT") || at_keyword("WITH")) {
          e->kind = Expr::Kind::in_select;
          e->select = parse_select();
        } else {
          e->kind = Expr::Kind::in_list;
          if (!at_punct(")")) {
            do {
              e->children.push_back(parse_expr());
            } while (accept_punct(","));
          }
        }
        expect_punct(")");
        l = std::move(e);
        continue;
      }
      if (accept_keyword("LIKE") || accept_keyword("GLOB") ||
          accept_keyword("REGEXP") || accept_keyword("MATCH")) {
        const std::string op = toks_[pos_ - 1].upper;
        auto rhs = parse_additive();
        l = make_binary((neg ? "NOT " + op : op).c_str(), std::move(l),
                        std::move(rhs));
        if (accept_keyword("ESCAPE")) parse_additive();
        continue;
      }
      if (neg) {
        pos_ = save;  // NOT belonged to something else
        break;
      }
      break;
    }
    return l;
  }

  std::unique_ptr<Expr> make_literal(const char* text) {
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::literal;
    e->text = text;
    return e;
  }

  std::unique_ptr<Expr> parse_additive() {
    auto l = parse_multiplicative();
    for (;;) {
      if (at_punct("+") || at_punct("-") || at_punct("||")) {
        std::string op = advance().text;
        l = make_binary(op.c_str(), std::move(l), parse_multiplicative());
      } else {
        break;
      }
    }
    return l;
  }

  std::unique_ptr<Expr> parse_multiplicative() {
    auto l = parse_unary();
    for (;;) {
      if (at_punct("*") || at_punct("/") || at_punct("%")) {
        std::string op = advance().text;
        l = make_binary(op.c_str(), std::move(l), parse_unary());
      } else {
        break;
      }
    }
    return l;
  }

  std::unique_ptr<Expr> parse_unary() {
    if (at_punct("-") || at_punct("+") || at_punct("~")) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::unary;
      e->text = advance().text;
      e->children.push_back(parse_unary());
      return e;
    }
    return parse_primary();
  }

  std::unique_ptr<Expr> parse_primary() {
    const Token& tok = peek();
    if (tok.type == Token::Type::number || tok.type == Token::Type::string) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::literal;
      e->text = advance().text;
      return e;
    }
    if (accept_punct("(")) {
      if (at_keyword("SELECT") || at_keyword("WITH")) {
        auto e = std::make_unique<Expr>();
        e->kind = Expr::Kind::subquery;
        e->select = parse_select();
        expect_punct(")");
        return e;
      }
      auto e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (at_keyword("NULL") || at_keyword("CURRENT_DATE") ||
        at_keyword("CURRENT_TIME") || at_keyword("CURRENT_TIMESTAMP") ||
        at_keyword("TRUE") || at_keyword("FALSE")) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::literal;
      e->text = advance().upper;
      return e;
    }
    if (accept_keyword("CAST")) {
      expect_punct("(");
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::cast;
      e->children.push_back(parse_expr());
      expect_keyword("AS");
      e->text = parse_type_name();
      expect_punct(")");
      return e;
    }
    if (accept_keyword("EXISTS")) {
      expect_punct("(");
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::subquery;
      e->exists = true;
      e->select = parse_select();
      expect_punct(")");
      return e;
    }
    if (accept_keyword("CASE")) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::case_when;
      if (!at_keyword("WHEN")) {
        e->has_operand = true;
        e->children.push_back(parse_expr());
      }
      while (accept_keyword("WHEN")) {
        e->children.push_back(parse_expr());
        expect_keyword("THEN");
        e->children.push_back(parse_expr());
      }
      if (accept_keyword("ELSE")) {
        e->has_else = true;
        e->children.push_back(parse_expr());
      }
      expect_keyword("END");
      return e;
    }
    if (at_identifier()) {
      // function call?
      if (peek().type == Token::Type::identifier && peek(1).type ==
              Token::Type::punct && peek(1).text == "(") {
        return parse_function_call();
      }
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::column;
      std::string first = advance().text;
      if (accept_punct(".")) {
        if (at_punct("*")) {
          advance();
          e->kind = Expr::Kind::star;
          e->qualifier = first;
          return e;
        }
        std::string second = expect_identifier("column name");
        if (accept_punct(".")) {  // db.table.column: drop the db part
          e->qualifier = second;
          e->name = expect_identifier("column name");
        } else {
          e->qualifier = first;
          e->name = second;
        }
      } else {
        e->name = first;
      }
      return e;
    }
    fail("expected expression");
  }

  std::string parse_type_name() {
    std::string name = expect_identifier("type name");
    while (at_identifier()) name += " " + advance().text;
    if (accept_punct("(")) {
      name += "(";
      name += expect_number();
      if (accept_punct(",")) name += "," + expect_number();
      expect_punct(")");
      name += ")";
    }
    return name;
  }

  std::string expect_number() {
    if (peek().type != Token::Type::number) fail("expected number");
    return advance().text;
  }

  std::unique_ptr<Expr> parse_function_call() {
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::func;
    e->name = advance().text;
    expect_punct("(");
    if (accept_punct("*")) {
      e->star_arg = true;
    } else if (!at_punct(")")) {
      e->distinct = accept_keyword("DISTINCT");
      do {
        e->children.push_back(parse_expr());
      } while (accept_punct(","));
    }
    expect_punct(")");
    if (accept_keyword("FILTER")) {
      expect_punct("(");
      expect_keyword("WHERE");
      e->window_exprs.push_back(parse_expr());
      expect_punct(")");
    }
    if (accept_keyword("OVER")) {
      e->has_over = true;
      if (accept_punct("(")) {
        if (accept_keyword("PARTITION")) {
          expect_keyword("BY");
          do {
            e->window_exprs.push_back(parse_expr());
          } while (accept_punct(","));
        }
        if (accept_keyword("ORDER")) {
          expect_keyword("BY");
          do {
            e->window_exprs.push_back(parse_ordering_term());
          } while (accept_punct(","));
        }
        if (at_keyword("ROWS") || at_keyword("RANGE") || at_keyword("GROUPS"))
          parse_frame_spec(*e);
        expect_punct(")");
      } else {
        expect_identifier("window name");
      }
    }
    return e;
  }

  void parse_frame_spec(Expr& e) {
    advance();  // ROWS | RANGE | GROUPS
    auto bound = [&] {
      if (accept_keyword("UNBOUNDED")) {
        if (!accept_keyword("PRECEDING")) expect_keyword("FOLLOWING");
        return;
      }
      if (accept_keyword("CURRENT")) {
        expect_keyword("ROW");
        return;
      }
      e.window_exprs.push_back(parse_expr());
      if (!accept_keyword("PRECEDING")) expect_keyword("FOLLOWING");
    };
    if (accept_keyword("BETWEEN")) {
      bound();
      expect_keyword("AND");
      bound();
    } else {
      bound();
    }
    if (accept_keyword("EXCLUDE")) {
      if (accept_keyword("NO")) {
        expect_keyword("OTHERS");
      } else if (accept_keyword("CURRENT")) {
        expect_keyword("ROW");
      } else if (!accept_keyword("GROUP")) {
        expect_keyword("TIES");
      }
    }
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

inline bool starts_out_of_dialect(const std::vector<Token>& toks) {
  if (toks.empty() || toks[0].type != Token::Type::identifier) return false;
  static const char* dml[] = {"INSERT", "UPDATE",  "DELETE", "CREATE", "DROP",
                              "ALTER",  "PRAGMA",  "ATTACH", "DETACH", "VACUUM",
                              "REPLACE", "BEGIN",  "COMMIT", "ROLLBACK",
                              "EXPLAIN", "VALUES", "ANALYZE", "REINDEX"};
  for (const char* kw : dml)
    if (toks[0].upper == kw) return true;
  return false;
}

inline Result<std::unique_ptr<SelectStmt>> parse_select_statement(
    std::string_view sql_text) {
  if (trim(sql_text).empty())
    return make_error(Errc::parse_error, "empty statement");
  std::vector<Token> toks;
  try {
    toks = lex(sql_text);
  } catch (const LexFail& e) {
    return make_error(Errc::parse_error, std::string(e.what()) + " at offset " +
                                             std::to_string(e.pos));
  }
  if (starts_out_of_dialect(toks))
    return make_error(Errc::unsupported_dialect,
                      toks[0].upper + " statements are outside the supported "
                                      "SELECT dialect");
  try {
    Parser parser(std::move(toks));
    return parser.parse_statement();
  } catch (const ParseFail& e) {
    return make_error(Errc::parse_error, std::string(e.what()) + " at offset " +
                                             std::to_string(e.pos));
  }
}

}  // namespace sqlsynth::sql
