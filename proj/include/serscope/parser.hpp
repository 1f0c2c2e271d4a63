#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "serscope/model.hpp"

namespace serscope {

class ParseError : public std::runtime_error {
 public:
  ParseError(SourceSpan span, const std::string& msg)
      : std::runtime_error(to_string(span) + ": " + msg), span_(std::move(span)) {}
  const SourceSpan& span() const { return span_; }

 private:
  SourceSpan span_;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Diagnostic> d)
      : std::runtime_error(render(d)), diags_(std::move(d)) {}
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  static std::string render(const std::vector<Diagnostic>& d) {
    std::string s;
    for (auto& x : d) s += to_string(x.span) + ": " + x.message + "\n";
    return s;
  }
  std::vector<Diagnostic> diags_;
};

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

namespace lex {

enum class Tok { Ident, Int, Sym, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int64_t value = 0;
  SourceSpan span;
};

inline bool is_keyword(const std::string& s) {
  static const char* kws[] = {"SELECT", "UPDATE", "INSERT", "DELETE", "IF",   "ITERATE", "SKIP", "AS",
                              "WHERE",  "SET",    "INTO",   "VALUES", "FROM", "MIN",     "MAX",  "AND",
                              "OR",     "NOT",    "TRUE",   "FALSE",  "THIS", "ITER",    "SIZE", "PROJ",
                              "ANY",    "IT",     "TABLE",  "PK"};
  auto u = upper(s);
  for (auto k : kws)
    if (u == k) return true;
  return false;
}

inline std::vector<Token> tokenize(const std::string& text, const std::string& file) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  auto adv = [&](size_t n) {
    for (size_t k = 0; k < n && i < text.size(); ++k, ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      adv(1);
      continue;
    }
    if (c == '#' || (c == '/' && i + 1 < text.size() && text[i + 1] == '/')) {
      while (i < text.size() && text[i] != '\n') adv(1);
      continue;
    }
    Token t;
    t.span = {file, line, col, 1};
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      t.kind = Tok::Ident;
      t.text = text.substr(i, j - i);
      t.span.length = static_cast<int>(j - i);
      adv(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      t.kind = Tok::Int;
      t.text = text.substr(i, j - i);
      try {
        t.value = std::stoll(t.text);
      } catch (const std::exception&) {
        throw ParseError(t.span, "integer literal out of range");
      }
      t.span.length = static_cast<int>(j - i);
      adv(j - i);
    } else {
      static const char* two[] = {"<=", ">=", "!="};
      t.kind = Tok::Sym;
      bool matched = false;
      for (auto s : two) {
        if (text.compare(i, 2, s) == 0) {
          t.text = s;
          t.span.length = 2;
          adv(2);
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (std::string("(){},;.@+-*/<=>").find(c) == std::string::npos)
          throw ParseError(t.span, std::string("unexpected character '") + c + "'");
        t.text = std::string(1, c);
        adv(1);
      }
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Tok::End;
  end.span = {file, line, col, 0};
  out.push_back(end);
  return out;
}

}  // namespace lex

class Parser {
 public:
  Parser(const std::string& text, const std::string& file) : toks_(lex::tokenize(text, file)) {}

  Schema schema() {
    Schema s;
    while (!at_end()) {
      if (peek_sym(";")) {
        next();
        continue;
      }
      TableDef t;
      t.span = cur().span;
      expect_kw("TABLE");
      t.name = ident("table name");
      expect_sym("(");
      t.fields.push_back(ident("field name"));
      while (accept_sym(",")) t.fields.push_back(ident("field name"));
      expect_sym(")");
      expect_kw("PK");
      expect_sym("(");
      t.primary_key.push_back(ident("key field"));
      while (accept_sym(",")) t.primary_key.push_back(ident("key field"));
      expect_sym(")");
      s.tables.push_back(std::move(t));
    }
    return s;
  }

  Program program(const Schema& schema) {
    schema_ = &schema;
    Program p;
    while (!at_end()) {
      if (accept_sym(";")) continue;
      p.transactions.push_back(transaction());
    }
    return p;
  }

 private:
  // --------------------------------------------------------------- helpers
  const lex::Token& cur() const { return toks_[pos_]; }
  const lex::Token& la(size_t k) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  bool at_end() const { return cur().kind == lex::Tok::End; }
  const lex::Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const std::string& msg) const {
    std::string got = cur().kind == lex::Tok::End ? "end of input" : "'" + cur().text + "'";
    throw ParseError(cur().span, msg + ", got " + got);
  }
  bool peek_kw(const char* kw, size_t k = 0) const {
    return la(k).kind == lex::Tok::Ident && upper(la(k).text) == kw;
  }
  bool peek_sym(const char* s, size_t k = 0) const { return la(k).kind == lex::Tok::Sym && la(k).text == s; }
  bool accept_kw(const char* kw) {
    if (!peek_kw(kw)) return false;
    next();
    return true;
  }
  bool accept_sym(const char* s) {
    if (!peek_sym(s)) return false;
    next();
    return true;
  }
  void expect_kw(const char* kw) {
    if (!accept_kw(kw)) fail(std::string("expected ") + kw);
  }
  void expect_sym(const char* s) {
    if (!accept_sym(s)) fail(std::string("expected '") + s + "'");
  }
  std::string ident(const char* what) {
    if (cur().kind != lex::Tok::Ident || lex::is_keyword(cur().text)) fail(std::string("expected ") + what);
    return next().text;
  }

  // --------------------------------------------------------------- transactions
  Transaction transaction() {
    Transaction t;
    t.span = cur().span;
    t.name = ident("transaction name");
    expect_sym("(");
    if (!peek_sym(")")) {
      t.params.push_back(ident("parameter"));
      while (accept_sym(",")) t.params.push_back(ident("parameter"));
    }
    expect_sym(")");
    params_ = t.params;
    any_counter_ = 0;
    t.body = block();
    return t;
  }

  std::vector<Command> block() {
    expect_sym("{");
    std::vector<Command> body;
    while (!peek_sym("}")) {
      if (at_end()) fail("expected '}'");
      if (accept_sym(";")) continue;
      body.push_back(statement());
    }
    expect_sym("}");
    return body;
  }

  Command statement() {
    Command c;
    c.span = cur().span;
    if (accept_kw("SKIP")) {
      c.kind = CmdKind::Skip;
    } else if (accept_kw("IF")) {
      c.kind = CmdKind::If;
      expect_sym("(");
      c.cond = bexpr();
      expect_sym(")");
      ++depth_if_;
      c.body = block();
      --depth_if_;
    } else if (accept_kw("ITERATE")) {
      c.kind = CmdKind::Iterate;
      expect_sym("(");
      c.cond = expr();
      expect_sym(")");
      c.body = block();
    } else {
      c.kind = CmdKind::Query;
      c.query = query();
    }
    return c;
  }

  // --------------------------------------------------------------- queries
  std::string explicit_table() {
    if (accept_sym("@")) return ident("table name");
    return {};
  }

  // field or table.field; fills table when qualified
  std::string field_ref(std::string& table) {
    std::string a = ident("field name");
    if (accept_sym(".")) {
      std::string f = ident("field name");
      if (!table.empty() && table != a) fail("field qualified with a different table");
      table = a;
      return f;
    }
    return a;
  }

  std::string resolve_table(std::string table, const std::vector<std::string>& fields, const SourceSpan& at) {
    if (!table.empty()) {
      if (!schema_->find(table)) throw ParseError(at, "unknown table '" + table + "'");
      return table;
    }
    if (schema_->tables.size() == 1) return schema_->tables[0].name;
    std::vector<std::string> cands;
    for (auto& t : schema_->tables) {
      bool ok = !fields.empty();
      for (auto& f : fields) ok = ok && t.field_index(f) >= 0;
      if (ok) cands.push_back(t.name);
    }
    if (cands.size() != 1) throw ParseError(at, "cannot determine the table of this query; use @table");
    return cands[0];
  }

  Query query() {
    Query q;
    q.span = cur().span;
    if (accept_kw("SELECT")) {
      std::string table = explicit_table();
      if (peek_kw("MIN") || peek_kw("MAX")) {
        q.kind = QueryKind::SelectAgg;
        q.agg = upper(next().text) == "MIN" ? Agg::Min : Agg::Max;
        expect_sym("(");
        q.field = field_ref(table);
        expect_sym(")");
      } else {
        q.kind = QueryKind::Select;
        q.field = field_ref(table);
      }
      expect_kw("AS");
      q.var = ident("variable name");
      expect_kw("WHERE");
      where_table_ = table;
      q.where = bexpr();
      table = where_table_;
      where_table_.clear();
      q.table = resolve_table(table, {q.field}, q.span);
    } else if (accept_kw("UPDATE")) {
      q.kind = QueryKind::Update;
      std::string table = explicit_table();
      if (table.empty() && !peek_kw("SET")) table = ident("table name");
      expect_kw("SET");
      q.field = field_ref(table);
      expect_sym("=");
      q.value = expr();
      expect_kw("WHERE");
      where_table_ = table;
      q.where = bexpr();
      table = where_table_;
      where_table_.clear();
      q.table = resolve_table(table, {q.field}, q.span);
    } else if (accept_kw("DELETE")) {
      q.kind = QueryKind::Delete;
      accept_kw("FROM");
      std::string table = explicit_table();
      if (table.empty() && !peek_kw("WHERE")) table = ident("table name");
      expect_kw("WHERE");
      where_table_ = table;
      q.where = bexpr();
      table = where_table_;
      where_table_.clear();
      auto fs = where_fields(q.where);
      fs.erase(kAlive);
      q.table = resolve_table(table, std::vector<std::string>(fs.begin(), fs.end()), q.span);
    } else if (accept_kw("INSERT")) {
      q.kind = QueryKind::Insert;
      expect_kw("INTO");
      std::string table = explicit_table();
      if (table.empty()) table = ident("table name");
      std::vector<std::string> fields;
      expect_sym("(");
      fields.push_back(ident("field name"));
      while (accept_sym(",")) fields.push_back(ident("field name"));
      expect_sym(")");
      expect_kw("VALUES");
      expect_sym("(");
      std::vector<ExprP> vals;
      vals.push_back(expr());
      while (accept_sym(",")) vals.push_back(expr());
      expect_sym(")");
      if (vals.size() != fields.size()) throw ParseError(q.span, "INSERT field and value counts differ");
      for (size_t i = 0; i < fields.size(); ++i) q.values.emplace_back(fields[i], vals[i]);
      q.table = resolve_table(table, fields, q.span);
    } else {
      fail("expected a statement");
    }
    return q;
  }

  // --------------------------------------------------------------- boolean expressions
  ExprP bexpr() { return bor(); }

  ExprP bor() {
    auto l = band();
    while (peek_kw("OR")) {
      auto sp = next().span;
      auto e = std::const_pointer_cast<Expr>(mk::bin(Op::Or, l, band()));
      e->span = sp;
      l = e;
    }
    return l;
  }
  ExprP band() {
    auto l = bnot();
    while (peek_kw("AND")) {
      auto sp = next().span;
      auto e = std::const_pointer_cast<Expr>(mk::bin(Op::And, l, bnot()));
      e->span = sp;
      l = e;
    }
    return l;
  }
  ExprP bnot() {
    if (peek_kw("NOT")) {
      auto sp = next().span;
      auto e = std::const_pointer_cast<Expr>(mk::neg(bnot()));
      e->span = sp;
      return e;
    }
    return batom();
  }
  static bool is_cmp_sym(const lex::Token& t) {
    return t.kind == lex::Tok::Sym &&
           (t.text == "<" || t.text == "<=" || t.text == "=" || t.text == ">" || t.text == ">=");
  }
  static bool is_arith_sym(const lex::Token& t) {
    return t.kind == lex::Tok::Sym && (t.text == "+" || t.text == "-" || t.text == "*" || t.text == "/");
  }
  ExprP batom() {
    auto sp = cur().span;
    if (accept_kw("TRUE")) return spanned(mk::truth(true), sp);
    if (accept_kw("FALSE")) return spanned(mk::truth(false), sp);
    if (peek_sym("(")) {
      size_t save = pos_;
      try {
        next();
        auto inner = bexpr();
        expect_sym(")");
        if (!is_cmp_sym(cur()) && !is_arith_sym(cur())) return inner;
      } catch (const ParseError&) {
      }
      pos_ = save;
    }
    auto l = expr();
    if (!is_cmp_sym(cur())) fail("expected a comparison operator");
    auto t = next();
    Op op = t.text == "<" ? Op::Lt : t.text == "<=" ? Op::Le : t.text == "=" ? Op::Eq : t.text == ">" ? Op::Gt : Op::Ge;
    auto r = expr();
    return spanned(mk::bin(op, l, r), t.span);
  }

  // --------------------------------------------------------------- arithmetic
  static ExprP spanned(ExprP e, const SourceSpan& sp) {
    auto m = std::const_pointer_cast<Expr>(e);
    m->span = sp;
    return m;
  }

  ExprP expr() {
    auto l = term();
    while (peek_sym("+") || peek_sym("-")) {
      auto t = next();
      l = spanned(mk::bin(t.text == "+" ? Op::Add : Op::Sub, l, term()), t.span);
    }
    return l;
  }
  ExprP term() {
    auto l = unary();
    while (peek_sym("*") || peek_sym("/")) {
      auto t = next();
      l = spanned(mk::bin(t.text == "*" ? Op::Mul : Op::Div, l, unary()), t.span);
    }
    return l;
  }
  ExprP unary() {
    if (peek_sym("-")) {
      auto sp = next().span;
      if (cur().kind == lex::Tok::Int) {
        auto v = next().value;
        return spanned(mk::num(-v), sp);
      }
      return spanned(mk::node(Op::Neg, {unary()}), sp);
    }
    return primary();
  }

  ExprP primary() {
    auto sp = cur().span;
    if (cur().kind == lex::Tok::Int) return spanned(mk::num(next().value), sp);
    if (accept_sym("(")) {
      auto e = expr();
      expect_sym(")");
      return e;
    }
    if (accept_kw("ITER")) return spanned(mk::iter(), sp);
    if (accept_kw("IT")) return spanned(mk::it(), sp);
    if (accept_kw("SIZE")) {
      expect_sym("(");
      auto v = ident("variable");
      expect_sym(")");
      return spanned(mk::size(v), sp);
    }
    if (accept_kw("PROJ")) {
      expect_sym("(");
      std::string dummy;
      auto f = field_ref(dummy);
      expect_sym(",");
      auto v = ident("variable");
      expect_sym(",");
      auto idx = expr();
      expect_sym(")");
      return spanned(mk::proj(f, v, idx), sp);
    }
    if (accept_kw("ANY")) {
      expect_sym("{");
      int id = any_counter_++;
      auto c = bexpr();
      expect_sym("}");
      return spanned(mk::any(c, id), sp);
    }
    if (accept_kw("THIS")) {
      expect_sym(".");
      auto f = ident("field name");
      return spanned(mk::self(f), sp);
    }
    if (cur().kind == lex::Tok::Ident && !lex::is_keyword(cur().text)) {
      // table.field inside WHERE means this.field
      if (peek_sym(".", 1) && schema_ && schema_->find(cur().text)) {
        auto t = next().text;
        next();
        auto f = ident("field name");
        if (!where_table_.empty() && where_table_ != t) throw ParseError(sp, "field of another table in WHERE");
        where_table_ = t;
        return spanned(mk::self(f), sp);
      }
      return spanned(mk::arg(next().text), sp);
    }
    fail("expected an expression");
  }

  std::vector<lex::Token> toks_;
  size_t pos_ = 0;
  const Schema* schema_ = nullptr;
  std::vector<std::string> params_;
  std::string where_table_;
  int any_counter_ = 0;
  int depth_if_ = 0;
};

inline Schema parse_schema(const std::string& text, const std::string& file = "") {
  Parser p(text, file);
  Schema s = p.schema();
  auto d = validate_schema(s);
  if (!d.empty()) throw ValidationError(d);
  return s;
}

inline Program parse_program(const std::string& text, const Schema& schema, const std::string& file = "") {
  Parser p(text, file);
  Program prog = p.program(schema);
  auto d = validate_program(schema, prog);
  if (!d.empty()) throw ValidationError(d);
  return prog;
}

// Parse without validation, for tools that report diagnostics themselves.
inline Program parse_program_unchecked(const std::string& text, const Schema& schema, const std::string& file = "") {
  Parser p(text, file);
  return p.program(schema);
}

// ---------------------------------------------------------------- pretty printing

namespace detail {

inline int prec(Op op) {
  switch (op) {
    case Op::Or: return 1;
    case Op::And: return 2;
    case Op::Not: return 3;
    case Op::Lt: case Op::Le: case Op::Eq: case Op::Gt: case Op::Ge: return 4;
    case Op::Add: case Op::Sub: return 5;
    case Op::Mul: case Op::Div: return 6;
    case Op::Neg: return 7;
    case Op::Const: return 7;  // negative literals print with a leading minus
    default: return 8;
  }
}

inline const char* sym(Op op) {
  switch (op) {
    case Op::Or: return " OR ";
    case Op::And: return " AND ";
    case Op::Lt: return " < ";
    case Op::Le: return " <= ";
    case Op::Eq: return " = ";
    case Op::Gt: return " > ";
    case Op::Ge: return " >= ";
    case Op::Add: return " + ";
    case Op::Sub: return " - ";
    case Op::Mul: return " * ";
    case Op::Div: return " / ";
    default: return "?";
  }
}

inline void print_expr(std::ostream& os, const ExprP& e, int min_prec);

inline void print_child(std::ostream& os, const ExprP& e, int min_prec) {
  bool paren = prec(e->op) < min_prec;
  if (paren) os << "(";
  print_expr(os, e, paren ? 0 : min_prec);
  if (paren) os << ")";
}

inline void print_expr(std::ostream& os, const ExprP& e, int) {
  switch (e->op) {
    case Op::Const: os << e->value; break;
    case Op::Arg: os << e->name; break;
    case Op::Iter: os << "iter"; break;
    case Op::It: os << "it"; break;
    case Op::Size: os << "size(" << e->name << ")"; break;
    case Op::Proj:
      os << "proj(" << e->field << ", " << e->name << ", ";
      print_expr(os, e->kids[0], 0);
      os << ")";
      break;
    case Op::This: os << "this." << e->field; break;
    case Op::Any:
      os << "any{";
      print_expr(os, e->kids[0], 0);
      os << "}";
      break;
    case Op::True: os << "TRUE"; break;
    case Op::False: os << "FALSE"; break;
    case Op::Not:
      os << "NOT ";
      print_child(os, e->kids[0], 3);
      break;
    case Op::Neg:
      os << "-";
      // a literal operand would re-parse as a negative constant
      if (e->kids[0]->op == Op::Const || e->kids[0]->op == Op::Neg) {
        os << "(";
        print_expr(os, e->kids[0], 0);
        os << ")";
      } else {
        print_child(os, e->kids[0], 8);
      }
      break;
    default: {
      int p = prec(e->op);
      if (is_cmp_op(e->op)) {
        print_child(os, e->kids[0], 5);
        os << sym(e->op);
        print_child(os, e->kids[1], 5);
      } else {
        print_child(os, e->kids[0], p);
        os << sym(e->op);
        print_child(os, e->kids[1], p + 1);
      }
    }
  }
}

inline void print_query(std::ostream& os, const Query& q) {
  switch (q.kind) {
    case QueryKind::Select:
      os << "SELECT @" << q.table << " " << q.field << " AS " << q.var << " WHERE ";
      print_expr(os, q.where, 0);
      break;
    case QueryKind::SelectAgg:
      os << "SELECT @" << q.table << " " << (q.agg == Agg::Min ? "MIN(" : "MAX(") << q.field << ") AS " << q.var
         << " WHERE ";
      print_expr(os, q.where, 0);
      break;
    case QueryKind::Update:
      os << "UPDATE @" << q.table << " SET " << q.field << " = ";
      print_expr(os, q.value, 0);
      os << " WHERE ";
      print_expr(os, q.where, 0);
      break;
    case QueryKind::Delete:
      os << "DELETE @" << q.table << " WHERE ";
      print_expr(os, q.where, 0);
      break;
    case QueryKind::Insert: {
      os << "INSERT INTO " << q.table << " (";
      for (size_t i = 0; i < q.values.size(); ++i) os << (i ? ", " : "") << q.values[i].first;
      os << ") VALUES (";
      for (size_t i = 0; i < q.values.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, q.values[i].second, 0);
      }
      os << ")";
      break;
    }
  }
}

inline void print_block(std::ostream& os, const std::vector<Command>& body, int indent) {
  for (auto& c : body) {
    os << std::string(indent, ' ');
    switch (c.kind) {
      case CmdKind::Skip: os << "SKIP;\n"; break;
      case CmdKind::Query:
        print_query(os, c.query);
        os << ";\n";
        break;
      case CmdKind::If:
      case CmdKind::Iterate:
        os << (c.kind == CmdKind::If ? "IF (" : "ITERATE (");
        print_expr(os, c.cond, 0);
        os << ") {\n";
        print_block(os, c.body, indent + 2);
        os << std::string(indent, ' ') << "}\n";
        break;
    }
  }
}

}  // namespace detail

inline std::string pretty_print(const ExprP& e) {
  std::ostringstream os;
  detail::print_expr(os, e, 0);
  return os.str();
}

inline std::string pretty_print(const Query& q) {
  std::ostringstream os;
  detail::print_query(os, q);
  return os.str();
}

inline std::string pretty_print(const Transaction& t) {
  std::ostringstream os;
  os << t.name << "(";
  for (size_t i = 0; i < t.params.size(); ++i) os << (i ? ", " : "") << t.params[i];
  os << ") {\n";
  detail::print_block(os, t.body, 2);
  os << "}\n";
  return os.str();
}

inline std::string pretty_print(const Program& p) {
  std::string s;
  for (size_t i = 0; i < p.transactions.size(); ++i) {
    if (i) s += "\n";
    s += pretty_print(p.transactions[i]);
  }
  return s;
}

inline std::string pretty_print(const Schema& s) {
  std::ostringstream os;
  for (auto& t : s.tables) {
    os << "TABLE " << t.name << " (";
    for (size_t i = 0; i < t.fields.size(); ++i) os << (i ? ", " : "") << t.fields[i];
    os << ") PK (";
    for (size_t i = 0; i < t.primary_key.size(); ++i) os << (i ? ", " : "") << t.primary_key[i];
    os << ")\n";
  }
  return os.str();
}

}  // namespace serscope
