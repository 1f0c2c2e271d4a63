#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace serscope {

inline const std::string kAlive = "alive";

struct SourceSpan {
  std::string file;
  int line = 0;
  int column = 0;
  int length = 0;
};

inline std::string to_string(const SourceSpan& s) {
  std::ostringstream os;
  os << (s.file.empty() ? "<input>" : s.file) << ":" << s.line << ":" << s.column;
  return os.str();
}

struct Diagnostic {
  SourceSpan span;
  std::string message;
};

// ---------------------------------------------------------------- schema

struct TableDef {
  std::string name;
  std::vector<std::string> fields;
  std::vector<std::string> primary_key;
  SourceSpan span;

  int field_index(const std::string& f) const {
    for (size_t i = 0; i < fields.size(); ++i)
      if (fields[i] == f) return static_cast<int>(i);
    return -1;
  }
  bool has_field(const std::string& f) const { return f == kAlive || field_index(f) >= 0; }
  bool is_key(const std::string& f) const {
    return std::find(primary_key.begin(), primary_key.end(), f) != primary_key.end();
  }
  int key_position(const std::string& f) const {
    for (size_t i = 0; i < primary_key.size(); ++i)
      if (primary_key[i] == f) return static_cast<int>(i);
    return -1;
  }
  // user fields followed by alive
  std::vector<std::string> all_fields() const {
    auto v = fields;
    v.push_back(kAlive);
    return v;
  }
};

struct Schema {
  std::vector<TableDef> tables;

  const TableDef* find(const std::string& name) const {
    for (auto& t : tables)
      if (t.name == name) return &t;
    return nullptr;
  }
};

// ---------------------------------------------------------------- expressions

enum class Op {
  Const, Arg, Iter, It, Size, Proj, This, Any,
  Add, Sub, Mul, Div, Neg,
  True, False, Lt, Le, Eq, Gt, Ge, Not, And, Or
};

struct Expr;
using ExprP = std::shared_ptr<const Expr>;

struct Expr {
  Op op = Op::Const;
  int64_t value = 0;
  std::string name;   // Arg name, Size/Proj variable
  std::string field;  // Proj/This field
  std::vector<ExprP> kids;
  int any_id = -1;    // Any: occurrence index within the transaction
  SourceSpan span;
};

inline bool is_bool_op(Op op) {
  switch (op) {
    case Op::True: case Op::False: case Op::Lt: case Op::Le: case Op::Eq:
    case Op::Gt: case Op::Ge: case Op::Not: case Op::And: case Op::Or:
      return true;
    default:
      return false;
  }
}
inline bool is_cmp_op(Op op) {
  return op == Op::Lt || op == Op::Le || op == Op::Eq || op == Op::Gt || op == Op::Ge;
}

namespace mk {
inline ExprP node(Op op, std::vector<ExprP> kids = {}) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->kids = std::move(kids);
  return e;
}
inline ExprP num(int64_t v) {
  auto e = std::make_shared<Expr>();
  e->op = Op::Const;
  e->value = v;
  return e;
}
inline ExprP arg(const std::string& n) {
  auto e = std::make_shared<Expr>();
  e->op = Op::Arg;
  e->name = n;
  return e;
}
inline ExprP iter() { return node(Op::Iter); }
inline ExprP it() { return node(Op::It); }
inline ExprP size(const std::string& var) {
  auto e = std::make_shared<Expr>();
  e->op = Op::Size;
  e->name = var;
  return e;
}
inline ExprP proj(const std::string& f, const std::string& var, ExprP idx) {
  auto e = std::make_shared<Expr>();
  e->op = Op::Proj;
  e->field = f;
  e->name = var;
  e->kids = {std::move(idx)};
  return e;
}
inline ExprP self(const std::string& f) {
  auto e = std::make_shared<Expr>();
  e->op = Op::This;
  e->field = f;
  return e;
}
inline ExprP any(ExprP constraint, int id) {
  auto e = std::make_shared<Expr>();
  e->op = Op::Any;
  e->any_id = id;
  e->kids = {std::move(constraint)};
  return e;
}
inline ExprP bin(Op op, ExprP a, ExprP b) { return node(op, {std::move(a), std::move(b)}); }
inline ExprP truth(bool b) { return node(b ? Op::True : Op::False); }
inline ExprP neg(ExprP a) { return node(Op::Not, {std::move(a)}); }
inline ExprP conj(std::vector<ExprP> xs) {
  if (xs.empty()) return truth(true);
  ExprP acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = bin(Op::And, acc, xs[i]);
  return acc;
}
}  // namespace mk

inline bool equal(const ExprP& a, const ExprP& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->op != b->op || a->value != b->value || a->name != b->name || a->field != b->field ||
      a->any_id != b->any_id || a->kids.size() != b->kids.size())
    return false;
  for (size_t i = 0; i < a->kids.size(); ++i)
    if (!equal(a->kids[i], b->kids[i])) return false;
  return true;
}

template <class F>
void visit(const ExprP& e, F&& f) {
  if (!e) return;
  f(*e);
  for (auto& k : e->kids) visit(k, f);
}

inline bool mentions(const ExprP& e, Op op) {
  bool found = false;
  visit(e, [&](const Expr& x) { found = found || x.op == op; });
  return found;
}

// F(phi): fields read through `this`, plus alive
inline std::set<std::string> where_fields(const ExprP& phi) {
  std::set<std::string> out{kAlive};
  visit(phi, [&](const Expr& x) {
    if (x.op == Op::This) out.insert(x.field);
  });
  return out;
}

inline ExprP substitute_iter(const ExprP& e, int64_t k) {
  if (!e) return e;
  if (e->op == Op::Iter) return mk::num(k);
  if (!mentions(e, Op::Iter)) return e;
  auto c = std::make_shared<Expr>(*e);
  for (auto& kid : c->kids) kid = substitute_iter(kid, k);
  return c;
}

// ---------------------------------------------------------------- commands

enum class QueryKind { Select, SelectAgg, Update, Insert, Delete };
enum class Agg { None, Min, Max };

inline const char* to_string(QueryKind k) {
  switch (k) {
    case QueryKind::Select: return "select";
    case QueryKind::SelectAgg: return "select";
    case QueryKind::Update: return "update";
    case QueryKind::Insert: return "insert";
    case QueryKind::Delete: return "delete";
  }
  return "?";
}

struct Query {
  QueryKind kind = QueryKind::Select;
  std::string table;
  std::string field;  // select / update target
  std::string var;    // select binding
  Agg agg = Agg::None;
  ExprP value;        // update value
  ExprP where;
  std::vector<std::pair<std::string, ExprP>> values;  // insert assignments
  SourceSpan span;
};

inline bool operator==(const Query& a, const Query& b) {
  if (a.kind != b.kind || a.table != b.table || a.field != b.field || a.var != b.var ||
      a.agg != b.agg || !equal(a.value, b.value) || !equal(a.where, b.where) ||
      a.values.size() != b.values.size())
    return false;
  for (size_t i = 0; i < a.values.size(); ++i)
    if (a.values[i].first != b.values[i].first || !equal(a.values[i].second, b.values[i].second))
      return false;
  return true;
}

enum class CmdKind { Query, If, Iterate, Skip };

struct Command {
  CmdKind kind = CmdKind::Skip;
  Query query;
  ExprP cond;  // If guard or Iterate count
  std::vector<Command> body;
  SourceSpan span;
};

inline bool operator==(const Command& a, const Command& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case CmdKind::Query: return a.query == b.query;
    case CmdKind::Skip: return true;
    default: return equal(a.cond, b.cond) && a.body == b.body;
  }
}

struct Transaction {
  std::string name;
  std::vector<std::string> params;
  std::vector<Command> body;
  SourceSpan span;
};

inline bool operator==(const Transaction& a, const Transaction& b) {
  return a.name == b.name && a.params == b.params && a.body == b.body;
}

struct Program {
  std::vector<Transaction> transactions;

  const Transaction* find(const std::string& name) const {
    for (auto& t : transactions)
      if (t.name == name) return &t;
    return nullptr;
  }
  int index_of(const std::string& name) const {
    for (size_t i = 0; i < transactions.size(); ++i)
      if (transactions[i].name == name) return static_cast<int>(i);
    return -1;
  }
};

inline bool operator==(const Program& a, const Program& b) { return a.transactions == b.transactions; }

// PK-equality WHERE: a conjunction of this.k = e covering every key field once,
// e free of `this`. Returns key expressions in primary-key order.
inline std::optional<std::vector<ExprP>> pk_equality(const ExprP& where, const TableDef& t) {
  std::vector<ExprP> atoms;
  std::vector<ExprP> stack{where};
  while (!stack.empty()) {
    auto e = stack.back();
    stack.pop_back();
    if (!e) return std::nullopt;
    if (e->op == Op::And) {
      stack.push_back(e->kids[1]);
      stack.push_back(e->kids[0]);
    } else {
      atoms.push_back(e);
    }
  }
  std::vector<ExprP> keys(t.primary_key.size());
  for (auto& a : atoms) {
    if (a->op != Op::Eq) return std::nullopt;
    ExprP lhs = a->kids[0], rhs = a->kids[1];
    if (lhs->op != Op::This) std::swap(lhs, rhs);
    if (lhs->op != Op::This || mentions(rhs, Op::This)) return std::nullopt;
    int pos = t.key_position(lhs->field);
    if (pos < 0 || keys[pos]) return std::nullopt;
    keys[pos] = rhs;
  }
  for (auto& k : keys)
    if (!k) return std::nullopt;
  return keys;
}

// ---------------------------------------------------------------- unrolling

// A guard is either an If condition or the k-th copy of an Iterate body.
struct Guard {
  enum Kind { If, Loop } kind = If;
  ExprP cond;       // iter already substituted with enclosing copies
  int copy = 0;     // Loop: 1-based copy index
  int parent = -1;  // enclosing guard
  int point = 0;    // number of sites preceding the guard evaluation
  int loop_id = -1; // Loop: identifies the Iterate (copies share it)
};

struct Site {
  int ordinal = 0;  // 1-based position in unrolled program order
  Query query;      // iter already substituted
  int guard = -1;   // innermost enclosing guard
  int point = 0;    // == ordinal - 1
};

struct UnrolledTxn {
  std::string name;
  std::vector<std::string> params;
  std::vector<Guard> guards;
  std::vector<Site> sites;
  int any_count = 0;
  std::vector<ExprP> any_constraints;  // by any_id
  int unroll = 0;
};

class BoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Query subst_query(const Query& q, int64_t k) {
  Query c = q;
  c.value = substitute_iter(q.value, k);
  c.where = substitute_iter(q.where, k);
  for (auto& [f, e] : c.values) e = substitute_iter(e, k);
  return c;
}

inline Command subst_cmd(const Command& c, int64_t k) {
  // only the innermost Iterate binds `iter`; nested loops shadow it
  Command out = c;
  if (c.kind == CmdKind::Query) {
    out.query = subst_query(c.query, k);
  } else if (c.kind == CmdKind::If) {
    out.cond = substitute_iter(c.cond, k);
    for (auto& b : out.body) b = subst_cmd(b, k);
  } else if (c.kind == CmdKind::Iterate) {
    out.cond = substitute_iter(c.cond, k);
  }
  return out;
}

inline void collect_any(const ExprP& e, std::vector<ExprP>& out) {
  visit(e, [&](const Expr& x) {
    if (x.op == Op::Any) {
      if (x.any_id >= static_cast<int>(out.size())) out.resize(x.any_id + 1);
      out[x.any_id] = x.kids[0];
    }
  });
}

inline void unroll_into(const std::vector<Command>& body, int parent, int bound, UnrolledTxn& u,
                        int& loop_counter) {
  for (auto& c : body) {
    switch (c.kind) {
      case CmdKind::Skip:
        break;
      case CmdKind::Query: {
        Site s;
        s.ordinal = static_cast<int>(u.sites.size()) + 1;
        s.point = s.ordinal - 1;
        s.query = c.query;
        s.guard = parent;
        u.sites.push_back(std::move(s));
        break;
      }
      case CmdKind::If: {
        Guard g;
        g.kind = Guard::If;
        g.cond = c.cond;
        g.parent = parent;
        g.point = static_cast<int>(u.sites.size());
        u.guards.push_back(g);
        unroll_into(c.body, static_cast<int>(u.guards.size()) - 1, bound, u, loop_counter);
        break;
      }
      case CmdKind::Iterate: {
        int id = loop_counter++;
        int entry = static_cast<int>(u.sites.size());
        for (int k = 1; k <= bound; ++k) {
          Guard g;
          g.kind = Guard::Loop;
          g.cond = c.cond;
          g.copy = k;
          g.parent = parent;
          g.point = entry;
          g.loop_id = id;
          u.guards.push_back(g);
          int gi = static_cast<int>(u.guards.size()) - 1;
          std::vector<Command> copy;
          for (auto& b : c.body) copy.push_back(subst_cmd(b, k));
          unroll_into(copy, gi, bound, u, loop_counter);
        }
        break;
      }
    }
  }
}

inline void collect_any_cmds(const std::vector<Command>& body, std::vector<ExprP>& out) {
  for (auto& c : body) {
    collect_any(c.cond, out);
    collect_any(c.query.value, out);
    collect_any(c.query.where, out);
    for (auto& [f, e] : c.query.values) collect_any(e, out);
    collect_any_cmds(c.body, out);
  }
}

}  // namespace detail

inline UnrolledTxn unroll(const Transaction& t, int bound) {
  UnrolledTxn u;
  u.name = t.name;
  u.params = t.params;
  u.unroll = bound;
  int loops = 0;
  detail::unroll_into(t.body, -1, bound, u, loops);
  detail::collect_any_cmds(t.body, u.any_constraints);
  u.any_count = static_cast<int>(u.any_constraints.size());
  return u;
}

// Lambda(q): conjunction of enclosing guards, iteration copies made explicit
inline ExprP reachability_condition(const UnrolledTxn& u, int ordinal) {
  if (ordinal < 1 || ordinal > static_cast<int>(u.sites.size()))
    throw std::out_of_range("unknown query site " + u.name + ".O" + std::to_string(ordinal));
  std::vector<ExprP> parts;
  for (int g = u.sites[ordinal - 1].guard; g >= 0; g = u.guards[g].parent) {
    auto& gd = u.guards[g];
    if (gd.kind == Guard::If)
      parts.push_back(gd.cond);
    else
      parts.push_back(mk::bin(Op::Ge, gd.cond, mk::num(gd.copy)));
  }
  std::reverse(parts.begin(), parts.end());
  return mk::conj(parts);
}

inline ExprP reachability_condition(const Program& p, const std::string& txn, int ordinal, int bound) {
  auto* t = p.find(txn);
  if (!t) throw std::out_of_range("unknown transaction " + txn);
  return reachability_condition(unroll(*t, bound), ordinal);
}

// ---------------------------------------------------------------- validation

namespace detail {

struct VarInfo {
  std::string table;
  std::string field;
};

inline void check_expr(const ExprP& e, const Transaction& t, const TableDef* table,
                       const std::map<std::string, VarInfo>& vars, const Schema& schema, bool in_where,
                       bool in_loop, bool in_any, std::vector<Diagnostic>& out) {
  if (!e) return;
  auto diag = [&](const std::string& m) { out.push_back({e->span, m}); };
  switch (e->op) {
    case Op::Arg:
      if (std::find(t.params.begin(), t.params.end(), e->name) == t.params.end())
        diag("unknown argument '" + e->name + "' in transaction " + t.name);
      break;
    case Op::Iter:
      if (!in_loop) diag("'iter' used outside ITERATE");
      if (in_any) diag("any{} constraint may only mention arguments and 'it'");
      break;
    case Op::It:
      if (!in_any) diag("'it' used outside any{}");
      break;
    case Op::Size:
    case Op::Proj: {
      if (in_any) diag("any{} constraint may only mention arguments and 'it'");
      auto v = vars.find(e->name);
      if (v == vars.end()) {
        diag("variable '" + e->name + "' is not bound by an earlier SELECT");
        break;
      }
      if (e->op == Op::Proj) {
        auto* vt = schema.find(v->second.table);
        bool ok = e->field == v->second.field || (vt && vt->is_key(e->field));
        if (!ok) diag("proj field '" + e->field + "' is neither selected nor a key of " + v->second.table);
      }
      break;
    }
    case Op::This:
      if (!in_where) diag("'this." + e->field + "' used outside a WHERE clause");
      else if (e->field == kAlive) diag("field 'alive' is reserved");
      else if (table && table->field_index(e->field) < 0)
        diag("unknown field '" + e->field + "' in table " + table->name);
      break;
    case Op::Any:
      if (in_any) diag("nested any{}");
      check_expr(e->kids[0], t, table, vars, schema, false, in_loop, true, out);
      return;
    default:
      break;
  }
  for (auto& k : e->kids) check_expr(k, t, table, vars, schema, in_where, in_loop, in_any, out);
}

inline void check_body(const std::vector<Command>& body, const Transaction& t, const Schema& schema,
                       std::map<std::string, VarInfo>& vars, bool in_loop, std::vector<Diagnostic>& out) {
  for (auto& c : body) {
    switch (c.kind) {
      case CmdKind::Skip:
        break;
      case CmdKind::If:
        check_expr(c.cond, t, nullptr, vars, schema, false, in_loop, false, out);
        check_body(c.body, t, schema, vars, in_loop, out);
        break;
      case CmdKind::Iterate:
        check_expr(c.cond, t, nullptr, vars, schema, false, in_loop, false, out);
        check_body(c.body, t, schema, vars, true, out);
        break;
      case CmdKind::Query: {
        auto& q = c.query;
        auto* tb = schema.find(q.table);
        if (!tb) {
          out.push_back({q.span, "unknown table '" + q.table + "'"});
          break;
        }
        auto field_ok = [&](const std::string& f) {
          if (f == kAlive) {
            out.push_back({q.span, "field 'alive' is reserved"});
          } else if (tb->field_index(f) < 0) {
            out.push_back({q.span, "unknown field '" + f + "' in table " + tb->name});
          }
        };
        if (q.kind != QueryKind::Insert)
          check_expr(q.where, t, tb, vars, schema, true, in_loop, false, out);
        switch (q.kind) {
          case QueryKind::Select:
          case QueryKind::SelectAgg:
            field_ok(q.field);
            break;
          case QueryKind::Update:
            field_ok(q.field);
            if (tb->is_key(q.field)) out.push_back({q.span, "UPDATE of primary-key field '" + q.field + "'"});
            check_expr(q.value, t, tb, vars, schema, false, in_loop, false, out);
            break;
          case QueryKind::Delete:
            break;
          case QueryKind::Insert: {
            std::set<std::string> seen;
            for (auto& [f, e] : q.values) {
              field_ok(f);
              if (!seen.insert(f).second) out.push_back({q.span, "field '" + f + "' assigned twice"});
              check_expr(e, t, tb, vars, schema, false, in_loop, false, out);
            }
            for (auto& f : tb->fields)
              if (!seen.count(f))
                out.push_back({q.span, std::string(tb->is_key(f) ? "INSERT misses primary-key field '"
                                                                 : "INSERT misses field '") + f + "'"});
            break;
          }
        }
        if (q.kind == QueryKind::Select || q.kind == QueryKind::SelectAgg) {
          auto prev = vars.find(q.var);
          if (prev != vars.end() && (prev->second.table != q.table || prev->second.field != q.field))
            out.push_back({q.span, "variable '" + q.var + "' rebound with a different shape"});
          vars[q.var] = {q.table, q.field};
        }
        break;
      }
    }
  }
}

}  // namespace detail

inline std::vector<Diagnostic> validate_program(const Schema& schema, const Program& prog) {
  std::vector<Diagnostic> out;
  std::set<std::string> names;
  for (auto& t : prog.transactions) {
    if (!names.insert(t.name).second) out.push_back({t.span, "duplicate transaction '" + t.name + "'"});
    std::set<std::string> ps;
    for (auto& p : t.params)
      if (!ps.insert(p).second) out.push_back({t.span, "duplicate parameter '" + p + "'"});
    std::map<std::string, detail::VarInfo> vars;
    detail::check_body(t.body, t, schema, vars, false, out);
  }
  return out;
}

inline std::vector<Diagnostic> validate_schema(const Schema& s) {
  std::vector<Diagnostic> out;
  std::set<std::string> names;
  for (auto& t : s.tables) {
    if (!names.insert(t.name).second) out.push_back({t.span, "duplicate table '" + t.name + "'"});
    std::set<std::string> fs;
    for (auto& f : t.fields) {
      if (f == kAlive) out.push_back({t.span, "field 'alive' is reserved"});
      if (!fs.insert(f).second) out.push_back({t.span, "duplicate field '" + f + "' in " + t.name});
    }
    if (t.primary_key.empty()) out.push_back({t.span, "empty primary key for " + t.name});
    std::set<std::string> ks;
    for (auto& k : t.primary_key) {
      if (!fs.count(k)) out.push_back({t.span, "primary-key field '" + k + "' not declared in " + t.name});
      if (!ks.insert(k).second) out.push_back({t.span, "duplicate primary-key field '" + k + "'"});
    }
  }
  return out;
}

// ---------------------------------------------------------------- effects and states

using Key = std::vector<int64_t>;

inline std::string key_string(const Key& k) {
  std::string s;
  for (size_t i = 0; i < k.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(k[i]);
  }
  return s;
}

struct EffectId {
  int step = 0;
  int ordinal = 0;
  auto operator<=>(const EffectId&) const = default;
};

struct Effect {
  EffectId id;
  bool write = false;
  std::string table;
  Key key;
  std::string field;
  std::optional<int64_t> value;
  bool used = true;       // reads only; false marks an unused read
  int query_instance = 0; // step index, 0 for the initial database
  int txn_instance = -1;  // -1 for the initial database
  int site = 0;           // ordinal of the query site
  int partition = -1;     // creation partition, -1 for the initial database
};

// Square relation over effect indices; grows as effects are appended.
class Relation {
 public:
  void resize(size_t n) {
    for (auto& r : rows_) r.resize(n, 0);
    rows_.resize(n, std::vector<char>(n, 0));
  }
  size_t size() const { return rows_.size(); }
  void set(size_t a, size_t b) { rows_[a][b] = 1; }
  bool get(size_t a, size_t b) const { return rows_[a][b] != 0; }

 private:
  std::vector<std::vector<char>> rows_;
};

// store: per partition, indices of known effects. ar: effect index order.
struct SystemState {
  std::vector<Effect> effects;
  std::vector<std::vector<int>> store;
  Relation vis;

  bool ar(int a, int b) const { return a < b; }
  int partitions() const { return static_cast<int>(store.size()); }
};

// sigma: table -> key -> field -> value
struct LocalView {
  std::map<std::string, std::map<Key, std::map<std::string, int64_t>>> rows;

  int64_t get(const std::string& table, const Key& k, const std::string& f) const {
    auto t = rows.find(table);
    if (t == rows.end()) return 0;
    auto r = t->second.find(k);
    if (r == t->second.end()) return 0;
    auto v = r->second.find(f);
    return v == r->second.end() ? 0 : v->second;
  }
  bool alive(const std::string& table, const Key& k) const { return get(table, k, kAlive) == 1; }
};

// Delta: apply writes in ar order (index order)
inline LocalView local_view(const std::vector<Effect>& all, const std::vector<int>& subset) {
  std::vector<int> idx = subset;
  std::sort(idx.begin(), idx.end());
  LocalView v;
  for (int i : idx) {
    auto& e = all[i];
    if (e.write && e.value) v.rows[e.table][e.key][e.field] = *e.value;
  }
  return v;
}

}  // namespace serscope
