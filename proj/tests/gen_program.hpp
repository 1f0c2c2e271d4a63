#pragma once

#include <random>
#include <string>
#include <vector>

#include "serscope/parser.hpp"

// random well-formed programs over a fixed two-table schema
namespace gen {

using namespace serscope;

inline const char* kSchema =
    "TABLE acc (k, f, g) PK (k)\n"
    "TABLE log (a, b, n) PK (a, b)\n";

class ProgramGen {
 public:
  ProgramGen(const Schema& s, unsigned seed) : schema_(s), rng_(seed) {}

  Program program() {
    Program p;
    int n = pick(1, 3);
    for (int i = 0; i < n; ++i) p.transactions.push_back(txn("t" + std::to_string(i)));
    return p;
  }

 private:
  struct Var {
    std::string name, table, field;
  };

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(int pct = 50) { return pick(1, 100) <= pct; }

  Transaction txn(const std::string& name) {
    Transaction t;
    t.name = name;
    static const char* names[] = {"x", "y", "z", "w"};
    int np = pick(0, 3);
    for (int i = 0; i < np; ++i) t.params.push_back(names[i]);
    params_ = t.params;
    vars_.clear();
    any_ = 0;
    t.body = block(0, false, pick(1, 4));
    return t;
  }

  std::vector<Command> block(int depth, bool in_loop, int n) {
    std::vector<Command> out;
    for (int i = 0; i < n; ++i) out.push_back(command(depth, in_loop));
    return out;
  }

  Command command(int depth, bool in_loop) {
    Command c;
    int r = pick(0, 9);
    if (depth < 2 && r == 0) {
      c.kind = CmdKind::If;
      c.cond = bexpr(2, in_loop, nullptr);
      c.body = block(depth + 1, in_loop, pick(0, 2));
    } else if (depth < 2 && r == 1) {
      c.kind = CmdKind::Iterate;
      c.cond = aexpr(1, in_loop, nullptr);
      c.body = block(depth + 1, true, pick(0, 2));
    } else if (r == 2) {
      c.kind = CmdKind::Skip;
    } else {
      c.kind = CmdKind::Query;
      c.query = query(in_loop);
    }
    return c;
  }

  const TableDef& table() { return schema_.tables[pick(0, static_cast<int>(schema_.tables.size()) - 1)]; }

  std::string nonkey(const TableDef& t) {
    std::vector<std::string> fs;
    for (auto& f : t.fields)
      if (!t.is_key(f)) fs.push_back(f);
    return fs[pick(0, static_cast<int>(fs.size()) - 1)];
  }

  Query query(bool in_loop) {
    Query q;
    auto& t = table();
    q.table = t.name;
    int r = pick(0, 9);
    if (r < 4) {
      q.kind = QueryKind::Select;
      q.field = t.fields[pick(0, static_cast<int>(t.fields.size()) - 1)];
      q.where = bexpr(2, in_loop, &t);
      q.var = bind(t.name, q.field);
      if (coin(10)) {
        q.kind = QueryKind::SelectAgg;
        q.agg = coin() ? Agg::Min : Agg::Max;
      }
    } else if (r < 7) {
      q.kind = QueryKind::Update;
      q.field = nonkey(t);
      q.value = aexpr(2, in_loop, nullptr);
      q.where = bexpr(2, in_loop, &t);
    } else if (r < 9) {
      q.kind = QueryKind::Insert;
      auto fs = t.fields;
      std::shuffle(fs.begin(), fs.end(), rng_);
      for (auto& f : fs) q.values.emplace_back(f, aexpr(1, in_loop, nullptr));
    } else {
      q.kind = QueryKind::Delete;
      q.where = bexpr(2, in_loop, &t);
    }
    return q;
  }

  std::string bind(const std::string& table, const std::string& field) {
    for (auto& v : vars_)
      if (v.table == table && v.field == field && coin(30)) return v.name;
    std::string name = "v" + std::to_string(vars_.size());
    vars_.push_back({name, table, field});
    return name;
  }

  ExprP leaf(bool in_loop, const TableDef* where, bool in_any) {
    for (;;) {
      switch (pick(0, 7)) {
        case 0: return mk::num(pick(-20, 20));
        case 1:
          if (!params_.empty()) return mk::arg(params_[pick(0, static_cast<int>(params_.size()) - 1)]);
          break;
        case 2:
          if (in_loop && !in_any) return mk::iter();
          break;
        case 3:
          if (!vars_.empty() && !in_any) return mk::size(vars_[pick(0, static_cast<int>(vars_.size()) - 1)].name);
          break;
        case 4:
          if (!vars_.empty() && !in_any) {
            auto& v = vars_[pick(0, static_cast<int>(vars_.size()) - 1)];
            auto* vt = schema_.find(v.table);
            std::string f = coin() ? v.field : vt->primary_key[0];
            return mk::proj(f, v.name, aexpr(0, in_loop, nullptr, in_any));
          }
          break;
        case 5:
          if (where) return mk::self(where->fields[pick(0, static_cast<int>(where->fields.size()) - 1)]);
          break;
        case 6:
          if (in_any) return mk::it();
          if (coin(40)) return mk::any(bexpr(1, false, nullptr, true), any_++);
          break;
        default: return mk::num(pick(0, 9));
      }
    }
  }

  ExprP aexpr(int depth, bool in_loop, const TableDef* where, bool in_any = false) {
    if (depth == 0 || coin(35)) return leaf(in_loop, where, in_any);
    static const Op ops[] = {Op::Add, Op::Sub, Op::Mul, Op::Div};
    if (coin(10)) return mk::node(Op::Neg, {aexpr(depth - 1, in_loop, where, in_any)});
    auto op = ops[pick(0, 3)];
    auto a = aexpr(depth - 1, in_loop, where, in_any);
    auto b = aexpr(depth - 1, in_loop, where, in_any);
    return mk::bin(op, a, b);
  }

  ExprP bexpr(int depth, bool in_loop, const TableDef* where, bool in_any = false) {
    int r = pick(0, 9);
    if (depth == 0 || r < 5) {
      if (r == 0) return mk::truth(coin());
      static const Op cmps[] = {Op::Lt, Op::Le, Op::Eq, Op::Gt, Op::Ge};
      auto op = cmps[pick(0, 4)];
      auto a = aexpr(1, in_loop, where, in_any);
      auto b = aexpr(1, in_loop, where, in_any);
      return mk::bin(op, a, b);
    }
    if (r == 5) return mk::neg(bexpr(depth - 1, in_loop, where, in_any));
    auto op = coin() ? Op::And : Op::Or;
    auto a = bexpr(depth - 1, in_loop, where, in_any);
    auto b = bexpr(depth - 1, in_loop, where, in_any);
    return mk::bin(op, a, b);
  }

  const Schema& schema_;
  std::mt19937 rng_;
  std::vector<std::string> params_;
  std::vector<Var> vars_;
  int any_ = 0;
};

}  // namespace gen
