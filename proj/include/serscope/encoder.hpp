#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "serscope/consistency.hpp"
#include "serscope/depgraph.hpp"
#include "serscope/model.hpp"
#include "serscope/parser.hpp"
#include "serscope/smt.hpp"

namespace serscope {

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// INIT <table> WHERE <phi>  or  EMPTY <table>
struct InitConstraint {
  std::string table;
  bool empty = false;
  ExprP where;
};

inline std::vector<InitConstraint> parse_init_constraints(const std::string& text, const Schema& schema) {
  std::vector<InitConstraint> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string kw, table;
    if (!(ls >> kw)) continue;
    ls >> table;
    auto* t = schema.find(table);
    if (!t) throw EncodeError("init constraint line " + std::to_string(lineno) + ": unknown table '" + table + "'");
    InitConstraint c;
    c.table = t->name;
    if (upper(kw) == "EMPTY") {
      c.empty = true;
    } else if (upper(kw) == "INIT") {
      std::string rest;
      std::getline(ls, rest);
      // reuse the query parser: a dummy select over the table
      std::string src = "init__(){ SELECT @" + t->name + " " + t->fields[0] + " AS v__ " + rest + " }";
      auto prog = parse_program_unchecked(src, schema);
      c.where = prog.transactions.at(0).body.at(0).query.where;
    } else {
      throw EncodeError("init constraint line " + std::to_string(lineno) + ": expected INIT or EMPTY");
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct EncoderConfig {
  int partitions = 2;
  int records = 4;
  int unroll = 2;
  GuaranteeSpec spec;
  bool internal_only = false;
  std::vector<InitConstraint> init;
  bool apply_init = false;
};

struct InstancePlan {
  std::string txn;
  bool serial = false;
};

struct EdgeLiteral {
  std::string txn_a;
  int site_a = 0;
  std::string txn_b;
  int site_b = 0;
  EdgeKind kind = EdgeKind::ST;
  std::string field;  // table.field, empty for ST
  auto operator<=>(const EdgeLiteral&) const = default;
};

struct PositionPin {
  std::string txn;
  int site = 0;
  EdgeKind kind = EdgeKind::ST;
  std::string field;
};

struct CycleQuery {
  int length = 3;
  std::vector<std::pair<std::string, EdgeKind>> structure;  // per position: txn type, outgoing kind
  std::vector<PositionPin> pin;                              // per position, exact
  std::vector<std::vector<EdgeLiteral>> blocked;             // found cycles
};

struct DecodedNode {
  int instance = 0;
  int site = 0;
  bool active = false;
  int64_t ts = 0;
  int tau = 0;
  std::vector<bool> deliv;
};

struct DecodedSlot {
  bool alive = false;
  bool touched = false;
  std::map<std::string, int64_t> values;
};

struct DecodedModel {
  std::vector<InstancePlan> plan;
  std::vector<std::vector<int64_t>> args;
  std::vector<std::map<int, int64_t>> anys;
  std::vector<DecodedNode> nodes;
  std::map<std::string, std::vector<DecodedSlot>> slots;
  std::vector<int> cycle_nodes;
  std::vector<EdgeKind> cycle_kinds;
  std::vector<std::string> cycle_fields;
  int partitions = 1;

  std::vector<CycleToken> tokens() const {
    std::vector<CycleToken> ts;
    for (size_t i = 0; i < cycle_nodes.size(); ++i) {
      auto& n = nodes[cycle_nodes[i]];
      ts.push_back({plan[n.instance].txn, n.site, cycle_kinds[i], cycle_fields[i]});
    }
    return min_rotation(ts);
  }
  std::string fingerprint() const { return render(tokens(), true); }
  std::string structure_key() const { return render(tokens(), false); }

  std::vector<EdgeLiteral> literals() const {
    std::vector<EdgeLiteral> out;
    size_t k = cycle_nodes.size();
    for (size_t i = 0; i < k; ++i) {
      auto& a = nodes[cycle_nodes[i]];
      auto& b = nodes[cycle_nodes[(i + 1) % k]];
      out.push_back({plan[a.instance].txn, a.site, plan[b.instance].txn, b.site, cycle_kinds[i], cycle_fields[i]});
    }
    return out;
  }
};

inline int kind_code(EdgeKind k) {
  switch (k) {
    case EdgeKind::WR: return 0;
    case EdgeKind::WW: return 1;
    case EdgeKind::RW: return 2;
    default: return 3;
  }
}

inline EdgeKind kind_from_code(int64_t c) {
  switch (c) {
    case 0: return EdgeKind::WR;
    case 1: return EdgeKind::WW;
    case 2: return EdgeKind::RW;
    default: return EdgeKind::ST;
  }
}

class Encoding {
 public:
  Encoding(const Program& prog, const Schema& schema, EncoderConfig cfg, std::vector<InstancePlan> plan,
           CycleQuery cq)
      : prog_(prog), schema_(schema), cfg_(std::move(cfg)), plan_(std::move(plan)), cq_(std::move(cq)) {
    if (cfg_.partitions < 1) throw EncodeError("partition count must be positive");
    if (cfg_.records < 1) throw EncodeError("record budget must be positive");
    if (cq_.length < 3) throw EncodeError("cycle length must be at least 3");
    setup();
    encode_context();
    encode_db();
    encode_dependencies();
    encode_anomaly();
  }

  const smt::Problem& problem() const { return pb_; }
  std::string text(const std::vector<smt::Term>& extra = {}) const {
    std::string body = pb_.body();
    for (auto& t : extra)
      if (t != "true") body += "(assert " + t + ")\n";
    return "(set-logic QF_LIA)\n" + body + "(check-sat)\n(get-model)\n";
  }

  // all partitions connected, everything on partition 0
  smt::Term pref_connected() const {
    std::vector<smt::Term> xs;
    for (size_t a = 0; a < nodes_.size(); ++a) {
      xs.push_back(smt::eq(tau(a), "0"));
      for (int p = 0; p < cfg_.partitions; ++p) xs.push_back(dl(a, p));
    }
    return smt::and_(xs);
  }

  // same-type cycle instances run in instance order, site by site or by their first site
  smt::Term pref_instance_order(bool every_site = false) const {
    std::vector<smt::Term> xs;
    for (size_t i = 0; i < plan_.size(); ++i)
      for (size_t j = i + 1; j < plan_.size(); ++j) {
        if (plan_[i].serial || plan_[j].serial || plan_[i].txn != plan_[j].txn) continue;
        int n = first_[i + 1] - first_[i];
        for (int s = 0; s < (every_site ? n : std::min(n, 1)); ++s) xs.push_back(smt::lt(ts(first_[i] + s), ts(first_[j] + s)));
      }
    return smt::and_(xs);
  }

  DecodedModel decode(const smt::Model& m) const {
    auto get_i = [&](const std::string& n, int64_t def = 0) {
      auto it = m.find(n);
      return it == m.end() || it->second.is_bool ? def : it->second.i;
    };
    auto get_b = [&](const std::string& n, bool def = false) {
      auto it = m.find(n);
      return it == m.end() || !it->second.is_bool ? def : it->second.b;
    };
    DecodedModel d;
    d.plan = plan_;
    d.partitions = cfg_.partitions;
    for (size_t i = 0; i < plan_.size(); ++i) {
      std::vector<int64_t> args;
      for (auto& p : txn(i).params) args.push_back(get_i(arg_name(i, p)));
      d.args.push_back(args);
      std::map<int, int64_t> anys;
      for (int k = 0; k < unrolled(i).any_count; ++k) anys[k] = get_i(any_name(i, k));
      d.anys.push_back(anys);
    }
    for (size_t a = 0; a < nodes_.size(); ++a) {
      DecodedNode n;
      n.instance = nodes_[a].inst;
      n.site = nodes_[a].site;
      n.active = get_b(act(a));
      n.ts = get_i(ts(a));
      n.tau = static_cast<int>(get_i(tau(a)));
      for (int p = 0; p < cfg_.partitions; ++p) n.deliv.push_back(plan_[n.instance].serial || get_b(dl(a, p)));
      d.nodes.push_back(n);
    }
    for (size_t ti = 0; ti < schema_.tables.size(); ++ti) {
      auto& t = schema_.tables[ti];
      std::vector<DecodedSlot> slots;
      for (int r = 0; r < cfg_.records; ++r) {
        DecodedSlot s;
        s.alive = get_b(ialive(ti, r));
        s.touched = get_b(touched(ti, r));
        for (auto& f : t.fields) s.values[f] = get_i(init_name(ti, r, f));
        slots.push_back(s);
      }
      d.slots[t.name] = slots;
    }
    for (int i = 0; i < cq_.length; ++i) {
      d.cycle_nodes.push_back(static_cast<int>(get_i(cp(i))));
      d.cycle_kinds.push_back(kind_from_code(get_i(ck(i))));
      int64_t f = get_i(cf(i), -1);
      d.cycle_fields.push_back(d.cycle_kinds.back() == EdgeKind::ST || f < 0 ? "" : field_names_.at(f));
    }
    return d;
  }

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  using Term = smt::Term;

  struct Node {
    int inst = 0;
    int site = 0;  // 1-based
  };

  struct Val {
    Term v;
    Term fault;
  };

  struct Ctx {
    int inst = 0;
    int point = 0;
    int node = -1;  // executing node, for this.f
    int slot = -1;
    std::optional<Term> it;
    std::vector<std::pair<std::string, int>>* uses = nullptr;  // (var, point) pairs consumed
  };

  // ------------------------------------------------------------ naming
  const Transaction& txn(size_t i) const { return *prog_.find(plan_[i].txn); }
  const UnrolledTxn& unrolled(size_t i) const { return unrolled_.at(plan_[i].txn); }
  const Site& site_of(int a) const { return unrolled(nodes_[a].inst).sites[nodes_[a].site - 1]; }
  const TableDef& table_of(int a) const { return *schema_.find(site_of(a).query.table); }
  int table_index(const std::string& name) const {
    for (size_t i = 0; i < schema_.tables.size(); ++i)
      if (schema_.tables[i].name == name) return static_cast<int>(i);
    return -1;
  }
  int node_id(int inst, int site) const { return first_[inst] + site - 1; }

  std::string nn(int a) const { return std::to_string(nodes_[a].inst) + "_" + std::to_string(nodes_[a].site); }
  std::string fid(int ti, const std::string& f) const {
    auto& t = schema_.tables[ti];
    if (f == kAlive) return "t" + std::to_string(ti) + "_al";
    return "t" + std::to_string(ti) + "_f" + std::to_string(t.field_index(f));
  }
  Term ts(int a) const { return "ts_" + nn(a); }
  Term tau(int a) const { return "tau_" + nn(a); }
  Term act(int a) const { return "lam_" + nn(a); }
  Term dl(int a, int p) const { return "dl_" + nn(a) + "_" + std::to_string(p); }
  Term vis(int a, int b) const { return "vis_" + nn(a) + "__" + nn(b); }
  Term ar(int a, int b) const { return "ar_" + nn(a) + "__" + nn(b); }
  Term match(int a, int r) const { return "m_" + nn(a) + "_r" + std::to_string(r); }
  Term size_of(int a) const { return "sz_" + nn(a); }
  Term rank(int a, int r) const { return "rk_" + nn(a) + "_r" + std::to_string(r); }
  Term keyeq(int a, int r) const { return "ke_" + nn(a) + "_r" + std::to_string(r); }
  Term wval(int a, const std::string& f) const { return "wv_" + nn(a) + "_" + fid(table_index(site_of(a).query.table), f); }
  Term writes(int a, int r, const std::string& f) const {
    return "w_" + nn(a) + "_r" + std::to_string(r) + "_" + fid(table_index(site_of(a).query.table), f);
  }
  Term reads(int a, int r, const std::string& f) const {
    return "rd_" + nn(a) + "_r" + std::to_string(r) + "_" + fid(table_index(site_of(a).query.table), f);
  }
  Term src(int a, int r, const std::string& f) const {
    return "src_" + nn(a) + "_r" + std::to_string(r) + "_" + fid(table_index(site_of(a).query.table), f);
  }
  Term view(int a, int r, const std::string& f) const {
    return "val_" + nn(a) + "_r" + std::to_string(r) + "_" + fid(table_index(site_of(a).query.table), f);
  }
  Term used(int a) const { return "used_" + nn(a); }
  Term guard(size_t i, int g) const { return "g_" + std::to_string(i) + "_" + std::to_string(g); }
  Term count_name(size_t i, int loop) const { return "cnt_" + std::to_string(i) + "_" + std::to_string(loop); }
  std::string arg_name(size_t i, const std::string& p) const { return "arg_" + std::to_string(i) + "_" + p; }
  std::string any_name(size_t i, int k) const { return "any_" + std::to_string(i) + "_" + std::to_string(k); }
  std::string key_name(int ti, int r, int j) const {
    return "key_t" + std::to_string(ti) + "_r" + std::to_string(r) + "_" + std::to_string(j);
  }
  std::string init_name(int ti, int r, const std::string& f) const {
    auto& t = schema_.tables[ti];
    int kp = t.key_position(f);
    if (kp >= 0) return key_name(ti, r, kp);
    return "init_" + fid(ti, f) + "_r" + std::to_string(r);
  }
  std::string ialive(int ti, int r) const { return "ial_t" + std::to_string(ti) + "_r" + std::to_string(r); }
  Term init_val(int ti, int r, const std::string& f) const {
    if (f == kAlive) return smt::ite(ialive(ti, r), "1", "0");
    return init_name(ti, r, f);
  }
  Term inU(int ti, int r) const { return "inu_t" + std::to_string(ti) + "_r" + std::to_string(r); }
  Term touched(int ti, int r) const { return "tch_t" + std::to_string(ti) + "_r" + std::to_string(r); }
  Term cp(int i) const { return "cyc_pos_" + std::to_string(i); }
  Term ck(int i) const { return "cyc_kind_" + std::to_string(i); }
  Term cf(int i) const { return "cyc_field_" + std::to_string(i); }

  void def(const std::string& name, const std::string& sort, const Term& body) {
    pb_.declare(name, sort);
    pb_.assert_(smt::eq(name, body));
  }

  // ------------------------------------------------------------ setup
  void setup() {
    for (auto& ip : plan_) {
      auto* t = prog_.find(ip.txn);
      if (!t) throw EncodeError("unknown transaction type " + ip.txn);
      if (!unrolled_.count(ip.txn)) unrolled_[ip.txn] = unroll(*t, cfg_.unroll);
    }
    for (auto& [name, u] : unrolled_)
      for (auto& s : u.sites)
        if (s.query.kind == QueryKind::SelectAgg)
          throw EncodeError("aggregate SELECT in " + name + ".O" + std::to_string(s.ordinal) + " cannot be encoded");
    for (size_t i = 0; i < plan_.size(); ++i) {
      first_.push_back(static_cast<int>(nodes_.size()));
      for (auto& s : unrolled(i).sites) nodes_.push_back({static_cast<int>(i), s.ordinal});
    }
    first_.push_back(static_cast<int>(nodes_.size()));
    if (nodes_.size() > 400) throw EncodeError("too many query nodes for the encoding bounds");
    for (size_t ti = 0; ti < schema_.tables.size(); ++ti)
      for (auto& f : schema_.tables[ti].all_fields()) {
        field_ids_[{schema_.tables[ti].name, f}] = static_cast<int>(field_names_.size());
        field_names_.push_back(schema_.tables[ti].name + "." + f);
      }
    for (size_t a = 0; a < nodes_.size(); ++a)
      if (!plan_[nodes_[a].inst].serial) cycle_nodes_.push_back(static_cast<int>(a));
  }

  bool is_pk_eq(int a) const {
    auto& q = site_of(a).query;
    return q.kind != QueryKind::Insert && pk_equality(q.where, table_of(a)).has_value();
  }

  // fields whose view the node needs
  std::vector<std::string> view_fields(int a) const {
    auto& q = site_of(a).query;
    auto& t = table_of(a);
    std::set<std::string> fs;
    if (q.kind != QueryKind::Insert) {
      fs.insert(kAlive);
      if (!is_pk_eq(a)) {
        auto w = where_fields(q.where);
        fs.insert(w.begin(), w.end());
      }
    }
    if (q.kind == QueryKind::Select) fs.insert(q.field);
    std::vector<std::string> out;
    for (auto& f : t.all_fields())
      if (fs.count(f)) out.push_back(f);
    return out;
  }

  // fields the node may write
  std::vector<std::string> write_fields(int a) const {
    auto& q = site_of(a).query;
    switch (q.kind) {
      case QueryKind::Update: return {q.field};
      case QueryKind::Delete: return {kAlive};
      case QueryKind::Insert: return table_of(a).all_fields();
      default: return {};
    }
  }

  // fields the node may read as effects
  std::vector<std::string> read_fields(int a) const {
    auto& q = site_of(a).query;
    std::set<std::string> fs;
    if (q.kind == QueryKind::Insert) return {};
    if (!is_pk_eq(a)) {
      auto w = where_fields(q.where);
      fs.insert(w.begin(), w.end());
    }
    if (q.kind == QueryKind::Select) fs.insert(q.field);
    std::vector<std::string> out;
    for (auto& f : table_of(a).all_fields())
      if (fs.count(f)) out.push_back(f);
    return out;
  }

  bool writes_field(int a, const std::string& table, const std::string& f) const {
    if (site_of(a).query.table != table) return false;
    auto ws = write_fields(a);
    return std::find(ws.begin(), ws.end(), f) != ws.end();
  }
  bool reads_field(int a, const std::string& table, const std::string& f) const {
    if (site_of(a).query.table != table) return false;
    auto rs = read_fields(a);
    return std::find(rs.begin(), rs.end(), f) != rs.end();
  }

  // ------------------------------------------------------------ expressions
  // select sites binding v visible at `point` (ordinal <= point), latest first
  std::vector<int> binders(int inst, const std::string& v, int point) const {
    std::vector<int> out;
    for (int s = point; s >= 1; --s) {
      auto& q = unrolled(inst).sites[s - 1].query;
      if (q.kind == QueryKind::Select && q.var == v) out.push_back(node_id(inst, s));
    }
    return out;
  }

  Term slot_value(int c, int r, const std::string& f) const {
    auto& t = table_of(c);
    int kp = t.key_position(f);
    if (kp >= 0) return key_name(table_index(t.name), r, kp);
    return view(c, r, f);
  }

  Val enc(const ExprP& e, const Ctx& cx) {
    using namespace smt;
    auto bin = [&](const char* op) {
      auto a = enc(e->kids[0], cx), b = enc(e->kids[1], cx);
      return Val{app(op, {a.v, b.v}), or_({a.fault, b.fault})};
    };
    switch (e->op) {
      case Op::Const: return {num(e->value), "false"};
      case Op::Arg: return {arg_name(cx.inst, e->name), "false"};
      case Op::Any: return {any_name(cx.inst, e->any_id), "false"};
      case Op::It:
        if (!cx.it) throw EncodeError("'it' outside any{}");
        return {*cx.it, "false"};
      case Op::Iter: throw EncodeError("iter survived unrolling");
      case Op::True: return {"true", "false"};
      case Op::False: return {"false", "false"};
      case Op::This: {
        if (cx.node < 0 || cx.slot < 0) throw EncodeError("this.f outside WHERE");
        return {slot_value(cx.node, cx.slot, e->field), "false"};
      }
      case Op::Size: {
        if (cx.uses) cx.uses->push_back({e->name, cx.point});
        auto bs = binders(cx.inst, e->name, cx.point);
        Term v = "0";
        std::vector<Term> any;
        for (auto it = bs.rbegin(); it != bs.rend(); ++it) v = ite(act(*it), size_of(*it), v);
        for (int b : bs) any.push_back(act(b));
        return {v, not_(or_(any))};
      }
      case Op::Proj: {
        if (cx.uses) cx.uses->push_back({e->name, cx.point});
        auto idx = enc(e->kids[0], cx);
        auto bs = binders(cx.inst, e->name, cx.point);
        Term v = "0", oob = "true";
        std::vector<Term> any;
        for (auto it = bs.rbegin(); it != bs.rend(); ++it) {
          int c = *it;
          Term pv = "0";
          for (int r = cfg_.records - 1; r >= 0; --r)
            pv = ite(and_({match(c, r), eq(rank(c, r), idx.v)}), slot_value(c, r, e->field), pv);
          v = ite(act(c), pv, v);
          oob = ite(act(c), or_({lt(idx.v, "1"), lt(size_of(c), idx.v)}), oob);
        }
        for (int b : bs) any.push_back(act(b));
        return {v, or_({idx.fault, not_(or_(any)), oob})};
      }
      case Op::Add: return bin("+");
      case Op::Sub: return bin("-");
      case Op::Mul: return bin("*");
      case Op::Div: {
        auto a = enc(e->kids[0], cx), b = enc(e->kids[1], cx);
        return {tdiv(a.v, b.v), or_({a.fault, b.fault, eq(b.v, "0")})};
      }
      case Op::Neg: {
        auto a = enc(e->kids[0], cx);
        return {"(- " + a.v + ")", a.fault};
      }
      case Op::Not: {
        auto a = enc(e->kids[0], cx);
        return {not_(a.v), a.fault};
      }
      case Op::And: {
        auto a = enc(e->kids[0], cx), b = enc(e->kids[1], cx);
        return {and_({a.v, b.v}), or_({a.fault, b.fault})};
      }
      case Op::Or: {
        auto a = enc(e->kids[0], cx), b = enc(e->kids[1], cx);
        return {or_({a.v, b.v}), or_({a.fault, b.fault})};
      }
      case Op::Lt: return bin("<");
      case Op::Le: return bin("<=");
      case Op::Eq: return bin("=");
      case Op::Gt: return bin(">");
      case Op::Ge: return bin(">=");
    }
    throw EncodeError("unsupported expression");
  }

  // ------------------------------------------------------------ phi_context
  struct Consumer {
    int inst;
    int point;
    std::string var;
    Term evaluated;
    int node;  // consuming site, -1 for guards
  };

  void encode_context() {
    using namespace smt;
    pb_.comment("phi_context");
    int n = node_count();
    int P = cfg_.partitions;

    // arguments and abstract values
    for (size_t i = 0; i < plan_.size(); ++i) {
      for (auto& p : txn(i).params) pb_.declare(arg_name(i, p), "Int");
      for (int k = 0; k < unrolled(i).any_count; ++k) {
        pb_.declare(any_name(i, k), "Int");
        Ctx cx;
        cx.inst = static_cast<int>(i);
        cx.it = any_name(i, k);
        auto c = enc(unrolled(i).any_constraints[k], cx);
        pb_.assert_(and_({c.v, not_(c.fault)}));
      }
    }

    // records
    for (size_t ti = 0; ti < schema_.tables.size(); ++ti) {
      auto& t = schema_.tables[ti];
      for (int r = 0; r < cfg_.records; ++r) {
        pb_.declare(ialive(ti, r), "Bool");
        for (auto& f : t.fields) pb_.declare(init_name(ti, r, f), "Int");
        // a dead slot carries zeros outside its key
        for (auto& f : t.fields)
          if (!t.is_key(f)) pb_.assert_(implies(not_(ialive(ti, r)), eq(init_name(ti, r, f), "0")));
      }
      for (int r = 0; r < cfg_.records; ++r)
        for (int r2 = r + 1; r2 < cfg_.records; ++r2) {
          std::vector<Term> diff;
          for (size_t j = 0; j < t.primary_key.size(); ++j)
            diff.push_back(not_(eq(key_name(ti, r, j), key_name(ti, r2, j))));
          pb_.assert_(or_(diff));
        }
    }

    // nodes
    for (int a = 0; a < n; ++a) {
      pb_.declare(ts(a), "Int");
      pb_.declare(tau(a), "Int");
      pb_.declare(act(a), "Bool");
      pb_.assert_(le("0", ts(a)));
      pb_.assert_(and_({le("0", tau(a)), lt(tau(a), std::to_string(P))}));
      for (int p = 0; p < P; ++p) {
        pb_.declare(dl(a, p), "Bool");
        pb_.assert_(implies(eq(tau(a), std::to_string(p)), dl(a, p)));
      }
      if (plan_[nodes_[a].inst].serial) {
        pb_.assert_(eq(tau(a), "0"));
        for (int p = 0; p < P; ++p) pb_.assert_(dl(a, p));
      }
    }
    std::vector<Term> all_ts;
    for (int a = 0; a < n; ++a) all_ts.push_back(ts(a));
    pb_.assert_(distinct(all_ts));
    for (size_t i = 0; i < plan_.size(); ++i)
      for (int a = first_[i]; a + 1 < first_[i + 1]; ++a) pb_.assert_(lt(ts(a), ts(a + 1)));
    // serial instances run one after another, before every cycle instance
    {
      int prev_last = -1;
      for (size_t i = 0; i < plan_.size(); ++i) {
        if (!plan_[i].serial || first_[i] == first_[i + 1]) continue;
        if (prev_last >= 0) pb_.assert_(lt(ts(prev_last), ts(first_[i])));
        prev_last = first_[i + 1] - 1;
      }
      if (prev_last >= 0)
        for (int a : cycle_nodes_) pb_.assert_(lt(ts(prev_last), ts(a)));
    }

    // visibility and arbitration
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        pb_.declare(vis(a, b), "Bool");
        pb_.declare(ar(a, b), "Bool");
        pb_.assert_(eq(ar(a, b), and_({act(a), act(b), lt(ts(a), ts(b))})));
        Term seen = "true";
        if (nodes_[a].inst != nodes_[b].inst) {
          std::vector<Term> xs;
          for (int p = 0; p < P; ++p) xs.push_back(and_({eq(tau(b), std::to_string(p)), dl(a, p)}));
          seen = or_(xs);
        }
        pb_.assert_(eq(vis(a, b), and_({ar(a, b), seen})));
      }

    // universe membership per slot
    for (size_t ti = 0; ti < schema_.tables.size(); ++ti)
      for (int r = 0; r < cfg_.records; ++r) {
        pb_.declare(inU(ti, r), "Bool");
        pb_.declare(touched(ti, r), "Bool");
      }
    for (int a = 0; a < n; ++a) declare_node(a);

    // per-node definitions in program order: guards, activity, matches, writes
    std::vector<Consumer> consumers;
    for (size_t i = 0; i < plan_.size(); ++i) {
      auto& u = unrolled(i);
      std::map<int, Term> loop_count;
      std::vector<int> guard_sites(u.guards.size(), 0);
      for (auto& s : u.sites)
        for (int g = s.guard; g >= 0; g = u.guards[g].parent) guard_sites[g]++;
      size_t gi = 0;
      for (int s = 0; s <= static_cast<int>(u.sites.size()); ++s) {
        while (gi < u.guards.size() && u.guards[gi].point == s) {
          encode_guard(i, static_cast<int>(gi), loop_count, guard_sites[gi] > 0, consumers);
          ++gi;
        }
        if (s == static_cast<int>(u.sites.size())) break;
        int a = node_id(static_cast<int>(i), s + 1);
        auto& st = u.sites[s];
        pb_.assert_(eq(act(a), st.guard < 0 ? "true" : guard(i, st.guard)));
      }
    }

    for (size_t ti = 0; ti < schema_.tables.size(); ++ti)
      for (int r = 0; r < cfg_.records; ++r) {
        std::vector<Term> xs{ialive(ti, r)};
        for (int a = 0; a < n; ++a)
          if (site_of(a).query.kind == QueryKind::Insert && table_index(site_of(a).query.table) == static_cast<int>(ti))
            xs.push_back(keyeq(a, r));
        pb_.assert_(eq(inU(ti, r), or_(xs)));
      }
    for (int a = 0; a < n; ++a) define_node(a, consumers);
    // slots some active query looks at
    for (size_t ti = 0; ti < schema_.tables.size(); ++ti)
      for (int r = 0; r < cfg_.records; ++r) {
        std::vector<Term> xs;
        for (int a = 0; a < n; ++a)
          if (table_index(site_of(a).query.table) == static_cast<int>(ti)) xs.push_back(touch_[{a, r}]);
        pb_.assert_(eq(touched(ti, r), or_(xs)));
      }
    for (int a = 0; a < n; ++a) define_views(a);

    // unused reads
    define_used(consumers);
  }

  void encode_guard(size_t i, int g, std::map<int, Term>& loop_count, bool has_sites, std::vector<Consumer>& consumers) {
    using namespace smt;
    auto& gd = unrolled(i).guards[g];
    Term parent = gd.parent < 0 ? "true" : guard(i, gd.parent);
    Term evaluated = has_sites ? parent : "false";
    std::vector<std::pair<std::string, int>> uses;
    Ctx cx;
    cx.inst = static_cast<int>(i);
    cx.point = gd.point;
    cx.uses = &uses;
    Term value;
    if (gd.kind == Guard::If) {
      auto c = enc(gd.cond, cx);
      pb_.assert_(implies(evaluated, not_(c.fault)));
      value = c.v;
    } else {
      auto it = loop_count.find(gd.loop_id);
      if (it == loop_count.end()) {
        auto c = enc(gd.cond, cx);
        def(count_name(i, gd.loop_id), "Int", c.v);
        pb_.assert_(implies(evaluated, and_({not_(c.fault), le(count_name(i, gd.loop_id), std::to_string(cfg_.unroll))})));
        it = loop_count.emplace(gd.loop_id, count_name(i, gd.loop_id)).first;
      } else {
        uses.clear();
      }
      value = le(std::to_string(gd.copy), it->second);
    }
    for (auto& [v, p] : uses) consumers.push_back({static_cast<int>(i), p, v, evaluated, -1});
    def(guard(i, g), "Bool", and_({parent, value}));
  }

  void declare_node(int a) {
    auto& q = site_of(a).query;
    int ti = table_index(q.table);
    for (int r = 0; r < cfg_.records; ++r) {
      pb_.declare(match(a, r), "Bool");
      if (q.kind == QueryKind::Insert) pb_.declare(keyeq(a, r), "Bool");
      for (auto& f : view_fields(a)) {
        pb_.declare(src(a, r, f), "Int");
        pb_.declare(view(a, r, f), "Int");
      }
      for (auto& f : write_fields(a)) pb_.declare(writes(a, r, f), "Bool");
    }
    (void)ti;
    for (auto& f : write_fields(a)) pb_.declare(wval(a, f), "Int");
    if (q.kind == QueryKind::Select) {
      pb_.declare(size_of(a), "Int");
      for (int r = 0; r < cfg_.records; ++r) pb_.declare(rank(a, r), "Int");
    }
  }

  void define_node(int a, std::vector<Consumer>& consumers) {
    using namespace smt;
    auto& q = site_of(a).query;
    auto& t = table_of(a);
    int ti = table_index(t.name);
    int inst = nodes_[a].inst;
    Ctx cx;
    cx.inst = inst;
    cx.point = nodes_[a].site - 1;
    std::vector<std::pair<std::string, int>> uses;
    cx.uses = &uses;

    if (q.kind == QueryKind::Insert) {
      std::map<std::string, Val> vals;
      std::vector<Term> faults;
      for (auto& [f, e] : q.values) {
        vals[f] = enc(e, cx);
        faults.push_back(vals[f].fault);
      }
      pb_.assert_(implies(act(a), not_(or_(faults))));
      for (auto& f : t.fields) pb_.assert_(eq(wval(a, f), vals[f].v));
      pb_.assert_(eq(wval(a, kAlive), "1"));
      std::vector<Term> hit;
      for (int r = 0; r < cfg_.records; ++r) {
        std::vector<Term> ks;
        for (size_t j = 0; j < t.primary_key.size(); ++j)
          ks.push_back(eq(key_name(ti, r, j), vals[t.primary_key[j]].v));
        def(keyeq(a, r), "Bool", and_(ks));
        hit.push_back(keyeq(a, r));
        touch_[{a, r}] = and_({act(a), keyeq(a, r)});
        pb_.assert_(eq(match(a, r), and_({act(a), keyeq(a, r)})));
        for (auto& f : write_fields(a)) pb_.assert_(eq(writes(a, r, f), match(a, r)));
      }
      // inserted keys must be one of the record slots
      pb_.assert_(implies(act(a), or_(hit)));
      for (auto& [v, p] : uses) consumers.push_back({inst, p, v, act(a), a});
      return;
    }

    if (auto keys = pk_equality(q.where, t)) {
      std::vector<Term> kv, faults;
      for (auto& k : *keys) {
        auto v = enc(k, cx);
        kv.push_back(v.v);
        faults.push_back(v.fault);
      }
      pb_.assert_(implies(act(a), not_(or_(faults))));
      for (int r = 0; r < cfg_.records; ++r) {
        std::vector<Term> ks{act(a), eq(view(a, r, kAlive), "1")};
        for (size_t j = 0; j < kv.size(); ++j) ks.push_back(eq(key_name(ti, r, j), kv[j]));
        pb_.assert_(eq(match(a, r), and_(ks)));
        ks.erase(ks.begin() + 1);
        touch_[{a, r}] = and_(ks);
      }
      for (auto& [v, p] : uses) consumers.push_back({inst, p, v, act(a), a});
    } else {
      std::vector<Term> any_alive;
      size_t before = uses.size();
      for (int r = 0; r < cfg_.records; ++r) {
        Ctx rc = cx;
        rc.node = a;
        rc.slot = r;
        if (r > 0) rc.uses = nullptr;
        auto w = enc(q.where, rc);
        Term live = and_({act(a), inU(ti, r), eq(view(a, r, kAlive), "1")});
        any_alive.push_back(live);
        touch_[{a, r}] = and_({act(a), inU(ti, r)});
        pb_.assert_(implies(live, not_(w.fault)));
        pb_.assert_(eq(match(a, r), and_({live, w.v})));
      }
      Term evaluated = or_(any_alive);
      for (size_t k = before; k < uses.size(); ++k) consumers.push_back({inst, uses[k].second, uses[k].first, evaluated, a});
    }
    uses.clear();

    if (q.kind == QueryKind::Update) {
      auto v = enc(q.value, cx);
      pb_.assert_(implies(act(a), not_(v.fault)));
      pb_.assert_(eq(wval(a, q.field), v.v));
      for (auto& [var, p] : uses) consumers.push_back({inst, p, var, act(a), a});
    } else if (q.kind == QueryKind::Delete) {
      pb_.assert_(eq(wval(a, kAlive), "0"));
    }
    for (auto& f : write_fields(a))
      for (int r = 0; r < cfg_.records; ++r) pb_.assert_(eq(writes(a, r, f), match(a, r)));

    if (q.kind == QueryKind::Select) {
      std::vector<Term> cnt;
      for (int r = 0; r < cfg_.records; ++r) cnt.push_back(ite(match(a, r), "1", "0"));
      pb_.assert_(eq(size_of(a), cnt.size() == 1 ? cnt[0] : app("+", cnt)));
      for (int r = 0; r < cfg_.records; ++r) {
        std::vector<Term> below{"1"};
        for (int r2 = 0; r2 < cfg_.records; ++r2)
          if (r2 != r) below.push_back(ite(and_({match(a, r2), key_less(ti, r2, r)}), "1", "0"));
        pb_.assert_(eq(rank(a, r), app("+", below)));
      }
    }
  }

  Term key_less(int ti, int r1, int r2) const {
    using namespace smt;
    auto& t = schema_.tables[ti];
    // lexicographic over the key tuple
    Term out = "false";
    for (int j = static_cast<int>(t.primary_key.size()) - 1; j >= 0; --j) {
      Term a = key_name(ti, r1, j), b = key_name(ti, r2, j);
      out = or_({lt(a, b), and_({eq(a, b), out})});
    }
    return out;
  }

  // candidate writers of (table, f)
  std::vector<int> writers(const std::string& table, const std::string& f) const {
    std::vector<int> out;
    for (int a = 0; a < node_count(); ++a)
      if (writes_field(a, table, f)) out.push_back(a);
    return out;
  }

  void define_views(int a) {
    using namespace smt;
    auto& t = table_of(a);
    int ti = table_index(t.name);
    for (auto& f : view_fields(a)) {
      auto ws = writers(t.name, f);
      for (int r = 0; r < cfg_.records; ++r) {
        Term s = src(a, r, f);
        std::vector<Term> choice{eq(s, "(- 1)")};
        Term v = init_val(ti, r, f);
        for (int w : ws) {
          if (w == a) continue;
          Term cand = and_({writes(w, r, f), vis(w, a)});
          pb_.assert_(implies(cand, le(ts(w), s)));
          choice.push_back(and_({cand, eq(s, ts(w))}));
          v = ite(eq(s, ts(w)), wval(w, f), v);
        }
        pb_.assert_(or_(choice));
        pb_.assert_(eq(view(a, r, f), v));
      }
    }
    // read effects
    auto& q = site_of(a).query;
    bool scan = q.kind != QueryKind::Insert && !is_pk_eq(a);
    auto wf = scan ? where_fields(q.where) : std::set<std::string>{};
    for (auto& f : read_fields(a))
      for (int r = 0; r < cfg_.records; ++r) {
        std::vector<Term> xs;
        if (wf.count(f)) xs.push_back(and_({act(a), inU(ti, r)}));
        if (q.kind == QueryKind::Select && f == q.field) xs.push_back(match(a, r));
        def(reads(a, r, f), "Bool", or_(xs));
      }
  }

  void define_used(const std::vector<Consumer>& consumers) {
    using namespace smt;
    for (int c = 0; c < node_count(); ++c) {
      auto& q = site_of(c).query;
      if (q.kind != QueryKind::Select) continue;
      int inst = nodes_[c].inst;
      int ord = nodes_[c].site;
      std::vector<Term> xs;
      std::map<int, std::vector<Term>> by_consumer;
      for (auto& u : consumers) {
        if (u.inst != inst || u.var != q.var || u.point < ord) continue;
        std::vector<Term> shadow;
        for (int s2 = ord + 1; s2 <= u.point; ++s2) {
          auto& q2 = unrolled(inst).sites[s2 - 1].query;
          if (q2.kind == QueryKind::Select && q2.var == q.var) shadow.push_back(act(node_id(inst, s2)));
        }
        Term t = and_({u.evaluated, act(c), not_(or_(shadow))});
        xs.push_back(t);
        if (u.node >= 0) by_consumer[u.node].push_back(t);
      }
      def(used(c), "Bool", or_(xs));
      // no dataflow from c into a later query of the same instance
      for (int b = c + 1; b < first_[inst + 1]; ++b) {
        auto it = by_consumer.find(b);
        def("stp_" + nn(c) + "__" + nn(b), "Bool", not_(it == by_consumer.end() ? "false" : or_(it->second)));
      }
    }
  }

  // ------------------------------------------------------------ phi_db
  void encode_db() {
    using namespace smt;
    pb_.comment("phi_db: " + to_string(cfg_.spec));
    int n = node_count();
    auto terms = guarantee_terms(
        cfg_.spec, n, [&](int a, int b) { return a == b ? Term("false") : vis(a, b); },
        [&](int a, int b) { return a == b ? Term("false") : ar(a, b); }, [&](int a) { return act(a); },
        [&](int a, int b) { return nodes_[a].inst == nodes_[b].inst; });
    for (auto& t : terms) pb_.assert_(t);
    if (!cfg_.apply_init) return;
    pb_.comment("initial-state constraints");
    for (auto& c : cfg_.init) {
      int ti = table_index(c.table);
      if (ti < 0) throw EncodeError("init constraint on unknown table " + c.table);
      for (int r = 0; r < cfg_.records; ++r) {
        if (c.empty) {
          pb_.assert_(not_(ialive(ti, r)));
          continue;
        }
        auto v = enc_init(c.where, ti, r);
        pb_.assert_(implies(ialive(ti, r), v));
      }
    }
  }

  Term enc_init(const ExprP& e, int ti, int r) {
    using namespace smt;
    auto rec = [&](const ExprP& x) { return enc_init(x, ti, r); };
    switch (e->op) {
      case Op::Const: return num(e->value);
      case Op::This: {
        if (e->field == kAlive) throw EncodeError("init constraint on alive");
        if (!schema_.tables[ti].has_field(e->field)) throw EncodeError("init constraint on unknown field " + e->field);
        return init_name(ti, r, e->field);
      }
      case Op::True: return "true";
      case Op::False: return "false";
      case Op::Not: return not_(rec(e->kids[0]));
      case Op::And: return and_({rec(e->kids[0]), rec(e->kids[1])});
      case Op::Or: return or_({rec(e->kids[0]), rec(e->kids[1])});
      case Op::Neg: return "(- " + rec(e->kids[0]) + ")";
      case Op::Add: return app("+", {rec(e->kids[0]), rec(e->kids[1])});
      case Op::Sub: return app("-", {rec(e->kids[0]), rec(e->kids[1])});
      case Op::Mul: return app("*", {rec(e->kids[0]), rec(e->kids[1])});
      case Op::Lt: return app("<", {rec(e->kids[0]), rec(e->kids[1])});
      case Op::Le: return app("<=", {rec(e->kids[0]), rec(e->kids[1])});
      case Op::Eq: return app("=", {rec(e->kids[0]), rec(e->kids[1])});
      case Op::Gt: return app(">", {rec(e->kids[0]), rec(e->kids[1])});
      case Op::Ge: return app(">=", {rec(e->kids[0]), rec(e->kids[1])});
      default: throw EncodeError("unsupported operator in init constraint");
    }
  }

  // ------------------------------------------------------------ phi_dep
  std::string dep_name(EdgeKind k, int fid_, int a, int b) const {
    std::string kn = k == EdgeKind::WR ? "wr" : k == EdgeKind::WW ? "ww" : "rw";
    return kn + "_f" + std::to_string(fid_) + "_" + nn(a) + "__" + nn(b);
  }

  // per-slot witness of D(a,b) on field f
  Term mu(EdgeKind k, int a, int b, const std::string& f, int r) const {
    using namespace smt;
    switch (k) {
      case EdgeKind::WR: return and_({reads(b, r, f), eq(src(b, r, f), ts(a))});
      case EdgeKind::RW: return and_({reads(a, r, f), writes(b, r, f), lt(src(a, r, f), ts(b))});
      case EdgeKind::WW: return and_({writes(a, r, f), writes(b, r, f), lt(ts(a), ts(b))});
      default: return "false";
    }
  }

  // value of field f seen or written by the endpoint, for distinctness
  Term edge_values_differ(EdgeKind k, int a, int b, const std::string& f, int r) const {
    using namespace smt;
    if (k == EdgeKind::RW) return not_(eq(view(a, r, f), wval(b, f)));
    if (k == EdgeKind::WW) return not_(eq(wval(a, f), wval(b, f)));
    return "true";
  }

  void encode_dependencies() {
    using namespace smt;
    pb_.comment("phi_dep-> and phi_->dep");
    for (int a : cycle_nodes_)
      for (int b : cycle_nodes_) {
        if (nodes_[a].inst == nodes_[b].inst) continue;
        auto& qa = site_of(a).query;
        auto& qb = site_of(b).query;
        if (qa.table != qb.table) continue;
        int ti = table_index(qa.table);
        for (auto& f : schema_.tables[ti].all_fields()) {
          int id = field_ids_.at({qa.table, f});
          for (EdgeKind k : {EdgeKind::WR, EdgeKind::WW, EdgeKind::RW}) {
            bool ok = k == EdgeKind::WR   ? writes_field(a, qa.table, f) && reads_field(b, qb.table, f)
                      : k == EdgeKind::WW ? writes_field(a, qa.table, f) && writes_field(b, qb.table, f)
                                          : reads_field(a, qa.table, f) && writes_field(b, qb.table, f);
            if (!ok) continue;
            std::string name = dep_name(k, id, a, b);
            std::string kn = k == EdgeKind::WR ? "wr" : k == EdgeKind::WW ? "ww" : "rw";
            pb_.comment("rule " + kn + "-" + to_string(qa.kind) + "-" + to_string(qb.kind) + " " + plan_[nodes_[a].inst].txn +
                        ".O" + std::to_string(nodes_[a].site) + " -> " + plan_[nodes_[b].inst].txn + ".O" +
                        std::to_string(nodes_[b].site) + " on " + field_names_[id]);
            std::vector<Term> slots, strict;
            for (int r = 0; r < cfg_.records; ++r) {
              slots.push_back(mu(k, a, b, f, r));
              if (f != kAlive) strict.push_back(and_({slots.back(), edge_values_differ(k, a, b, f, r)}));
              else strict.push_back(slots.back());
            }
            Term m = or_(slots);
            if (cfg_.internal_only) {
              if (k == EdgeKind::WR && qb.kind == QueryKind::Select) m = and_({m, used(b)});
              if (k == EdgeKind::RW && qa.kind == QueryKind::Select) m = and_({m, used(a)});
            }
            pb_.declare(name, "Bool");
            pb_.assert_(implies(name, m));
            pb_.assert_(implies(m, name));
            Term edge = and_({name, or_(strict)});
            deps_[{a, b}].push_back({k, id, edge});
          }
        }
      }
  }

  // ------------------------------------------------------------ phi_anomaly
  Term at_type_site(int i, const std::string& t, int site) const {
    std::vector<Term> xs;
    for (int a : cycle_nodes_)
      if (plan_[nodes_[a].inst].txn == t && (site == 0 || nodes_[a].site == site)) xs.push_back(smt::eq(cp(i), std::to_string(a)));
    return smt::or_(xs);
  }

  int field_id(const std::string& name) const {
    for (size_t i = 0; i < field_names_.size(); ++i)
      if (field_names_[i] == name) return static_cast<int>(i);
    return -2;
  }

  void encode_anomaly() {
    using namespace smt;
    int k = cq_.length;
    pb_.comment("phi_anomaly: cycle of length " + std::to_string(k));
    for (int i = 0; i < k; ++i) {
      pb_.declare(cp(i), "Int");
      pb_.declare(ck(i), "Int");
      pb_.declare(cf(i), "Int");
      std::vector<Term> dom;
      for (int a : cycle_nodes_) dom.push_back(and_({eq(cp(i), std::to_string(a)), act(a)}));
      pb_.assert_(or_(dom));
      pb_.assert_(and_({le("0", ck(i)), le(ck(i), "3")}));
    }
    std::vector<Term> cps;
    for (int i = 0; i < k; ++i) cps.push_back(cp(i));
    pb_.assert_(distinct(cps));
    pb_.assert_(not_(eq(ck(0), "3")));
    pb_.assert_(not_(eq(ck(k - 2), "3")));
    pb_.assert_(eq(ck(k - 1), "3"));
    for (int i = 0; i < k; ++i) pb_.assert_(implies(eq(ck(i), "3"), not_(eq(ck((i + 1) % k), "3"))));

    // each edge is backed by a dependency or a same-transaction pair
    for (int i = 0; i < k; ++i) {
      int j = (i + 1) % k;
      std::vector<Term> opts;
      for (int a : cycle_nodes_)
        for (int b : cycle_nodes_) {
          if (a == b) continue;
          std::vector<Term> kinds;
          if (nodes_[a].inst == nodes_[b].inst) {
            kinds.push_back(and_({eq(ck(i), "3"), eq(cf(i), "(- 1)")}));
          } else {
            auto it = deps_.find({a, b});
            if (it != deps_.end())
              for (auto& d : it->second)
                kinds.push_back(and_({eq(ck(i), std::to_string(kind_code(d.kind))), eq(cf(i), std::to_string(d.field)), d.term}));
          }
          if (kinds.empty()) continue;
          opts.push_back(and_({eq(cp(i), std::to_string(a)), eq(cp(j), std::to_string(b)), or_(kinds)}));
        }
      pb_.assert_(or_(opts));
    }

    // every cycle instance owns a position
    for (size_t inst = 0; inst < plan_.size(); ++inst) {
      if (plan_[inst].serial) continue;
      std::vector<Term> xs;
      for (int i = 0; i < k; ++i)
        for (int a = first_[inst]; a < first_[inst + 1]; ++a) xs.push_back(eq(cp(i), std::to_string(a)));
      pb_.assert_(or_(xs));
    }

    if (!cq_.structure.empty()) {
      pb_.comment("structure");
      if (static_cast<int>(cq_.structure.size()) != k) throw EncodeError("structure length mismatch");
      for (int i = 0; i < k; ++i) {
        pb_.assert_(at_type_site(i, cq_.structure[i].first, 0));
        pb_.assert_(eq(ck(i), std::to_string(kind_code(cq_.structure[i].second))));
      }
    }
    if (!cq_.pin.empty()) {
      pb_.comment("pinned cycle");
      if (static_cast<int>(cq_.pin.size()) != k) throw EncodeError("pinned cycle length mismatch");
      for (int i = 0; i < k; ++i) {
        auto& p = cq_.pin[i];
        pb_.assert_(at_type_site(i, p.txn, p.site));
        pb_.assert_(eq(ck(i), std::to_string(kind_code(p.kind))));
        if (p.kind != EdgeKind::ST) pb_.assert_(eq(cf(i), std::to_string(field_id(p.field))));
      }
    }
    if (!cq_.blocked.empty()) pb_.comment("phi_neg");
    for (auto& cyc : cq_.blocked) {
      std::vector<Term> all;
      for (auto& e : cyc) {
        std::vector<Term> somewhere;
        for (int i = 0; i < k; ++i) {
          std::vector<Term> lit{at_type_site(i, e.txn_a, e.site_a), at_type_site((i + 1) % k, e.txn_b, e.site_b),
                                eq(ck(i), std::to_string(kind_code(e.kind)))};
          if (e.kind != EdgeKind::ST) lit.push_back(eq(cf(i), std::to_string(field_id(e.field))));
          somewhere.push_back(and_(lit));
        }
        all.push_back(or_(somewhere));
      }
      pb_.assert_(not_(and_(all)));
    }
  }

  struct DepOption {
    EdgeKind kind;
    int field;
    Term term;
  };

  const Program& prog_;
  const Schema& schema_;
  EncoderConfig cfg_;
  std::vector<InstancePlan> plan_;
  CycleQuery cq_;
  std::map<std::string, UnrolledTxn> unrolled_;
  std::vector<Node> nodes_;
  std::vector<int> first_;
  std::vector<int> cycle_nodes_;
  std::map<std::pair<std::string, std::string>, int> field_ids_;
  std::vector<std::string> field_names_;
  std::map<std::pair<int, int>, std::vector<DepOption>> deps_;
  std::map<std::pair<int, int>, Term> touch_;
  smt::Problem pb_;
};

}  // namespace serscope
