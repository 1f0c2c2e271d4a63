#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "serscope/model.hpp"

namespace serscope {

enum class FaultKind { ProjOutOfBounds, UnboundVariable, DivisionByZero, LoopBound, AnyUnsatisfied };

inline const char* to_string(FaultKind k) {
  switch (k) {
    case FaultKind::ProjOutOfBounds: return "proj index out of bounds";
    case FaultKind::UnboundVariable: return "unbound variable";
    case FaultKind::DivisionByZero: return "division by zero";
    case FaultKind::LoopBound: return "loop count exceeds unroll bound";
    case FaultKind::AnyUnsatisfied: return "no value satisfies any{} constraint";
  }
  return "?";
}

class Fault : public std::runtime_error {
 public:
  Fault(FaultKind k, const std::string& where)
      : std::runtime_error(std::string(to_string(k)) + (where.empty() ? "" : " at " + where)), kind_(k) {}
  FaultKind kind() const { return kind_; }

 private:
  FaultKind kind_;
};

class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- oracle

struct TxnInstance {
  std::string txn;
  std::vector<int64_t> args;
  std::map<int, int64_t> any_values;  // by any_id; missing ones are chosen deterministically
};

struct InitRow {
  std::string table;
  std::map<std::string, int64_t> values;  // missing fields are 0, alive defaults to 1
};

struct ScheduleStep {
  int instance = 0;
  int ordinal = 0;  // 0: the instance's next reachable site
  int partition = 0;
  std::vector<std::vector<int>> groups;  // empty: all partitions connected
  std::string label;
};

struct ExecutionOracle {
  std::vector<TxnInstance> instances;
  std::vector<ScheduleStep> schedule;
  std::vector<InitRow> initial_db;
  int partitions = 2;
  int unroll = 2;
  bool require_complete = true;
};

struct StepRecord {
  int instance = 0;
  int site = 0;
  int partition = 0;
  std::vector<int> group;
  std::vector<int> effects;
  std::set<int> consumes;  // steps whose SELECT bindings this step read
  std::string label;
};

struct History {
  std::vector<SystemState> states;
  std::vector<StepRecord> steps;
  std::vector<TxnInstance> instances;

  const SystemState& final_state() const {
    if (states.empty()) throw std::logic_error("empty history");
    return states.back();
  }
};

// ---------------------------------------------------------------- evaluation

struct ResultRow {
  Key key;
  int64_t value = 0;
};

struct Binding {
  std::string table;
  std::string field;
  std::vector<ResultRow> rows;
  int step = 0;
};

struct EvalEnv {
  const Schema* schema = nullptr;
  const std::map<std::string, int64_t>* args = nullptr;
  const std::map<std::string, Binding>* vars = nullptr;
  const std::vector<int64_t>* anys = nullptr;
  std::set<int>* consumed = nullptr;
  std::optional<int64_t> it;
  // record under test for this.f
  const TableDef* table = nullptr;
  const Key* key = nullptr;
  const LocalView* view = nullptr;
  std::string where;
};

inline int64_t eval_expr(const ExprP& e, const EvalEnv& env);

inline bool eval_bool(const ExprP& e, const EvalEnv& env) {
  switch (e->op) {
    case Op::True: return true;
    case Op::False: return false;
    case Op::Not: return !eval_bool(e->kids[0], env);
    // both sides are evaluated so faults do not depend on operand order
    case Op::And: {
      bool a = eval_bool(e->kids[0], env);
      bool b = eval_bool(e->kids[1], env);
      return a && b;
    }
    case Op::Or: {
      bool a = eval_bool(e->kids[0], env);
      bool b = eval_bool(e->kids[1], env);
      return a || b;
    }
    case Op::Lt: return eval_expr(e->kids[0], env) < eval_expr(e->kids[1], env);
    case Op::Le: return eval_expr(e->kids[0], env) <= eval_expr(e->kids[1], env);
    case Op::Eq: return eval_expr(e->kids[0], env) == eval_expr(e->kids[1], env);
    case Op::Gt: return eval_expr(e->kids[0], env) > eval_expr(e->kids[1], env);
    case Op::Ge: return eval_expr(e->kids[0], env) >= eval_expr(e->kids[1], env);
    default: throw std::logic_error("not a boolean expression");
  }
}

inline const Binding& lookup_var(const std::string& v, const EvalEnv& env) {
  if (!env.vars) throw Fault(FaultKind::UnboundVariable, env.where + " (" + v + ")");
  auto it = env.vars->find(v);
  if (it == env.vars->end()) throw Fault(FaultKind::UnboundVariable, env.where + " (" + v + ")");
  if (env.consumed) env.consumed->insert(it->second.step);
  return it->second;
}

inline int64_t eval_expr(const ExprP& e, const EvalEnv& env) {
  switch (e->op) {
    case Op::Const: return e->value;
    case Op::Arg: {
      auto it = env.args->find(e->name);
      if (it == env.args->end()) throw Fault(FaultKind::UnboundVariable, env.where + " (" + e->name + ")");
      return it->second;
    }
    case Op::It:
      if (!env.it) throw Fault(FaultKind::UnboundVariable, env.where + " (it)");
      return *env.it;
    case Op::Iter: throw std::logic_error("iter survived unrolling");
    case Op::Any:
      if (!env.anys || e->any_id >= static_cast<int>(env.anys->size()))
        throw Fault(FaultKind::UnboundVariable, env.where + " (any)");
      return (*env.anys)[e->any_id];
    case Op::Size: return static_cast<int64_t>(lookup_var(e->name, env).rows.size());
    case Op::Proj: {
      const Binding& b = lookup_var(e->name, env);
      int64_t i = eval_expr(e->kids[0], env);
      if (i < 1 || i > static_cast<int64_t>(b.rows.size())) throw Fault(FaultKind::ProjOutOfBounds, env.where);
      auto& row = b.rows[i - 1];
      if (e->field == b.field) return row.value;
      auto* t = env.schema->find(b.table);
      int pos = t ? t->key_position(e->field) : -1;
      if (pos < 0) throw std::logic_error("proj of a field that is neither selected nor key");
      return row.key[pos];
    }
    case Op::This:
      if (!env.key) throw std::logic_error("this outside WHERE");
      return env.view->get(env.table->name, *env.key, e->field);
    case Op::Add: return eval_expr(e->kids[0], env) + eval_expr(e->kids[1], env);
    case Op::Sub: return eval_expr(e->kids[0], env) - eval_expr(e->kids[1], env);
    case Op::Mul: return eval_expr(e->kids[0], env) * eval_expr(e->kids[1], env);
    case Op::Div: {
      int64_t a = eval_expr(e->kids[0], env);
      int64_t b = eval_expr(e->kids[1], env);
      if (b == 0) throw Fault(FaultKind::DivisionByZero, env.where);
      return a / b;
    }
    case Op::Neg: return -eval_expr(e->kids[0], env);
    default: throw std::logic_error("not an integer expression");
  }
}

// Smallest-magnitude value satisfying an any{} constraint, non-negative first.
inline std::optional<int64_t> default_any_value(const ExprP& constraint, const EvalEnv& base) {
  for (int64_t m = 0; m <= 1000; ++m) {
    for (int64_t v : {m, -m}) {
      EvalEnv env = base;
      env.it = v;
      if (eval_bool(constraint, env)) return v;
      if (m == 0) break;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- interpreter

inline std::string instance_label(int i) { return "Ins" + std::to_string(i + 1); }

inline Key key_of(const TableDef& t, const std::map<std::string, int64_t>& values) {
  Key k;
  for (auto& f : t.primary_key) {
    auto it = values.find(f);
    k.push_back(it == values.end() ? 0 : it->second);
  }
  return k;
}

class Interpreter {
 public:
  Interpreter(const Program& prog, const Schema& schema, std::vector<TxnInstance> instances,
              const std::vector<InitRow>& init, int partitions, int unroll,
              const std::map<std::string, std::set<Key>>& extra_keys = {})
      : prog_(prog), schema_(schema), partitions_(partitions), unroll_(unroll) {
    if (partitions < 1) throw ScheduleError("partition count must be positive");
    hist_.instances = std::move(instances);
    state_.store.assign(partitions, {});
    universe_ = extra_keys;
    for (auto& row : init) add_init_row(row);
    hist_.states.push_back(state_);
    for (size_t i = 0; i < hist_.instances.size(); ++i) spawn(static_cast<int>(i));
  }

  int instance_count() const { return static_cast<int>(insts_.size()); }
  const UnrolledTxn& unrolled(int inst) const { return *insts_.at(inst).u; }

  // ordinal of the next reachable site, 0 when the instance is finished
  int next_site(int inst) {
    auto& s = insts_.at(inst);
    while (s.next < static_cast<int>(s.u->sites.size())) {
      if (reachable(s, s.next)) return s.next + 1;
      ++s.next;
    }
    return 0;
  }
  bool has_next(int inst) { return next_site(inst) != 0; }

  void step(const ScheduleStep& st) {
    if (st.instance < 0 || st.instance >= instance_count())
      throw ScheduleError("schedule names unknown instance " + instance_label(st.instance));
    if (st.partition < 0 || st.partition >= partitions_)
      throw ScheduleError("unknown partition " + std::to_string(st.partition) + site_name(st.instance, st.ordinal));
    int next = next_site(st.instance);
    if (next == 0) throw ScheduleError("schedule/control-flow mismatch: " + instance_label(st.instance) + " has no remaining query" + label_suffix(st));
    if (st.ordinal != 0 && st.ordinal != next) {
      throw ScheduleError("schedule/control-flow mismatch: " + instance_label(st.instance) + "-O" +
                          std::to_string(st.ordinal) + " is not the next reachable query (O" +
                          std::to_string(next) + ")" + label_suffix(st));
    }
    auto group = group_of(st);
    execute(st, next, group);
    insts_[st.instance].next = next;  // past the executed site
  }

  History finish() {
    if (require_complete_) {
      for (int i = 0; i < instance_count(); ++i) {
        int n = next_site(i);
        if (n) throw ScheduleError("schedule misses " + instance_label(i) + "-O" + std::to_string(n));
      }
    }
    for (auto& s : insts_) consumed_.insert(s.consumed.begin(), s.consumed.end());
    // selects whose bindings were never consumed produce unused reads
    for (size_t k = 0; k < hist_.steps.size(); ++k) {
      int step = static_cast<int>(k) + 1;
      if (!select_steps_.count(step) || consumed_.count(step)) continue;
      for (int idx : hist_.steps[k].effects) {
        for (size_t s = k + 1; s < hist_.states.size(); ++s) hist_.states[s].effects[idx].used = false;
      }
    }
    return hist_;
  }

  void set_require_complete(bool b) { require_complete_ = b; }
  const std::set<std::pair<std::string, Key>>& inserted_keys() const { return inserted_; }
  const SystemState& state() const { return state_; }

 private:
  struct Inst {
    const UnrolledTxn* u = nullptr;
    std::map<std::string, int64_t> args;
    std::vector<int64_t> anys;
    int next = 0;  // index into u->sites
    std::map<int, bool> guard_val;
    std::map<int, int64_t> loop_count;
    std::map<std::string, Binding> vars;
    std::vector<int> own;
    std::set<int> consumed;  // since the last executed site
  };

  std::string label_suffix(const ScheduleStep& st) const { return st.label.empty() ? "" : " at @" + st.label; }
  std::string site_name(int inst, int ord) const {
    return " (" + instance_label(inst) + "-O" + std::to_string(ord) + ")";
  }

  void add_init_row(const InitRow& row) {
    auto* t = schema_.find(row.table);
    if (!t) throw ScheduleError("initial row for unknown table " + row.table);
    for (auto& [f, v] : row.values)
      if (!t->has_field(f)) throw ScheduleError("initial row sets unknown field " + row.table + "." + f);
    Key k = key_of(*t, row.values);
    universe_[t->name].insert(k);
    for (auto& f : t->all_fields()) {
      auto it = row.values.find(f);
      int64_t v = it != row.values.end() ? it->second : (f == kAlive ? 1 : 0);
      if (f == kAlive && v != 0 && v != 1) throw ScheduleError("initial alive value must be 0 or 1");
      Effect e;
      e.id = {0, static_cast<int>(state_.effects.size()) + 1};
      e.write = true;
      e.table = t->name;
      e.key = k;
      e.field = f;
      e.value = v;
      append(e, {}, all_partitions());
    }
  }

  std::vector<int> all_partitions() const {
    std::vector<int> v(partitions_);
    for (int i = 0; i < partitions_; ++i) v[i] = i;
    return v;
  }

  std::vector<int> group_of(const ScheduleStep& st) const {
    if (st.groups.empty()) return all_partitions();
    std::vector<int> seen(partitions_, 0);
    const std::vector<int>* mine = nullptr;
    for (auto& g : st.groups) {
      for (int p : g) {
        if (p < 0 || p >= partitions_) throw ScheduleError("unknown partition in group" + label_suffix(st));
        if (seen[p]++) throw ScheduleError("partition listed twice in groups" + label_suffix(st));
        if (p == st.partition) mine = &g;
      }
    }
    for (int p = 0; p < partitions_; ++p)
      if (!seen[p]) throw ScheduleError("partition groups do not cover every partition" + label_suffix(st));
    std::vector<int> g = *mine;
    std::sort(g.begin(), g.end());
    return g;
  }

  void spawn(int i) {
    auto& ti = hist_.instances[i];
    auto* t = prog_.find(ti.txn);
    if (!t) throw ScheduleError("instance " + instance_label(i) + " names unknown transaction " + ti.txn);
    if (ti.args.size() != t->params.size())
      throw ScheduleError("instance " + instance_label(i) + " passes " + std::to_string(ti.args.size()) +
                          " arguments to " + ti.txn);
    if (!unrolled_.count(ti.txn)) unrolled_[ti.txn] = unroll(*t, unroll_);
    Inst s;
    s.u = &unrolled_[ti.txn];
    for (size_t k = 0; k < t->params.size(); ++k) s.args[t->params[k]] = ti.args[k];
    s.anys.resize(s.u->any_count);
    EvalEnv env;
    env.schema = &schema_;
    env.args = &s.args;
    env.where = instance_label(i);
    for (int a = 0; a < s.u->any_count; ++a) {
      auto& c = s.u->any_constraints[a];
      auto given = ti.any_values.find(a);
      if (given != ti.any_values.end()) {
        env.it = given->second;
        if (!eval_bool(c, env)) throw Fault(FaultKind::AnyUnsatisfied, instance_label(i));
        s.anys[a] = given->second;
      } else {
        auto v = default_any_value(c, env);
        if (!v) throw Fault(FaultKind::AnyUnsatisfied, instance_label(i));
        s.anys[a] = *v;
      }
    }
    insts_.push_back(std::move(s));
  }

  EvalEnv env_for(Inst& s, const std::string& where) {
    EvalEnv env;
    env.schema = &schema_;
    env.args = &s.args;
    env.vars = &s.vars;
    env.anys = &s.anys;
    env.consumed = &s.consumed;
    env.where = where;
    return env;
  }

  bool guard_true(Inst& s, int g) {
    auto& gd = s.u->guards[g];
    std::string where = s.u->name + " guard";
    if (gd.kind == Guard::If) {
      auto it = s.guard_val.find(g);
      if (it != s.guard_val.end()) return it->second;
      bool v = eval_bool(gd.cond, env_for(s, where));
      s.guard_val[g] = v;
      return v;
    }
    auto it = s.loop_count.find(gd.loop_id);
    if (it == s.loop_count.end()) {
      int64_t n = eval_expr(gd.cond, env_for(s, where));
      if (n > unroll_) throw Fault(FaultKind::LoopBound, s.u->name);
      it = s.loop_count.emplace(gd.loop_id, n).first;
    }
    return it->second >= gd.copy;
  }

  bool reachable(Inst& s, int idx) {
    std::vector<int> chain;
    for (int g = s.u->sites[idx].guard; g >= 0; g = s.u->guards[g].parent) chain.push_back(g);
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
      if (!guard_true(s, *it)) return false;
    return true;
  }

  void append(Effect e, const std::vector<int>& visible, const std::vector<int>& group) {
    int idx = static_cast<int>(state_.effects.size());
    state_.effects.push_back(std::move(e));
    state_.vis.resize(state_.effects.size());
    for (int v : visible) state_.vis.set(v, idx);
    for (int p : group) state_.store[p].push_back(idx);
    pending_.push_back(idx);
  }

  std::vector<std::string> read_fields(const TableDef& t, const ExprP& where) const {
    auto fs = where_fields(where);
    std::vector<std::string> out;
    for (auto& f : t.all_fields())
      if (fs.count(f)) out.push_back(f);
    return out;
  }

  void execute(const ScheduleStep& st, int ordinal, const std::vector<int>& group) {
    auto& s = insts_[st.instance];
    const Site& site = s.u->sites[ordinal - 1];
    const Query& q = site.query;
    const TableDef& t = *schema_.find(q.table);
    int step_no = static_cast<int>(hist_.steps.size()) + 1;
    std::string where = instance_label(st.instance) + "-O" + std::to_string(ordinal);

    std::set<int> vis_set(state_.store[st.partition].begin(), state_.store[st.partition].end());
    vis_set.insert(s.own.begin(), s.own.end());
    std::vector<int> visible(vis_set.begin(), vis_set.end());
    LocalView view = local_view(state_.effects, visible);

    EvalEnv env = env_for(s, where);
    std::vector<Effect> scan, main;
    auto mk_effect = [&](bool write, const Key& k, const std::string& f, int64_t v) {
      Effect e;
      e.write = write;
      e.table = t.name;
      e.key = k;
      e.field = f;
      e.value = v;
      e.query_instance = step_no;
      e.txn_instance = st.instance;
      e.site = ordinal;
      e.partition = st.partition;
      return e;
    };

    std::vector<Key> matches;
    if (q.kind != QueryKind::Insert) {
      if (auto keys = pk_equality(q.where, t)) {
        Key k;
        for (auto& ke : *keys) k.push_back(eval_expr(ke, env));
        if (view.alive(t.name, k)) matches.push_back(k);
      } else {
        auto fields = read_fields(t, q.where);
        for (auto& k : universe_[t.name]) {
          for (auto& f : fields) scan.push_back(mk_effect(false, k, f, view.get(t.name, k, f)));
          if (!view.alive(t.name, k)) continue;
          EvalEnv re = env;
          re.table = &t;
          re.key = &k;
          re.view = &view;
          if (eval_bool(q.where, re)) matches.push_back(k);
        }
      }
    }

    switch (q.kind) {
      case QueryKind::Select:
      case QueryKind::SelectAgg: {
        Binding b;
        b.table = t.name;
        b.field = q.field;
        b.step = step_no;
        for (auto& k : matches) {
          int64_t v = view.get(t.name, k, q.field);
          main.push_back(mk_effect(false, k, q.field, v));
          b.rows.push_back({k, v});
        }
        if (q.kind == QueryKind::SelectAgg && !b.rows.empty()) {
          auto best = b.rows.front();
          for (auto& r : b.rows)
            if (q.agg == Agg::Min ? r.value < best.value : r.value > best.value) best = r;
          b.rows = {best};
        }
        s.vars[q.var] = std::move(b);
        select_steps_.insert(step_no);
        break;
      }
      case QueryKind::Update: {
        int64_t v = eval_expr(q.value, env);
        for (auto& k : matches) main.push_back(mk_effect(true, k, q.field, v));
        break;
      }
      case QueryKind::Delete:
        for (auto& k : matches) main.push_back(mk_effect(true, k, kAlive, 0));
        break;
      case QueryKind::Insert: {
        std::map<std::string, int64_t> vals;
        for (auto& [f, e] : q.values) vals[f] = eval_expr(e, env);
        Key k = key_of(t, vals);
        inserted_.insert({t.name, k});
        for (auto& f : t.fields) main.push_back(mk_effect(true, k, f, vals[f]));
        main.push_back(mk_effect(true, k, kAlive, 1));
        break;
      }
    }

    pending_.clear();
    int ord = 0;
    for (auto* part : {&scan, &main}) {
      for (auto& e : *part) {
        e.id = {step_no, ++ord};
        append(e, visible, group);
      }
    }
    s.own.insert(s.own.end(), pending_.begin(), pending_.end());

    StepRecord rec;
    rec.instance = st.instance;
    rec.site = ordinal;
    rec.partition = st.partition;
    rec.group = group;
    rec.effects = pending_;
    rec.consumes = std::move(s.consumed);
    s.consumed.clear();
    consumed_.insert(rec.consumes.begin(), rec.consumes.end());
    rec.label = st.label;
    hist_.steps.push_back(std::move(rec));
    hist_.states.push_back(state_);
  }

  const Program& prog_;
  const Schema& schema_;
  int partitions_;
  int unroll_;
  bool require_complete_ = true;
  std::map<std::string, UnrolledTxn> unrolled_;
  std::vector<Inst> insts_;
  SystemState state_;
  History hist_;
  std::map<std::string, std::set<Key>> universe_;
  std::set<std::pair<std::string, Key>> inserted_;
  std::set<int> consumed_;
  std::set<int> select_steps_;
  std::vector<int> pending_;
};

namespace detail {

inline History run_once(const ExecutionOracle& o, const Program& prog, const Schema& schema,
                        const std::map<std::string, std::set<Key>>& extra,
                        std::set<std::pair<std::string, Key>>* inserted) {
  Interpreter in(prog, schema, o.instances, o.initial_db, o.partitions, o.unroll, extra);
  in.set_require_complete(o.require_complete);
  for (auto& st : o.schedule) in.step(st);
  auto h = in.finish();
  if (inserted) *inserted = in.inserted_keys();
  return h;
}

inline std::map<std::string, std::set<Key>> as_universe(const std::set<std::pair<std::string, Key>>& keys) {
  std::map<std::string, std::set<Key>> u;
  for (auto& [t, k] : keys) u[t].insert(k);
  return u;
}

}  // namespace detail

// Scan reads range over init keys and every key inserted anywhere in the run,
// so a first pass discovers the inserted keys.
inline History run(const ExecutionOracle& o, const Program& prog, const Schema& schema) {
  std::set<std::pair<std::string, Key>> inserted;
  auto h = detail::run_once(o, prog, schema, {}, &inserted);
  if (inserted.empty()) return h;
  return detail::run_once(o, prog, schema, detail::as_universe(inserted), nullptr);
}

// Whole transactions one after another, all partitions connected.
inline History run_serial(const Program& prog, const Schema& schema, const std::vector<TxnInstance>& instances,
                          const std::vector<int>& order, const std::vector<InitRow>& init, int unroll) {
  auto once = [&](const std::map<std::string, std::set<Key>>& extra, std::set<std::pair<std::string, Key>>* ins) {
    Interpreter in(prog, schema, instances, init, 1, unroll, extra);
    for (int i : order) {
      while (in.has_next(i)) {
        ScheduleStep st;
        st.instance = i;
        in.step(st);
      }
    }
    auto h = in.finish();
    if (ins) *ins = in.inserted_keys();
    return h;
  };
  std::set<std::pair<std::string, Key>> inserted;
  auto h = once({}, &inserted);
  if (inserted.empty()) return h;
  return once(detail::as_universe(inserted), nullptr);
}

// ---------------------------------------------------------------- trace export

inline std::string trace(const History& h) {
  std::ostringstream os;
  auto& s = h.final_state();
  for (auto& e : s.effects) {
    os << e.id.step << " " << e.id.step << "." << e.id.ordinal << " " << (e.write ? "wr" : (e.used ? "rd" : "rd+"))
       << " " << e.table << ":" << key_string(e.key) << " " << e.field << " ";
    if (e.value) os << *e.value;
    else os << "-";
    os << " " << (e.partition < 0 ? std::string("*") : std::to_string(e.partition)) << "\n";
  }
  return os.str();
}

}  // namespace serscope
