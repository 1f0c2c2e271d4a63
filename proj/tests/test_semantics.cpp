#include <catch_amalgamated.hpp>

#include "serscope/parser.hpp"
#include "serscope/semantics.hpp"

using namespace serscope;

namespace {

struct Fixture {
  Schema schema;
  Program prog;
  Fixture(const char* s, const char* p) : schema(parse_schema(s)), prog(parse_program(p, schema)) {}
};

ScheduleStep at(int inst, int part = 0) {
  ScheduleStep s;
  s.instance = inst;
  s.partition = part;
  return s;
}

int count_if(const History& h, int step, bool write, const std::string& field) {
  int n = 0;
  auto& st = h.final_state();
  for (int i : h.steps.at(step).effects)
    if (st.effects[i].write == write && st.effects[i].field == field) ++n;
  return n;
}

const char* kEmp = "TABLE emp (id, sal, age) PK (id)";
const char* kRaise =
    "raise() { SELECT sal AS v WHERE this.age < 35; ITERATE (size(v)) { UPDATE SET sal = proj(sal, v, iter) + 1 "
    "WHERE this.id = proj(id, v, iter); } }";

// record 2 is dead
std::vector<InitRow> emp_rows() {
  return {{"emp", {{"id", 1}, {"sal", 85}, {"age", 22}}},
          {"emp", {{"id", 2}, {"sal", 70}, {"age", 30}, {"alive", 0}}},
          {"emp", {{"id", 3}, {"sal", 90}, {"age", 41}}}};
}

}  // namespace

TEST_CASE("initial store has three rows, two alive") {
  Fixture f(kEmp, kRaise);
  ExecutionOracle o;
  o.initial_db = emp_rows();
  o.require_complete = false;
  auto h = run(o, f.prog, f.schema);
  REQUIRE(h.states.size() == 1);
  auto& s = h.states[0];
  CHECK(s.effects.size() == 12);
  auto v = local_view(s.effects, s.store[0]);
  CHECK(v.alive("emp", {1}));
  CHECK_FALSE(v.alive("emp", {2}));
  CHECK(v.alive("emp", {3}));
  CHECK(v.get("emp", {1}, "sal") == 85);
}

TEST_CASE("select and update of the raise program") {
  Fixture f(kEmp, kRaise);
  ExecutionOracle o;
  o.instances = {{"raise", {}, {}}};
  o.initial_db = emp_rows();
  o.schedule = {at(0), at(0)};
  auto h = run(o, f.prog, f.schema);
  REQUIRE(h.steps.size() == 2);

  // three age reads, three alive reads, one sal read of record 1
  CHECK(h.steps[0].effects.size() == 7);
  CHECK(count_if(h, 0, false, "age") == 3);
  CHECK(count_if(h, 0, false, kAlive) == 3);
  CHECK(count_if(h, 0, false, "sal") == 1);

  // key lookup: no scan reads
  REQUIRE(h.steps[1].effects.size() == 1);
  auto& w = h.final_state().effects[h.steps[1].effects[0]];
  CHECK(w.write);
  CHECK(w.key == Key{1});
  CHECK(w.field == "sal");
  CHECK(w.value == 86);
}

TEST_CASE("delete where false reads alive only") {
  Fixture f("TABLE t (k, f) PK (k)", "d() { DELETE @t WHERE FALSE; }");
  ExecutionOracle o;
  o.instances = {{"d", {}, {}}};
  o.initial_db = {{"t", {{"k", 1}}}, {"t", {{"k", 2}}}};
  o.schedule = {at(0)};
  auto h = run(o, f.prog, f.schema);
  CHECK(h.steps[0].effects.size() == 2);
  CHECK(count_if(h, 0, false, kAlive) == 2);
}

TEST_CASE("delete and insert change liveness") {
  Fixture f("TABLE t (k, f) PK (k)",
            "d(x) { DELETE @t WHERE this.k = x; }\n"
            "i(x) { INSERT INTO t (k, f) VALUES (x, 7); }");
  ExecutionOracle o;
  o.instances = {{"d", {1}, {}}, {"i", {2}, {}}};
  o.initial_db = {{"t", {{"k", 1}}}};
  o.schedule = {at(0), at(1)};
  auto h = run(o, f.prog, f.schema);
  auto& s = h.final_state();
  auto v = local_view(s.effects, s.store[0]);
  CHECK_FALSE(v.alive("t", {1}));
  CHECK(v.alive("t", {2}));
  CHECK(v.get("t", {2}, "f") == 7);
  CHECK(h.steps[1].effects.size() == 3);
}

TEST_CASE("reads interleaved between two writes see different versions") {
  Fixture f("TABLE A (id, f) PK (id)\nTABLE B (id, g) PK (id)",
            "txnWrite(id, val) { UPDATE SET f = val WHERE this.id = id; UPDATE SET g = val WHERE this.id = id; }\n"
            "txnRead(id) { SELECT f AS v1 WHERE this.id = id; SELECT g AS v2 WHERE this.id = id; }");
  ExecutionOracle o;
  o.instances = {{"txnWrite", {1, 5}, {}}, {"txnRead", {1}, {}}};
  o.initial_db = {{"A", {{"id", 1}, {"f", 0}}}, {"B", {{"id", 1}, {"g", 0}}}};
  o.schedule = {at(0), at(1), at(1), at(0)};
  auto h = run(o, f.prog, f.schema);
  auto& s = h.final_state();
  auto v1 = s.effects[h.steps[1].effects.at(0)].value;
  auto v2 = s.effects[h.steps[2].effects.at(0)].value;
  CHECK(v1 == 5);
  CHECK(v2 == 0);
  CHECK(v1 != v2);
}

TEST_CASE("two increments reading before writing lose one update") {
  Fixture f("TABLE X (k, f) PK (k)",
            "inc(k) { SELECT f AS v WHERE this.k = k; UPDATE SET f = proj(f, v, 1) + 10 WHERE this.k = k; }");
  ExecutionOracle o;
  o.instances = {{"inc", {1}, {}}, {"inc", {1}, {}}};
  o.initial_db = {{"X", {{"k", 1}, {"f", 0}}}};
  o.schedule = {at(0), at(1), at(0), at(1)};
  auto h = run(o, f.prog, f.schema);
  auto& s = h.final_state();
  CHECK(s.effects[h.steps[2].effects.at(0)].value == 10);
  CHECK(s.effects[h.steps[3].effects.at(0)].value == 10);
  CHECK(local_view(s.effects, s.store[0]).get("X", {1}, "f") == 10);
}

TEST_CASE("empty body gives a one-state history") {
  Fixture f("TABLE t (k) PK (k)", "T() { SKIP }");
  ExecutionOracle o;
  o.instances = {{"T", {}, {}}};
  auto h = run(o, f.prog, f.schema);
  CHECK(h.states.size() == 1);
  CHECK(h.steps.empty());
}

TEST_CASE("partitioned steps only see their own group") {
  Fixture f("TABLE X (k, f) PK (k)",
            "w(k, a) { UPDATE SET f = a WHERE this.k = k; }\n"
            "r(k) { SELECT f AS v WHERE this.k = k; }");
  ExecutionOracle o;
  o.instances = {{"w", {1, 3}, {}}, {"r", {1}, {}}};
  o.initial_db = {{"X", {{"k", 1}, {"f", 0}}}};
  auto w = at(0, 0);
  w.groups = {{0}, {1}};
  auto r = at(1, 1);
  r.groups = {{1}, {0}};
  o.schedule = {w, r};
  auto h = run(o, f.prog, f.schema);
  CHECK(h.final_state().effects[h.steps[1].effects.at(0)].value == 0);
  o.schedule = {at(0, 0), at(1, 1)};
  auto h2 = run(o, f.prog, f.schema);
  CHECK(h2.final_state().effects[h2.steps[1].effects.at(0)].value == 3);
}

TEST_CASE("evaluation faults") {
  Fixture f("TABLE X (k, f) PK (k)",
            "oob(k) { SELECT f AS v WHERE this.k = k; UPDATE SET f = proj(f, v, 2) WHERE this.k = k; }\n"
            "dz(k) { UPDATE SET f = 1 / k WHERE this.k = 1; }\n"
            "lp(n) { SELECT f AS v WHERE this.k = 1; ITERATE (n) { UPDATE SET f = iter WHERE this.k = 1; } }\n"
            "an() { UPDATE SET f = any{it > 0 AND it < 0} WHERE this.k = 1; }");
  std::vector<InitRow> init = {{"X", {{"k", 1}, {"f", 0}}}};
  auto fault_of = [&](TxnInstance ti, int steps) {
    ExecutionOracle o;
    o.instances = {ti};
    o.initial_db = init;
    for (int i = 0; i < steps; ++i) o.schedule.push_back(at(0));
    try {
      run(o, f.prog, f.schema);
    } catch (const Fault& e) {
      return std::optional<FaultKind>(e.kind());
    }
    return std::optional<FaultKind>();
  };
  CHECK(fault_of({"oob", {1}, {}}, 2) == FaultKind::ProjOutOfBounds);
  CHECK(fault_of({"dz", {0}, {}}, 1) == FaultKind::DivisionByZero);
  CHECK(fault_of({"lp", {3}, {}}, 3) == FaultKind::LoopBound);
  CHECK(fault_of({"an", {}, {}}, 1) == FaultKind::AnyUnsatisfied);
  CHECK_FALSE(fault_of({"lp", {2}, {}}, 3));
}

TEST_CASE("schedule mismatches are typed errors") {
  Fixture f("TABLE X (k, f) PK (k)", "w(k) { UPDATE SET f = 1 WHERE this.k = k; }");
  ExecutionOracle o;
  o.instances = {{"w", {1}, {}}};
  o.initial_db = {{"X", {{"k", 1}}}};
  o.schedule = {at(0), at(0)};
  CHECK_THROWS_AS(run(o, f.prog, f.schema), ScheduleError);
  o.schedule = {};
  CHECK_THROWS_AS(run(o, f.prog, f.schema), ScheduleError);
  o.schedule = {at(0, 5)};
  CHECK_THROWS_AS(run(o, f.prog, f.schema), ScheduleError);
}

TEST_CASE("histories grow monotonically and are deterministic") {
  Fixture f("TABLE X (k, f) PK (k)",
            "inc(k) { SELECT f AS v WHERE this.k = k; UPDATE SET f = proj(f, v, 1) + 10 WHERE this.k = k; }");
  ExecutionOracle o;
  o.instances = {{"inc", {1}, {}}, {"inc", {1}, {}}};
  o.initial_db = {{"X", {{"k", 1}}}};
  auto a = at(0, 0);
  a.groups = {{0}, {1}};
  auto b = at(1, 1);
  b.groups = {{1}, {0}};
  o.schedule = {a, b, at(1, 1), at(0, 0)};
  auto h = run(o, f.prog, f.schema);
  for (size_t k = 1; k < h.states.size(); ++k) {
    auto& p = h.states[k - 1];
    auto& n = h.states[k];
    REQUIRE(n.effects.size() >= p.effects.size());
    for (size_t i = 0; i < p.effects.size(); ++i) {
      CHECK(n.effects[i].value == p.effects[i].value);
      for (size_t j = 0; j < p.effects.size(); ++j)
        if (p.vis.get(i, j)) CHECK(n.vis.get(i, j));
    }
    for (int q = 0; q < n.partitions(); ++q) CHECK(n.store[q].size() >= p.store[q].size());
    for (size_t i = 0; i < n.effects.size(); ++i)
      for (size_t j = 0; j < n.effects.size(); ++j)
        if (n.vis.get(i, j)) CHECK(n.ar(static_cast<int>(i), static_cast<int>(j)));
  }
  auto h2 = run(o, f.prog, f.schema);
  CHECK(trace(h) == trace(h2));
}

TEST_CASE("unused select reads are marked") {
  Fixture f("TABLE X (k, f) PK (k)",
            "upd(k, a) { SELECT f AS v WHERE this.k = k; UPDATE SET f = a WHERE this.k = k; }");
  ExecutionOracle o;
  o.instances = {{"upd", {1, 4}, {}}};
  o.initial_db = {{"X", {{"k", 1}}}};
  o.schedule = {at(0), at(0)};
  auto h = run(o, f.prog, f.schema);
  CHECK_FALSE(h.final_state().effects[h.steps[0].effects.at(0)].used);
}
