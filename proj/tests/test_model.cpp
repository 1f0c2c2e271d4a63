#include <catch_amalgamated.hpp>

#include "serscope/parser.hpp"

using namespace serscope;

namespace {

const char* kEmp = "TABLE emp (id, sal, age) PK (id)";

const char* kRaise =
    "raise() {\n"
    "  SELECT sal AS v WHERE this.age < 35;\n"
    "  ITERATE (size(v)) {\n"
    "    UPDATE SET sal = proj(sal, v, iter) + 1 WHERE this.id = proj(id, v, iter);\n"
    "  }\n"
    "}\n";

}  // namespace

TEST_CASE("schema carries the reserved alive field") {
  auto s = parse_schema(kEmp);
  auto& t = s.tables.at(0);
  CHECK(t.has_field(kAlive));
  CHECK(t.field_index(kAlive) < 0);
  CHECK(t.all_fields() == std::vector<std::string>{"id", "sal", "age", kAlive});
  CHECK(t.is_key("id"));
  CHECK_FALSE(t.is_key(kAlive));
}

TEST_CASE("validate_program accepts the select/iterate/update program") {
  auto s = parse_schema(kEmp);
  auto p = parse_program_unchecked(kRaise, s);
  CHECK(validate_program(s, p).empty());
}

TEST_CASE("validate_program flags an undeclared field") {
  auto s = parse_schema(kEmp);
  auto p = parse_program_unchecked("t() { SELECT @emp salx AS v WHERE this.age < 35; }", s);
  CHECK(validate_program(s, p).size() == 1);
}

TEST_CASE("validate_program flags an insert without its key") {
  auto s = parse_schema(kEmp);
  auto p = parse_program_unchecked("t() { INSERT INTO emp (sal, age) VALUES (1, 2); }", s);
  auto d = validate_program(s, p);
  REQUIRE(d.size() == 1);
  CHECK(d[0].message.find("primary-key") != std::string::npos);
}

TEST_CASE("reachability of a top-level query is true") {
  auto s = parse_schema(kEmp);
  auto p = parse_program(kRaise, s);
  auto c = reachability_condition(p, "raise", 1, 2);
  CHECK(c->op == Op::True);
}

TEST_CASE("reachability conjoins nested if guards") {
  auto s = parse_schema(kEmp);
  auto p = parse_program("t(a, b) { IF (a > 0) { IF (b = 1) { UPDATE SET sal = 1 WHERE this.id = a; } } }", s);
  auto c = reachability_condition(p, "t", 1, 2);
  auto want = mk::conj({mk::bin(Op::Gt, mk::arg("a"), mk::num(0)), mk::bin(Op::Eq, mk::arg("b"), mk::num(1))});
  CHECK(equal(c, want));
}

TEST_CASE("reachability of loop copies instantiates iter") {
  auto s = parse_schema(kEmp);
  auto p = parse_program(kRaise, s);
  auto u = unroll(*p.find("raise"), 2);
  REQUIRE(u.sites.size() == 3);
  // copy 1 of the update: guard size(v) >= 1, index iter := 1
  auto c1 = reachability_condition(u, 2);
  CHECK(equal(c1, mk::bin(Op::Ge, mk::size("v"), mk::num(1))));
  auto& upd = u.sites[1].query;
  CHECK(equal(upd.value, mk::bin(Op::Add, mk::proj("sal", "v", mk::num(1)), mk::num(1))));
  auto c2 = reachability_condition(u, 3);
  CHECK(equal(c2, mk::bin(Op::Ge, mk::size("v"), mk::num(2))));
  CHECK(equal(u.sites[2].query.where, mk::bin(Op::Eq, mk::self("id"), mk::proj("id", "v", mk::num(2)))));
}

TEST_CASE("where_fields adds alive") {
  auto s = parse_schema(kEmp);
  auto p = parse_program(kRaise, s);
  auto& sel = p.transactions[0].body[0].query;
  CHECK(where_fields(sel.where) == std::set<std::string>{"age", kAlive});
  CHECK(where_fields(mk::truth(true)) == std::set<std::string>{kAlive});
  auto& upd = p.transactions[0].body[1].body[0].query;
  CHECK(where_fields(upd.where) == std::set<std::string>{"id", kAlive});
}

TEST_CASE("pk_equality recognises key lookups only") {
  auto s = parse_schema("TABLE t (a, b, c) PK (a, b)");
  auto& t = s.tables[0];
  auto both = mk::conj({mk::bin(Op::Eq, mk::self("b"), mk::arg("y")), mk::bin(Op::Eq, mk::self("a"), mk::arg("x"))});
  auto keys = pk_equality(both, t);
  REQUIRE(keys);
  CHECK(equal((*keys)[0], mk::arg("x")));
  CHECK(equal((*keys)[1], mk::arg("y")));
  CHECK_FALSE(pk_equality(mk::bin(Op::Eq, mk::self("a"), mk::arg("x")), t));
  CHECK_FALSE(pk_equality(mk::conj({mk::bin(Op::Eq, mk::self("a"), mk::self("c")),
                                    mk::bin(Op::Eq, mk::self("b"), mk::arg("y"))}),
                          t));
}

TEST_CASE("relations are sized and queried by index") {
  Relation r;
  r.resize(3);
  r.set(0, 2);
  CHECK(r.get(0, 2));
  CHECK_FALSE(r.get(2, 0));
  SystemState st;
  CHECK(st.ar(0, 1));
  CHECK_FALSE(st.ar(1, 1));
}

TEST_CASE("local view takes the arbitration-last write") {
  std::vector<Effect> es;
  Effect a;
  a.write = true;
  a.table = "X";
  a.key = {1};
  a.field = "f";
  a.value = 0;
  es.push_back(a);
  a.value = 1;
  es.push_back(a);
  auto v = local_view(es, {0, 1});
  CHECK(v.get("X", {1}, "f") == 1);
  auto w = local_view(es, {0});
  CHECK(w.get("X", {1}, "f") == 0);
  auto empty = local_view(es, {});
  CHECK_FALSE(empty.alive("X", {1}));
}
