#include <catch_amalgamated.hpp>

#include "gen_program.hpp"
#include "serscope/parser.hpp"

using namespace serscope;

TEST_CASE("schema with one table") {
  auto s = parse_schema("TABLE cust (c_id, c_pay_cnt) PK (c_id)");
  REQUIRE(s.tables.size() == 1);
  CHECK(s.tables[0].name == "cust");
  CHECK(s.tables[0].fields.size() == 2);
  CHECK(s.tables[0].primary_key == std::vector<std::string>{"c_id"});
}

TEST_CASE("empty schema text") {
  CHECK(parse_schema("").tables.empty());
  CHECK(parse_schema("# nothing here\n").tables.empty());
}

TEST_CASE("undeclared key field is rejected") {
  CHECK_THROWS_AS(parse_schema("TABLE t (a) PK (b)"), ValidationError);
  CHECK_THROWS_AS(parse_schema("TABLE t (a, a) PK (a)"), ValidationError);
  CHECK_THROWS_AS(parse_schema("TABLE t (a) PK (a)\nTABLE t (b) PK (b)"), ValidationError);
  CHECK_THROWS_AS(parse_schema("TABLE t (a) PK ()"), ParseError);
}

TEST_CASE("raise program has two query sites") {
  auto s = parse_schema("TABLE emp (id, sal, age) PK (id)");
  auto p = parse_program(
      "raise() { SELECT sal AS v WHERE this.age<35; ITERATE(size(v)){ UPDATE SET sal = proj(sal,v,iter)+1 "
      "WHERE this.id = proj(id,v,iter) } }",
      s);
  REQUIRE(p.transactions.size() == 1);
  auto& b = p.transactions[0].body;
  REQUIRE(b.size() == 2);
  CHECK(b[0].query.kind == QueryKind::Select);
  CHECK(b[1].kind == CmdKind::Iterate);
  CHECK(b[1].body[0].query.kind == QueryKind::Update);
  CHECK(parse_program(pretty_print(p), s) == p);
}

TEST_CASE("two tables resolved by field name") {
  auto s = parse_schema("TABLE A (id, f) PK (id)\nTABLE B (id, g) PK (id)");
  auto p = parse_program("txnWrite(id, val) { UPDATE SET f = val WHERE this.id = id; UPDATE SET g = val WHERE this.id = id; }", s);
  REQUIRE(p.transactions[0].body.size() == 2);
  CHECK(p.transactions[0].body[0].query.table == "A");
  CHECK(p.transactions[0].body[1].query.table == "B");
}

TEST_CASE("table.field spelling means this.field") {
  auto s = parse_schema("TABLE emp (id, sal, age) PK (id)\nTABLE dept (id, n) PK (id)");
  auto p = parse_program("t() { SELECT emp.sal AS v WHERE emp.age < 35; }", s);
  auto& q = p.transactions[0].body[0].query;
  CHECK(q.table == "emp");
  CHECK(equal(q.where, mk::bin(Op::Lt, mk::self("age"), mk::num(35))));
}

TEST_CASE("ambiguous table needs @") {
  auto s = parse_schema("TABLE A (id, f) PK (id)\nTABLE B (id, f) PK (id)");
  CHECK_THROWS_AS(parse_program("t(x) { UPDATE SET f = 1 WHERE this.id = x; }", s), ParseError);
  auto p = parse_program("t(x) { UPDATE @B SET f = 1 WHERE this.id = x; }", s);
  CHECK(p.transactions[0].body[0].query.table == "B");
}

TEST_CASE("skip body") {
  auto s = parse_schema("TABLE t (a) PK (a)");
  auto p = parse_program("T(){ SKIP }", s);
  REQUIRE(p.transactions[0].body.size() == 1);
  CHECK(p.transactions[0].body[0].kind == CmdKind::Skip);
  CHECK(pretty_print(p) == "T() {\n  SKIP;\n}\n");
}

TEST_CASE("keywords are case-insensitive") {
  auto s = parse_schema("table t (a, b) pk (a)");
  auto p = parse_program("T(x){ select b as v where this.a = x and not this.b > 1; }", s);
  CHECK(p.transactions[0].body[0].query.kind == QueryKind::Select);
}

TEST_CASE("any occurrences are numbered in text order") {
  auto s = parse_schema("TABLE t (a, b) PK (a)");
  auto p = parse_program("T(){ INSERT INTO t (a, b) VALUES (any{it > 0}, any{it < 0}); }", s);
  auto& vs = p.transactions[0].body[0].query.values;
  CHECK(vs[0].second->any_id == 0);
  CHECK(vs[1].second->any_id == 1);
}

TEST_CASE("negative literal and negation stay distinct") {
  auto s = parse_schema("TABLE t (a, b) PK (a)");
  auto p = parse_program("T(x){ UPDATE SET b = -5 - -(x) WHERE this.a = -(3); }", s);
  auto& q = p.transactions[0].body[0].query;
  CHECK(equal(q.value, mk::bin(Op::Sub, mk::num(-5), mk::node(Op::Neg, {mk::arg("x")}))));
  CHECK(equal(q.where->kids[1], mk::node(Op::Neg, {mk::num(3)})));
  CHECK(parse_program(pretty_print(p), s) == p);
}

TEST_CASE("parse errors carry a span inside the input") {
  auto s = parse_schema("TABLE t (a, b) PK (a)");
  std::string text = "T(x) {\n  UPDATE SET b = WHERE this.a = x;\n}";
  try {
    parse_program(text, s);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.span().line == 2);
    CHECK(e.span().column >= 1);
    CHECK(e.span().column <= 40);
  }
}

TEST_CASE("validation diagnostics are raised") {
  auto s = parse_schema("TABLE t (a, b) PK (a)");
  CHECK_THROWS_AS(parse_program("T(x){ UPDATE SET b = proj(b, v, 1) WHERE this.a = x; }", s), ValidationError);
  CHECK_THROWS_AS(parse_program("T(x){ UPDATE SET a = 1 WHERE this.a = x; }", s), ValidationError);
  CHECK_THROWS_AS(parse_program("T(x){ UPDATE SET b = iter WHERE this.a = x; }", s), ValidationError);
  CHECK_THROWS_AS(parse_program("T(x){ UPDATE SET b = y WHERE this.a = x; }", s), ValidationError);
}

TEST_CASE("random programs survive print and parse") {
  auto s = parse_schema(gen::kSchema);
  int failures = 0;
  for (unsigned seed = 1; seed <= 1000; ++seed) {
    gen::ProgramGen g(s, seed);
    auto p = g.program();
    REQUIRE(validate_program(s, p).empty());
    auto text = pretty_print(p);
    Program back;
    try {
      back = parse_program(text, s);
    } catch (const std::exception& e) {
      ++failures;
      UNSCOPED_INFO("seed " << seed << ": " << e.what() << "\n" << text);
      continue;
    }
    if (!(back == p)) {
      ++failures;
      UNSCOPED_INFO("seed " << seed << " differs\n" << text);
    }
    CHECK(pretty_print(back) == text);
  }
  CHECK(failures == 0);
}
