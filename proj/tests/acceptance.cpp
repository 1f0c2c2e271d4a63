// Runs the ten acceptance checks, one PASS/FAIL line each.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>

#include "gen_history.hpp"
#include "gen_program.hpp"
#include "serscope/serscope.hpp"

using namespace serscope;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string bench_path(const std::string& f) { return std::string(SERSCOPE_BENCH_DIR) + "/" + f; }

SearchConfig config_for(const gen::Bench& b) {
  SearchConfig c;
  if (fs::exists(bench_path(b.name + ".init"))) c.init = parse_init_constraints(read_file(bench_path(b.name + ".init")), b.schema);
  return c;
}

// 1: twoWrites/oneRead, ec, bounds (0,2,4)
Outcome dirty_read() {
  auto b = gen::load_bench("dirty_read");
  SearchConfig c;
  c.max_p = 0;
  c.max_t = 2;
  c.max_c = 4;
  auto t0 = Clock::now();
  auto res = find_anomalies(b.prog, b.schema, c);
  double secs = since(t0);
  int hits = 0;
  for (auto& r : res.reports) {
    if (r.kinds != "RW ST WR ST") continue;
    std::vector<int64_t> keys;
    for (size_t i = 0; i < r.model.plan.size(); ++i) {
      auto& a = r.model.args[i];
      if (r.model.plan[i].txn == "twoWrites") keys.insert(keys.end(), {a[0], a[1]});
      else keys.push_back(a[0]);
    }
    if (std::adjacent_find(keys.begin(), keys.end(), std::not_equal_to<>()) == keys.end()) ++hits;
  }
  return {hits >= 1 && secs < 60,
          std::to_string(res.reports.size()) + " anomalies, " + std::to_string(hits) +
              " of shape WR ST RW ST with k1=k2=k3, " + std::to_string(secs) + "s"};
}

// 2: upd/upd vs inc/inc
Outcome lost_updates() {
  auto upd = gen::load_bench("lost_update_upd");
  auto inc = gen::load_bench("lost_update_inc");
  SearchConfig c;
  c.internal_only = true;
  size_t upd_int = find_anomalies(upd.prog, upd.schema, c).reports.size();
  size_t inc_int = find_anomalies(inc.prog, inc.schema, c).reports.size();
  c.internal_only = false;
  size_t upd_ext = find_anomalies(upd.prog, upd.schema, c).reports.size();
  return {upd_int == 0 && inc_int >= 1 && upd_ext >= 1, "upd internal " + std::to_string(upd_int) + ", inc internal " +
                                                            std::to_string(inc_int) + ", upd external " +
                                                            std::to_string(upd_ext)};
}

// 3: spec=ser, every bound up to (1,3,5)
Outcome ser_kill_switch() {
  auto t0 = Clock::now();
  int found = 0, undetermined = 0;
  for (auto& n : gen::micro_benchmarks()) {
    auto b = gen::load_bench(n);
    SearchConfig c;
    c.spec = GuaranteeSpec::ser();
    c.max_p = 1;
    c.max_t = 3;
    c.max_c = 5;
    auto r = find_anomalies(b.prog, b.schema, c);
    found += static_cast<int>(r.reports.size());
    undetermined += static_cast<int>(r.undetermined.size());
  }
  double secs = since(t0);
  return {found == 0 && undetermined == 0 && secs < 120, std::to_string(found) + " anomalies, " +
                                                             std::to_string(undetermined) + " undetermined, " +
                                                             std::to_string(secs) + "s"};
}

// 4: partition anomaly needs two partitions
Outcome partition_anomaly() {
  auto b = gen::load_bench("partition");
  const std::string fp = "writeRead.O1:ST writeRead.O2:RW[ACC.f] writeRead.O1:ST writeRead.O2:RW[ACC.f]";
  auto has = [&](int parts) {
    SearchConfig c;
    c.partitions = parts;
    for (auto& r : find_anomalies(b.prog, b.schema, c).reports)
      if (r.fingerprint == fp) return true;
    return false;
  };
  bool two = has(2), one = has(1);
  return {two && !one, std::string("partitions=2 ") + (two ? "reports" : "misses") + " it, partitions=1 " +
                           (one ? "reports" : "does not report") + " it"};
}

// 5: every report replays to its cycle
Outcome replay_soundness() {
  int total = 0, ok = 0;
  std::string bad;
  for (auto n : {"payment", "dirty_read", "lost_update_upd", "lost_update_inc", "write_skew", "partition", "similar"}) {
    auto b = gen::load_bench(n);
    auto c = config_for(b);
    for (auto& r : find_anomalies(b.prog, b.schema, c).reports) {
      ++total;
      if (r.prefix < 0) {
        bad += " " + b.name + ":" + std::to_string(r.id) + "(no prefix)";
        continue;
      }
      auto conf = to_config(r.model, b.prog, b.schema, c.unroll);
      conf.expect = r.fingerprint;
      auto back = parse_conf(write_conf(conf, b.schema), b.schema);
      auto v = verify(back.expect, r.length, r.internal_requested, replay(back, b.prog, b.schema));
      if (v.kind == VerdictKind::Confirmed) ++ok;
      else bad += " " + b.name + ":" + std::to_string(r.id);
    }
  }
  return {total > 0 && ok == total, std::to_string(ok) + "/" + std::to_string(total) + " confirmed" + bad};
}

// 6: oracle vs cycle absence. Schedules are decoded from an index in mixed
// radix: per step an instance, a partition and connected or cut off.
struct Decoded {
  ExecutionOracle oracle;
  std::string key;
};

Decoded decode_schedule(const gen::Bench& b, const std::vector<TxnInstance>& inst,
                                       const std::vector<InitRow>& init, uint64_t x) {
  Decoded d;
  auto& o = d.oracle;
  o.instances = inst;
  o.initial_db = init;
  o.partitions = 2;
  Interpreter in(b.prog, b.schema, inst, init, 2, 2);
  int n = static_cast<int>(inst.size());
  for (;;) {
    std::vector<int> live;
    for (int i = 0; i < n; ++i)
      if (in.has_next(i)) live.push_back(i);
    if (live.empty()) break;
    uint64_t digit = x % (4 * n);
    x /= (4 * n);
    ScheduleStep st;
    st.instance = live[(digit / 4) % live.size()];
    st.partition = static_cast<int>(digit % 2);
    if ((digit / 2) % 2) st.groups = {{st.partition}, {1 - st.partition}};
    in.step(st);
    o.schedule.push_back(st);
    d.key += std::to_string(st.instance) + std::to_string(st.partition) + (st.groups.empty() ? "c" : "s");
  }
  return d;
}

Outcome oracle_equivalence() {
  auto t0 = Clock::now();
  const int cap = 10000;
  const int per_bench = cap / static_cast<int>(gen::micro_benchmarks().size());
  int histories = 0, disagreements = 0, cyclic = 0;
  std::string first_bad;
  for (auto& name : gen::micro_benchmarks()) {
    auto b = gen::load_bench(name);
    std::vector<InitRow> init;
    for (auto& t : b.schema.tables)
      for (int64_t k = 1; k <= 2; ++k) {
        InitRow r{t.name, {}};
        for (auto& f : t.fields) r.values[f] = t.is_key(f) ? k : 1;
        init.push_back(r);
      }
    for (int n = 2; n <= 3; ++n) {
      // instance tuples: type multiset times arguments from {1,2}
      std::vector<std::vector<TxnInstance>> combos;
      for (auto& types : type_multisets(b.prog, n)) {
        std::vector<int> widths;
        for (auto& t : types) widths.push_back(static_cast<int>(b.prog.find(t)->params.size()));
        int bits = std::accumulate(widths.begin(), widths.end(), 0);
        for (int m = 0; m < (1 << bits); ++m) {
          std::vector<TxnInstance> inst;
          int bit = 0;
          for (size_t i = 0; i < types.size(); ++i) {
            TxnInstance ti{types[i], {}, {}};
            for (int a = 0; a < widths[i]; ++a) ti.args.push_back(((m >> bit++) & 1) + 1);
            inst.push_back(ti);
          }
          combos.push_back(inst);
        }
      }
      int budget = per_bench / 2;
      int quota = std::max(1, budget / static_cast<int>(combos.size()));
      uint64_t space = 1;
      for (int s = 0; s < 3 * n; ++s) space *= 4 * n;
      for (auto& inst : combos) {
        if (budget <= 0) break;
        std::set<std::string> seen;
        for (uint64_t i = 0; i < space && static_cast<int>(seen.size()) < quota && budget > 0; ++i) {
          uint64_t x = (i * 1000003ULL) % space;
          Decoded d;
          try {
            d = decode_schedule(b, inst, init, x);
          } catch (const Fault&) {
            break;
          }
          if (!seen.insert(d.key).second) continue;
          --budget;
          History h;
          try {
            h = run(d.oracle, b.prog, b.schema);
          } catch (const Fault&) {
            continue;
          }
          ++histories;
          bool acyclic = !has_valid_cycle(dependency_graph(h));
          cyclic += !acyclic;
          bool ser = serializability_oracle(h, b.prog, b.schema, 2).serializable;
          if (ser != acyclic) {
            ++disagreements;
            if (first_bad.empty()) first_bad = " first: " + name + " " + d.key;
          }
        }
      }
    }
  }
  double secs = since(t0);
  return {disagreements == 0 && histories > 0 && secs < 600,
          std::to_string(histories) + " histories (" + std::to_string(cyclic) + " cyclic), " +
              std::to_string(disagreements) + " disagreements, " + std::to_string(secs) + "s" + first_bad};
}

// 7: lattice on random histories, serial replays are ser
Outcome lattice() {
  std::mt19937 rng(2024);
  int checked = 0, violations = 0, serial = 0;
  for (int i = 0; checked < 200 && i < 5000; ++i) {
    auto b = gen::load_bench(gen::micro_benchmarks()[i % gen::micro_benchmarks().size()]);
    auto s = gen::random_history(b, rng, 1 + static_cast<int>(rng() % 3));
    if (!s) continue;
    ++checked;
    auto& h = s->history;
    auto ok = [&](const char* spec) { return check_history(h, parse_spec(spec)).ok; };
    if (ok("ser") && !(ok("rc") && ok("rr") && ok("lin"))) ++violations;
    if (ok("cc") && !ok("cv")) ++violations;
    if (ok("ser")) {
      for (auto& st : h.states) violations += !check_state(st, GuaranteeSpec::ser()).ok;
      violations += !serializability_oracle(h, b.prog, b.schema, 2).serializable;
    }
  }
  for (int i = 0; serial < 200 && i < 5000; ++i) {
    auto b = gen::load_bench(gen::micro_benchmarks()[i % gen::micro_benchmarks().size()]);
    auto s = gen::random_history(b, rng, 1 + static_cast<int>(rng() % 3), 1, true);
    if (!s) continue;
    ++serial;
    if (!check_history(s->history, GuaranteeSpec::ser()).ok) ++violations;
  }
  return {checked == 200 && serial == 200 && violations == 0,
          std::to_string(checked) + " random and " + std::to_string(serial) + " serial histories, " +
              std::to_string(violations) + " violations"};
}

// 8: inner loop finds at least as many within its own time
Outcome inner_loop_dominance() {
  struct Row {
    std::string name;
    size_t count;
    double secs;
  };
  std::vector<Row> rows;
  for (auto n : {"payment", "dirty_read", "lost_update_upd", "lost_update_inc", "write_skew", "partition", "similar"}) {
    auto b = gen::load_bench(n);
    auto c = config_for(b);
    auto r = find_anomalies(b.prog, b.schema, c);
    rows.push_back({n, r.reports.size(), r.seconds});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.count > b.count; });
  bool pass = true;
  std::string detail;
  for (int i = 0; i < 3; ++i) {
    auto b = gen::load_bench(rows[i].name);
    auto c = config_for(b);
    c.inner_loop = false;
    c.deadline_s = rows[i].secs;
    auto plain = find_anomalies(b.prog, b.schema, c);
    pass = pass && rows[i].count >= plain.reports.size();
    detail += (i ? ", " : "") + rows[i].name + " " + std::to_string(rows[i].count) + " vs " +
              std::to_string(plain.reports.size());
  }
  return {pass, detail};
}

// 9: payment fragment against the golden file
Outcome payment() {
  auto b = gen::load_bench("payment");
  auto c = config_for(b);
  auto res = find_anomalies(b.prog, b.schema, c);
  if (res.reports.size() != 1) return {false, std::to_string(res.reports.size()) + " anomalies"};
  auto& r = res.reports[0];
  auto conf = to_config(r.model, b.prog, b.schema, c.unroll);
  conf.expect = r.fingerprint;
  bool golden = write_conf(conf, b.schema) == read_file(bench_path("payment.conf"));
  auto rr = replay(conf, b.prog, b.schema);
  auto& s = rr.history.final_state();
  std::vector<int> all(s.effects.size());
  std::iota(all.begin(), all.end(), 0);
  int64_t cnt = local_view(s.effects, all).get("CUST", {10}, "c_pay_cnt");
  bool lost = r.tables == std::vector<std::string>{"CUST"} && r.kinds == "RW ST RW ST";
  bool confirmed = verify(r.fingerprint, r.length, true, rr).kind == VerdictKind::Confirmed;
  return {golden && lost && confirmed && cnt == 51, std::string("config ") + (golden ? "matches" : "differs from") +
                                                        " golden, final c_pay_cnt=" + std::to_string(cnt)};
}

// 10: parser round trip
Outcome round_trip() {
  auto s = parse_schema(gen::kSchema);
  int failures = 0;
  for (unsigned seed = 1; seed <= 1000; ++seed) {
    gen::ProgramGen g(s, 100000 + seed);
    auto p = g.program();
    try {
      if (!(parse_program(pretty_print(p), s) == p)) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  return {failures == 0, "1000 programs, " + std::to_string(failures) + " failures"};
}

}  // namespace

int main() {
  std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"dirty read", dirty_read},
      {"lost update classification", lost_updates},
      {"ser kill switch", ser_kill_switch},
      {"partition anomaly", partition_anomaly},
      {"replay soundness", replay_soundness},
      {"oracle equivalence", oracle_equivalence},
      {"consistency lattice", lattice},
      {"inner loop dominance", inner_loop_dominance},
      {"payment fragment", payment},
      {"parser round trip", round_trip},
  };
  int failed = 0;
  for (size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", checks[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
