#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "serscope/parser.hpp"
#include "serscope/semantics.hpp"

// random simulator histories over the bundled micro-benchmarks
namespace gen {

using namespace serscope;

struct Bench {
  std::string name;
  Schema schema;
  Program prog;
};

inline Bench load_bench(const std::string& name) {
  std::string base = std::string(SERSCOPE_BENCH_DIR) + "/" + name;
  Bench b;
  b.name = name;
  b.schema = parse_schema(read_file(base + ".schema"));
  b.prog = parse_program(read_file(base + ".txn"), b.schema);
  return b;
}

inline const std::vector<std::string>& micro_benchmarks() {
  static const std::vector<std::string> names = {"dirty_read", "lost_update_upd", "lost_update_inc",
                                                 "write_skew", "partition"};
  return names;
}

// every table gets keys 1 and 2, fields 0 or 1
inline std::vector<InitRow> small_init(const Schema& s, std::mt19937& rng) {
  std::vector<InitRow> rows;
  for (auto& t : s.tables)
    for (int64_t k = 1; k <= 2; ++k) {
      InitRow r;
      r.table = t.name;
      for (auto& f : t.fields) r.values[f] = t.is_key(f) ? k : static_cast<int64_t>(rng() % 2);
      rows.push_back(r);
    }
  return rows;
}

inline TxnInstance random_instance(const Program& p, std::mt19937& rng) {
  auto& t = p.transactions[rng() % p.transactions.size()];
  TxnInstance ti;
  ti.txn = t.name;
  // keys live in 1..2, values in 0..3
  for (size_t i = 0; i < t.params.size(); ++i) ti.args.push_back(static_cast<int64_t>(rng() % (i % 2 ? 4 : 2)) + 1);
  return ti;
}

struct Sample {
  ExecutionOracle oracle;
  History history;
};

// Interleaves instances at random, each step on a random partition that is
// either connected to the others or cut off.
inline std::optional<Sample> random_history(const Bench& b, std::mt19937& rng, int instances = 3, int partitions = 2,
                                            bool serial = false) {
  Sample s;
  auto& o = s.oracle;
  o.partitions = serial ? 1 : partitions;
  o.unroll = 2;
  o.initial_db = small_init(b.schema, rng);
  for (int i = 0; i < instances; ++i) o.instances.push_back(random_instance(b.prog, rng));
  try {
    Interpreter in(b.prog, b.schema, o.instances, o.initial_db, o.partitions, o.unroll);
    std::vector<int> live(instances);
    for (int i = 0; i < instances; ++i) live[i] = i;
    int cur = 0;
    while (!live.empty()) {
      if (!serial || !in.has_next(live[cur])) cur = static_cast<int>(rng() % live.size());
      int i = live[cur];
      if (!in.has_next(i)) {
        live.erase(live.begin() + cur);
        cur = 0;
        continue;
      }
      ScheduleStep st;
      st.instance = i;
      st.partition = static_cast<int>(rng() % o.partitions);
      if (o.partitions > 1 && rng() % 2) {
        std::vector<int> mine{st.partition}, rest;
        for (int p = 0; p < o.partitions; ++p)
          if (p != st.partition) rest.push_back(p);
        st.groups = {mine, rest};
      }
      in.step(st);
      o.schedule.push_back(st);
    }
    s.history = run(o, b.prog, b.schema);
  } catch (const Fault&) {
    return std::nullopt;
  } catch (const ScheduleError&) {
    return std::nullopt;
  }
  return s;
}

}  // namespace gen
