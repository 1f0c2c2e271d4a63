#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "serscope/serscope.hpp"

namespace fs = std::filesystem;
using namespace serscope;

namespace {

// exit codes
constexpr int kOk = 0;
constexpr int kNotConfirmed = 1;
constexpr int kInputError = 2;
constexpr int kSolverError = 3;

struct Inputs {
  Schema schema;
  Program prog;
};

std::string sibling(const std::string& path, const std::string& ext) {
  return fs::path(path).replace_extension(ext).string();
}

Inputs load(const std::string& program_path, std::string schema_path) {
  if (schema_path.empty()) schema_path = sibling(program_path, ".schema");
  if (!fs::exists(schema_path)) throw std::runtime_error("schema file not found: " + schema_path);
  if (!fs::exists(program_path)) throw std::runtime_error("program file not found: " + program_path);
  Inputs in;
  in.schema = parse_schema(read_file(schema_path), schema_path);
  in.prog = parse_program(read_file(program_path), in.schema, program_path);
  return in;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string p;
  while (std::getline(ss, p, ',')) out.push_back(p);
  return out;
}

struct AnalyzeOpts {
  std::string program, schema, init, out = "serscope-out", spec = "ec", solver;
  int max_p = 1, max_t = 2, max_c = 4, unroll = 2, records = 4, partitions = 2;
  double timeout = 120, deadline = 0;
  bool internal_only = false, dump_smt = false, no_inner = false, no_replay = false;
  std::vector<std::string> mixes;
};

int cmd_analyze(const AnalyzeOpts& o) {
  auto in = load(o.program, o.schema);
  SearchConfig cfg;
  cfg.spec = parse_spec(o.spec);
  cfg.max_p = o.max_p;
  cfg.max_t = o.max_t;
  cfg.max_c = o.max_c;
  cfg.unroll = o.unroll;
  cfg.records = o.records;
  cfg.partitions = o.partitions;
  cfg.timeout_s = o.timeout;
  cfg.deadline_s = o.deadline;
  cfg.internal_only = o.internal_only;
  cfg.inner_loop = !o.no_inner;
  cfg.solver = o.solver;
  for (auto& m : o.mixes) cfg.mixes.push_back(split_commas(m));
  std::string init = o.init;
  if (init.empty() && fs::exists(sibling(o.program, ".init"))) init = sibling(o.program, ".init");
  if (!init.empty()) {
    cfg.init = parse_init_constraints(read_file(init), in.schema);
    std::cerr << "initial-state constraints from " << init << "\n";
  }
  cfg.validate();
  fs::create_directories(o.out);
  if (o.dump_smt) cfg.dump_dir = (fs::path(o.out) / "smt").string();

  auto res = find_anomalies(in.prog, in.schema, cfg);
  std::ofstream jl(fs::path(o.out) / "reports.jsonl");
  for (auto& r : res.reports) {
    if (r.prefix >= 0) {
      auto conf = to_config(r.model, in.prog, in.schema, cfg.unroll);
      conf.expect = r.fingerprint;
      std::string name = "anomaly_" + std::to_string(r.id) + ".conf";
      std::ofstream(fs::path(o.out) / name) << write_conf(conf, in.schema);
      if (!o.no_replay) {
        auto rr = replay(conf, in.prog, in.schema);
        auto v = verify(r.fingerprint, r.length, r.internal_requested, rr);
        r.status = v.kind == VerdictKind::Confirmed ? ReplayStatus::Confirmed : ReplayStatus::Failed;
        r.note = v.note;
      }
    }
    auto j = to_json(r);
    std::cout << j.dump() << "\n";
    jl << j.dump() << "\n";
  }
  for (auto& u : res.undetermined) {
    std::string ts;
    for (auto& t : u.types) ts += (ts.empty() ? "" : ",") + t;
    std::cerr << "undetermined: " << u.stage << " query, " << u.txns << " txns [" << ts << "], length " << u.length << "\n";
  }
  std::string table = summary_table(res);
  if (res.reports.empty()) table = "no anomalies found within bounds\n" + table;
  std::cout << table;
  std::ofstream(fs::path(o.out) / "summary.txt") << table;
  return kOk;
}

int cmd_replay(const std::string& program, const std::string& schema, const std::string& conf_path, bool internal_only,
               const std::string& trace_out) {
  auto in = load(program, schema);
  auto conf = parse_conf(read_file(conf_path), in.schema);
  auto rr = replay(conf, in.prog, in.schema);
  // one token per cycle position
  int len = 0;
  std::istringstream toks(conf.expect);
  for (std::string t; toks >> t;) ++len;
  auto v = verify(conf.expect, len, internal_only, rr);
  if (!trace_out.empty()) std::ofstream(trace_out) << trace(rr.history);
  std::cout << "verdict: " << to_string(v.kind) << "\n";
  if (v.cycle) {
    std::cout << "cycle: " << describe(rr.graph, *v.cycle) << "\n";
    std::cout << "fingerprint: " << fingerprint(rr.graph, *v.cycle) << "\n";
    std::cout << "classification: " << (v.internal ? "internal" : "external") << "\n";
  }
  if (!conf.expect.empty() && v.kind != VerdictKind::Confirmed) {
    std::cout << "expected: " << conf.expect << "\n";
    std::cout << "note: " << v.note << "\n";
  }
  return v.kind == VerdictKind::Confirmed ? kOk : kNotConfirmed;
}

int cmd_oracle(const std::string& program, const std::string& schema, const std::string& conf_path, int max_steps) {
  auto in = load(program, schema);
  auto conf = parse_conf(read_file(conf_path), in.schema, true);
  auto rr = replay(conf, in.prog, in.schema);
  auto res = serializability_oracle(rr.history, in.prog, in.schema, conf.unroll, max_steps);
  std::cout << "serializable: " << (res.serializable ? "yes" : "no") << "\n";
  if (res.serializable) {
    std::cout << "witness order:";
    for (int i : res.order) std::cout << " " << instance_label(i);
    std::cout << "\n";
  } else {
    auto cs = find_cycles(rr.graph, static_cast<int>(rr.graph.nodes.size()), false);
    if (!cs.empty()) std::cout << "cycle: " << describe(rr.graph, cs.front()) << "\n";
  }
  std::cout << "orders tried: " << res.permutations << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serializability anomaly finder for weakly consistent stores"};
  app.require_subcommand(1);

  AnalyzeOpts a;
  auto* an = app.add_subcommand("analyze", "search for anomalies and write test configurations");
  an->add_option("program", a.program, "transaction program (.txn)")->required();
  an->add_option("--schema", a.schema, "schema file, defaults to the program path with .schema");
  an->add_option("--init-constraints", a.init, "initial-state constraints, defaults to <program>.init when present");
  an->add_option("--spec", a.spec, "consistency guarantees, e.g. ec, cc, rc+rr, ser")->capture_default_str();
  an->add_option("--max-p", a.max_p, "serial transactions before the cycle")->capture_default_str();
  an->add_option("--max-t", a.max_t, "concurrent transaction instances")->capture_default_str();
  an->add_option("--max-c", a.max_c, "cycle length")->capture_default_str();
  an->add_flag("--internal-only", a.internal_only, "ignore reads whose values are never used");
  an->add_option("--unroll", a.unroll, "loop unrolling bound")->capture_default_str();
  an->add_option("--records", a.records, "record slots per table")->capture_default_str();
  an->add_option("--partitions", a.partitions, "network partitions")->capture_default_str();
  an->add_option("--timeout", a.timeout, "per-query solver timeout in seconds")->capture_default_str();
  an->add_option("--deadline", a.deadline, "whole-search deadline in seconds, 0 for none")->capture_default_str();
  an->add_option("--solver", a.solver, "solver binary (SERSCOPE_SOLVER overrides)");
  an->add_flag("--dump-smt", a.dump_smt, "write every query under <out>/smt");
  an->add_option("--out", a.out, "output directory")->capture_default_str();
  an->add_option("--mix", a.mixes, "restrict cycles to a transaction mix, e.g. txn1,txn2 (repeatable)");
  an->add_flag("--no-inner-loop", a.no_inner, "skip the structural inner loop");
  an->add_flag("--no-replay", a.no_replay, "do not replay reports on the simulator");

  std::string rp_prog, rp_schema, rp_conf, rp_trace;
  bool rp_internal = false;
  auto* rp = app.add_subcommand("replay", "replay a test configuration and check its cycle");
  rp->add_option("program", rp_prog, "transaction program (.txn)")->required();
  rp->add_option("config", rp_conf, "test configuration (.conf)")->required();
  rp->add_option("--schema", rp_schema, "schema file");
  rp->add_flag("--internal-only", rp_internal, "require an internal cycle");
  rp->add_option("--trace", rp_trace, "write the effect trace here");

  std::string or_prog, or_schema, or_conf;
  int or_max = 12;
  auto* orc = app.add_subcommand("oracle", "brute-force serializability of a replayed configuration");
  orc->add_option("program", or_prog, "transaction program (.txn)")->required();
  orc->add_option("config", or_conf, "test configuration (.conf)")->required();
  orc->add_option("--schema", or_schema, "schema file");
  orc->add_option("--max-steps", or_max, "size guard")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  try {
    if (*an) return cmd_analyze(a);
    if (*rp) return cmd_replay(rp_prog, rp_schema, rp_conf, rp_internal, rp_trace);
    if (*orc) return cmd_oracle(or_prog, or_schema, or_conf, or_max);
  } catch (const smt::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kSolverError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
