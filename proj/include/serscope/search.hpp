#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "serscope/encoder.hpp"

namespace serscope {

struct SearchConfig {
  int max_p = 1;
  int max_t = 2;
  int max_c = 4;
  GuaranteeSpec spec;
  bool internal_only = false;
  double timeout_s = 120;
  int records = 4;
  int unroll = 2;
  int partitions = 2;
  std::string solver = "z3";
  std::vector<InitConstraint> init;
  bool inner_loop = true;
  double deadline_s = 0;  // whole search, 0 for none
  std::string dump_dir;   // .smt2 files go here when set
  std::vector<std::vector<std::string>> mixes;  // cycle transaction mixes to try, empty for all

  void validate() const {
    if (max_t < 2) throw std::invalid_argument("max-t must be at least 2");
    if (max_c < 3) throw std::invalid_argument("max-c must be at least 3");
    if (max_p < 0) throw std::invalid_argument("max-p must be non-negative");
    if (records < 1) throw std::invalid_argument("records must be positive");
    if (unroll < 1) throw std::invalid_argument("unroll must be positive");
    if (partitions < 1) throw std::invalid_argument("partitions must be positive");
    if (timeout_s <= 0) throw std::invalid_argument("timeout must be positive");
  }
};

enum class ReplayStatus { Pending, Confirmed, Failed, NoPrefix, Undetermined };

inline const char* to_string(ReplayStatus s) {
  switch (s) {
    case ReplayStatus::Pending: return "pending";
    case ReplayStatus::Confirmed: return "confirmed";
    case ReplayStatus::Failed: return "failed";
    case ReplayStatus::NoPrefix: return "no independent prefix";
    case ReplayStatus::Undetermined: return "undetermined";
  }
  return "?";
}

struct AnomalyReport {
  int id = 0;
  std::string fingerprint;  // per edge: type pair, ordinal, kind, field
  std::string dedup_key;    // same without fields
  std::string kinds;
  int length = 0;
  int txns = 0;
  std::vector<std::string> types;
  std::vector<std::string> tables;
  std::vector<EdgeLiteral> literals;
  int prefix = -1;  // serial prefix length used, -1 when none worked
  DecodedModel model;
  double seconds = 0;       // solver time for the cycle query
  double path_seconds = 0;  // solver time spent in prefix construction
  ReplayStatus status = ReplayStatus::Pending;
  bool internal_requested = false;
  std::string note;
};

struct Undetermined {
  int txns = 0;
  int length = 0;
  std::vector<std::string> types;
  std::string stage;
};

struct SearchResult {
  std::vector<AnomalyReport> reports;
  std::vector<Undetermined> undetermined;
  bool truncated = false;
  double seconds = 0;
  int queries = 0;
};

// Multisets of size n over the transaction names, in program order.
inline std::vector<std::vector<std::string>> type_multisets(const Program& prog, int n) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> cur;
  int m = static_cast<int>(prog.transactions.size());
  std::function<void(int)> go = [&](int from) {
    if (static_cast<int>(cur.size()) == n) {
      out.push_back(cur);
      return;
    }
    for (int i = from; i < m; ++i) {
      cur.push_back(prog.transactions[i].name);
      go(i);
      cur.pop_back();
    }
  };
  go(0);
  return out;
}

inline std::vector<EdgeLiteral> enc_neg_literals(const DecodedModel& m) { return m.literals(); }

// type and kind per position
inline std::vector<std::pair<std::string, EdgeKind>> enc_struct(const DecodedModel& m) {
  std::vector<std::pair<std::string, EdgeKind>> out;
  for (size_t i = 0; i < m.cycle_nodes.size(); ++i)
    out.push_back({m.plan[m.nodes[m.cycle_nodes[i]].instance].txn, m.cycle_kinds[i]});
  return out;
}

inline std::vector<PositionPin> enc_path(const DecodedModel& m) {
  std::vector<PositionPin> out;
  for (size_t i = 0; i < m.cycle_nodes.size(); ++i) {
    auto& n = m.nodes[m.cycle_nodes[i]];
    out.push_back({m.plan[n.instance].txn, n.site, m.cycle_kinds[i], m.cycle_fields[i]});
  }
  return out;
}

class Searcher {
 public:
  Searcher(const Program& prog, const Schema& schema, SearchConfig cfg)
      : prog_(prog), schema_(schema), cfg_(std::move(cfg)) {
    cfg_.validate();
    cfg_.solver = smt::resolve_solver(cfg_.solver);
  }

  SearchResult run() {
    start_ = std::chrono::steady_clock::now();
    SearchResult res;
    std::vector<std::vector<EdgeLiteral>> found;
    std::vector<DecodedModel> cycles;
    std::vector<double> times;
    for (int t = 2; t <= cfg_.max_t && !res.truncated; ++t) {
      auto sets = type_multisets(prog_, t);
      if (!cfg_.mixes.empty())
        std::erase_if(sets, [&](const std::vector<std::string>& m) {
          return std::none_of(cfg_.mixes.begin(), cfg_.mixes.end(), [&](std::vector<std::string> x) {
            std::sort(x.begin(), x.end());
            auto y = m;
            std::sort(y.begin(), y.end());
            return x == y;
          });
        });
      for (int c = 3; c <= cfg_.max_c && !res.truncated; ++c) {
        for (auto& types : sets) {
          if (res.truncated) break;
          std::vector<InstancePlan> plan;
          for (auto& ty : types) plan.push_back({ty, false});
          while (true) {
            CycleQuery cq;
            cq.length = c;
            cq.blocked = found;
            auto q = query(plan, cq, false, false, res);
            if (q.status == smt::Status::Unsat) break;
            if (q.status == smt::Status::Unknown) {
              if (!res.truncated) res.undetermined.push_back({t, c, types, "cycle"});
              break;
            }
            found.push_back(q.model.literals());
            cycles.push_back(q.model);
            times.push_back(q.seconds);
            if (!cfg_.inner_loop) continue;
            auto st = enc_struct(q.model);
            while (true) {
              CycleQuery sq;
              sq.length = c;
              sq.blocked = found;
              sq.structure = st;
              auto s = query(plan, sq, false, false, res);
              if (s.status == smt::Status::Unsat) break;
              if (s.status == smt::Status::Unknown) {
                if (!res.truncated) res.undetermined.push_back({t, c, types, "structure"});
                break;
              }
              found.push_back(s.model.literals());
              cycles.push_back(s.model);
              times.push_back(s.seconds);
            }
            if (res.truncated) break;
          }
        }
      }
    }

    for (size_t i = 0; i < cycles.size(); ++i) {
      AnomalyReport r = make_report(cycles[i], times[i]);
      if (!res.truncated) build_prefix(r, res);
      res.reports.push_back(std::move(r));
    }
    std::stable_sort(res.reports.begin(), res.reports.end(), [](const AnomalyReport& a, const AnomalyReport& b) {
      return std::tie(a.length, a.txns, a.fingerprint) < std::tie(b.length, b.txns, b.fingerprint);
    });
    for (size_t i = 0; i < res.reports.size(); ++i) res.reports[i].id = static_cast<int>(i + 1);
    res.seconds = elapsed();
    return res;
  }

 private:
  struct QueryResult {
    smt::Status status = smt::Status::Unknown;
    DecodedModel model;
    double seconds = 0;
  };

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  EncoderConfig encoder_config(bool with_init) const {
    EncoderConfig e;
    e.partitions = cfg_.partitions;
    e.records = cfg_.records;
    e.unroll = cfg_.unroll;
    e.spec = cfg_.spec;
    e.internal_only = cfg_.internal_only;
    e.init = cfg_.init;
    e.apply_init = with_init;
    return e;
  }

  std::optional<smt::Result> call(const std::string& text, SearchResult& res) {
    double budget = cfg_.timeout_s;
    if (cfg_.deadline_s > 0) {
      double left = cfg_.deadline_s - elapsed();
      if (left <= 0) {
        res.truncated = true;
        return std::nullopt;
      }
      budget = std::min(budget, left);
    }
    ++res.queries;
    if (!cfg_.dump_dir.empty()) {
      std::filesystem::create_directories(cfg_.dump_dir);
      std::ostringstream name;
      name << "query_" << std::setw(4) << std::setfill('0') << res.queries << ".smt2";
      std::ofstream(std::filesystem::path(cfg_.dump_dir) / name.str()) << text;
    }
    auto r = smt::solve(text, {cfg_.solver, budget});
    if (r.timed_out && cfg_.deadline_s > 0 && elapsed() >= cfg_.deadline_s) res.truncated = true;
    return r;
  }

  // prefer connected partitions and same-type instances in order
  QueryResult query(const std::vector<InstancePlan>& plan, const CycleQuery& cq, bool with_init, bool prefer,
                    SearchResult& res) {
    QueryResult out;
    Encoding enc(prog_, schema_, encoder_config(with_init), plan, cq);
    std::vector<std::vector<smt::Term>> passes;
    if (prefer) {
      passes.push_back({enc.pref_connected(), enc.pref_instance_order(true)});
      passes.push_back({enc.pref_connected(), enc.pref_instance_order()});
      passes.push_back({enc.pref_connected()});
      passes.push_back({enc.pref_instance_order()});
    }
    passes.push_back({});
    for (size_t i = 0; i < passes.size(); ++i) {
      auto r = call(enc.text(passes[i]), res);
      if (!r) return out;
      out.seconds += r->seconds;
      if (r->status == smt::Status::Sat) {
        out.status = smt::Status::Sat;
        out.model = enc.decode(r->model);
        return out;
      }
      if (i + 1 == passes.size()) out.status = r->status;
    }
    return out;
  }

  AnomalyReport make_report(const DecodedModel& m, double seconds) const {
    AnomalyReport r;
    auto toks = m.tokens();
    r.fingerprint = render(toks, true);
    r.dedup_key = render(toks, false);
    r.length = static_cast<int>(m.cycle_nodes.size());
    r.txns = static_cast<int>(m.plan.size());
    r.literals = m.literals();
    std::vector<std::string> ks;
    for (auto k : m.cycle_kinds) ks.push_back(to_string(k));
    auto best = ks;
    for (size_t i = 1; i < ks.size(); ++i) {
      std::rotate(ks.begin(), ks.begin() + 1, ks.end());
      if (ks < best) best = ks;
    }
    for (auto& k : best) r.kinds += (r.kinds.empty() ? "" : " ") + k;
    std::set<std::string> tys, tabs;
    for (auto& ip : m.plan) tys.insert(ip.txn);
    for (auto& f : m.cycle_fields)
      if (!f.empty()) tabs.insert(f.substr(0, f.find('.')));
    r.types.assign(tys.begin(), tys.end());
    r.tables.assign(tabs.begin(), tabs.end());
    r.model = m;
    r.seconds = seconds;
    r.internal_requested = cfg_.internal_only;
    return r;
  }

  void build_prefix(AnomalyReport& r, SearchResult& res) {
    std::vector<InstancePlan> cyc;
    for (auto& ip : r.model.plan)
      if (!ip.serial) cyc.push_back(ip);
    CycleQuery cq;
    cq.length = r.length;
    cq.pin = enc_path(r.model);
    bool unknown = false;
    for (int p = 0; p <= cfg_.max_p; ++p) {
      for (auto& serial : type_multisets(prog_, p)) {
        std::vector<InstancePlan> plan;
        for (auto& s : serial) plan.push_back({s, true});
        plan.insert(plan.end(), cyc.begin(), cyc.end());
        auto q = query(plan, cq, true, true, res);
        r.path_seconds += q.seconds;
        if (res.truncated) {
          r.status = ReplayStatus::Undetermined;
          r.note = "search deadline reached";
          return;
        }
        if (q.status == smt::Status::Sat) {
          r.prefix = p;
          r.model = q.model;
          return;
        }
        if (q.status == smt::Status::Unknown) unknown = true;
      }
    }
    r.status = unknown ? ReplayStatus::Undetermined : ReplayStatus::NoPrefix;
    r.note = unknown ? "prefix query undetermined" : "no serial prefix within bounds";
  }

  const Program& prog_;
  const Schema& schema_;
  SearchConfig cfg_;
  std::chrono::steady_clock::time_point start_;
};

inline SearchResult find_anomalies(const Program& prog, const Schema& schema, const SearchConfig& cfg) {
  return Searcher(prog, schema, cfg).run();
}

// ---------------------------------------------------------------- output

inline nlohmann::json to_json(const AnomalyReport& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["fingerprint"] = r.fingerprint;
  j["dedup_key"] = r.dedup_key;
  j["kinds"] = r.kinds;
  j["length"] = r.length;
  j["txns"] = r.txns;
  j["types"] = r.types;
  j["tables"] = r.tables;
  j["serial_prefix"] = r.prefix;
  j["seconds"] = r.seconds;
  j["path_seconds"] = r.path_seconds;
  j["status"] = to_string(r.status);
  j["internal_only"] = r.internal_requested;
  if (!r.note.empty()) j["note"] = r.note;
  auto& m = r.model;
  nlohmann::json inst = nlohmann::json::array();
  for (size_t i = 0; i < m.plan.size(); ++i)
    inst.push_back({{"txn", m.plan[i].txn}, {"serial", m.plan[i].serial}, {"args", m.args[i]}});
  j["instances"] = inst;
  nlohmann::json cyc = nlohmann::json::array();
  for (size_t i = 0; i < m.cycle_nodes.size(); ++i) {
    auto& n = m.nodes[m.cycle_nodes[i]];
    nlohmann::json e{{"instance", n.instance + 1}, {"site", n.site}, {"kind", to_string(m.cycle_kinds[i])}};
    if (!m.cycle_fields[i].empty()) e["field"] = m.cycle_fields[i];
    cyc.push_back(e);
  }
  j["cycle"] = cyc;
  return j;
}

inline std::string summary_table(const SearchResult& res) {
  std::ostringstream o;
  o << std::left << std::setw(4) << "id" << std::setw(8) << "length" << std::setw(6) << "txns" << std::setw(16)
    << "tables" << std::setw(22) << "type" << std::setw(10) << "time(s)"
    << "status\n";
  for (auto& r : res.reports) {
    std::string tabs;
    for (auto& t : r.tables) tabs += (tabs.empty() ? "" : ",") + t;
    std::ostringstream tm;
    tm << std::fixed << std::setprecision(2) << r.seconds + r.path_seconds;
    o << std::setw(4) << r.id << std::setw(8) << r.length << std::setw(6) << r.txns << std::setw(16) << tabs
      << std::setw(22) << r.kinds << std::setw(10) << tm.str() << to_string(r.status) << "\n";
  }
  o << res.reports.size() << " anomalies";
  if (!res.undetermined.empty()) o << ", " << res.undetermined.size() << " undetermined queries";
  if (res.truncated) o << ", truncated at deadline";
  o << ", " << res.queries << " solver queries, " << std::fixed << std::setprecision(2) << res.seconds << "s\n";
  return o.str();
}

}  // namespace serscope
