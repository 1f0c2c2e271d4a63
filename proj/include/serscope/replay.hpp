#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "serscope/depgraph.hpp"
#include "serscope/encoder.hpp"
#include "serscope/semantics.hpp"

namespace serscope {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfInstance {
  std::string label;
  std::string txn;
  std::vector<int64_t> args;
  std::map<int, int64_t> anys;
};

struct ConfStep {
  std::string label;
  std::vector<std::vector<int>> groups;  // first partition of the first group executes
  int instance = 0;
  int ordinal = 0;
};

struct TestConfiguration {
  std::vector<InitRow> init;
  std::vector<ConfInstance> instances;
  std::vector<ConfStep> schedule;
  int partitions = 2;
  int unroll = 2;
  std::string expect;  // fingerprint the replay should manifest, optional
};

inline std::string partition_name(int p) { return p < 26 ? std::string(1, static_cast<char>('A' + p)) : "P" + std::to_string(p); }

inline int partition_index(const std::string& n) {
  if (n.size() == 1 && n[0] >= 'A' && n[0] <= 'Z') return n[0] - 'A';
  if (n.size() > 1 && n[0] == 'P') return std::stoi(n.substr(1));
  throw ConfigError("bad partition name '" + n + "'");
}

inline TestConfiguration to_config(const DecodedModel& m, const Program& prog, const Schema& schema, int unroll) {
  TestConfiguration cfg;
  cfg.partitions = m.partitions;
  cfg.unroll = unroll;
  for (auto& t : schema.tables) {
    auto it = m.slots.find(t.name);
    if (it == m.slots.end()) continue;
    std::vector<InitRow> rows;
    for (auto& s : it->second)
      if (s.alive && s.touched) rows.push_back({t.name, s.values});
    std::sort(rows.begin(), rows.end(), [&](const InitRow& a, const InitRow& b) { return key_of(t, a.values) < key_of(t, b.values); });
    cfg.init.insert(cfg.init.end(), rows.begin(), rows.end());
  }

  std::vector<int> order;
  for (size_t a = 0; a < m.nodes.size(); ++a)
    if (m.nodes[a].active) order.push_back(static_cast<int>(a));
  std::sort(order.begin(), order.end(), [&](int a, int b) { return m.nodes[a].ts < m.nodes[b].ts; });

  std::map<int, int> renum;
  for (int a : order)
    if (!renum.count(m.nodes[a].instance)) renum.emplace(m.nodes[a].instance, static_cast<int>(renum.size()));
  for (size_t i = 0; i < m.plan.size(); ++i)
    if (!renum.count(static_cast<int>(i))) renum.emplace(static_cast<int>(i), static_cast<int>(renum.size()));
  cfg.instances.resize(m.plan.size());
  for (auto [old, now] : renum) {
    if (!prog.find(m.plan[old].txn)) throw ConfigError("model names unknown transaction " + m.plan[old].txn);
    cfg.instances[now] = {instance_label(now), m.plan[old].txn, m.args[old], m.anys[old]};
  }

  int k = 0;
  for (int a : order) {
    auto& n = m.nodes[a];
    if (n.tau < 0 || n.tau >= m.partitions || !n.deliv.at(n.tau)) throw ConfigError("model placement is not realizable");
    std::vector<int> g{n.tau}, rest;
    for (int p = 0; p < m.partitions; ++p) {
      if (p == n.tau) continue;
      (n.deliv[p] ? g : rest).push_back(p);
    }
    ConfStep s;
    s.label = "T" + std::to_string(++k);
    s.groups.push_back(g);
    if (!rest.empty()) s.groups.push_back(rest);
    s.instance = renum.at(n.instance);
    s.ordinal = n.site;
    cfg.schedule.push_back(s);
  }
  return cfg;
}

inline std::string write_conf(const TestConfiguration& cfg, const Schema& schema) {
  std::ostringstream o;
  o << "# initialize:\n";
  for (auto& r : cfg.init) {
    auto* t = schema.find(r.table);
    if (!t) throw ConfigError("unknown table " + r.table);
    std::string fs, vs;
    for (auto& f : t->fields) {
      fs += (fs.empty() ? "" : ",") + f;
      auto it = r.values.find(f);
      vs += (vs.empty() ? "" : ",") + std::to_string(it == r.values.end() ? 0 : it->second);
    }
    o << "INSERT INTO \n  " << t->name << "(" << fs << ") \n  VALUES (" << vs << ");\n";
  }
  o << "# schedule: \n";
  for (auto& s : cfg.schedule) {
    o << "@" << s.label << "@partitions";
    for (auto& g : s.groups) {
      o << "{";
      for (size_t i = 0; i < g.size(); ++i) o << (i ? "," : "") << partition_name(g[i]);
      o << "}";
    }
    o << ": " << instance_label(s.instance) << "-O" << s.ordinal << "\n";
  }
  o << "# instances:\n";
  for (auto& in : cfg.instances) {
    o << in.label << ": " << in.txn << "(";
    for (size_t i = 0; i < in.args.size(); ++i) o << (i ? "," : "") << in.args[i];
    o << ")";
    if (!in.anys.empty()) {
      o << " any{";
      bool first = true;
      for (auto& [id, v] : in.anys) {
        o << (first ? "" : ",") << v;
        first = false;
      }
      o << "}";
    }
    o << "\n";
  }
  o << "# bounds: partitions=" << cfg.partitions << " unroll=" << cfg.unroll << "\n";
  if (!cfg.expect.empty()) o << "# expect: " << cfg.expect << "\n";
  return o.str();
}

inline std::vector<int64_t> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int64_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto b = part.find_first_not_of(" \t");
    if (b == std::string::npos) {
      if (s.find_first_not_of(" \t") == std::string::npos) break;
      throw ConfigError("empty value in " + what);
    }
    try {
      size_t pos = 0;
      out.push_back(std::stoll(part.substr(b), &pos));
      if (part.find_first_not_of(" \t", b + pos) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("bad integer '" + part + "' in " + what);
    }
  }
  return out;
}

inline TestConfiguration parse_conf(const std::string& text, const Schema& schema, bool allow_empty = false) {
  TestConfiguration cfg;
  std::istringstream in(text);
  std::string line, section, pending;
  int lineno = 0;
  int max_part = 0;
  static const std::regex insert_re(R"(^\s*INSERT\s+INTO\s+(\w+)\s*\(([^)]*)\)\s*VALUES\s*\(([^)]*)\)\s*;\s*$)",
                                    std::regex::icase);
  static const std::regex step_re(R"(^@(\w+)@partitions((?:\{[^}]*\})+):\s*Ins(\d+)-O(\d+)\s*$)");
  static const std::regex inst_re(R"(^(Ins\d+):\s*(\w+)\(([^)]*)\)\s*(?:any\{([^}]*)\})?\s*$)");
  static const std::regex bounds_re(R"(^#\s*bounds:\s*partitions=(\d+)\s+unroll=(\d+)\s*$)");
  static const std::regex expect_re(R"(^#\s*expect:\s*(.*\S)\s*$)");
  auto fail = [&](const std::string& m) { throw ConfigError("line " + std::to_string(lineno) + ": " + m); };
  bool have_bounds = false;
  std::map<std::string, int> labels;
  while (std::getline(in, line)) {
    ++lineno;
    std::smatch sm;
    std::string trimmed = line;
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();
    if (trimmed.empty()) continue;
    if (std::regex_match(trimmed, sm, bounds_re)) {
      cfg.partitions = std::stoi(sm[1]);
      cfg.unroll = std::stoi(sm[2]);
      have_bounds = true;
      continue;
    }
    if (std::regex_match(trimmed, sm, expect_re)) {
      cfg.expect = sm[1];
      continue;
    }
    if (trimmed[0] == '#') {
      std::string h = trimmed.substr(1);
      h.erase(0, h.find_first_not_of(' '));
      if (h == "initialize:" || h == "schedule:" || h == "instances:") section = h;
      else fail("unknown section '" + trimmed + "'");
      continue;
    }
    if (section == "initialize:") {
      pending += " " + trimmed;
      if (trimmed.back() != ';') continue;
      if (!std::regex_match(pending, sm, insert_re)) fail("malformed INSERT");
      auto* t = schema.find(sm[1]);
      if (!t) fail("unknown table '" + sm[1].str() + "'");
      std::vector<std::string> fs;
      std::stringstream fss(sm[2].str());
      std::string f;
      while (std::getline(fss, f, ',')) {
        f.erase(0, f.find_first_not_of(" \t"));
        f.erase(f.find_last_not_of(" \t") + 1);
        if (!t->has_field(f)) fail("unknown field '" + f + "'");
        fs.push_back(f);
      }
      auto vs = parse_int_list(sm[3], "VALUES");
      if (vs.size() != fs.size()) fail("field and value counts differ");
      InitRow r{t->name, {}};
      for (size_t i = 0; i < fs.size(); ++i) r.values[fs[i]] = vs[i];
      cfg.init.push_back(r);
      pending.clear();
    } else if (section == "schedule:") {
      if (!std::regex_match(trimmed, sm, step_re)) fail("malformed schedule line");
      ConfStep s;
      s.label = sm[1];
      std::string gs = sm[2];
      for (size_t i = 0; i < gs.size();) {
        size_t j = gs.find('}', i);
        std::vector<int> g;
        std::stringstream ps(gs.substr(i + 1, j - i - 1));
        std::string p;
        while (std::getline(ps, p, ',')) {
          p.erase(0, p.find_first_not_of(" \t"));
          p.erase(p.find_last_not_of(" \t") + 1);
          int idx = partition_index(p);
          max_part = std::max(max_part, idx + 1);
          g.push_back(idx);
        }
        if (g.empty()) fail("empty partition group");
        s.groups.push_back(g);
        i = j + 1;
      }
      s.instance = std::stoi(sm[3]) - 1;
      s.ordinal = std::stoi(sm[4]);
      if (s.instance < 0 || s.ordinal < 1) fail("bad step action");
      cfg.schedule.push_back(s);
    } else if (section == "instances:") {
      if (!std::regex_match(trimmed, sm, inst_re)) fail("malformed instance line");
      ConfInstance ci;
      ci.label = sm[1];
      ci.txn = sm[2];
      ci.args = parse_int_list(sm[3], "arguments");
      if (sm[4].matched) {
        auto vs = parse_int_list(sm[4], "any{}");
        for (size_t i = 0; i < vs.size(); ++i) ci.anys[static_cast<int>(i)] = vs[i];
      }
      labels[ci.label] = static_cast<int>(cfg.instances.size());
      cfg.instances.push_back(ci);
    } else {
      fail("content outside any section");
    }
  }
  if (!pending.empty()) throw ConfigError("unterminated INSERT");
  if (!have_bounds) cfg.partitions = std::max(max_part, 1);
  if (cfg.schedule.empty() && !allow_empty) throw ConfigError("empty schedule");
  // instance lines may come in any order; index them by label
  std::vector<ConfInstance> ordered(cfg.instances.size());
  for (auto& ci : cfg.instances) {
    int idx = std::stoi(ci.label.substr(3)) - 1;
    if (idx < 0 || idx >= static_cast<int>(ordered.size()) || !ordered[idx].label.empty())
      throw ConfigError("instance labels must be Ins1..Ins" + std::to_string(ordered.size()));
    ordered[idx] = ci;
  }
  cfg.instances = ordered;
  for (auto& s : cfg.schedule) {
    if (s.instance >= static_cast<int>(cfg.instances.size()))
      throw ConfigError("step " + s.label + " names an undeclared instance");
    std::vector<int> seen;
    for (auto& g : s.groups)
      for (int p : g) {
        if (p >= cfg.partitions) throw ConfigError("step " + s.label + " names partition " + partition_name(p) + " beyond the bound");
        seen.push_back(p);
      }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw ConfigError("step " + s.label + ": partition groups overlap");
  }
  return cfg;
}

struct ReplayResult {
  History history;
  DependencyGraph graph;
};

inline ExecutionOracle to_oracle(const TestConfiguration& cfg) {
  ExecutionOracle o;
  o.partitions = cfg.partitions;
  o.unroll = cfg.unroll;
  o.initial_db = cfg.init;
  for (auto& ci : cfg.instances) o.instances.push_back({ci.txn, ci.args, ci.anys});
  for (auto& s : cfg.schedule) {
    ScheduleStep st;
    st.instance = s.instance;
    st.ordinal = s.ordinal;
    st.partition = s.groups.at(0).at(0);
    st.label = s.label;
    std::vector<int> seen;
    for (auto& g : s.groups) {
      st.groups.push_back(g);
      seen.insert(seen.end(), g.begin(), g.end());
    }
    // partitions left out of every group stand alone
    for (int p = 0; p < cfg.partitions; ++p)
      if (std::find(seen.begin(), seen.end(), p) == seen.end()) st.groups.push_back({p});
    o.schedule.push_back(st);
  }
  return o;
}

inline ReplayResult replay(const TestConfiguration& cfg, const Program& prog, const Schema& schema) {
  ReplayResult r;
  r.history = run(to_oracle(cfg), prog, schema);
  r.graph = dependency_graph(r.history);
  return r;
}

enum class VerdictKind { Confirmed, CycleAbsent, DifferentCycle };

inline const char* to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::Confirmed: return "confirmed";
    case VerdictKind::CycleAbsent: return "cycle-absent";
    case VerdictKind::DifferentCycle: return "different-cycle";
  }
  return "?";
}

struct Verdict {
  VerdictKind kind = VerdictKind::CycleAbsent;
  bool internal = false;
  std::optional<Cycle> cycle;
  std::string note;
};

// Expected fingerprint empty: any valid cycle counts.
inline Verdict verify(const std::string& fingerprint_, int length, bool internal_requested, const ReplayResult& rr) {
  Verdict v;
  auto& g = rr.graph;
  if (!fingerprint_.empty()) {
    v.cycle = find_cycle_with_fingerprint(g, fingerprint_, length);
  } else {
    auto cs = find_cycles(g, static_cast<int>(g.nodes.size()), false);
    for (auto& c : cs)
      if (!v.cycle || (c.internal && !v.cycle->internal)) v.cycle = c;
  }
  if (v.cycle) {
    v.internal = v.cycle->internal;
    if (internal_requested && !v.internal) {
      v.kind = VerdictKind::DifferentCycle;
      v.note = "cycle manifests but is external";
    } else {
      v.kind = VerdictKind::Confirmed;
      v.note = v.internal ? "internal" : "external";
    }
    return v;
  }
  auto others = find_cycles(g, static_cast<int>(g.nodes.size()), internal_requested);
  if (others.empty()) {
    v.kind = VerdictKind::CycleAbsent;
    v.note = "no valid cycle in the replayed history";
  } else {
    v.kind = VerdictKind::DifferentCycle;
    v.cycle = others.front();
    v.internal = others.front().internal;
    v.note = "found " + fingerprint(g, others.front()) + " instead";
  }
  return v;
}

}  // namespace serscope
