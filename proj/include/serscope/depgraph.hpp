#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "serscope/model.hpp"
#include "serscope/semantics.hpp"

namespace serscope {

enum class EdgeKind { WR, WW, RW, ST, STPlus };

inline const char* to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::WR: return "WR";
    case EdgeKind::WW: return "WW";
    case EdgeKind::RW: return "RW";
    case EdgeKind::ST: return "ST";
    case EdgeKind::STPlus: return "ST+";
  }
  return "?";
}

inline bool is_dependency(EdgeKind k) { return k == EdgeKind::WR || k == EdgeKind::WW || k == EdgeKind::RW; }

// ---------------------------------------------------------------- effect level

struct EffectDep {
  int from = 0;  // effect indices
  int to = 0;
  EdgeKind kind = EdgeKind::WR;
  bool used = true;  // the read side is not an unused read
};

// Index of the ar-latest write on the read's (record, field) visible to it; -1 if none.
inline int read_source(const SystemState& s, int rd) {
  auto& r = s.effects[rd];
  for (int w = rd - 1; w >= 0; --w) {
    auto& e = s.effects[w];
    if (e.write && e.table == r.table && e.field == r.field && e.key == r.key && s.vis.get(w, rd)) return w;
  }
  return -1;
}

inline std::vector<EffectDep> effect_dependencies(const SystemState& s) {
  std::vector<EffectDep> out;
  int n = static_cast<int>(s.effects.size());
  std::map<std::tuple<std::string, Key, std::string>, std::vector<int>> writes;
  for (int i = 0; i < n; ++i)
    if (s.effects[i].write && s.effects[i].txn_instance >= 0)
      writes[{s.effects[i].table, s.effects[i].key, s.effects[i].field}].push_back(i);

  for (auto& [cell, ws] : writes)
    for (size_t a = 0; a < ws.size(); ++a)
      for (size_t b = a + 1; b < ws.size(); ++b) out.push_back({ws[a], ws[b], EdgeKind::WW, true});

  for (int rd = 0; rd < n; ++rd) {
    auto& r = s.effects[rd];
    if (r.write) continue;
    int src = read_source(s, rd);
    if (src >= 0 && s.effects[src].txn_instance >= 0) out.push_back({src, rd, EdgeKind::WR, r.used});
    auto it = writes.find({r.table, r.key, r.field});
    if (it == writes.end()) continue;
    for (int w : it->second) {
      if (w <= src || s.effects[w].query_instance == r.query_instance) continue;
      out.push_back({rd, w, EdgeKind::RW, r.used});
    }
  }
  return out;
}

// ---------------------------------------------------------------- query level

struct QueryNode {
  int step = 0;
  int instance = 0;
  std::string txn;
  int site = 0;
};

struct GraphEdge {
  int from = 0;  // node indices
  int to = 0;
  EdgeKind kind = EdgeKind::ST;
  std::string table;
  std::string field;
  Key key;
  bool used = true;
};

struct DependencyGraph {
  std::vector<QueryNode> nodes;
  std::vector<GraphEdge> edges;

  bool same_txn(int a, int b) const { return nodes[a].instance == nodes[b].instance; }
};

inline DependencyGraph lift_to_queries(const History& h, const std::vector<EffectDep>& deps) {
  DependencyGraph g;
  for (size_t k = 0; k < h.steps.size(); ++k) {
    auto& st = h.steps[k];
    g.nodes.push_back({static_cast<int>(k) + 1, st.instance, h.instances[st.instance].txn, st.site});
  }
  auto& s = h.final_state();
  std::set<std::tuple<int, int, int, std::string, std::string, bool>> seen;
  for (auto& d : deps) {
    auto& a = s.effects[d.from];
    auto& b = s.effects[d.to];
    int u = a.query_instance - 1, v = b.query_instance - 1;
    if (u < 0 || v < 0 || u == v || g.same_txn(u, v)) continue;  // intra-transaction pairs are ST
    if (!seen.insert({u, v, static_cast<int>(d.kind), a.table, a.field, d.used}).second) continue;
    g.edges.push_back({u, v, d.kind, a.table, a.field, a.key, d.used});
  }
  int n = static_cast<int>(g.nodes.size());
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      if (!g.same_txn(u, v)) continue;
      g.edges.push_back({u, v, EdgeKind::ST, "", "", {}, true});
      // no dataflow from the earlier query into the later one
      if (!h.steps[v].consumes.count(g.nodes[u].step)) g.edges.push_back({u, v, EdgeKind::STPlus, "", "", {}, true});
    }
  return g;
}

inline DependencyGraph dependency_graph(const History& h) {
  return lift_to_queries(h, effect_dependencies(h.final_state()));
}

// ---------------------------------------------------------------- cycles

struct CycleEdge {
  int from = 0;
  int to = 0;
  EdgeKind kind = EdgeKind::ST;
  std::string table;
  std::string field;
  Key key;
  bool used = true;
};

struct Cycle {
  std::vector<int> nodes;  // edges[i] joins nodes[i] to nodes[i+1 mod n]
  std::vector<CycleEdge> edges;
  bool internal = false;
};

struct CycleToken {
  std::string txn;
  int site = 0;
  EdgeKind kind = EdgeKind::ST;
  std::string field;  // table.field for dependency edges
  auto operator<=>(const CycleToken&) const = default;
};

inline std::string render(const std::vector<CycleToken>& ts, bool with_field) {
  std::string s;
  for (auto& t : ts) {
    if (!s.empty()) s += " ";
    s += t.txn + ".O" + std::to_string(t.site) + ":" + to_string(t.kind);
    if (with_field && !t.field.empty()) s += "[" + t.field + "]";
  }
  return s;
}

inline std::vector<CycleToken> min_rotation(std::vector<CycleToken> ts) {
  auto best = ts;
  for (size_t r = 1; r < ts.size(); ++r) {
    std::rotate(ts.begin(), ts.begin() + 1, ts.end());
    if (ts < best) best = ts;
  }
  return best;
}

inline std::vector<CycleToken> cycle_tokens(const DependencyGraph& g, const Cycle& c, bool with_field) {
  std::vector<CycleToken> ts;
  for (size_t i = 0; i < c.nodes.size(); ++i) {
    auto& n = g.nodes[c.nodes[i]];
    auto& e = c.edges[i];
    CycleToken t{n.txn, n.site, e.kind == EdgeKind::STPlus ? EdgeKind::ST : e.kind, ""};
    if (with_field && is_dependency(e.kind)) t.field = e.table + "." + e.field;
    ts.push_back(t);
  }
  return min_rotation(ts);
}

// (transaction type, ordinal, edge kind) per position, rotation-minimised
inline std::string dedup_key(const DependencyGraph& g, const Cycle& c) { return render(cycle_tokens(g, c, false), false); }
// as above plus the witness field of every dependency edge
inline std::string fingerprint(const DependencyGraph& g, const Cycle& c) { return render(cycle_tokens(g, c, true), true); }

// Edge kinds in cycle order, rotation-minimised, e.g. "RW ST WR ST".
inline std::string kind_sequence(const Cycle& c) {
  std::vector<std::string> ks;
  for (auto& e : c.edges) ks.push_back(e.kind == EdgeKind::STPlus ? "ST" : to_string(e.kind));
  auto best = ks;
  for (size_t r = 1; r < ks.size(); ++r) {
    std::rotate(ks.begin(), ks.begin() + 1, ks.end());
    if (ks < best) best = ks;
  }
  std::string s;
  for (auto& k : best) s += (s.empty() ? "" : " ") + k;
  return s;
}

namespace detail {

struct Option {
  EdgeKind kind;
  const GraphEdge* edge;  // null for ST
};

// Enumerates directed simple cycles with at least two dependency edges and no
// two consecutive ST edges. Returning false from f stops the enumeration.
inline void enumerate_cycles(const DependencyGraph& g, int max_len, bool internal_only,
                             const std::function<bool(const Cycle&)>& f) {
  int n = static_cast<int>(g.nodes.size());
  std::vector<std::vector<std::vector<Option>>> adj(n, std::vector<std::vector<Option>>(n));
  for (auto& e : g.edges) {
    if (!is_dependency(e.kind)) continue;
    if (internal_only && !e.used) continue;
    adj[e.from][e.to].push_back({e.kind, &e});
  }
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v && g.same_txn(u, v)) adj[u][v].push_back({EdgeKind::ST, nullptr});

  std::vector<int> path;
  std::vector<Option> opts;
  std::vector<char> on(n, 0);
  bool stop = false;

  auto emit = [&](const Option& closing) {
    int deps = 0;
    std::vector<Option> all = opts;
    all.push_back(closing);
    size_t L = all.size();
    for (size_t i = 0; i < L; ++i) {
      if (is_dependency(all[i].kind)) ++deps;
      if (all[i].kind == EdgeKind::ST && all[(i + 1) % L].kind == EdgeKind::ST) return;
    }
    if (deps < 2) return;
    Cycle c;
    c.nodes = path;
    bool used = true;
    for (size_t i = 0; i < L; ++i) {
      CycleEdge ce;
      ce.from = path[i];
      ce.to = path[(i + 1) % L];
      ce.kind = all[i].kind;
      if (all[i].edge) {
        ce.table = all[i].edge->table;
        ce.field = all[i].edge->field;
        ce.key = all[i].edge->key;
        ce.used = all[i].edge->used;
        used = used && ce.used;
      }
      c.edges.push_back(ce);
    }
    c.internal = used;
    if (!f(c)) stop = true;
  };

  std::function<void(int)> dfs = [&](int start) {
    int u = path.back();
    for (auto& o : adj[u][start]) {
      if (stop) return;
      if (path.size() >= 2) {
        if (o.kind == EdgeKind::ST && !opts.empty() && opts.back().kind == EdgeKind::ST) continue;
        emit(o);
      }
    }
    if (static_cast<int>(path.size()) >= max_len) return;
    for (int v = start + 1; v < n && !stop; ++v) {
      if (on[v]) continue;
      for (auto& o : adj[u][v]) {
        if (stop) return;
        if (o.kind == EdgeKind::ST && !opts.empty() && opts.back().kind == EdgeKind::ST) continue;
        path.push_back(v);
        opts.push_back(o);
        on[v] = 1;
        dfs(start);
        on[v] = 0;
        opts.pop_back();
        path.pop_back();
      }
    }
  };

  for (int s = 0; s < n && !stop; ++s) {
    path = {s};
    opts.clear();
    on.assign(n, 0);
    on[s] = 1;
    dfs(s);
  }
}

}  // namespace detail

// Valid cycles up to max_len nodes, one per dedup key, sorted by key.
inline std::vector<Cycle> find_cycles(const DependencyGraph& g, int max_len, bool internal_only) {
  std::map<std::string, Cycle> by_key;
  detail::enumerate_cycles(g, max_len, internal_only, [&](const Cycle& c) {
    by_key.emplace(dedup_key(g, c), c);
    return true;
  });
  std::vector<Cycle> out;
  for (auto& [k, c] : by_key) out.push_back(c);
  return out;
}

inline bool has_valid_cycle(const DependencyGraph& g, bool internal_only = false) {
  bool found = false;
  detail::enumerate_cycles(g, static_cast<int>(g.nodes.size()), internal_only, [&](const Cycle&) {
    found = true;
    return false;
  });
  return found;
}

// A cycle with the given fingerprint, internal ones preferred.
inline std::optional<Cycle> find_cycle_with_fingerprint(const DependencyGraph& g, const std::string& fp, int max_len) {
  std::optional<Cycle> hit;
  detail::enumerate_cycles(g, max_len, false, [&](const Cycle& c) {
    if (static_cast<int>(c.nodes.size()) == max_len && fingerprint(g, c) == fp) {
      if (!hit || (c.internal && !hit->internal)) hit = c;
      if (hit->internal) return false;
    }
    return true;
  });
  return hit;
}

// ---------------------------------------------------------------- serializability oracle

class OracleSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OracleResult {
  bool serializable = false;
  std::vector<int> order;  // witness, instance indices
  int permutations = 0;
};

namespace detail {

struct HistorySig {
  std::vector<std::tuple<bool, int, int, std::string, Key, std::string, int64_t>> effects;
  std::map<std::tuple<std::string, Key, std::string>, std::vector<std::pair<int, int>>> versions;
  std::map<std::tuple<int, int, std::string, Key, std::string>, std::pair<int, int>> sources;
  bool operator==(const HistorySig&) const = default;
};

inline HistorySig signature(const SystemState& s) {
  HistorySig sig;
  int n = static_cast<int>(s.effects.size());
  for (int i = 0; i < n; ++i) {
    auto& e = s.effects[i];
    if (e.txn_instance < 0) continue;
    sig.effects.emplace_back(e.write, e.txn_instance, e.site, e.table, e.key, e.field, e.value.value_or(0));
    if (e.write) {
      sig.versions[{e.table, e.key, e.field}].push_back({e.txn_instance, e.site});
    } else {
      int src = read_source(s, i);
      std::pair<int, int> who = src < 0 ? std::pair{-2, 0}
                                        : std::pair{s.effects[src].txn_instance, s.effects[src].site};
      sig.sources[{e.txn_instance, e.site, e.table, e.key, e.field}] = who;
    }
  }
  std::sort(sig.effects.begin(), sig.effects.end());
  return sig;
}

inline std::vector<InitRow> init_rows(const SystemState& s) {
  std::map<std::pair<std::string, Key>, InitRow> rows;
  for (auto& e : s.effects) {
    if (e.txn_instance >= 0 || !e.write) continue;
    auto& r = rows[{e.table, e.key}];
    r.table = e.table;
    r.values[e.field] = e.value.value_or(0);
  }
  std::vector<InitRow> out;
  for (auto& [k, r] : rows) out.push_back(r);
  return out;
}

}  // namespace detail

// Tries every order of whole transactions, re-executed on one connected
// partition with each instance running as many queries as it did in h.
inline OracleResult serializability_oracle(const History& h, const Program& prog, const Schema& schema, int unroll,
                                           int max_steps = 12) {
  if (h.states.empty()) throw std::invalid_argument("empty history");
  if (static_cast<int>(h.steps.size()) > max_steps)
    throw OracleSizeError("history has " + std::to_string(h.steps.size()) + " steps, oracle limit is " +
                          std::to_string(max_steps));
  int m = static_cast<int>(h.instances.size());
  std::vector<int> counts(m, 0);
  for (auto& st : h.steps) counts[st.instance]++;
  auto init = detail::init_rows(h.states[0]);
  auto target = detail::signature(h.final_state());

  std::set<std::pair<std::string, Key>> universe_keys;
  for (auto& e : h.final_state().effects) universe_keys.insert({e.table, e.key});
  std::map<std::string, std::set<Key>> universe;
  for (auto& [t, k] : universe_keys) universe[t].insert(k);

  OracleResult res;
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  do {
    ++res.permutations;
    try {
      Interpreter in(prog, schema, h.instances, init, 1, unroll, universe);
      in.set_require_complete(false);
      for (int i : order)
        for (int k = 0; k < counts[i]; ++k) {
          ScheduleStep st;
          st.instance = i;
          in.step(st);
        }
      auto sh = in.finish();
      if (detail::signature(sh.final_state()) == target) {
        res.serializable = true;
        res.order = order;
        return res;
      }
    } catch (const ScheduleError&) {
    } catch (const Fault&) {
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return res;
}

// ---------------------------------------------------------------- export

inline std::string node_name(const DependencyGraph& g, int i) {
  auto& n = g.nodes[i];
  return instance_label(n.instance) + ":" + n.txn + ".O" + std::to_string(n.site);
}

inline std::string to_dot(const DependencyGraph& g) {
  std::ostringstream os;
  os << "digraph deps {\n";
  for (size_t i = 0; i < g.nodes.size(); ++i)
    os << "  q" << g.nodes[i].step << " [label=\"" << node_name(g, static_cast<int>(i)) << "\"];\n";
  for (auto& e : g.edges) {
    os << "  q" << g.nodes[e.from].step << " -> q" << g.nodes[e.to].step << " [label=\"" << to_string(e.kind);
    if (is_dependency(e.kind)) os << " " << e.table << "(" << key_string(e.key) << ")." << e.field << (e.used ? "" : " rd+");
    os << "\"";
    if (!is_dependency(e.kind)) os << ", dir=none, style=dashed";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

inline std::string describe(const DependencyGraph& g, const Cycle& c) {
  std::string s;
  for (size_t i = 0; i < c.nodes.size(); ++i) {
    auto& e = c.edges[i];
    s += node_name(g, c.nodes[i]) + " -" + to_string(e.kind);
    if (is_dependency(e.kind)) s += "[" + e.table + "." + e.field + "]";
    s += "-> ";
  }
  s += node_name(g, c.nodes[0]);
  return s;
}

}  // namespace serscope
