#pragma once

#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "serscope/model.hpp"
#include "serscope/semantics.hpp"
#include "serscope/smt.hpp"

namespace serscope {

struct GuaranteeSpec {
  enum Bits : unsigned { CV = 1, CC = 2, RC = 4, RR = 8, LIN = 16 };
  unsigned bits = 0;  // 0 is EC

  static GuaranteeSpec ser() { return {RC | RR | LIN}; }
  bool has(unsigned b) const { return (bits & b) == b; }
  bool is_ser() const { return has(RC | RR | LIN); }
  GuaranteeSpec operator+(GuaranteeSpec o) const { return {bits | o.bits}; }
  bool operator==(const GuaranteeSpec&) const = default;
};

inline GuaranteeSpec parse_spec(const std::string& text) {
  GuaranteeSpec s;
  std::stringstream ss(text);
  std::string part;
  bool any = false;
  while (std::getline(ss, part, '+')) {
    any = true;
    std::string p = part;
    for (auto& c : p) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (p == "ec") continue;
    if (p == "cv") s.bits |= GuaranteeSpec::CV;
    else if (p == "cc") s.bits |= GuaranteeSpec::CC;
    else if (p == "rc") s.bits |= GuaranteeSpec::RC;
    else if (p == "rr") s.bits |= GuaranteeSpec::RR;
    else if (p == "lin") s.bits |= GuaranteeSpec::LIN;
    else if (p == "ser") s.bits |= GuaranteeSpec::ser().bits;
    else throw std::invalid_argument("unknown consistency guarantee '" + part + "'");
  }
  if (!any) throw std::invalid_argument("empty consistency guarantee");
  return s;
}

inline std::string to_string(GuaranteeSpec s) {
  if (s.bits == 0) return "ec";
  std::string out;
  auto add = [&](const char* n) { out += (out.empty() ? "" : "+") + std::string(n); };
  unsigned rest = s.bits;
  if (s.is_ser()) {
    add("ser");
    rest &= ~GuaranteeSpec::ser().bits;
  }
  if (rest & GuaranteeSpec::CV) add("cv");
  if (rest & GuaranteeSpec::CC) add("cc");
  if (rest & GuaranteeSpec::RC) add("rc");
  if (rest & GuaranteeSpec::RR) add("rr");
  if (rest & GuaranteeSpec::LIN) add("lin");
  return out;
}

struct CheckResult {
  bool ok = true;
  std::string rule;
  std::vector<int> witness;  // effect indices
  explicit operator bool() const { return ok; }
};

namespace detail {

// ST over effects: same transaction instance, created by different steps
inline bool same_txn(const Effect& a, const Effect& b) {
  return a.txn_instance >= 0 && a.txn_instance == b.txn_instance && a.query_instance != b.query_instance;
}

inline CheckResult check_cv(const SystemState& s) {
  int n = static_cast<int>(s.effects.size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (!s.vis.get(a, b)) continue;
      for (int c = 0; c < n; ++c)
        if (s.vis.get(b, c) && !s.vis.get(a, c)) return {false, "cv", {a, b, c}};
    }
  return {};
}

inline CheckResult check_cc(const SystemState& s) {
  if (auto r = check_cv(s); !r) return r;
  int n = static_cast<int>(s.effects.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (same_txn(s.effects[a], s.effects[b]) && !s.vis.get(a, b) && !s.vis.get(b, a)) return {false, "cc", {a, b}};
  return {};
}

// rc: ST(1,2) and vis(1,3) imply vis(2,3); rr: ST(1,2) and vis(3,1) imply vis(3,2).
// The third effect ranges over other transactions.
inline CheckResult check_rc_rr(const SystemState& s, bool rc) {
  int n = static_cast<int>(s.effects.size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (!same_txn(s.effects[a], s.effects[b])) continue;
      for (int c = 0; c < n; ++c) {
        if (s.effects[c].txn_instance == s.effects[a].txn_instance) continue;
        if (rc ? (s.vis.get(a, c) && !s.vis.get(b, c)) : (s.vis.get(c, a) && !s.vis.get(c, b)))
          return {false, rc ? "rc" : "rr", {a, b, c}};
      }
    }
  return {};
}

inline CheckResult check_lin(const SystemState& s) {
  int n = static_cast<int>(s.effects.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (s.effects[a].id.step != s.effects[b].id.step && !s.vis.get(a, b)) return {false, "lin", {a, b}};
  return {};
}

}  // namespace detail

inline CheckResult check_state(const SystemState& s, GuaranteeSpec spec) {
  if (spec.has(GuaranteeSpec::CV))
    if (auto r = detail::check_cv(s); !r) return r;
  if (spec.has(GuaranteeSpec::CC))
    if (auto r = detail::check_cc(s); !r) return r;
  if (spec.has(GuaranteeSpec::RC))
    if (auto r = detail::check_rc_rr(s, true); !r) return r;
  if (spec.has(GuaranteeSpec::RR))
    if (auto r = detail::check_rc_rr(s, false); !r) return r;
  if (spec.has(GuaranteeSpec::LIN))
    if (auto r = detail::check_lin(s); !r) return r;
  return {};
}

inline CheckResult check_history(const History& h, GuaranteeSpec spec) {
  if (h.states.empty()) throw std::invalid_argument("empty history");
  return check_state(h.final_state(), spec);
}

// Query-level instantiation of the guarantees over n nodes. vis/ar/act yield
// terms, same_txn is static.
template <class Vis, class Ar, class Act, class Same>
std::vector<smt::Term> guarantee_terms(GuaranteeSpec spec, int n, Vis vis, Ar ar, Act act, Same same_txn) {
  using namespace smt;
  std::vector<Term> out;
  if (spec.has(GuaranteeSpec::CV) || spec.has(GuaranteeSpec::CC))
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          if (a != b && b != c && a != c) out.push_back(implies(and_({vis(a, b), vis(b, c)}), vis(a, c)));
  if (spec.has(GuaranteeSpec::CC))
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (same_txn(a, b)) out.push_back(implies(and_({act(a), act(b)}), or_({vis(a, b), vis(b, a)})));
  for (bool rc : {true, false}) {
    if (!spec.has(rc ? GuaranteeSpec::RC : GuaranteeSpec::RR)) continue;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (a == b || !same_txn(a, b)) continue;
        for (int c = 0; c < n; ++c) {
          if (same_txn(a, c) || c == a) continue;
          out.push_back(rc ? implies(and_({act(b), vis(a, c)}), vis(b, c))
                            : implies(and_({act(b), vis(c, a)}), vis(c, b)));
        }
      }
  }
  if (spec.has(GuaranteeSpec::LIN))
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b) out.push_back(implies(ar(a, b), vis(a, b)));
  return out;
}

}  // namespace serscope
