#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace serscope::smt {

// ---------------------------------------------------------------- terms

using Term = std::string;

inline Term num(int64_t v) { return v < 0 ? "(- " + std::to_string(-v) + ")" : std::to_string(v); }
inline Term boolean(bool b) { return b ? "true" : "false"; }

inline Term app(const std::string& f, const std::vector<Term>& xs) {
  std::string s = "(" + f;
  for (auto& x : xs) s += " " + x;
  return s + ")";
}

inline Term and_(const std::vector<Term>& xs) {
  std::vector<Term> ys;
  for (auto& x : xs) {
    if (x == "false") return "false";
    if (x != "true") ys.push_back(x);
  }
  if (ys.empty()) return "true";
  if (ys.size() == 1) return ys[0];
  return app("and", ys);
}

inline Term or_(const std::vector<Term>& xs) {
  std::vector<Term> ys;
  for (auto& x : xs) {
    if (x == "true") return "true";
    if (x != "false") ys.push_back(x);
  }
  if (ys.empty()) return "false";
  if (ys.size() == 1) return ys[0];
  return app("or", ys);
}

inline Term not_(const Term& a) {
  if (a == "true") return "false";
  if (a == "false") return "true";
  return "(not " + a + ")";
}

inline Term implies(const Term& a, const Term& b) {
  if (a == "false" || b == "true") return "true";
  if (a == "true") return b;
  if (b == "false") return not_(a);
  return "(=> " + a + " " + b + ")";
}

inline Term iff(const Term& a, const Term& b) { return "(= " + a + " " + b + ")"; }

inline Term ite(const Term& c, const Term& a, const Term& b) {
  if (c == "true" || a == b) return a;
  if (c == "false") return b;
  return "(ite " + c + " " + a + " " + b + ")";
}

inline Term eq(const Term& a, const Term& b) { return a == b ? "true" : "(= " + a + " " + b + ")"; }
inline Term lt(const Term& a, const Term& b) { return "(< " + a + " " + b + ")"; }
inline Term le(const Term& a, const Term& b) { return "(<= " + a + " " + b + ")"; }
inline Term distinct(const std::vector<Term>& xs) { return xs.size() < 2 ? "true" : app("distinct", xs); }

// C++ truncating division; divisor assumed non-zero
inline Term tdiv(const Term& a, const Term& b) {
  return "(ite (>= " + a + " 0) (ite (> " + b + " 0) (div " + a + " " + b + ") (- (div " + a + " (- " + b +
         ")))) (ite (> " + b + " 0) (- (div (- " + a + ") " + b + ")) (div (- " + a + ") (- " + b + "))))";
}

// ---------------------------------------------------------------- problems

class Problem {
 public:
  void comment(const std::string& c) { text_ += "; " + c + "\n"; }
  void declare(const std::string& name, const std::string& sort) {
    if (!declared_.emplace(name, sort).second) return;
    text_ += "(declare-const " + name + " " + sort + ")\n";
  }
  void define(const std::string& name, const std::string& sort, const Term& body) {
    declared_.emplace(name, sort);
    text_ += "(define-fun " + name + " () " + sort + " " + body + ")\n";
  }
  void assert_(const Term& t) {
    if (t == "true") return;
    text_ += "(assert " + t + ")\n";
  }
  bool declared(const std::string& name) const { return declared_.count(name) > 0; }
  const std::map<std::string, std::string>& symbols() const { return declared_; }

  std::string text(bool with_model = true) const {
    std::string s = "(set-logic QF_LIA)\n" + text_ + "(check-sat)\n";
    if (with_model) s += "(get-model)\n";
    return s;
  }
  const std::string& body() const { return text_; }

 private:
  std::string text_;
  std::map<std::string, std::string> declared_;
};

// ---------------------------------------------------------------- s-expressions

struct SExpr {
  std::string atom;
  std::vector<SExpr> list;
  bool is_atom = true;
};

inline std::vector<SExpr> parse_sexprs(const std::string& text) {
  std::vector<std::vector<SExpr>> stack;
  stack.emplace_back();
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == ';') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (c == '(') {
      stack.emplace_back();
      ++i;
    } else if (c == ')') {
      if (stack.size() < 2) throw std::runtime_error("unbalanced solver output");
      SExpr e;
      e.is_atom = false;
      e.list = std::move(stack.back());
      stack.pop_back();
      stack.back().push_back(std::move(e));
      ++i;
    } else if (c == '"') {
      size_t j = i + 1;
      while (j < text.size() && text[j] != '"') ++j;
      SExpr e;
      e.atom = text.substr(i, j - i + 1);
      stack.back().push_back(std::move(e));
      i = j + 1;
    } else if (c == '|') {
      size_t j = text.find('|', i + 1);
      if (j == std::string::npos) throw std::runtime_error("unterminated symbol in solver output");
      SExpr e;
      e.atom = text.substr(i + 1, j - i - 1);
      stack.back().push_back(std::move(e));
      i = j + 1;
    } else {
      size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '(' &&
             text[j] != ')')
        ++j;
      SExpr e;
      e.atom = text.substr(i, j - i);
      stack.back().push_back(std::move(e));
      i = j;
    }
  }
  if (stack.size() != 1) throw std::runtime_error("unbalanced solver output");
  return stack[0];
}

struct Value {
  bool is_bool = false;
  bool b = false;
  int64_t i = 0;
};

inline std::optional<Value> value_of(const SExpr& e) {
  if (e.is_atom) {
    if (e.atom == "true" || e.atom == "false") return Value{true, e.atom == "true", 0};
    try {
      size_t pos = 0;
      int64_t v = std::stoll(e.atom, &pos);
      if (pos == e.atom.size()) return Value{false, false, v};
    } catch (const std::exception&) {
    }
    return std::nullopt;
  }
  if (e.list.size() == 2 && e.list[0].is_atom && e.list[0].atom == "-") {
    auto v = value_of(e.list[1]);
    if (v && !v->is_bool) return Value{false, false, -v->i};
  }
  return std::nullopt;
}

using Model = std::map<std::string, Value>;

inline Model parse_model(const std::string& text) {
  Model m;
  for (auto& top : parse_sexprs(text)) {
    if (top.is_atom) continue;
    std::vector<const SExpr*> defs;
    // z3 prints either (model (define-fun ...) ...) or a bare list of define-funs
    if (!top.list.empty() && top.list[0].is_atom && top.list[0].atom == "define-fun") {
      defs.push_back(&top);
    } else {
      for (auto& d : top.list)
        if (!d.is_atom && !d.list.empty() && d.list[0].is_atom && d.list[0].atom == "define-fun") defs.push_back(&d);
    }
    for (auto* d : defs) {
      if (d->list.size() != 5 || !d->list[2].list.empty()) continue;
      if (auto v = value_of(d->list[4])) m[d->list[1].atom] = *v;
    }
  }
  return m;
}

// ---------------------------------------------------------------- solver process

enum class Status { Sat, Unsat, Unknown };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Sat: return "sat";
    case Status::Unsat: return "unsat";
    case Status::Unknown: return "unknown";
  }
  return "?";
}

struct Result {
  Status status = Status::Unknown;
  Model model;
  std::string output;
  double seconds = 0;
  bool timed_out = false;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  std::string path = "z3";
  double timeout_s = 120;
};

inline std::string resolve_solver(const std::string& flag) {
  if (const char* env = std::getenv("SERSCOPE_SOLVER"); env && *env) return env;
  return flag.empty() ? "z3" : flag;
}

inline Result solve(const std::string& problem, const SolverOptions& opt) {
  auto start = std::chrono::steady_clock::now();
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw SolverError("pipe failed");
  pid_t pid = fork();
  if (pid < 0) throw SolverError("fork failed");
  if (pid == 0) {
    dup2(in_pipe[0], 0);
    dup2(out_pipe[1], 1);
    dup2(out_pipe[1], 2);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execlp(opt.path.c_str(), opt.path.c_str(), "-in", "-smt2", static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
  fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
  signal(SIGPIPE, SIG_IGN);

  Result r;
  size_t written = 0;
  int wfd = in_pipe[1];
  bool out_open = true;
  char buf[65536];
  while (out_open) {
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > opt.timeout_s) {
      r.timed_out = true;
      kill(pid, SIGKILL);
      break;
    }
    pollfd fds[2];
    int n = 0;
    fds[n++] = {out_pipe[0], POLLIN, 0};
    if (wfd >= 0) fds[n++] = {wfd, POLLOUT, 0};
    int ms = static_cast<int>(std::max(1.0, (opt.timeout_s - elapsed) * 1000));
    int pr = poll(fds, n, std::min(ms, 200));
    if (pr < 0 && errno != EINTR) break;
    if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      ssize_t w = write(wfd, problem.data() + written, problem.size() - written);
      if (w > 0) written += static_cast<size_t>(w);
      if (w < 0 && errno != EAGAIN) written = problem.size();
      if (written >= problem.size()) {
        close(wfd);
        wfd = -1;
      }
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      ssize_t got = read(out_pipe[0], buf, sizeof buf);
      if (got > 0) r.output.append(buf, static_cast<size_t>(got));
      else if (got == 0 || (got < 0 && errno != EAGAIN)) out_open = false;
    }
  }
  if (wfd >= 0) close(wfd);
  close(out_pipe[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (r.timed_out) return r;
  if (WIFEXITED(status) && WEXITSTATUS(status) == 127) throw SolverError("cannot run solver '" + opt.path + "'");

  size_t nl = r.output.find('\n');
  std::string first = r.output.substr(0, nl);
  while (!first.empty() && std::isspace(static_cast<unsigned char>(first.back()))) first.pop_back();
  if (first == "sat") {
    r.status = Status::Sat;
    r.model = parse_model(nl == std::string::npos ? "" : r.output.substr(nl + 1));
  } else if (first == "unsat") {
    r.status = Status::Unsat;
  } else if (first == "unknown") {
    r.status = Status::Unknown;
  } else {
    throw SolverError("unexpected solver output: " + r.output.substr(0, 400));
  }
  return r;
}

}  // namespace serscope::smt
