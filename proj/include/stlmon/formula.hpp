#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace stlmon {

/// Raised for every malformed specification: syntax, duplicate ids, bad
/// intervals or proportions. Line and column are 1-based; 0 means "not tied
/// to a source position" (API-constructed formulas).
class SpecError : public std::runtime_error {
public:
  SpecError(const std::string& msg, int line = 0, int column = 0)
      : std::runtime_error(line > 0 ? std::to_string(line) + ":" + std::to_string(column) + ": " + msg : msg),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

private:
  int line_;
  int column_;
};

/// Bounds at or above this many seconds denote the whole stream.
inline constexpr double kWholeStreamBound = 1e9;

/// Slack used when converting real-time bounds to sample indices, so that
/// 0.3 * 10 lands on 3 and not on 3.0000000000000004.
inline constexpr double kIndexSlack = 1e-9;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Interval&) const = default;
};

enum class Cmp { LT, LE, GT, GE };

struct Atom {
  std::string signal;
  Cmp op = Cmp::GE;
  double threshold = 0.5;
  // Bare identifier; printed without comparison.
  bool boolean = false;

  bool operator==(const Atom&) const = default;
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Not {
  FormulaPtr arg;
};
struct And {
  FormulaPtr lhs, rhs;
};
struct Or {
  FormulaPtr lhs, rhs;
};
struct Implies {
  FormulaPtr lhs, rhs;
};
/// `bound` empty means the whole-stream Always (legal only at rule top level).
struct Always {
  std::optional<Interval> bound;
  FormulaPtr arg;
};
struct Eventually {
  Interval bound;
  FormulaPtr arg;
};
/// Proportional satisfaction over a trailing window of tau seconds.
struct Prop {
  double rho = 1.0;
  double tau = 1.0;
  FormulaPtr arg;
};

struct Formula {
  std::variant<Atom, Not, And, Or, Implies, Always, Eventually, Prop> node;
};

// ---------------------------------------------------------------------------
// Builders

inline FormulaPtr make_atom(std::string signal, Cmp op, double threshold) {
  return std::make_shared<const Formula>(Formula{Atom{std::move(signal), op, threshold, false}});
}
inline FormulaPtr make_bool(std::string signal) {
  return std::make_shared<const Formula>(Formula{Atom{std::move(signal), Cmp::GE, 0.5, true}});
}
inline FormulaPtr make_not(FormulaPtr a) { return std::make_shared<const Formula>(Formula{Not{std::move(a)}}); }
inline FormulaPtr make_and(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{And{std::move(a), std::move(b)}});
}
inline FormulaPtr make_or(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Or{std::move(a), std::move(b)}});
}
inline FormulaPtr make_implies(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Implies{std::move(a), std::move(b)}});
}
inline FormulaPtr make_always(Interval i, FormulaPtr a) {
  return std::make_shared<const Formula>(Formula{Always{i, std::move(a)}});
}
inline FormulaPtr make_always_stream(FormulaPtr a) {
  return std::make_shared<const Formula>(Formula{Always{std::nullopt, std::move(a)}});
}
inline FormulaPtr make_eventually(Interval i, FormulaPtr a) {
  return std::make_shared<const Formula>(Formula{Eventually{i, std::move(a)}});
}
inline FormulaPtr make_prop(double rho, double tau, FormulaPtr a) {
  return std::make_shared<const Formula>(Formula{Prop{rho, tau, std::move(a)}});
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// Deep structural equality.
inline bool equal(const Formula& a, const Formula& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Atom>) {
          return x == y;
        } else if constexpr (std::is_same_v<T, Not>) {
          return equal(*x.arg, *y.arg);
        } else if constexpr (std::is_same_v<T, And> || std::is_same_v<T, Or> || std::is_same_v<T, Implies>) {
          return equal(*x.lhs, *y.lhs) && equal(*x.rhs, *y.rhs);
        } else if constexpr (std::is_same_v<T, Always>) {
          return x.bound == y.bound && equal(*x.arg, *y.arg);
        } else if constexpr (std::is_same_v<T, Eventually>) {
          return x.bound == y.bound && equal(*x.arg, *y.arg);
        } else {
          return x.rho == y.rho && x.tau == y.tau && equal(*x.arg, *y.arg);
        }
      },
      a.node);
}

/// Children in left-to-right order.
inline std::vector<const Formula*> children(const Formula& f) {
  return std::visit(
      overloaded{[](const Atom&) { return std::vector<const Formula*>{}; },
                 [](const Not& n) { return std::vector<const Formula*>{n.arg.get()}; },
                 [](const And& n) { return std::vector<const Formula*>{n.lhs.get(), n.rhs.get()}; },
                 [](const Or& n) { return std::vector<const Formula*>{n.lhs.get(), n.rhs.get()}; },
                 [](const Implies& n) { return std::vector<const Formula*>{n.lhs.get(), n.rhs.get()}; },
                 [](const Always& n) { return std::vector<const Formula*>{n.arg.get()}; },
                 [](const Eventually& n) { return std::vector<const Formula*>{n.arg.get()}; },
                 [](const Prop& n) { return std::vector<const Formula*>{n.arg.get()}; }},
      f.node);
}

inline bool is_whole_stream(const Formula& f) {
  const auto* g = std::get_if<Always>(&f.node);
  return g != nullptr && !g->bound.has_value();
}

/// The formula actually checked at each sample index: the body of a
/// whole-stream Always, or the formula itself.
inline const Formula& checked_body(const Formula& f) {
  if (is_whole_stream(f)) return *std::get<Always>(f.node).arg;
  return f;
}

struct Rule {
  std::string id;
  FormulaPtr formula;
  std::optional<std::string> doc;
};

struct SpecFile {
  std::vector<Rule> rules;
  std::optional<std::vector<std::string>> signals;

  const Rule* find(const std::string& id) const {
    for (const auto& r : rules)
      if (r.id == id) return &r;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Real-time to sample-index conversion

struct IndexWindow {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  std::int64_t width() const { return hi - lo + 1; }
};

inline std::int64_t floor_index(double x) { return static_cast<std::int64_t>(std::floor(x + kIndexSlack)); }
inline std::int64_t ceil_index(double x) { return static_cast<std::int64_t>(std::ceil(x - kIndexSlack)); }

/// lo_idx = ceil(lo * f_s), hi_idx = floor(hi * f_s). Throws when the
/// interval contains no sample.
inline IndexWindow to_index_window(const Interval& i, double fs) {
  IndexWindow w{std::max<std::int64_t>(0, ceil_index(i.lo * fs)), floor_index(i.hi * fs)};
  if (w.lo > w.hi) throw SpecError("interval [" + std::to_string(i.lo) + "," + std::to_string(i.hi) + "] contains no sample at " + std::to_string(fs) + " Hz");
  return w;
}

/// W = ceil(f_s * tau).
inline std::int64_t prop_width(double tau, double fs) {
  const std::int64_t w = ceil_index(tau * fs);
  if (w <= 0) throw SpecError("proportion window of " + std::to_string(tau) + " s is empty at " + std::to_string(fs) + " Hz");
  return w;
}

/// Future reach in samples. A whole-stream Always adds nothing: its body is
/// checked at every index.
inline std::int64_t horizon(const Formula& f, double fs) {
  return std::visit(overloaded{[](const Atom&) -> std::int64_t { return 0; },
                               [&](const Not& n) { return horizon(*n.arg, fs); },
                               [&](const And& n) { return std::max(horizon(*n.lhs, fs), horizon(*n.rhs, fs)); },
                               [&](const Or& n) { return std::max(horizon(*n.lhs, fs), horizon(*n.rhs, fs)); },
                               [&](const Implies& n) { return std::max(horizon(*n.lhs, fs), horizon(*n.rhs, fs)); },
                               [&](const Always& n) {
                                 const std::int64_t body = horizon(*n.arg, fs);
                                 return n.bound ? floor_index(n.bound->hi * fs) + body : body;
                               },
                               [&](const Eventually& n) { return floor_index(n.bound.hi * fs) + horizon(*n.arg, fs); },
                               [&](const Prop& n) { return horizon(*n.arg, fs); }},
                    f.node);
}

/// Past reach in samples: how far before the evaluated index a trailing
/// proportion window can look, accumulated through nesting.
inline std::int64_t past_reach(const Formula& f, double fs) {
  return std::visit(overloaded{[](const Atom&) -> std::int64_t { return 0; },
                               [&](const Not& n) { return past_reach(*n.arg, fs); },
                               [&](const And& n) { return std::max(past_reach(*n.lhs, fs), past_reach(*n.rhs, fs)); },
                               [&](const Or& n) { return std::max(past_reach(*n.lhs, fs), past_reach(*n.rhs, fs)); },
                               [&](const Implies& n) { return std::max(past_reach(*n.lhs, fs), past_reach(*n.rhs, fs)); },
                               [&](const Always& n) { return past_reach(*n.arg, fs); },
                               [&](const Eventually& n) { return past_reach(*n.arg, fs); },
                               [&](const Prop& n) { return prop_width(n.tau, fs) - 1 + past_reach(*n.arg, fs); }},
                    f.node);
}

/// Checks interval/proportion invariants and that whole-stream Always only
/// appears at the root. Throws SpecError.
inline void validate_formula(const Formula& f, bool root = true) {
  std::visit(overloaded{[](const Atom& a) {
                          if (a.signal.empty()) throw SpecError("atom with empty signal name");
                          if (!std::isfinite(a.threshold)) throw SpecError("non-finite threshold on " + a.signal);
                        },
                        [&](const Always& n) {
                          if (!n.bound) {
                            if (!root) throw SpecError("unbounded G is only allowed at rule top level");
                          } else {
                            if (!(n.bound->lo >= 0.0)) throw SpecError("negative interval");
                            if (n.bound->lo > n.bound->hi) throw SpecError("inverted interval");
                            if (n.bound->hi >= kWholeStreamBound) throw SpecError("unbounded G is only allowed at rule top level");
                          }
                        },
                        [&](const Eventually& n) {
                          if (!(n.bound.lo >= 0.0)) throw SpecError("negative interval");
                          if (n.bound.lo > n.bound.hi) throw SpecError("inverted interval");
                          if (n.bound.hi >= kWholeStreamBound) throw SpecError("unbounded F is not supported");
                        },
                        [](const Prop& n) {
                          if (!(n.rho > 0.0 && n.rho <= 1.0)) throw SpecError("proportion outside (0,1]");
                          if (!(n.tau > 0.0) || !std::isfinite(n.tau)) throw SpecError("proportion window must be positive");
                        },
                        [](const auto&) {}},
             f.node);
  for (const Formula* c : children(f)) validate_formula(*c, false);
}

inline void collect_signals(const Formula& f, std::vector<std::string>& out) {
  if (const auto* a = std::get_if<Atom>(&f.node)) {
    if (std::find(out.begin(), out.end(), a->signal) == out.end()) out.push_back(a->signal);
    return;
  }
  for (const Formula* c : children(f)) collect_signals(*c, out);
}

/// Distinct signals referenced by the formula, first-appearance order.
inline std::vector<std::string> signals_of(const Formula& f) {
  std::vector<std::string> out;
  collect_signals(f, out);
  return out;
}

inline std::size_t node_count(const Formula& f) {
  std::size_t n = 1;
  for (const Formula* c : children(f)) n += node_count(*c);
  return n;
}

// ---------------------------------------------------------------------------
// Shared quantitative semantics

/// Signed margin of an atom: s - c for > and >=, c - s for < and <=.
inline double atom_margin(const Atom& a, double value) {
  return (a.op == Cmp::GT || a.op == Cmp::GE) ? value - a.threshold : a.threshold - value;
}

/// Count-space margin of a proportion window holding `m` samples of which
/// `count` are satisfied. Non-negative iff count >= rho * m.
inline double proportion_margin(std::int64_t count, std::int64_t m, double rho) {
  const double md = static_cast<double>(m);
  return (static_cast<double>(count) - rho * md) / md;
}

// ---------------------------------------------------------------------------
// Printing

/// Shortest decimal that round-trips.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline const char* cmp_text(Cmp op) {
  switch (op) {
    case Cmp::LT: return "<";
    case Cmp::LE: return "<=";
    case Cmp::GT: return ">";
    case Cmp::GE: return ">=";
  }
  return "?";
}

inline std::string atom_text(const Atom& a) {
  if (a.boolean) return a.signal;
  return a.signal + " " + cmp_text(a.op) + " " + format_number(a.threshold);
}

namespace detail {

// Precedence: 0 implication, 1 or, 2 and, 3 unary/atom.
inline int precedence(const Formula& f) {
  return std::visit(overloaded{[](const Implies&) { return 0; }, [](const Or&) { return 1; }, [](const And&) { return 2; },
                               [](const auto&) { return 3; }},
                    f.node);
}

inline std::string print_at(const Formula& f, int min_prec);

inline std::string wrap(const Formula& f, int min_prec) {
  std::string s = print_at(f, 0);
  return precedence(f) < min_prec ? "(" + s + ")" : s;
}

inline std::string bracket(const Interval& i) { return "[" + format_number(i.lo) + "," + format_number(i.hi) + "]"; }

inline std::string print_at(const Formula& f, int) {
  return std::visit(overloaded{[](const Atom& a) { return atom_text(a); },
                               [](const Not& n) { return "not " + wrap(*n.arg, 3); },
                               [](const And& n) { return wrap(*n.lhs, 2) + " and " + wrap(*n.rhs, 3); },
                               [](const Or& n) { return wrap(*n.lhs, 1) + " or " + wrap(*n.rhs, 2); },
                               [](const Implies& n) { return wrap(*n.lhs, 1) + " -> " + wrap(*n.rhs, 0); },
                               [](const Always& n) {
                                 return std::string("G") + (n.bound ? bracket(*n.bound) : std::string()) + " " + wrap(*n.arg, 3);
                               },
                               [](const Eventually& n) { return "F" + bracket(n.bound) + " " + wrap(*n.arg, 3); },
                               [](const Prop& n) {
                                 return "P[" + format_number(n.rho) + "," + format_number(n.tau) + "] " + wrap(*n.arg, 3);
                               }},
                    f.node);
}

}  // namespace detail

/// Renders in the spec grammar; parse(to_string(f)) is structurally equal to f.
inline std::string to_string(const Formula& f) { return detail::print_at(f, 0); }

inline std::string escape_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

inline std::string to_string(const Rule& r) {
  std::string s = "rule " + r.id + ": " + to_string(*r.formula);
  if (r.doc) s += " doc " + escape_string(*r.doc);
  return s + ";";
}

inline std::string to_string(const SpecFile& spec) {
  std::string s;
  for (const auto& r : spec.rules) s += to_string(r) + "\n";
  return s;
}

}  // namespace stlmon
