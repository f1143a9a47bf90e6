#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "stlmon/formula.hpp"
#include "stlmon/spec_lang.hpp"
#include "stlmon/trace.hpp"

// Offline reference semantics. Everything here is brute force on purpose:
// window operators rescan their whole window. The streaming engine is checked
// against these results.

namespace stlmon {

struct VerdictRecord {
  std::int64_t index = 0;
  double t = 0.0;
  bool sat = true;
  double robustness = 0.0;
};

struct VerdictSeries {
  std::string rule;
  std::vector<VerdictRecord> records;
};

/// Absolute index range [first, last] on which `f` is well defined over `tr`.
/// A trace slice that does not start at index 0 loses the first past_reach
/// samples, since proportion windows would otherwise be truncated early.
struct DefinedRange {
  std::int64_t first = 0;
  std::int64_t last = -1;
  bool empty() const { return last < first; }
};

inline DefinedRange defined_range(const Formula& f, const Trace& tr) {
  const std::int64_t n = static_cast<std::int64_t>(tr.size());
  DefinedRange r;
  r.first = tr.origin == 0 ? 0 : tr.origin + past_reach(f, tr.fs);
  r.last = tr.origin + n - 1 - horizon(f, tr.fs);
  return r;
}

namespace detail {

inline double signal_at(const Trace& tr, const std::string& name, std::int64_t i) {
  const auto& v = tr.signal(name);
  const std::int64_t k = i - tr.origin;
  if (k < 0 || k >= static_cast<std::int64_t>(v.size())) throw std::out_of_range("sample index " + std::to_string(i) + " outside trace");
  return v[static_cast<std::size_t>(k)];
}

inline double robustness_rec(const Formula& f, const Trace& tr, std::int64_t i) {
  return std::visit(overloaded{[&](const Atom& a) { return atom_margin(a, signal_at(tr, a.signal, i)); },
                               [&](const Not& n) { return -robustness_rec(*n.arg, tr, i); },
                               [&](const And& n) { return std::min(robustness_rec(*n.lhs, tr, i), robustness_rec(*n.rhs, tr, i)); },
                               [&](const Or& n) { return std::max(robustness_rec(*n.lhs, tr, i), robustness_rec(*n.rhs, tr, i)); },
                               [&](const Implies& n) { return std::max(-robustness_rec(*n.lhs, tr, i), robustness_rec(*n.rhs, tr, i)); },
                               [&](const Always& n) {
                                 if (!n.bound) return robustness_rec(*n.arg, tr, i);
                                 const IndexWindow w = to_index_window(*n.bound, tr.fs);
                                 double r = std::numeric_limits<double>::infinity();
                                 for (std::int64_t j = i + w.lo; j <= i + w.hi; ++j) r = std::min(r, robustness_rec(*n.arg, tr, j));
                                 return r;
                               },
                               [&](const Eventually& n) {
                                 const IndexWindow w = to_index_window(n.bound, tr.fs);
                                 double r = -std::numeric_limits<double>::infinity();
                                 for (std::int64_t j = i + w.lo; j <= i + w.hi; ++j) r = std::max(r, robustness_rec(*n.arg, tr, j));
                                 return r;
                               },
                               [&](const Prop& n) {
                                 const std::int64_t width = prop_width(n.tau, tr.fs);
                                 const std::int64_t lo = std::max<std::int64_t>(0, i - width + 1);
                                 std::int64_t count = 0;
                                 for (std::int64_t j = lo; j <= i; ++j) count += robustness_rec(*n.arg, tr, j) >= 0.0 ? 1 : 0;
                                 return proportion_margin(count, i - lo + 1, n.rho);
                               }},
                    f.node);
}

// Qualitative semantics written without any reference to margins beyond the
// atoms' own comparisons.
inline bool satisfies_rec(const Formula& f, const Trace& tr, std::int64_t i) {
  return std::visit(overloaded{[&](const Atom& a) {
                                 const double s = signal_at(tr, a.signal, i);
                                 return (a.op == Cmp::GT || a.op == Cmp::GE) ? s >= a.threshold : s <= a.threshold;
                               },
                               [&](const Not& n) { return !satisfies_rec(*n.arg, tr, i); },
                               [&](const And& n) { return satisfies_rec(*n.lhs, tr, i) && satisfies_rec(*n.rhs, tr, i); },
                               [&](const Or& n) { return satisfies_rec(*n.lhs, tr, i) || satisfies_rec(*n.rhs, tr, i); },
                               [&](const Implies& n) { return !satisfies_rec(*n.lhs, tr, i) || satisfies_rec(*n.rhs, tr, i); },
                               [&](const Always& n) {
                                 if (!n.bound) return satisfies_rec(*n.arg, tr, i);
                                 const IndexWindow w = to_index_window(*n.bound, tr.fs);
                                 for (std::int64_t j = i + w.lo; j <= i + w.hi; ++j)
                                   if (!satisfies_rec(*n.arg, tr, j)) return false;
                                 return true;
                               },
                               [&](const Eventually& n) {
                                 const IndexWindow w = to_index_window(n.bound, tr.fs);
                                 for (std::int64_t j = i + w.lo; j <= i + w.hi; ++j)
                                   if (satisfies_rec(*n.arg, tr, j)) return true;
                                 return false;
                               },
                               [&](const Prop& n) {
                                 const std::int64_t width = prop_width(n.tau, tr.fs);
                                 const std::int64_t lo = std::max<std::int64_t>(0, i - width + 1);
                                 std::int64_t count = 0;
                                 for (std::int64_t j = lo; j <= i; ++j) count += satisfies_rec(*n.arg, tr, j) ? 1 : 0;
                                 const double needed = std::ceil(n.rho * static_cast<double>(i - lo + 1));
                                 return static_cast<double>(count) >= needed;
                               }},
                    f.node);
}

inline void check_index(const Formula& f, const Trace& tr, std::int64_t i) {
  for (const auto& s : signals_of(f)) (void)tr.signal(s);
  const DefinedRange r = defined_range(f, tr);
  if (i < r.first || i > r.last)
    throw std::out_of_range("index " + std::to_string(i) + " outside well-defined range [" + std::to_string(r.first) + "," +
                            std::to_string(r.last) + "]");
}

}  // namespace detail

/// Quantitative robustness of `f` at absolute index `i`.
inline double robustness(const Formula& f, const Trace& tr, std::int64_t i) {
  detail::check_index(f, tr, i);
  return detail::robustness_rec(f, tr, i);
}

/// Boolean satisfaction: robustness(f, tr, i) >= 0.
inline bool satisfies(const Formula& f, const Trace& tr, std::int64_t i) { return robustness(f, tr, i) >= 0.0; }

/// Boolean satisfaction by the independent qualitative recursion.
inline bool satisfies_boolean(const Formula& f, const Trace& tr, std::int64_t i) {
  detail::check_index(f, tr, i);
  return detail::satisfies_rec(f, tr, i);
}

/// Robustness of every subformula at every index where it is defined,
/// computed bottom-up with rescanning windows. Memoised per AST node, so a
/// whole series costs O(n * window) per node rather than the recursion's
/// product of window widths.
class RobustnessTable {
public:
  RobustnessTable(const Formula& root, const Trace& tr) : tr_(tr) {
    tr.check();
    for (const auto& s : signals_of(root)) (void)tr.signal(s);
    build(root);
  }

  const Trace& trace() const { return tr_; }

  bool has(const Formula& f, std::int64_t i) const {
    auto it = cols_.find(&f);
    return it != cols_.end() && i >= it->second.first && i < it->second.first + static_cast<std::int64_t>(it->second.values.size());
  }

  double at(const Formula& f, std::int64_t i) const {
    auto it = cols_.find(&f);
    if (it == cols_.end()) throw std::logic_error("subformula not in table");
    const std::int64_t k = i - it->second.first;
    if (k < 0 || k >= static_cast<std::int64_t>(it->second.values.size()))
      throw std::out_of_range("index " + std::to_string(i) + " not defined for subformula " + to_string(f));
    return it->second.values[static_cast<std::size_t>(k)];
  }

  DefinedRange range(const Formula& f) const {
    const auto& c = cols_.at(&f);
    return {c.first, c.first + static_cast<std::int64_t>(c.values.size()) - 1};
  }

private:
  struct Column {
    std::int64_t first = 0;
    std::vector<double> values;
  };

  void build(const Formula& f) {
    if (cols_.count(&f)) return;
    for (const Formula* c : children(f)) build(*c);
    const DefinedRange r = defined_range(f, tr_);
    Column col;
    col.first = r.first;
    for (std::int64_t i = r.first; i <= r.last; ++i) col.values.push_back(eval(f, i));
    cols_.emplace(&f, std::move(col));
  }

  double eval(const Formula& f, std::int64_t i) const {
    return std::visit(overloaded{[&](const Atom& a) { return atom_margin(a, detail::signal_at(tr_, a.signal, i)); },
                                 [&](const Not& n) { return -at(*n.arg, i); },
                                 [&](const And& n) { return std::min(at(*n.lhs, i), at(*n.rhs, i)); },
                                 [&](const Or& n) { return std::max(at(*n.lhs, i), at(*n.rhs, i)); },
                                 [&](const Implies& n) { return std::max(-at(*n.lhs, i), at(*n.rhs, i)); },
                                 [&](const Always& n) {
                                   if (!n.bound) return at(*n.arg, i);
                                   const IndexWindow w = to_index_window(*n.bound, tr_.fs);
                                   double r = std::numeric_limits<double>::infinity();
                                   for (std::int64_t j = i + w.lo; j <= i + w.hi; ++j) r = std::min(r, at(*n.arg, j));
                                   return r;
                                 },
                                 [&](const Eventually& n) {
                                   const IndexWindow w = to_index_window(n.bound, tr_.fs);
                                   double r = -std::numeric_limits<double>::infinity();
                                   for (std::int64_t j = i + w.lo; j <= i + w.hi; ++j) r = std::max(r, at(*n.arg, j));
                                   return r;
                                 },
                                 [&](const Prop& n) {
                                   const std::int64_t width = prop_width(n.tau, tr_.fs);
                                   const std::int64_t lo = std::max<std::int64_t>(0, i - width + 1);
                                   std::int64_t count = 0;
                                   for (std::int64_t j = lo; j <= i; ++j) count += at(*n.arg, j) >= 0.0 ? 1 : 0;
                                   return proportion_margin(count, i - lo + 1, n.rho);
                                 }},
                      f.node);
  }

  const Trace& tr_;
  std::unordered_map<const Formula*, Column> cols_;
};

/// Verdicts over the well-defined prefix of the trace.
inline VerdictSeries eval_rule(const Rule& rule, const Trace& tr) {
  const Formula& body = checked_body(*rule.formula);
  RobustnessTable table(body, tr);
  VerdictSeries out{rule.id, {}};
  const DefinedRange r = table.range(body);
  for (std::int64_t i = r.first; i <= r.last; ++i) {
    const double rob = table.at(body, i);
    out.records.push_back({i, tr.time_at(i), rob >= 0.0, rob});
  }
  return out;
}

}  // namespace stlmon
