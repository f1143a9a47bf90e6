#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stlmon/formula.hpp"
#include "stlmon/parser.hpp"

namespace stlmon {

// ---------------------------------------------------------------------------
// Controlled templates

/// "If C holds, then within dt, R must hold": G(C -> F[0,dt] R). With no
/// condition the result is G(F[0,dt] R).
inline FormulaPtr template_timely(std::optional<FormulaPtr> condition, FormulaPtr response, double dt) {
  if (!(dt >= 0.0)) throw SpecError("negative response time");
  FormulaPtr body = make_eventually({0.0, dt}, std::move(response));
  if (condition) body = make_implies(std::move(*condition), std::move(body));
  return make_always_stream(std::move(body));
}

/// "While Q, signal >= gamma for at least rho of the last tau seconds":
/// G(Q -> P[rho,tau](signal >= gamma)).
inline FormulaPtr template_sustained(FormulaPtr region, const std::string& signal, double gamma, double rho, double tau) {
  if (!(rho > 0.0 && rho <= 1.0)) throw SpecError("proportion outside (0,1]");
  if (!(tau > 0.0)) throw SpecError("proportion window must be positive");
  if (signal.empty()) throw SpecError("empty signal name");
  return make_always_stream(make_implies(std::move(region), make_prop(rho, tau, make_atom(signal, Cmp::GE, gamma))));
}

// ---------------------------------------------------------------------------
// Controlled-English paraphrase

namespace detail {

inline const char* cmp_english(Cmp op) {
  switch (op) {
    case Cmp::LT: return "<";
    case Cmp::LE: return "≤";
    case Cmp::GT: return ">";
    case Cmp::GE: return "≥";
  }
  return "?";
}

inline std::string english_atom(const Atom& a) {
  if (a.boolean) return a.signal;
  return a.signal + " " + cmp_english(a.op) + " " + format_number(a.threshold);
}

inline std::string english(const Formula& f);

// 0.29 renders as 29, not 28.999999999999996.
inline std::string percent(double rho) { return format_number(std::round(rho * 100.0 * 1e9) / 1e9); }

inline std::string english_paren(const Formula& f) {
  if (std::holds_alternative<Atom>(f.node)) return english(f);
  return "(" + english(f) + ")";
}

inline std::string seconds_range(const Interval& i) {
  if (i.lo == 0.0) return "within " + format_number(i.hi) + " s";
  return "between " + format_number(i.lo) + " s and " + format_number(i.hi) + " s";
}

inline std::string english(const Formula& f) {
  return std::visit(overloaded{[](const Atom& a) { return english_atom(a); },
                               [](const Not& n) { return "not " + english_paren(*n.arg); },
                               [](const And& n) { return english_paren(*n.lhs) + " and " + english_paren(*n.rhs); },
                               [](const Or& n) { return english_paren(*n.lhs) + " or " + english_paren(*n.rhs); },
                               [](const Implies& n) { return "if " + english_paren(*n.lhs) + ", then " + english_paren(*n.rhs); },
                               [](const Always& n) {
                                 if (!n.bound) return "always " + english_paren(*n.arg);
                                 return "always " + seconds_range(*n.bound) + ", " + english_paren(*n.arg);
                               },
                               [](const Eventually& n) { return "eventually " + seconds_range(n.bound) + ", " + english_paren(*n.arg); },
                               [](const Prop& n) {
                                 return english_paren(*n.arg) + " in at least " + percent(n.rho) + "% of samples over the last " +
                                        format_number(n.tau) + " s";
                               }},
                    f.node);
}

// Plain condition text for "if ..." / "while ...": compound conditions are
// parenthesised, atoms are not.
inline std::string condition_text(const Formula& f) {
  if (std::holds_alternative<Atom>(f.node)) return english(f);
  return "(" + english(f) + ")";
}

}  // namespace detail

/// Deterministic paraphrase. The two template shapes use their fixed
/// phrasing; anything else gets a structural rendering.
inline std::string to_controlled_english(const Rule& rule) {
  const Formula& body = checked_body(*rule.formula);
  if (const auto* imp = std::get_if<Implies>(&body.node)) {
    if (const auto* ev = std::get_if<Eventually>(&imp->rhs->node); ev && ev->bound.lo == 0.0) {
      return "Always: if (" + detail::english(*imp->lhs) + "), then within " + format_number(ev->bound.hi) + " s, (" +
             detail::english(*ev->arg) + ") must hold.";
    }
    if (const auto* p = std::get_if<Prop>(&imp->rhs->node)) {
      if (std::holds_alternative<Atom>(p->arg->node)) {
        return "Always: while " + detail::condition_text(*imp->lhs) + ", " + detail::english(*p->arg) + " must hold in at least " +
               detail::percent(p->rho) + "% of samples over the last " + format_number(p->tau) + " s.";
      }
    }
  }
  return "Always: (" + detail::english(body) + ") must hold.";
}

/// Signals referenced by the spec that the trace does not provide,
/// deduplicated, in first-appearance order.
inline std::vector<std::string> validate_bindings(const SpecFile& spec, const std::vector<std::string>& trace_signals) {
  std::vector<std::string> missing;
  for (const auto& r : spec.rules) {
    for (const auto& s : signals_of(*r.formula)) {
      if (std::find(trace_signals.begin(), trace_signals.end(), s) == trace_signals.end() &&
          std::find(missing.begin(), missing.end(), s) == missing.end())
        missing.push_back(s);
    }
  }
  return missing;
}

/// Full static validation: formula invariants, unique ids, declared signals,
/// and index conversion at `fs`.
inline void validate_spec(const SpecFile& spec, double fs) {
  std::vector<std::string> ids;
  for (const auto& r : spec.rules) {
    if (std::find(ids.begin(), ids.end(), r.id) != ids.end()) throw SpecError("duplicate rule id '" + r.id + "'");
    ids.push_back(r.id);
    validate_formula(*r.formula);
    // Throws on intervals that collapse to no sample at this rate.
    (void)past_reach(*r.formula, fs);
    std::vector<const Formula*> stack{r.formula.get()};
    while (!stack.empty()) {
      const Formula* f = stack.back();
      stack.pop_back();
      if (const auto* g = std::get_if<Always>(&f->node); g && g->bound) (void)to_index_window(*g->bound, fs);
      if (const auto* e = std::get_if<Eventually>(&f->node)) (void)to_index_window(e->bound, fs);
      for (const Formula* c : children(*f)) stack.push_back(c);
    }
  }
  if (spec.signals) {
    const auto missing = validate_bindings(spec, *spec.signals);
    if (!missing.empty()) throw SpecError("signal '" + missing.front() + "' is not declared");
  }
}

}  // namespace stlmon
