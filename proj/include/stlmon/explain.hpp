#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stlmon/formula.hpp"
#include "stlmon/monitor.hpp"
#include "stlmon/oracle.hpp"
#include "stlmon/spec_lang.hpp"

namespace stlmon {

inline constexpr int kPayloadVersion = 1;

/// An atom occurrence on the extremum path of a violation.
/// `raise` is true when the atom must become satisfied to repair the
/// verdict, false when it sits under a negation and must become violated.
struct Culprit {
  std::string signal;
  double value = 0.0;
  std::string atom;
  double robustness = 0.0;
  std::int64_t index = 0;
  bool raise = true;
  // Occurrence in the rule's AST; null after deserialisation.
  const Formula* node = nullptr;
};

struct Repair {
  std::string atom;
  std::string signal;
  double current = 0.0;
  double suggested = 0.0;
};

struct EvidenceWindow {
  std::int64_t first = 0;
  std::int64_t width = 1;  // required width
  bool truncated = false;
  std::vector<double> t;
  std::map<std::string, std::vector<double>> signals;
};

struct ViolationPayload {
  std::int64_t id = 0;
  std::string rule;
  std::string doc;
  double t = 0.0;
  std::int64_t index = 0;
  double robustness = 0.0;
  double severity = 0.0;
  std::vector<Culprit> culprits;
  EvidenceWindow evidence;
  std::optional<Repair> repair;
};

namespace detail {

class CulpritWalk {
public:
  explicit CulpritWalk(const RobustnessTable& table) : table_(table) {}

  void run(const Formula& f, std::int64_t i, bool raise) {
    std::visit(overloaded{[&](const Atom& a) { add(f, a, i, raise); },
                          [&](const Not& n) { run(*n.arg, i, !raise); },
                          [&](const And& n) { min_node({n.lhs.get(), n.rhs.get()}, {i, i}, raise); },
                          [&](const Or& n) { max_node({n.lhs.get(), n.rhs.get()}, {i, i}, raise); },
                          [&](const Implies& n) {
                            const double a = -table_.at(*n.lhs, i);
                            const double b = table_.at(*n.rhs, i);
                            if (raise) {
                              // max(-a, b) < 0: lift the larger operand; the consequent on ties.
                              if (a > b) run(*n.lhs, i, false);
                              else run(*n.rhs, i, true);
                            } else {
                              if (a >= 0.0) run(*n.lhs, i, true);
                              if (b >= 0.0) run(*n.rhs, i, false);
                            }
                          },
                          [&](const Always& n) {
                            if (!n.bound) return run(*n.arg, i, raise);
                            const IndexWindow w = to_index_window(*n.bound, table_.trace().fs);
                            window(*n.arg, i + w.lo, i + w.hi, raise, true);
                          },
                          [&](const Eventually& n) {
                            const IndexWindow w = to_index_window(n.bound, table_.trace().fs);
                            window(*n.arg, i + w.lo, i + w.hi, raise, false);
                          },
                          [&](const Prop& n) {
                            const std::int64_t width = prop_width(n.tau, table_.trace().fs);
                            const std::int64_t lo = std::max<std::int64_t>(0, i - width + 1);
                            for (std::int64_t j = lo; j <= i; ++j) {
                              const bool ok = table_.at(*n.arg, j) >= 0.0;
                              // Raising: every unsatisfied sample. Lowering: every satisfied one.
                              if (raise != ok) run(*n.arg, j, raise);
                            }
                          }},
               f.node);
  }

  std::vector<Culprit> take() {
    std::stable_sort(out_.begin(), out_.end(), [](const Culprit& a, const Culprit& b) { return badness(a) < badness(b); });
    return std::move(out_);
  }

private:
  // Lower is worse: the distance on the wrong side of the threshold.
  static double badness(const Culprit& c) { return c.raise ? c.robustness : -c.robustness; }

  void add(const Formula& f, const Atom& a, std::int64_t i, bool raise) {
    if (!seen_.insert({&f, i}).second) return;
    const auto& col = table_.trace().signal(a.signal);
    const double v = col[static_cast<std::size_t>(i - table_.trace().origin)];
    out_.push_back({a.signal, v, atom_text(a), atom_margin(a, v), i, raise, &f});
  }

  // Min-type over (operands x indices): raising needs every negative entry,
  // lowering needs only the smallest.
  void min_node(std::vector<const Formula*> ops, std::pair<std::int64_t, std::int64_t> span, bool raise) {
    if (raise) {
      for (const Formula* op : ops)
        for (std::int64_t j = span.first; j <= span.second; ++j)
          if (table_.at(*op, j) < 0.0) run(*op, j, true);
      return;
    }
    auto [op, j] = extremum(ops, span, true);
    run(*op, j, false);
  }

  void max_node(std::vector<const Formula*> ops, std::pair<std::int64_t, std::int64_t> span, bool raise) {
    if (!raise) {
      for (const Formula* op : ops)
        for (std::int64_t j = span.first; j <= span.second; ++j)
          if (table_.at(*op, j) >= 0.0) run(*op, j, false);
      return;
    }
    auto [op, j] = extremum(ops, span, false);
    run(*op, j, true);
  }

  void window(const Formula& arg, std::int64_t lo, std::int64_t hi, bool raise, bool is_min) {
    if (is_min) min_node({&arg}, {lo, hi}, raise);
    else max_node({&arg}, {lo, hi}, raise);
  }

  // Leftmost operand, then earliest index, among the extremal values.
  std::pair<const Formula*, std::int64_t> extremum(const std::vector<const Formula*>& ops, std::pair<std::int64_t, std::int64_t> span,
                                                   bool want_min) const {
    const Formula* best = nullptr;
    std::int64_t best_j = span.first;
    double best_v = 0.0;
    for (const Formula* op : ops) {
      for (std::int64_t j = span.first; j <= span.second; ++j) {
        const double v = table_.at(*op, j);
        if (best == nullptr || (want_min ? v < best_v : v > best_v)) {
          best = op;
          best_j = j;
          best_v = v;
        }
      }
    }
    return {best, best_j};
  }

  const RobustnessTable& table_;
  std::vector<Culprit> out_;
  std::set<std::pair<const Formula*, std::int64_t>> seen_;
};

}  // namespace detail

/// Walks the extremum path of the rule at `verdict.index` over `evidence`,
/// returning the atoms that decide the violation, worst first.
inline std::vector<Culprit> attribute_culprits(const Rule& rule, const Trace& evidence, const VerdictEvent& verdict) {
  if (verdict.sat) throw std::invalid_argument("culprit attribution requested for a satisfied verdict");
  const Formula& body = checked_body(*rule.formula);
  RobustnessTable table(body, evidence);
  if (table.at(body, verdict.index) >= 0.0)
    throw std::logic_error("evidence does not reproduce the violation at index " + std::to_string(verdict.index));
  detail::CulpritWalk walk(table);
  walk.run(body, verdict.index, true);
  return walk.take();
}

inline std::vector<Culprit> attribute_culprits(const MonitorNetwork& net, const VerdictEvent& verdict) {
  return attribute_culprits(net.rule(), net.evidence(), verdict);
}

/// Smallest threshold change on the worst thresholded culprit that puts the
/// atom on the repairing side of its threshold at every evidence sample.
/// Raising culprits move the threshold onto the signal's extreme (margin 0
/// counts as satisfied); lowering culprits move one ulp past it.
inline std::optional<Repair> suggest_repair(const std::vector<Culprit>& culprits, const Trace& evidence) {
  for (const auto& c : culprits) {
    if (c.node == nullptr) continue;
    const auto& a = std::get<Atom>(c.node->node);
    if (a.boolean) continue;
    const auto& col = evidence.signal(a.signal);
    const double lo = *std::min_element(col.begin(), col.end());
    const double hi = *std::max_element(col.begin(), col.end());
    const bool upward = a.op == Cmp::GT || a.op == Cmp::GE;
    double suggested;
    if (c.raise) {
      suggested = upward ? lo : hi;
    } else {
      suggested = upward ? std::nextafter(hi, std::numeric_limits<double>::infinity())
                         : std::nextafter(lo, -std::numeric_limits<double>::infinity());
    }
    bool already = true;
    for (double s : col) {
      const double r = atom_margin(a, s);
      if (c.raise ? r < 0.0 : r >= 0.0) already = false;
    }
    if (already) return std::nullopt;
    return Repair{atom_text(a), a.signal, a.threshold, suggested};
  }
  return std::nullopt;
}

/// Assembles the payload for a violated verdict. `evidence` should span
/// [index - past, index + H]; a shorter slice (start of stream) sets the
/// truncation flag.
inline ViolationPayload build_payload(const Rule& rule, double fs, const Trace& evidence, const VerdictEvent& verdict, std::int64_t id) {
  if (verdict.sat) throw std::invalid_argument("payload requested for a satisfied verdict");
  const Formula& body = checked_body(*rule.formula);
  ViolationPayload p;
  p.id = id;
  p.rule = rule.id;
  p.doc = rule.doc ? *rule.doc : to_controlled_english(rule);
  p.t = verdict.t;
  p.index = verdict.index;
  p.robustness = verdict.robustness;
  p.severity = std::abs(verdict.robustness);
  p.culprits = attribute_culprits(rule, evidence, verdict);
  p.repair = suggest_repair(p.culprits, evidence);
  p.evidence.width = horizon(body, fs) + past_reach(body, fs) + 1;
  p.evidence.first = evidence.origin;
  p.evidence.truncated = static_cast<std::int64_t>(evidence.size()) < p.evidence.width;
  for (std::size_t k = 0; k < evidence.size(); ++k) p.evidence.t.push_back(evidence.time_at(evidence.origin + static_cast<std::int64_t>(k)));
  p.evidence.signals = evidence.signals;
  return p;
}

inline ViolationPayload build_payload(const MonitorNetwork& net, const VerdictEvent& verdict, std::int64_t id) {
  return build_payload(net.rule(), net.fs(), net.evidence(), verdict, id);
}

// ---------------------------------------------------------------------------
// Canonical JSON: UTF-8, object keys sorted, shortest round-trip reals.

inline nlohmann::json to_json(const ViolationPayload& p) {
  nlohmann::json culprits = nlohmann::json::array();
  for (const auto& c : p.culprits)
    culprits.push_back({{"atom", c.atom}, {"i", c.index}, {"raise", c.raise}, {"rob", c.robustness}, {"signal", c.signal}, {"value", c.value}});
  nlohmann::json ev = {{"first", p.evidence.first}, {"width", p.evidence.width}, {"truncated", p.evidence.truncated}, {"t", p.evidence.t}};
  ev["signals"] = nlohmann::json::object();
  for (const auto& [k, v] : p.evidence.signals) ev["signals"][k] = v;
  nlohmann::json j = {{"v", kPayloadVersion}, {"id", p.id},          {"rule", p.rule}, {"doc", p.doc},   {"t", p.t},
                      {"i", p.index},         {"rob", p.robustness}, {"severity", p.severity}, {"culprits", culprits}, {"evidence", ev}};
  j["repair"] = p.repair ? nlohmann::json{{"atom", p.repair->atom}, {"signal", p.repair->signal}, {"current", p.repair->current},
                                          {"suggested", p.repair->suggested}}
                         : nlohmann::json(nullptr);
  return j;
}

inline ViolationPayload payload_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("v", 0) != kPayloadVersion) throw std::invalid_argument("unsupported payload version");
  ViolationPayload p;
  p.id = j.at("id").get<std::int64_t>();
  p.rule = j.at("rule").get<std::string>();
  p.doc = j.at("doc").get<std::string>();
  p.t = j.at("t").get<double>();
  p.index = j.at("i").get<std::int64_t>();
  p.robustness = j.at("rob").get<double>();
  p.severity = j.at("severity").get<double>();
  for (const auto& c : j.at("culprits"))
    p.culprits.push_back({c.at("signal").get<std::string>(), c.at("value").get<double>(), c.at("atom").get<std::string>(),
                          c.at("rob").get<double>(), c.at("i").get<std::int64_t>(), c.at("raise").get<bool>(), nullptr});
  const auto& ev = j.at("evidence");
  p.evidence.first = ev.at("first").get<std::int64_t>();
  p.evidence.width = ev.at("width").get<std::int64_t>();
  p.evidence.truncated = ev.at("truncated").get<bool>();
  p.evidence.t = ev.at("t").get<std::vector<double>>();
  for (const auto& [k, v] : ev.at("signals").items()) p.evidence.signals[k] = v.get<std::vector<double>>();
  if (!j.at("repair").is_null()) {
    const auto& r = j.at("repair");
    p.repair = Repair{r.at("atom").get<std::string>(), r.at("signal").get<std::string>(), r.at("current").get<double>(),
                      r.at("suggested").get<double>()};
  }
  return p;
}

/// nlohmann's default object is a std::map, so dump() already sorts keys.
inline std::string canonical(const nlohmann::json& j) { return j.dump(); }

inline std::string canonical(const ViolationPayload& p) { return canonical(to_json(p)); }

/// Evidence slice as a trace, e.g. for export or re-evaluation.
inline Trace evidence_trace(const ViolationPayload& p, double fs) {
  Trace tr;
  tr.fs = fs;
  tr.origin = p.evidence.first;
  tr.signals = p.evidence.signals;
  tr.times = p.evidence.t;
  tr.t0 = tr.times.empty() ? 0.0 : tr.times.front();
  return tr;
}

/// Multi-line rendering for people.
inline std::string describe(const ViolationPayload& p) {
  std::string s = "violation #" + std::to_string(p.id) + " of rule '" + p.rule + "'\n";
  s += "  " + p.doc + "\n";
  s += "  at index " + std::to_string(p.index) + " (t=" + format_number(p.t) + " s), robustness " + format_number(p.robustness) + "\n";
  s += "  culprits:\n";
  for (const auto& c : p.culprits)
    s += "    " + c.atom + " at index " + std::to_string(c.index) + ": " + c.signal + "=" + format_number(c.value) + ", margin " +
         format_number(c.robustness) + (c.raise ? "" : " (under negation)") + "\n";
  s += "  evidence: " + std::to_string(p.evidence.t.size()) + " sample(s) from index " + std::to_string(p.evidence.first) +
       (p.evidence.truncated ? " (truncated)" : "") + "\n";
  if (p.repair)
    s += "  repair: " + p.repair->atom + " -> threshold " + format_number(p.repair->current) + " becomes " + format_number(p.repair->suggested) + "\n";
  else
    s += "  repair: none\n";
  return s;
}

}  // namespace stlmon
