#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlmon/formula.hpp"
#include "stlmon/spec_lang.hpp"
#include "stlmon/trace.hpp"
#include "stlmon/window.hpp"

namespace stlmon {

struct VerdictEvent {
  std::string rule;
  std::int64_t index = 0;
  double t = 0.0;
  bool sat = true;
  double robustness = 0.0;

  bool operator==(const VerdictEvent&) const = default;
};

/// Unresolved tail after the stream ends: the last `unresolved` consumed
/// indices, starting at `first_index`, never received a verdict.
struct FlushReport {
  std::int64_t unresolved = 0;
  std::int64_t first_index = 0;
  std::vector<std::string> diagnostics;
};

/// Streaming evaluator for one rule. Every future-bounded operator is turned
/// into a trailing window over its child's output, delayed by the child's
/// horizon; the root verdict for index i is available once sample i + H has
/// been consumed.
///
/// Not thread-safe: calls to step() must be serialized per network.
class MonitorNetwork {
public:
  enum class Kind { Atom, Not, And, Or, Implies, WindowMin, WindowMax, Count };

  struct Node {
    Kind kind = Kind::Atom;
    const Formula* source = nullptr;
    int lhs = -1;
    int rhs = -1;
    // Output for index k is produced when sample k + delay is consumed.
    std::int64_t delay = 0;

    std::size_t slot = 0;  // atom: position in signals()
    Atom atom;

    DelayLine align_lhs{0};
    DelayLine align_rhs{0};

    std::optional<SlidingExtrema> extrema;
    std::int64_t window_hi = 0;
    std::optional<CountWindow> counter;
    double rho = 1.0;

    bool fresh = false;
    double value = 0.0;
  };

  MonitorNetwork(Rule rule, double fs) : rule_(std::move(rule)), fs_(fs) {
    if (!(fs > 0.0) || !std::isfinite(fs)) throw SpecError("sample rate must be positive");
    validate_formula(*rule_.formula);
    const Formula& body = checked_body(*rule_.formula);
    signals_ = signals_of(body);
    root_ = add(body);
    horizon_ = nodes_[static_cast<std::size_t>(root_)].delay;
    past_ = past_reach(body, fs);
    evidence_capacity_ = static_cast<std::size_t>(horizon_ + past_ + 1);
    evidence_times_.assign(evidence_capacity_, 0.0);
    evidence_values_.assign(evidence_capacity_ * signals_.size(), 0.0);
    scratch_.resize(signals_.size());
  }

  const Rule& rule() const { return rule_; }
  double fs() const { return fs_; }
  /// Verdict delay in samples; equals horizon() of the checked formula.
  std::int64_t delay() const { return horizon_; }
  std::int64_t past() const { return past_; }
  std::int64_t consumed() const { return consumed_; }
  const std::vector<std::string>& signals() const { return signals_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Consumes one sample. Returns the verdict for index consumed - 1 - H
  /// once that index is resolved.
  std::optional<VerdictEvent> step(const std::map<std::string, double>& sample, double t) {
    for (std::size_t k = 0; k < signals_.size(); ++k) {
      auto it = sample.find(signals_[k]);
      if (it == sample.end())
        throw BindingError("sample " + std::to_string(consumed_) + " lacks signal '" + signals_[k] + "' for rule '" + rule_.id + "'");
      scratch_[k] = it->second;
    }
    return step_values(scratch_, t);
  }

  /// Fast path: `values` aligned with signals().
  std::optional<VerdictEvent> step_values(std::span<const double> values, double t) {
    check_time(t);
    record_evidence(values, t);
    const std::int64_t now = consumed_;
    for (auto& n : nodes_) evaluate(n, values, now);
    ++consumed_;
    last_t_ = t;
    const Node& root = nodes_[static_cast<std::size_t>(root_)];
    if (!root.fresh) return std::nullopt;
    const std::int64_t index = now - horizon_;
    return VerdictEvent{rule_.id, index, time_of(index), root.value >= 0.0, root.value};
  }

  FlushReport flush() const {
    FlushReport r;
    r.unresolved = std::min(consumed_, horizon_);
    r.first_index = consumed_ - r.unresolved;
    if (r.unresolved > 0)
      r.diagnostics.push_back("rule '" + rule_.id + "': " + std::to_string(r.unresolved) + " trailing sample(s) from index " +
                              std::to_string(r.first_index) + " have no verdict (horizon " + std::to_string(horizon_) + ")");
    return r;
  }

  /// Ring slots held by temporal windows (extrema wedges and count rings).
  std::size_t footprint() const {
    std::size_t slots = 0;
    for (const auto& n : nodes_) {
      if (n.extrema) slots += n.extrema->width();
      if (n.counter) slots += n.counter->width();
    }
    return slots;
  }

  /// Slots in delay lines that align binary operands with unequal horizons.
  std::size_t alignment_slots() const {
    std::size_t slots = 0;
    for (const auto& n : nodes_) slots += n.align_lhs.length() + n.align_rhs.length();
    return slots;
  }

  std::size_t window_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.extrema || n.counter; }));
  }

  /// Basic evaluator operations so far: one per node visit plus every wedge
  /// push/pop and count-ring update.
  std::uint64_t ops() const {
    std::uint64_t total = visits_;
    for (const auto& n : nodes_) {
      if (n.extrema) total += n.extrema->ops();
      if (n.counter) total += n.counter->ops();
    }
    return total;
  }

  std::size_t evidence_capacity() const { return evidence_capacity_; }

  /// The retained raw samples: absolute indices [consumed - held, consumed - 1].
  Trace evidence() const {
    const std::int64_t held = std::min<std::int64_t>(consumed_, static_cast<std::int64_t>(evidence_capacity_));
    Trace tr;
    tr.fs = fs_;
    tr.origin = consumed_ - held;
    for (const auto& s : signals_) tr.signals[s].reserve(static_cast<std::size_t>(held));
    for (std::int64_t i = tr.origin; i < consumed_; ++i) {
      const std::size_t slot = static_cast<std::size_t>(i % static_cast<std::int64_t>(evidence_capacity_));
      tr.times.push_back(evidence_times_[slot]);
      for (std::size_t k = 0; k < signals_.size(); ++k) tr.signals[signals_[k]].push_back(evidence_values_[slot * signals_.size() + k]);
    }
    tr.t0 = tr.times.empty() ? 0.0 : tr.times.front();
    return tr;
  }

private:
  int add(const Formula& f) {
    Node n;
    n.source = &f;
    std::visit(overloaded{[&](const Atom& a) {
                            n.kind = Kind::Atom;
                            n.atom = a;
                            n.slot = static_cast<std::size_t>(std::find(signals_.begin(), signals_.end(), a.signal) - signals_.begin());
                          },
                          [&](const Not& x) {
                            n.kind = Kind::Not;
                            n.lhs = add(*x.arg);
                            n.delay = nodes_[static_cast<std::size_t>(n.lhs)].delay;
                          },
                          [&](const And& x) { binary(n, Kind::And, *x.lhs, *x.rhs); },
                          [&](const Or& x) { binary(n, Kind::Or, *x.lhs, *x.rhs); },
                          [&](const Implies& x) { binary(n, Kind::Implies, *x.lhs, *x.rhs); },
                          [&](const Always& x) {
                            if (!x.bound) throw SpecError("unbounded G is only allowed at rule top level");
                            window(n, Kind::WindowMin, *x.bound, *x.arg);
                          },
                          [&](const Eventually& x) { window(n, Kind::WindowMax, x.bound, *x.arg); },
                          [&](const Prop& x) {
                            n.kind = Kind::Count;
                            n.lhs = add(*x.arg);
                            n.delay = nodes_[static_cast<std::size_t>(n.lhs)].delay;
                            n.rho = x.rho;
                            n.counter.emplace(static_cast<std::size_t>(prop_width(x.tau, fs_)));
                          }},
               f.node);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  void binary(Node& n, Kind kind, const Formula& a, const Formula& b) {
    n.kind = kind;
    n.lhs = add(a);
    n.rhs = add(b);
    const std::int64_t da = nodes_[static_cast<std::size_t>(n.lhs)].delay;
    const std::int64_t db = nodes_[static_cast<std::size_t>(n.rhs)].delay;
    n.delay = std::max(da, db);
    n.align_lhs = DelayLine(static_cast<std::size_t>(n.delay - da));
    n.align_rhs = DelayLine(static_cast<std::size_t>(n.delay - db));
  }

  void window(Node& n, Kind kind, const Interval& bound, const Formula& arg) {
    const IndexWindow w = to_index_window(bound, fs_);
    n.kind = kind;
    n.lhs = add(arg);
    n.window_hi = w.hi;
    n.delay = nodes_[static_cast<std::size_t>(n.lhs)].delay + w.hi;
    n.extrema.emplace(static_cast<std::size_t>(w.width()), kind == Kind::WindowMin ? SlidingExtrema::Mode::Min : SlidingExtrema::Mode::Max);
  }

  void evaluate(Node& n, std::span<const double> values, std::int64_t now) {
    ++visits_;
    switch (n.kind) {
      case Kind::Atom:
        n.value = atom_margin(n.atom, values[n.slot]);
        n.fresh = true;
        return;
      case Kind::Not: {
        const Node& c = nodes_[static_cast<std::size_t>(n.lhs)];
        n.fresh = c.fresh;
        n.value = -c.value;
        return;
      }
      case Kind::And:
      case Kind::Or:
      case Kind::Implies: {
        const Node& a = nodes_[static_cast<std::size_t>(n.lhs)];
        const Node& b = nodes_[static_cast<std::size_t>(n.rhs)];
        const double va = a.fresh ? n.align_lhs.shift(a.value) : 0.0;
        const double vb = b.fresh ? n.align_rhs.shift(b.value) : 0.0;
        n.fresh = now >= n.delay;
        if (!n.fresh) return;
        n.value = n.kind == Kind::And ? std::min(va, vb) : n.kind == Kind::Or ? std::max(va, vb) : std::max(-va, vb);
        return;
      }
      case Kind::WindowMin:
      case Kind::WindowMax: {
        const Node& c = nodes_[static_cast<std::size_t>(n.lhs)];
        n.fresh = false;
        if (!c.fresh) return;
        const std::int64_t j = now - c.delay;
        n.value = n.extrema->push(j, c.value);
        n.fresh = j >= n.window_hi;
        return;
      }
      case Kind::Count: {
        const Node& c = nodes_[static_cast<std::size_t>(n.lhs)];
        n.fresh = c.fresh;
        if (!c.fresh) return;
        const std::int64_t count = n.counter->push(c.value >= 0.0);
        n.value = proportion_margin(count, n.counter->filled(), n.rho);
        return;
      }
    }
  }

  void check_time(double t) const {
    if (!std::isfinite(t)) throw TraceError("non-finite timestamp at sample " + std::to_string(consumed_), consumed_ - 1);
    if (consumed_ == 0) return;
    const double period = 1.0 / fs_;
    const double tol = 1e-9 * period + 8.0 * 2.220446049250313e-16 * std::abs(t);
    if (std::abs((t - last_t_) - period) > tol)
      throw TraceError("timestamp " + format_number(t) + " at sample " + std::to_string(consumed_) + " breaks the " + format_number(fs_) +
                           " Hz sample grid (previous " + format_number(last_t_) + ")",
                       consumed_ - 1);
  }

  void record_evidence(std::span<const double> values, double t) {
    const std::size_t slot = static_cast<std::size_t>(consumed_ % static_cast<std::int64_t>(evidence_capacity_));
    evidence_times_[slot] = t;
    std::copy(values.begin(), values.end(), evidence_values_.begin() + static_cast<std::ptrdiff_t>(slot * signals_.size()));
  }

  double time_of(std::int64_t index) const {
    if (consumed_ - index <= static_cast<std::int64_t>(evidence_capacity_))
      return evidence_times_[static_cast<std::size_t>(index % static_cast<std::int64_t>(evidence_capacity_))];
    return last_t_ - static_cast<double>(consumed_ - 1 - index) / fs_;
  }

  Rule rule_;
  double fs_;
  std::vector<std::string> signals_;
  std::vector<Node> nodes_;
  int root_ = -1;
  std::int64_t horizon_ = 0;
  std::int64_t past_ = 0;
  std::int64_t consumed_ = 0;
  double last_t_ = 0.0;
  std::uint64_t visits_ = 0;
  std::vector<double> scratch_;
  std::size_t evidence_capacity_ = 1;
  std::vector<double> evidence_times_;
  std::vector<double> evidence_values_;
};

/// Compiles `rule` for a stream sampled at `fs`.
inline MonitorNetwork compile(const Rule& rule, double fs) { return MonitorNetwork(rule, fs); }

/// Runs a network over a whole trace; convenience for tests and batch use.
inline std::vector<VerdictEvent> run_monitor(MonitorNetwork& net, const Trace& tr) {
  std::vector<VerdictEvent> out;
  std::vector<const std::vector<double>*> cols;
  for (const auto& s : net.signals()) cols.push_back(&tr.signal(s));
  std::vector<double> row(cols.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    for (std::size_t c = 0; c < cols.size(); ++c) row[c] = (*cols[c])[k];
    if (auto v = net.step_values(row, tr.time_at(tr.origin + static_cast<std::int64_t>(k)))) out.push_back(std::move(*v));
  }
  return out;
}

}  // namespace stlmon
