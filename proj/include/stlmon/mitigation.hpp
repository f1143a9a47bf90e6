#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stlmon/monitor.hpp"

namespace stlmon {

enum class Strategy { FailDegraded = 1, FailOperational = 2, FailSafe = 3 };

/// Ordered by escalation: Nominal < Degraded < FailOperational < MRC.
enum class Mode { Nominal = 0, Degraded = 1, FailOperational = 2, MRC = 3 };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::FailDegraded: return "FailDegraded";
    case Strategy::FailOperational: return "FailOperational";
    case Strategy::FailSafe: return "FailSafe";
  }
  return "?";
}

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Nominal: return "Nominal";
    case Mode::Degraded: return "Degraded";
    case Mode::FailOperational: return "FailOperational";
    case Mode::MRC: return "MRC";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "FailDegraded") return Strategy::FailDegraded;
  if (s == "FailOperational") return Strategy::FailOperational;
  if (s == "FailSafe") return Strategy::FailSafe;
  throw std::invalid_argument("unknown mitigation strategy '" + s + "'");
}

inline Mode mode_for(Strategy s) { return static_cast<Mode>(static_cast<int>(s)); }

inline const char* entry_action(Mode m) {
  switch (m) {
    case Mode::Nominal: return "none";
    case Mode::Degraded: return "reduce_speed";
    case Mode::FailOperational: return "switch_to_redundant_model";
    case Mode::MRC: return "enter_MRC";
  }
  return "none";
}

struct MitigationPolicy {
  std::map<std::string, Strategy> rules;
  std::int64_t recovery_streak = 20;

  void check() const {
    if (recovery_streak < 1) throw std::invalid_argument("recovery_streak must be >= 1");
  }
};

/// `{"rules": {"<id>": "FailSafe" | "FailOperational" | "FailDegraded"}, "recovery_streak": N}`
inline MitigationPolicy parse_policy(const nlohmann::json& j) {
  MitigationPolicy p;
  if (!j.is_object() || !j.contains("rules") || !j["rules"].is_object()) throw std::invalid_argument("policy needs a 'rules' object");
  for (const auto& [id, s] : j["rules"].items()) {
    if (!s.is_string()) throw std::invalid_argument("strategy for rule '" + id + "' must be a string");
    p.rules[id] = parse_strategy(s.get<std::string>());
  }
  if (j.contains("recovery_streak")) {
    if (!j["recovery_streak"].is_number_integer()) throw std::invalid_argument("recovery_streak must be an integer");
    p.recovery_streak = j["recovery_streak"].get<std::int64_t>();
  }
  p.check();
  return p;
}

inline MitigationPolicy read_policy(std::istream& in) {
  try {
    return parse_policy(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("policy is not valid JSON: ") + e.what());
  }
}

struct SystemMode {
  Mode mode = Mode::Nominal;
  std::optional<std::string> cause;
  std::int64_t since = 0;

  bool operator==(const SystemMode&) const = default;
};

struct Transition {
  std::int64_t index = 0;
  Mode from = Mode::Nominal;
  Mode to = Mode::Nominal;
  std::optional<std::string> cause;
  std::string action = "none";
};

inline nlohmann::json to_json(const Transition& t) {
  return {{"i", t.index}, {"from", to_string(t.from)}, {"to", to_string(t.to)}, {"cause", t.cause ? nlohmann::json(*t.cause) : nlohmann::json(nullptr)}, {"action", t.action}};
}

struct Arbitration {
  SystemMode mode;
  std::string action = "none";
};

/// Escalates to the most severe strategy among the violated rules at one
/// index. Never de-escalates. Ties in severity go to the lexicographically
/// smallest rule id.
inline Arbitration arbitrate(const SystemMode& current, const std::vector<VerdictEvent>& events, const MitigationPolicy& policy) {
  std::optional<std::int64_t> index;
  std::optional<Strategy> worst;
  std::string cause;
  for (const auto& e : events) {
    if (index && *index != e.index) throw std::invalid_argument("arbitrate: events span more than one index");
    index = e.index;
    auto it = policy.rules.find(e.rule);
    if (it == policy.rules.end()) throw std::invalid_argument("rule '" + e.rule + "' has no mitigation strategy");
    if (e.sat) continue;
    if (!worst || it->second > *worst || (it->second == *worst && e.rule < cause)) {
      worst = it->second;
      cause = e.rule;
    }
  }
  if (!worst || mode_for(*worst) <= current.mode) return {current, "none"};
  const Mode target = mode_for(*worst);
  return {SystemMode{target, cause, index.value_or(current.since)}, entry_action(target)};
}

/// One step toward Nominal after `streak` >= N fully compliant samples. MRC
/// is absorbing.
inline SystemMode recover(const SystemMode& current, std::int64_t streak, const MitigationPolicy& policy) {
  if (current.mode == Mode::MRC || current.mode == Mode::Nominal) return current;
  if (streak < policy.recovery_streak) return current;
  SystemMode next = current;
  next.mode = static_cast<Mode>(static_cast<int>(current.mode) - 1);
  if (next.mode == Mode::Nominal) next.cause.reset();
  return next;
}

/// Drives arbitrate/recover over index-ordered event batches and logs every
/// transition.
class MitigationController {
public:
  explicit MitigationController(MitigationPolicy policy) : policy_(std::move(policy)) { policy_.check(); }

  const SystemMode& mode() const { return mode_; }
  const std::vector<Transition>& log() const { return log_; }
  std::int64_t streak() const { return streak_; }

  /// All verdicts for one index across the monitored rules.
  void on_index(std::int64_t index, const std::vector<VerdictEvent>& events) {
    if (last_index_ && index <= *last_index_) throw std::invalid_argument("mitigation inputs must be index-ordered");
    last_index_ = index;
    const bool compliant = std::all_of(events.begin(), events.end(), [](const VerdictEvent& e) { return e.sat; });
    const Arbitration a = arbitrate(mode_, events, policy_);
    if (a.mode.mode != mode_.mode) {
      log_.push_back({index, mode_.mode, a.mode.mode, a.mode.cause, a.action});
      mode_ = a.mode;
      mode_.since = index;
    }
    if (!compliant) {
      streak_ = 0;
      return;
    }
    ++streak_;
    const SystemMode r = recover(mode_, streak_, policy_);
    if (r.mode != mode_.mode) {
      log_.push_back({index, mode_.mode, r.mode, mode_.cause, "recover"});
      mode_ = r;
      mode_.since = index;
      streak_ = 0;
    }
  }

private:
  MitigationPolicy policy_;
  SystemMode mode_;
  std::vector<Transition> log_;
  std::int64_t streak_ = 0;
  std::optional<std::int64_t> last_index_;
};

}  // namespace stlmon
