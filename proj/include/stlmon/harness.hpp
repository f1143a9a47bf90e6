#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stlmon/explain.hpp"
#include "stlmon/monitor.hpp"
#include "stlmon/parser.hpp"
#include "stlmon/stats.hpp"
#include "stlmon/trace.hpp"
#include "stlmon/violation_log.hpp"

// Synthetic perception scenarios. Environmental effects are modelled by their
// signature on the perception outputs (confidence dips, detection gaps,
// label swaps), not rendered.

namespace stlmon {

/// Monitoring rules for the pedestrian-confidence experiment.
inline constexpr const char* kPerceptionSpecV1 = R"(# Pedestrian perception contract, first revision.
rule timely: G[0,1e9]((dist < 30 and is_ped) -> F[0,0.1](conf > 0.8))
  doc "Always, if dist is under 30 m and the object is a pedestrian, then within 0.1 s confidence must exceed 0.8.";
rule sustained: G(in_cone -> P[0.9,1](conf >= 0.8))
  doc "While a pedestrian is in the 30 m cone, confidence stays at or above 0.8 in at least 90% of the last 1 s of frames.";
# Confidence pinned at full scale is a sensor artefact, not certainty.
rule plausible: G(in_cone -> P[0.9,1](conf < 0.995))
  doc "While a pedestrian is in the 30 m cone, confidence stays below 0.995 in at least 90% of the last 1 s of frames.";
)";

/// v1 plus the rule added after triaging label-swap misses.
inline constexpr const char* kPerceptionSpecV2Extra = R"(rule noped: G(is_ped_truth -> not is_statue_AI)
  doc "A true pedestrian must never be labelled as a statue.";
)";

inline SpecFile perception_spec_v1() { return parse_spec(kPerceptionSpecV1); }
inline SpecFile perception_spec_v2() { return parse_spec(std::string(kPerceptionSpecV1) + kPerceptionSpecV2Extra); }

enum class ScenarioClass { Nominal, OcclusionFlicker, GlareVanish, Misclassification, SensorDropout, SensorSaturation, SensorBias };

inline const char* to_string(ScenarioClass c) {
  switch (c) {
    case ScenarioClass::Nominal: return "nominal";
    case ScenarioClass::OcclusionFlicker: return "occlusion_flicker";
    case ScenarioClass::GlareVanish: return "glare_vanish";
    case ScenarioClass::Misclassification: return "misclassification";
    case ScenarioClass::SensorDropout: return "sensor_dropout";
    case ScenarioClass::SensorSaturation: return "sensor_saturation";
    case ScenarioClass::SensorBias: return "sensor_bias";
  }
  return "?";
}

inline ScenarioClass parse_scenario_class(const std::string& s) {
  for (auto c : {ScenarioClass::Nominal, ScenarioClass::OcclusionFlicker, ScenarioClass::GlareVanish, ScenarioClass::Misclassification,
                 ScenarioClass::SensorDropout, ScenarioClass::SensorSaturation, ScenarioClass::SensorBias})
    if (s == to_string(c)) return c;
  throw std::invalid_argument("unknown scenario class '" + s + "'");
}

/// Inclusive sample range.
struct FaultInterval {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t length() const { return end - start + 1; }
  bool overlaps(std::int64_t a, std::int64_t b) const { return a <= end && start <= b; }
  bool operator==(const FaultInterval&) const = default;
};

struct ScenarioSpec {
  std::uint64_t seed = 0;
  ScenarioClass cls = ScenarioClass::Nominal;
  double duration = 30.0;
  double fs = 10.0;
  std::vector<FaultInterval> faults;
};

struct Scenario {
  ScenarioClass cls = ScenarioClass::Nominal;
  Trace trace;
  std::vector<FaultInterval> truth;
};

inline constexpr double kApproachStart = 50.0;  // m
inline constexpr double kConeRange = 30.0;      // m
inline constexpr double kNominalConf = 0.95;
inline constexpr double kConfNoise = 0.01;
inline constexpr double kOcclusionConf = 0.6;
inline constexpr std::int64_t kOcclusionLength = 3;
inline constexpr std::int64_t kGlareLength = 12;
inline constexpr double kBiasOffset = 0.15;

namespace detail {

inline std::int64_t sample_count(double duration, double fs) {
  if (!(fs > 0.0) || !(duration > 0.0)) throw std::invalid_argument("scenario duration and rate must be positive");
  return static_cast<std::int64_t>(std::llround(duration * fs));
}

// Walking speed in m/s; the first draw of the scenario stream.
inline double approach_speed(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(1.0, 1.6)(rng); }

inline std::int64_t cone_entry(double speed, double fs) {
  // First k with 50 - v k / fs < 30.
  return static_cast<std::int64_t>(std::floor((kApproachStart - kConeRange) / speed * fs)) + 1;
}

}  // namespace detail

/// Builds the trace for `spec`. Deterministic per seed.
inline Scenario gen_scenario(const ScenarioSpec& spec) {
  const std::int64_t n = detail::sample_count(spec.duration, spec.fs);
  if (spec.cls == ScenarioClass::Nominal && !spec.faults.empty()) throw std::invalid_argument("nominal scenario cannot carry faults");
  for (const auto& f : spec.faults) {
    if (f.start < 0 || f.end < f.start || f.end >= n)
      throw std::invalid_argument("fault interval [" + std::to_string(f.start) + "," + std::to_string(f.end) + "] exceeds the " +
                                  std::to_string(n) + "-sample scenario");
    if (spec.cls == ScenarioClass::OcclusionFlicker && f.length() != kOcclusionLength)
      throw std::invalid_argument("occlusion flicker lasts exactly 3 samples");
    if (spec.cls == ScenarioClass::GlareVanish && f.length() != kGlareLength) throw std::invalid_argument("glare gap lasts exactly 12 samples");
  }

  std::mt19937_64 rng(spec.seed);
  const double speed = detail::approach_speed(rng);
  std::normal_distribution<double> noise(0.0, kConfNoise);

  Scenario s;
  s.cls = spec.cls;
  s.truth = spec.faults;
  Trace& tr = s.trace;
  tr.fs = spec.fs;
  auto& dist = tr.signals["dist"];
  auto& is_ped = tr.signals["is_ped"];
  auto& in_cone = tr.signals["in_cone"];
  auto& conf = tr.signals["conf"];
  auto& truth = tr.signals["is_ped_truth"];
  auto& statue = tr.signals["is_statue_AI"];
  for (std::int64_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / spec.fs;
    tr.times.push_back(t);
    const double d = std::max(1.0, kApproachStart - speed * t);
    dist.push_back(d);
    in_cone.push_back(d < kConeRange ? 1.0 : 0.0);
    truth.push_back(1.0);
    is_ped.push_back(1.0);
    statue.push_back(0.0);
    conf.push_back(std::clamp(kNominalConf + noise(rng), 0.0, 1.0));
  }
  for (const auto& f : spec.faults) {
    for (std::int64_t k = f.start; k <= f.end; ++k) {
      const auto i = static_cast<std::size_t>(k);
      switch (spec.cls) {
        case ScenarioClass::OcclusionFlicker: conf[i] = kOcclusionConf; break;
        case ScenarioClass::GlareVanish:
          conf[i] = 0.0;
          is_ped[i] = 0.0;
          break;
        case ScenarioClass::Misclassification:
          is_ped[i] = 0.0;
          statue[i] = 1.0;
          break;
        case ScenarioClass::SensorDropout: conf[i] = 0.0; break;
        case ScenarioClass::SensorSaturation: conf[i] = 1.0; break;
        case ScenarioClass::SensorBias: conf[i] = std::min(1.0, conf[i] + kBiasOffset); break;
        case ScenarioClass::Nominal: break;
      }
    }
  }
  tr.t0 = 0.0;
  return s;
}

/// Chooses the fault interval for a class: inside the cone, at least one
/// second after entry, and ending before the last second.
inline ScenarioSpec plan_scenario(std::uint64_t seed, ScenarioClass cls, double duration = 30.0, double fs = 10.0) {
  ScenarioSpec spec{seed, cls, duration, fs, {}};
  if (cls == ScenarioClass::Nominal) return spec;
  const std::int64_t n = detail::sample_count(duration, fs);
  std::mt19937_64 rng(seed);
  const double speed = detail::approach_speed(rng);
  // Placement draws come from a separate stream so the trace noise is the
  // same whichever fault is planned.
  std::mt19937_64 place(seed ^ 0x9E3779B97F4A7C15ULL);
  std::int64_t len = 0;
  switch (cls) {
    case ScenarioClass::OcclusionFlicker: len = kOcclusionLength; break;
    case ScenarioClass::GlareVanish: len = kGlareLength; break;
    default: len = std::uniform_int_distribution<std::int64_t>(5, 10)(place); break;
  }
  const auto margin = static_cast<std::int64_t>(std::ceil(fs));
  const std::int64_t lo = detail::cone_entry(speed, fs) + margin;
  const std::int64_t hi = n - margin - len;
  if (lo > hi) throw std::invalid_argument("scenario too short to place a fault inside the cone");
  const std::int64_t start = std::uniform_int_distribution<std::int64_t>(lo, hi)(place);
  spec.faults.push_back({start, start + len - 1});
  return spec;
}

// ---------------------------------------------------------------------------
// Campaigns

enum class Suite { Nominal, Challenging };

inline Suite parse_suite(const std::string& s) {
  if (s == "nominal") return Suite::Nominal;
  if (s == "challenging") return Suite::Challenging;
  throw std::invalid_argument("unknown suite '" + s + "'");
}

/// Per 100 challenging runs: 69 clean, 29 faults the confidence rules can
/// see, 2 label swaps they cannot.
inline std::vector<ScenarioClass> challenging_block(std::uint64_t seed, std::int64_t block) {
  std::vector<ScenarioClass> out(69, ScenarioClass::Nominal);
  const std::pair<ScenarioClass, int> faults[] = {{ScenarioClass::OcclusionFlicker, 6}, {ScenarioClass::GlareVanish, 6},
                                                  {ScenarioClass::SensorDropout, 6},    {ScenarioClass::SensorSaturation, 6},
                                                  {ScenarioClass::SensorBias, 5},       {ScenarioClass::Misclassification, 2}};
  for (const auto& [cls, count] : faults) out.insert(out.end(), static_cast<std::size_t>(count), cls);
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(block), 0xB10Cu};
  std::mt19937_64 rng(ss);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Independent stream per (campaign seed, run index).
inline std::uint64_t run_seed(std::uint64_t seed, std::int64_t run) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(run),
                   static_cast<std::uint32_t>(static_cast<std::uint64_t>(run) >> 32)};
  std::mt19937_64 rng(ss);
  return rng();
}

/// A violated verdict and the sample span its evidence covers.
struct ViolationSpan {
  std::string rule;
  std::int64_t index = 0;
  std::int64_t first = 0;
  std::int64_t last = 0;
};

struct RunResult {
  std::int64_t run = 0;
  ScenarioClass cls = ScenarioClass::Nominal;
  std::vector<FaultInterval> truth;
  std::vector<bool> detected;
  std::int64_t violations = 0;
  // Episodes of consecutive violated verdicts of one rule touching no fault.
  std::int64_t false_alarms = 0;
};

/// Matches violations against ground truth. A fault counts as detected if
/// any violation's evidence span overlaps it.
inline RunResult score_run(std::int64_t run, ScenarioClass cls, const std::vector<FaultInterval>& truth, std::vector<ViolationSpan> spans) {
  RunResult r{run, cls, truth, std::vector<bool>(truth.size(), false), static_cast<std::int64_t>(spans.size()), 0};
  std::stable_sort(spans.begin(), spans.end(), [](const ViolationSpan& a, const ViolationSpan& b) {
    return a.rule != b.rule ? a.rule < b.rule : a.index < b.index;
  });
  std::size_t k = 0;
  while (k < spans.size()) {
    std::size_t e = k + 1;
    while (e < spans.size() && spans[e].rule == spans[k].rule && spans[e].index == spans[e - 1].index + 1) ++e;
    bool touches = false;
    for (std::size_t v = k; v < e; ++v) {
      for (std::size_t f = 0; f < truth.size(); ++f) {
        if (truth[f].overlaps(spans[v].first, spans[v].last)) {
          r.detected[f] = true;
          touches = true;
        }
      }
    }
    if (!touches) ++r.false_alarms;
    k = e;
  }
  return r;
}

struct CampaignReport {
  std::int64_t runs = 0;
  std::int64_t seeded = 0;
  std::int64_t detected = 0;
  std::int64_t missed = 0;
  std::int64_t false_positives = 0;
  std::int64_t fp_runs = 0;
  std::optional<double> detection_rate;
  double fp_rate = 0.0;
  std::optional<ProportionInterval> detection_ci;
  std::optional<ProportionInterval> fp_ci;
  double alpha = 0.05;
  std::map<std::string, std::int64_t> missed_by_class;
};

/// Aggregates run results. Detection rate is undefined (null) when nothing
/// was seeded; the FP rate is the share of runs with at least one false alarm.
inline CampaignReport detection_metrics(const std::vector<RunResult>& results, double alpha = 0.05) {
  CampaignReport rep;
  rep.alpha = alpha;
  rep.runs = static_cast<std::int64_t>(results.size());
  for (const auto& r : results) {
    rep.seeded += static_cast<std::int64_t>(r.truth.size());
    for (std::size_t f = 0; f < r.truth.size(); ++f) {
      if (r.detected[f]) {
        ++rep.detected;
      } else {
        ++rep.missed;
        ++rep.missed_by_class[to_string(r.cls)];
      }
    }
    rep.false_positives += r.false_alarms;
    if (r.false_alarms > 0) ++rep.fp_runs;
  }
  if (rep.seeded > 0) {
    rep.detection_rate = static_cast<double>(rep.detected) / static_cast<double>(rep.seeded);
    rep.detection_ci = clopper_pearson(rep.detected, rep.seeded, alpha);
  }
  if (rep.runs > 0) {
    rep.fp_rate = static_cast<double>(rep.fp_runs) / static_cast<double>(rep.runs);
    rep.fp_ci = clopper_pearson(rep.fp_runs, rep.runs, alpha);
  }
  return rep;
}

inline nlohmann::json to_json(const CampaignReport& r) {
  auto ci = [](const std::optional<ProportionInterval>& c) { return c ? nlohmann::json::array({c->lo, c->hi}) : nlohmann::json(nullptr); };
  return {{"runs", r.runs},
          {"seeded", r.seeded},
          {"detected", r.detected},
          {"missed", r.missed},
          {"false_positives", r.false_positives},
          {"fp_runs", r.fp_runs},
          {"detection_rate", r.detection_rate ? nlohmann::json(*r.detection_rate) : nlohmann::json(nullptr)},
          {"fp_rate", r.fp_rate},
          {"detection_ci", ci(r.detection_ci)},
          {"fp_ci", ci(r.fp_ci)},
          {"alpha", r.alpha},
          {"missed_by_class", r.missed_by_class}};
}

struct CampaignOptions {
  Suite suite = Suite::Challenging;
  std::int64_t runs = 100;
  std::uint64_t seed = 1;
  double duration = 30.0;
  double fs = 10.0;
  double alpha = 0.05;
  ViolationLog* log = nullptr;
  // When set, each run's trace is written here as run_NNN.csv.
  std::optional<std::filesystem::path> trace_dir;
};

inline std::string run_name(std::int64_t run) {
  std::string s = std::to_string(run);
  return "run_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

struct CampaignResult {
  CampaignReport report;
  std::vector<RunResult> runs;
};

/// Monitors every rule of `spec` over one scenario; violations are logged
/// when a store is supplied.
inline RunResult monitor_scenario(const SpecFile& spec, const Scenario& sc, std::int64_t run, ViolationLog* log = nullptr) {
  const auto missing = validate_bindings(spec, sc.trace.names());
  if (!missing.empty()) throw BindingError("spec reads unbound signal '" + missing.front() + "'");
  std::vector<ViolationSpan> spans;
  for (const auto& rule : spec.rules) {
    MonitorNetwork net(rule, sc.trace.fs);
    std::vector<const std::vector<double>*> cols;
    for (const auto& s : net.signals()) cols.push_back(&sc.trace.signal(s));
    std::vector<double> row(cols.size());
    for (std::size_t k = 0; k < sc.trace.size(); ++k) {
      for (std::size_t c = 0; c < cols.size(); ++c) row[c] = (*cols[c])[k];
      const auto v = net.step_values(row, sc.trace.times[k]);
      if (!v || v->sat) continue;
      spans.push_back({rule.id, v->index, std::max<std::int64_t>(0, v->index - net.past()), v->index + net.delay()});
      if (log) log->append({run_name(run), to_string(sc.cls), build_payload(net, *v, 0)});
    }
  }
  return score_run(run, sc.cls, sc.truth, std::move(spans));
}

inline CampaignResult run_campaign(const SpecFile& spec, const CampaignOptions& opt) {
  if (opt.runs < 1) throw std::invalid_argument("campaign needs at least one run");
  if (opt.trace_dir) std::filesystem::create_directories(*opt.trace_dir);
  CampaignResult out;
  std::vector<ScenarioClass> block;
  for (std::int64_t run = 0; run < opt.runs; ++run) {
    ScenarioClass cls = ScenarioClass::Nominal;
    if (opt.suite == Suite::Challenging) {
      if (run % 100 == 0) block = challenging_block(opt.seed, run / 100);
      cls = block[static_cast<std::size_t>(run % 100)];
    }
    const Scenario sc = gen_scenario(plan_scenario(run_seed(opt.seed, run), cls, opt.duration, opt.fs));
    if (opt.trace_dir) {
      std::ofstream f(*opt.trace_dir / (run_name(run) + ".csv"), std::ios::binary | std::ios::trunc);
      write_csv(f, sc.trace);
      if (!f) throw StorageError("cannot write trace for " + run_name(run));
    }
    out.runs.push_back(monitor_scenario(spec, sc, run, opt.log));
  }
  out.report = detection_metrics(out.runs, opt.alpha);
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth file, so a report can be recomputed from a violation log.

inline nlohmann::json ground_truth_json(const std::vector<RunResult>& runs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json faults = nlohmann::json::array();
    for (const auto& f : r.truth) faults.push_back({f.start, f.end});
    arr.push_back({{"run", run_name(r.run)}, {"index", r.run}, {"scenario", to_string(r.cls)}, {"faults", faults}});
  }
  return {{"v", 1}, {"runs", arr}};
}

/// Recomputes the report from logged payloads. Without ground truth every run
/// seen in the log counts as clean.
inline CampaignReport report_from_log(const std::vector<LogRecord>& records, const std::optional<nlohmann::json>& truth, double alpha) {
  std::map<std::string, std::vector<ViolationSpan>> by_run;
  for (const auto& r : records) {
    const auto& p = r.payload;
    const std::int64_t last = p.evidence.first + static_cast<std::int64_t>(p.evidence.t.size()) - 1;
    by_run[r.run].push_back({p.rule, p.index, p.evidence.first, last});
  }
  std::vector<RunResult> results;
  if (truth) {
    for (const auto& j : truth->at("runs")) {
      std::vector<FaultInterval> faults;
      for (const auto& f : j.at("faults")) faults.push_back({f.at(0).get<std::int64_t>(), f.at(1).get<std::int64_t>()});
      const std::string name = j.at("run").get<std::string>();
      results.push_back(score_run(j.at("index").get<std::int64_t>(), parse_scenario_class(j.at("scenario").get<std::string>()), faults,
                                  by_run[name]));
    }
  } else {
    std::int64_t k = 0;
    for (auto& [name, spans] : by_run) results.push_back(score_run(k++, ScenarioClass::Nominal, {}, spans));
  }
  return detection_metrics(results, alpha);
}

}  // namespace stlmon
