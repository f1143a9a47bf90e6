#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stlmon/explain.hpp"
#include "stlmon/harness.hpp"
#include "stlmon/mitigation.hpp"
#include "stlmon/monitor.hpp"
#include "stlmon/oracle.hpp"
#include "stlmon/parser.hpp"
#include "stlmon/spec_lang.hpp"
#include "stlmon/trace.hpp"
#include "stlmon/violation_log.hpp"

namespace stlmon {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitSpec = 2, kExitBinding = 3, kExitStream = 4, kExitIo = 5 };

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  std::string subcommand;
  std::string spec;
  std::string trace;
  bool use_stdin = false;
  std::optional<double> rate;
  std::string policy;
  std::string out;
  std::uint64_t seed = 1;
  std::string suite = "challenging";
  std::int64_t runs = 100;
  double alpha = 0.05;
  std::string log;
  std::string truth;
  double duration = 30.0;
  std::int64_t id = 0;
  bool json = false;
};

namespace cli {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

/// `builtin:v1` and `builtin:v2` name the perception rules; anything else is
/// a file path.
inline SpecFile load_spec(const std::string& path, double fs) {
  SpecFile spec;
  if (path == "builtin:v1") {
    spec = perception_spec_v1();
  } else if (path == "builtin:v2") {
    spec = perception_spec_v2();
  } else {
    spec = parse_spec(read_file(path));
  }
  validate_spec(spec, fs);
  return spec;
}

inline std::string verdict_line(const std::string& rule, std::int64_t index, double t, bool sat, double rob) {
  return canonical(nlohmann::json{{"rule", rule}, {"i", index}, {"t", t}, {"sat", sat}, {"rob", rob}});
}

inline int cmd_check(const CliConfig& c, std::ostream& out) {
  const double fs = c.rate.value_or(10.0);
  const SpecFile spec = load_spec(c.spec, fs);
  for (const auto& r : spec.rules) {
    const Formula& body = checked_body(*r.formula);
    const std::int64_t h = horizon(body, fs);
    out << r.id << ": horizon " << h << " samples (" << format_number(static_cast<double>(h) / fs) << " s at " << format_number(fs)
        << " Hz)\n";
    out << "  " << to_controlled_english(r) << "\n";
  }
  out << spec.rules.size() << " rule(s) ok\n";
  return kExitOk;
}

inline Trace load_trace(const CliConfig& c) {
  const std::string text = read_file(c.trace);
  std::istringstream in(text);
  return read_trace(in, c.trace, c.rate);
}

inline void require_bindings(const SpecFile& spec, const std::vector<std::string>& names) {
  const auto missing = validate_bindings(spec, names);
  if (missing.empty()) return;
  std::string list;
  for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
  throw BindingError("trace does not provide: " + list);
}

inline int cmd_eval(const CliConfig& c, std::ostream& out) {
  if (c.trace.empty()) throw UsageError("eval needs --trace");
  Trace tr = load_trace(c);
  const SpecFile spec = load_spec(c.spec, tr.fs);
  require_bindings(spec, tr.names());
  std::vector<VerdictSeries> series;
  for (const auto& r : spec.rules) series.push_back(eval_rule(r, tr));
  // Index-major, rule order within an index; the same order monitor uses.
  std::vector<std::size_t> cursor(series.size(), 0);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(tr.size()); ++i) {
    for (std::size_t r = 0; r < series.size(); ++r) {
      auto& k = cursor[r];
      if (k < series[r].records.size() && series[r].records[k].index == i) {
        const auto& v = series[r].records[k++];
        out << verdict_line(series[r].rule, v.index, v.t, v.sat, v.robustness) << "\n";
      }
    }
  }
  return kExitOk;
}

/// Online pipeline over every rule with per-index aggregation for the
/// mitigation controller.
class MonitorPipeline {
public:
  MonitorPipeline(const SpecFile& spec, double fs, std::optional<MitigationPolicy> policy, ViolationLog* log, std::ostream& verdicts,
                  std::ostream& payloads, std::ostream& modes)
      : log_(log), verdicts_(verdicts), payloads_(payloads), modes_(modes) {
    for (const auto& r : spec.rules) nets_.emplace_back(r, fs);
    if (policy) {
      for (const auto& r : spec.rules)
        if (!policy->rules.count(r.id)) throw std::invalid_argument("policy has no strategy for rule '" + r.id + "'");
      controller_.emplace(std::move(*policy));
    }
  }

  std::int64_t consumed() const { return consumed_; }

  void push(const Sample& s) {
    for (std::size_t r = 0; r < nets_.size(); ++r) {
      auto v = nets_[r].step(s.values, s.t);
      if (!v) continue;
      if (!v->sat) emit_payload(nets_[r], *v);
      auto& slot = pending_[v->index];
      if (slot.empty()) slot.resize(nets_.size());
      slot[r] = std::move(*v);
    }
    ++consumed_;
    while (!pending_.empty()) {
      auto& slot = pending_.begin()->second;
      if (!std::all_of(slot.begin(), slot.end(), [](const auto& e) { return e.has_value(); })) break;
      release();
    }
  }

  /// Releases indices only some rules could resolve before the stream ended.
  void finish() {
    while (!pending_.empty()) release();
    for (const auto& n : nets_) {
      for (const auto& d : n.flush().diagnostics) diagnostics_.push_back(d);
    }
  }

  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  const std::optional<MitigationController>& controller() const { return controller_; }

private:
  void emit_payload(const MonitorNetwork& net, const VerdictEvent& v) {
    ViolationPayload p = build_payload(net, v, 0);
    if (log_) {
      LogRecord rec{"stream", "live", p};
      p.id = log_->append(rec);
    } else {
      p.id = ++next_id_;
    }
    payloads_ << canonical(p) << "\n";
  }

  void release() {
    auto node = pending_.extract(pending_.begin());
    std::vector<VerdictEvent> events;
    for (auto& e : node.mapped()) {
      if (!e) continue;
      verdicts_ << verdict_line(e->rule, e->index, e->t, e->sat, e->robustness) << "\n";
      events.push_back(std::move(*e));
    }
    if (controller_) {
      const std::size_t before = controller_->log().size();
      controller_->on_index(node.key(), events);
      for (std::size_t k = before; k < controller_->log().size(); ++k) modes_ << canonical(to_json(controller_->log()[k])) << "\n";
    }
  }

  std::vector<MonitorNetwork> nets_;
  std::map<std::int64_t, std::vector<std::optional<VerdictEvent>>> pending_;
  std::optional<MitigationController> controller_;
  ViolationLog* log_;
  std::ostream& verdicts_;
  std::ostream& payloads_;
  std::ostream& modes_;
  std::int64_t consumed_ = 0;
  std::int64_t next_id_ = 0;
  std::vector<std::string> diagnostics_;
};

inline int cmd_monitor(const CliConfig& c, std::istream& in, std::ostream& out, std::ostream& err) {
  if (c.use_stdin == !c.trace.empty()) throw UsageError("monitor needs exactly one of --trace or --stdin");

  // Samples come either from a whole file or line by line from stdin.
  std::optional<Trace> file_trace;
  double fs = c.rate.value_or(10.0);
  if (!c.use_stdin) {
    const std::string text = read_file(c.trace);
    if (detail::trim(text).empty()) return kExitOk;
    std::istringstream is(text);
    file_trace = read_trace(is, c.trace, c.rate);
    fs = file_trace->fs;
  }
  const SpecFile spec = load_spec(c.spec, fs);
  if (file_trace) require_bindings(spec, file_trace->names());

  std::optional<MitigationPolicy> policy;
  if (!c.policy.empty()) {
    std::istringstream ps(read_file(c.policy));
    policy = read_policy(ps);
  }

  std::ofstream payload_file, mode_file;
  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    payload_file.open(std::filesystem::path(c.out) / "violations.jsonl", std::ios::binary | std::ios::trunc);
    mode_file.open(std::filesystem::path(c.out) / "modes.jsonl", std::ios::binary | std::ios::trunc);
    if (!payload_file || !mode_file) throw IoError("cannot write to '" + c.out + "'");
  }
  std::optional<ViolationLog> log;
  if (!c.log.empty()) log.emplace(c.log);

  MonitorPipeline pipe(spec, fs, policy, log ? &*log : nullptr, out, c.out.empty() ? err : payload_file, c.out.empty() ? err : mode_file);

  if (file_trace) {
    for (std::size_t k = 0; k < file_trace->size(); ++k) {
      Sample s{file_trace->times[k], {}};
      for (const auto& [name, col] : file_trace->signals) s.values[name] = col[k];
      pipe.push(s);
    }
  } else {
    std::string line;
    while (std::getline(in, line)) {
      if (detail::trim(line).empty()) continue;
      Sample s;
      try {
        s = parse_sample(line);
      } catch (const TraceError& e) {
        throw TraceError(std::string(e.what()) + " at sample " + std::to_string(pipe.consumed()), pipe.consumed() - 1);
      }
      pipe.push(s);
    }
  }
  pipe.finish();
  for (const auto& d : pipe.diagnostics()) err << "note: " << d << "\n";
  if (pipe.controller()) err << "final mode: " << to_string(pipe.controller()->mode().mode) << "\n";
  return kExitOk;
}

inline int cmd_simulate(const CliConfig& c, std::ostream& out) {
  const double fs = c.rate.value_or(10.0);
  const SpecFile spec = load_spec(c.spec.empty() ? "builtin:v1" : c.spec, fs);
  CampaignOptions opt;
  opt.suite = parse_suite(c.suite);
  opt.runs = c.runs;
  opt.seed = c.seed;
  opt.fs = fs;
  opt.duration = c.duration;
  opt.alpha = c.alpha;

  std::optional<ViolationLog> log;
  std::filesystem::path dir;
  if (!c.out.empty()) {
    dir = c.out;
    std::filesystem::create_directories(dir);
    opt.trace_dir = dir / "runs";
    const std::filesystem::path log_path = c.log.empty() ? dir / "violations.log" : std::filesystem::path(c.log);
    // A campaign owns its log; stale records would skew a later report.
    std::filesystem::remove(log_path);
    log.emplace(log_path);
  } else if (!c.log.empty()) {
    std::filesystem::remove(c.log);
    log.emplace(c.log);
  }
  opt.log = log ? &*log : nullptr;

  const CampaignResult res = run_campaign(spec, opt);
  const std::string report = canonical(to_json(res.report));
  if (!c.out.empty()) {
    write_file(dir / "report.json", report + "\n");
    write_file(dir / "ground_truth.json", canonical(ground_truth_json(res.runs)) + "\n");
  }
  out << report << "\n";
  return kExitOk;
}

inline int cmd_report(const CliConfig& c, std::ostream& out) {
  if (c.log.empty()) throw UsageError("report needs --log");
  if (!std::filesystem::exists(c.log)) throw IoError("violation log '" + c.log + "' does not exist");
  const LogScan scan = scan_log_file(c.log);
  std::optional<nlohmann::json> truth;
  if (!c.truth.empty()) {
    try {
      truth = nlohmann::json::parse(read_file(c.truth));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("ground truth '" + c.truth + "' is not valid JSON");
    }
  }
  const std::string report = canonical(to_json(report_from_log(scan.records, truth, c.alpha)));
  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    write_file(std::filesystem::path(c.out) / "report.json", report + "\n");
  }
  out << report << "\n";
  return kExitOk;
}

inline int cmd_explain(const CliConfig& c, std::ostream& out) {
  if (c.log.empty()) throw UsageError("explain needs --log");
  if (!std::filesystem::exists(c.log)) throw IoError("violation log '" + c.log + "' does not exist");
  for (const auto& r : scan_log_file(c.log).records) {
    if (r.payload.id != c.id) continue;
    if (c.json)
      out << canonical(r.payload) << "\n";
    else
      out << "run " << r.run << ", scenario " << r.scenario << "\n" << describe(r.payload);
    return kExitOk;
  }
  throw IoError("no violation with id " + std::to_string(c.id) + " in '" + c.log + "'");
}

}  // namespace cli

/// Entry point with injectable streams so it can be driven in-process.
inline int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CliConfig c;
  CLI::App app{"Runtime monitor for perception signal contracts"};
  app.require_subcommand(1);

  auto rate_opt = [&](CLI::App* s) {
    s->add_option_function<double>(
         "--rate", [&](double r) { c.rate = r; }, "Sample rate in Hz")
        ->check(CLI::PositiveNumber);
  };

  auto* check = app.add_subcommand("check", "Parse a spec, print horizons and paraphrases");
  check->add_option("--spec", c.spec, "Spec file")->required();
  rate_opt(check);

  auto* eval = app.add_subcommand("eval", "Offline verdicts over a trace file");
  eval->add_option("--spec", c.spec, "Spec file")->required();
  eval->add_option("--trace", c.trace, "Trace (.csv or JSON lines)")->required();
  rate_opt(eval);

  auto* mon = app.add_subcommand("monitor", "Online monitoring of a trace or stdin stream");
  mon->add_option("--spec", c.spec, "Spec file")->required();
  auto* trace_opt = mon->add_option("--trace", c.trace, "Trace (.csv or JSON lines)");
  mon->add_flag("--stdin", c.use_stdin, "Read JSON-lines samples from stdin")->excludes(trace_opt);
  rate_opt(mon);
  mon->add_option("--policy", c.policy, "Mitigation policy (JSON)");
  mon->add_option("--out", c.out, "Directory for violations.jsonl and modes.jsonl");
  mon->add_option("--log", c.log, "Violation log to append to");

  auto* sim = app.add_subcommand("simulate", "Run a scenario campaign");
  sim->add_option("--spec", c.spec, "Spec file, or builtin:v1 / builtin:v2 (default builtin:v1)");
  sim->add_option("--suite", c.suite, "nominal or challenging")->check(CLI::IsMember({"nominal", "challenging"}));
  sim->add_option("--runs", c.runs, "Number of runs")->check(CLI::PositiveNumber);
  sim->add_option("--seed", c.seed, "Campaign seed");
  sim->add_option("--alpha", c.alpha, "Significance for the confidence intervals")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--duration", c.duration, "Seconds per scenario")->check(CLI::PositiveNumber);
  rate_opt(sim);
  sim->add_option("--out", c.out, "Output directory");
  sim->add_option("--log", c.log, "Violation log path (default <out>/violations.log)");

  auto* rep = app.add_subcommand("report", "Recompute campaign metrics from a violation log");
  rep->add_option("--log", c.log, "Violation log")->required();
  rep->add_option("--truth", c.truth, "ground_truth.json written by simulate");
  rep->add_option("--alpha", c.alpha, "Significance")->check(CLI::Range(0.0, 1.0));
  rep->add_option("--out", c.out, "Directory for report.json");

  auto* exp = app.add_subcommand("explain", "Show one logged violation");
  exp->add_option("--log", c.log, "Violation log")->required();
  exp->add_option("id", c.id, "Violation id")->required();
  exp->add_flag("--json", c.json, "Print the canonical payload");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Help on a subcommand arrives here too.
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*check) return cli::cmd_check(c, out);
    if (*eval) return cli::cmd_eval(c, out);
    if (*mon) return cli::cmd_monitor(c, in, out, err);
    if (*sim) return cli::cmd_simulate(c, out);
    if (*rep) return cli::cmd_report(c, out);
    if (*exp) return cli::cmd_explain(c, out);
  } catch (const SpecError& e) {
    err << "spec error: " << e.what() << "\n";
    return kExitSpec;
  } catch (const BindingError& e) {
    err << "binding error: " << e.what() << "\n";
    return kExitBinding;
  } catch (const TraceError& e) {
    err << "stream error: " << e.what() << " (last good sample index " << e.last_good() << ")\n";
    return kExitStream;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const StorageError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    // Malformed policy or filter, bad option combination.
    err << "error: " << e.what() << "\n";
    return kExitSpec;
  }
  return kExitUsage;
}

}  // namespace stlmon
