#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"

using namespace stlmon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stlmon_log_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ViolationPayload sample_payload(const std::string& rule, double t) {
  ViolationPayload p;
  p.rule = rule;
  p.doc = "Always: (x > 0) must hold.";
  p.t = t;
  p.index = static_cast<std::int64_t>(t * 10);
  p.robustness = -0.25;
  p.severity = 0.25;
  p.culprits.push_back({"x", -0.25, "x > 0", -0.25, p.index, true, nullptr});
  p.evidence.first = p.index;
  p.evidence.width = 1;
  p.evidence.t = {t};
  p.evidence.signals["x"] = {-0.25};
  p.repair = Repair{"x > 0", "x", 0.0, -0.25};
  return p;
}

// Violations of a rule over a trace, as the monitor would log them.
std::vector<LogRecord> monitor_records(const Rule& rule, const Trace& tr, const std::string& scenario) {
  std::vector<LogRecord> out;
  MonitorNetwork again(rule, tr.fs);
  std::vector<double> row(again.signals().size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    for (std::size_t s = 0; s < row.size(); ++s) row[s] = tr.signal(again.signals()[s])[k];
    const auto v = again.step_values(row, tr.times[k]);
    if (v && !v->sat) out.push_back({"run_000", scenario, build_payload(again, *v, 0)});
  }
  return out;
}

}  // namespace

TEST(ViolationLog, SequentialIds) {
  const fs::path dir = scratch("ids");
  ViolationLog log(dir / "v.log");
  EXPECT_EQ(log.append({"r", "s", sample_payload("a", 0.1)}), 1);
  EXPECT_EQ(log.append({"r", "s", sample_payload("a", 0.2)}), 2);
  ViolationLog reopened(dir / "v.log");
  EXPECT_EQ(reopened.last_id(), 2);
  EXPECT_EQ(reopened.append({"r", "s", sample_payload("a", 0.3)}), 3);
}

TEST(ViolationLog, RoundTrip) {
  const fs::path dir = scratch("roundtrip");
  ViolationLog log(dir / "v.log");
  LogRecord rec{"run_001", "glare_vanish", sample_payload("sustained", 1.5)};
  rec.payload.id = log.append(rec);
  const auto got = log.query({});
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(canonical(to_json(got[0])), canonical(to_json(rec)));
  // Lines carry a byte-length prefix.
  const std::string text = slurp(dir / "v.log");
  const std::string body = canonical(to_json(rec));
  EXPECT_EQ(text, std::to_string(body.size()) + "\t" + body + "\n");
}

TEST(ViolationLog, EmptyStore) {
  const fs::path dir = scratch("empty");
  ViolationLog log(dir / "v.log");
  EXPECT_TRUE(log.query({}).empty());
  EXPECT_TRUE(ViolationLog::query_file(dir / "missing.log", {}).empty());
}

TEST(ViolationLog, QueryFilters) {
  const fs::path dir = scratch("query");
  ViolationLog log(dir / "v.log");
  std::mt19937_64 rng(3);
  const char* rules[] = {"a", "b", "c"};
  const char* scenarios[] = {"nominal", "glare_vanish"};
  std::vector<LogRecord> all;
  for (int k = 0; k < 60; ++k) {
    LogRecord r{"run_" + std::to_string(k % 4), scenarios[k % 2], sample_payload(rules[k % 3], std::uniform_real_distribution<double>(0, 30)(rng))};
    r.payload.id = log.append(r);
    all.push_back(r);
  }
  const auto only_b = log.query(LogFilter{"b", {}, {}, {}, {}});
  EXPECT_EQ(only_b.size(), 20u);
  for (const auto& r : only_b) EXPECT_EQ(r.payload.rule, "b");

  for (int c = 0; c < 200; ++c) {
    double lo = std::uniform_real_distribution<double>(0, 30)(rng);
    double hi = std::uniform_real_distribution<double>(0, 30)(rng);
    if (lo > hi) std::swap(lo, hi);
    LogFilter f{{}, c % 3 == 0 ? std::optional<std::string>("glare_vanish") : std::nullopt, {}, lo, hi};
    std::vector<std::int64_t> want;
    for (const auto& r : all)
      if (r.payload.t >= lo && r.payload.t <= hi && (!f.scenario || r.scenario == *f.scenario)) want.push_back(r.payload.id);
    std::vector<std::int64_t> got;
    for (const auto& r : log.query(f)) got.push_back(r.payload.id);
    ASSERT_EQ(got, want);
  }
  EXPECT_THROW(log.query(LogFilter{{}, {}, {}, 5.0, 1.0}), std::invalid_argument);
}

TEST(Properties, DurabilityUnderTruncation) {
  const fs::path dir = scratch("trunc");
  const fs::path full = dir / "full.log";
  std::vector<std::string> bodies;
  {
    ViolationLog log(full);
    for (int k = 0; k < 3; ++k) {
      LogRecord r{"run", "occlusion_flicker", sample_payload(k % 2 ? "a" : "b", 0.1 * (k + 1))};
      r.payload.id = log.append(r);
      bodies.push_back(canonical(to_json(r)));
    }
  }
  const std::string bytes = slurp(full);
  std::vector<std::size_t> ends;
  std::size_t acc = 0;
  for (const auto& b : bodies) ends.push_back(acc += std::to_string(b.size()).size() + 1 + b.size() + 1);
  ASSERT_EQ(acc, bytes.size());

  int cases = 0;
  for (std::size_t cut = 0; cut <= bytes.size(); ++cut, ++cases) {
    const fs::path p = dir / "cut.log";
    {
      std::ofstream out(p, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(cut));
    }
    const std::size_t whole = static_cast<std::size_t>(std::count_if(ends.begin(), ends.end(), [&](std::size_t e) { return e <= cut; }));
    const bool torn = cut != 0 && std::find(ends.begin(), ends.end(), cut) == ends.end();
    ViolationLog log(p);
    ASSERT_EQ(log.recovered(), torn ? 1u : 0u) << cut;
    const auto recs = log.query({});
    ASSERT_EQ(recs.size(), whole) << cut;
    for (std::size_t k = 0; k < whole; ++k) ASSERT_EQ(canonical(to_json(recs[k])), bodies[k]);
    // Appending after recovery continues the id sequence on a clean boundary.
    ASSERT_EQ(log.append({"run", "x", sample_payload("z", 9.0)}), static_cast<std::int64_t>(whole) + 1);
    const LogScan scan = scan_log_file(p);
    ASSERT_EQ(scan.skipped, 0u);
    ASSERT_EQ(scan.records.size(), whole + 1);
  }
  EXPECT_GE(cases, 500);
}

TEST(Export, EmptyManifest) {
  const fs::path dir = scratch("export_empty");
  ViolationLog log(dir / "v.log");
  EXPECT_EQ(export_retraining(log, LogFilter{"nothing", {}, {}, {}, {}}, dir / "bundle"), 0u);
  const auto manifest = nlohmann::json::parse(slurp(dir / "bundle" / "manifest.json"));
  EXPECT_EQ(manifest["count"], 0);
  EXPECT_TRUE(manifest["entries"].empty());
}

TEST(Export, GlareBundleIsDeterministic) {
  const fs::path dir = scratch("export_glare");
  const Rule rule = parse_spec("rule s: G(in_cone -> P[0.9,2](conf >= 0.8));").rules[0];
  ViolationLog log(dir / "v.log");
  for (const auto& r : monitor_records(rule, stlmon::testing::glare_trace(80, 30), "glare_vanish")) log.append(r);
  // The violation whose trailing evidence spans the whole gap.
  LogFilter f;
  f.t_min = 4.1;
  f.t_max = 4.1;
  ASSERT_EQ(export_retraining(log, f, dir / "a"), 1u);
  ASSERT_EQ(export_retraining(log, f, dir / "b"), 1u);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  ASSERT_EQ(manifest["entries"].size(), 1u);
  const auto& e = manifest["entries"][0];
  EXPECT_EQ(e["rule"], "s");
  EXPECT_EQ(e["culprit"], "conf >= 0.8");
  EXPECT_LE(e["first"].get<int>(), 30);
  EXPECT_GE(e["last"].get<int>(), 41);
  std::ifstream csv(dir / "a" / e["file"].get<std::string>());
  const Trace tr = read_csv(csv);
  const auto& conf = tr.signal("conf");
  EXPECT_EQ(std::count(conf.begin(), conf.end(), 0.0), 12);
  for (const auto& entry : fs::directory_iterator(dir / "a"))
    EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / entry.path().filename()));
}
