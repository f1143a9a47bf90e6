#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stlmon/cli.hpp"

using namespace stlmon;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun invoke(std::vector<std::string> args, const std::string& input = "") {
  args.insert(args.begin(), "stlmon");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stlmon_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string data(const std::string& name) { return std::string(STLMON_DATA_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Check, PedestrianRule) {
  const CliRun r = invoke({"check", "--spec", data("pedestrian.stl")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ped: horizon 1 samples (0.1 s at 10 Hz)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Always: if (dist < 30 and is_ped), then within 0.1 s"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("1 rule(s) ok"), std::string::npos);
}

TEST(Check, BuiltinSpecs) {
  EXPECT_EQ(invoke({"check", "--spec", "builtin:v1"}).code, 0);
  const CliRun r = invoke({"check", "--spec", "builtin:v2"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("4 rule(s) ok"), std::string::npos);
}

TEST(Check, InvertedIntervalIsSpecError) {
  const fs::path dir = scratch("inverted");
  put(dir / "bad.stl", "rule r: G[2,1](x > 0);\n");
  const CliRun r = invoke({"check", "--spec", (dir / "bad.stl").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("1:"), std::string::npos) << r.err;
}

TEST(Usage, Errors) {
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({"check"}).code, 1);
  EXPECT_EQ(invoke({"monitor", "--spec", "builtin:v1"}).code, 1);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(Eval, UnboundSignal) {
  const fs::path dir = scratch("unbound");
  put(dir / "t.csv", "t,x\n0,1\n0.1,2\n");
  const CliRun r = invoke({"eval", "--spec", data("pedestrian.stl"), "--trace", (dir / "t.csv").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("conf"), std::string::npos) << r.err;
}

TEST(Eval, MissingFiles) {
  EXPECT_EQ(invoke({"eval", "--spec", data("pedestrian.stl"), "--trace", "/nonexistent/x.csv"}).code, 5);
  EXPECT_EQ(invoke({"check", "--spec", "/nonexistent/s.stl"}).code, 5);
  EXPECT_EQ(invoke({"report", "--log", "/nonexistent/v.log"}).code, 5);
}

TEST(Eval, MatchesMonitorByteForByte) {
  for (const char* trace : {"occlusion.csv", "glare.jsonl"}) {
    const CliRun e = invoke({"eval", "--spec", data("perception_v1.stl"), "--trace", data(trace)});
    const CliRun m = invoke({"monitor", "--spec", data("perception_v1.stl"), "--trace", data(trace)});
    ASSERT_EQ(e.code, 0) << e.err;
    ASSERT_EQ(m.code, 0) << m.err;
    EXPECT_FALSE(e.out.empty());
    EXPECT_EQ(e.out, m.out) << trace;
  }
}

TEST(Monitor, StdinMatchesFile) {
  const CliRun file = invoke({"monitor", "--spec", data("perception_v1.stl"), "--trace", data("glare.jsonl")});
  const CliRun stream = invoke({"monitor", "--spec", data("perception_v1.stl"), "--stdin"}, slurp(data("glare.jsonl")));
  ASSERT_EQ(stream.code, 0) << stream.err;
  EXPECT_EQ(file.out, stream.out);
}

TEST(Monitor, EmptyStream) {
  const fs::path dir = scratch("empty");
  put(dir / "e.jsonl", "");
  CliRun r = invoke({"monitor", "--spec", data("pedestrian.stl"), "--trace", (dir / "e.jsonl").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  r = invoke({"monitor", "--spec", data("pedestrian.stl"), "--stdin"}, "");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
}

TEST(Monitor, MalformedSampleReportsLastGoodIndex) {
  std::string input;
  for (int k = 0; k < 4; ++k) input += R"({"t":)" + std::to_string(k / 10.0) + R"(,"signals":{"dist":20,"is_ped":1,"conf":0.9}})" "\n";
  input += "{not json\n";
  const CliRun r = invoke({"monitor", "--spec", data("pedestrian.stl"), "--stdin"}, input);
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("last good sample index 3"), std::string::npos) << r.err;
  // Verdicts already resolved were written before the failure.
  EXPECT_EQ(lines(r.out).size(), 3u);
}

TEST(Monitor, NonUniformTimestamps) {
  const CliRun r = invoke({"monitor", "--spec", data("pedestrian.stl"), "--stdin"},
                    R"({"t":0,"signals":{"dist":20,"is_ped":1,"conf":0.9}})"
                    "\n"
                    R"({"t":0.1,"signals":{"dist":20,"is_ped":1,"conf":0.9}})"
                    "\n"
                    R"({"t":0.35,"signals":{"dist":20,"is_ped":1,"conf":0.9}})"
                    "\n");
  EXPECT_EQ(r.code, 4) << r.err;
}

TEST(Monitor, GlareWithFailSafeEndsInMrc) {
  const fs::path dir = scratch("glare");
  const CliRun r = invoke({"monitor", "--spec", data("perception_v1.stl"), "--trace", data("glare.jsonl"), "--policy", data("policy.json"),
                     "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("final mode: MRC"), std::string::npos) << r.err;
  const auto modes = lines(slurp(dir / "modes.jsonl"));
  ASSERT_FALSE(modes.empty());
  const auto last = nlohmann::json::parse(modes.back());
  EXPECT_EQ(last["to"], "MRC");
  EXPECT_EQ(last["action"], "enter_MRC");
  // Every violation payload overlaps the glare gap 30..41.
  const auto payloads = lines(slurp(dir / "violations.jsonl"));
  ASSERT_FALSE(payloads.empty());
  for (const auto& l : payloads) {
    const auto p = payload_from_json(nlohmann::json::parse(l));
    const std::int64_t last_index = p.evidence.first + static_cast<std::int64_t>(p.evidence.t.size()) - 1;
    EXPECT_TRUE(p.evidence.first <= 41 && last_index >= 30) << l;
  }
}

TEST(Monitor, PolicyMissingRule) {
  const fs::path dir = scratch("policy");
  put(dir / "p.json", R"({"rules":{"timely":"FailSafe"}})");
  const CliRun r = invoke({"monitor", "--spec", data("perception_v1.stl"), "--trace", data("occlusion.csv"), "--policy", (dir / "p.json").string()});
  EXPECT_EQ(r.code, 2);
}

TEST(Simulate, ChallengingCampaign) {
  const fs::path dir = scratch("simulate");
  const CliRun r = invoke({"simulate", "--suite", "challenging", "--runs", "100", "--seed", "1", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = nlohmann::json::parse(r.out);
  EXPECT_EQ(rep["detected"], 29);
  EXPECT_EQ(rep["missed"], 2);
  EXPECT_EQ(rep["false_positives"], 0);
  EXPECT_TRUE(fs::exists(dir / "runs" / "run_000.csv"));
  EXPECT_TRUE(fs::exists(dir / "runs" / "run_099.csv"));
  EXPECT_EQ(slurp(dir / "report.json"), r.out);

  // The report recomputed from the log agrees.
  const CliRun again = invoke({"report", "--log", (dir / "violations.log").string(), "--truth", (dir / "ground_truth.json").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(again.out, r.out);

  // A second campaign into the same directory does not accumulate records.
  ASSERT_EQ(invoke({"simulate", "--runs", "100", "--out", dir.string()}).code, 0);
  EXPECT_EQ(invoke({"report", "--log", (dir / "violations.log").string(), "--truth", (dir / "ground_truth.json").string()}).out, r.out);

  // Explain round-trips a logged payload.
  const CliRun one = invoke({"explain", "--log", (dir / "violations.log").string(), "1", "--json"});
  ASSERT_EQ(one.code, 0) << one.err;
  const auto p = payload_from_json(nlohmann::json::parse(one.out));
  EXPECT_EQ(p.id, 1);
  EXPECT_EQ(canonical(p) + "\n", one.out);
  const CliRun text = invoke({"explain", "--log", (dir / "violations.log").string(), "1"});
  EXPECT_EQ(text.code, 0);
  EXPECT_NE(text.out.find(p.rule), std::string::npos);
  EXPECT_EQ(invoke({"explain", "--log", (dir / "violations.log").string(), "999999"}).code, 5);
}

TEST(Report, EmptyLog) {
  const fs::path dir = scratch("report_empty");
  put(dir / "v.log", "");
  const CliRun r = invoke({"report", "--log", (dir / "v.log").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = nlohmann::json::parse(r.out);
  EXPECT_EQ(rep["runs"], 0);
  EXPECT_EQ(rep["detected"], 0);
  EXPECT_EQ(rep["false_positives"], 0);
  EXPECT_TRUE(rep["detection_rate"].is_null());
}
