#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "stlmon/mitigation.hpp"

using namespace stlmon;

namespace {

MitigationPolicy policy(std::int64_t n = 20) {
  MitigationPolicy p;
  p.rules = {{"safe", Strategy::FailSafe}, {"op", Strategy::FailOperational}, {"deg", Strategy::FailDegraded}, {"deg2", Strategy::FailDegraded}};
  p.recovery_streak = n;
  return p;
}

VerdictEvent ev(const std::string& rule, std::int64_t i, bool sat) { return {rule, i, 0.1 * static_cast<double>(i), sat, sat ? 1.0 : -1.0}; }

}  // namespace

TEST(Arbitrate, FailSafeEntersMrc) {
  const auto a = arbitrate({}, {ev("safe", 3, false)}, policy());
  EXPECT_EQ(a.mode.mode, Mode::MRC);
  EXPECT_EQ(a.mode.cause, "safe");
  EXPECT_EQ(a.mode.since, 3);
  EXPECT_EQ(a.action, "enter_MRC");
}

TEST(Arbitrate, NoViolation) {
  const auto a = arbitrate({}, {ev("safe", 0, true), ev("deg", 0, true)}, policy());
  EXPECT_EQ(a.mode.mode, Mode::Nominal);
  EXPECT_EQ(a.action, "none");
}

TEST(Arbitrate, MaxSeverityWins) {
  const SystemMode degraded{Mode::Degraded, "deg", 0};
  const auto a = arbitrate(degraded, {ev("deg", 5, false), ev("op", 5, false)}, policy());
  EXPECT_EQ(a.mode.mode, Mode::FailOperational);
  EXPECT_EQ(a.mode.cause, "op");
  EXPECT_EQ(a.action, "switch_to_redundant_model");
}

TEST(Arbitrate, TieBreaksOnRuleId) {
  const auto a = arbitrate({}, {ev("deg2", 1, false), ev("deg", 1, false)}, policy());
  EXPECT_EQ(a.mode.mode, Mode::Degraded);
  EXPECT_EQ(a.mode.cause, "deg");
  EXPECT_EQ(a.action, "reduce_speed");
}

TEST(Arbitrate, Errors) {
  EXPECT_THROW(arbitrate({}, {ev("unknown", 0, false)}, policy()), std::invalid_argument);
  EXPECT_THROW(arbitrate({}, {ev("deg", 0, false), ev("op", 1, false)}, policy()), std::invalid_argument);
}

TEST(Recover, Examples) {
  const auto p = policy(20);
  EXPECT_EQ(recover({Mode::Degraded, "deg", 0}, 20, p).mode, Mode::Nominal);
  EXPECT_EQ(recover({Mode::Degraded, "deg", 0}, 19, p).mode, Mode::Degraded);
  EXPECT_EQ(recover({Mode::MRC, "safe", 0}, 200, p).mode, Mode::MRC);

  MitigationController c(p);
  c.on_index(0, {ev("op", 0, false)});
  EXPECT_EQ(c.mode().mode, Mode::FailOperational);
  std::int64_t i = 1;
  for (; i <= 20; ++i) c.on_index(i, {ev("op", i, true)});
  EXPECT_EQ(c.mode().mode, Mode::Degraded);
  for (; i <= 40; ++i) c.on_index(i, {ev("op", i, true)});
  EXPECT_EQ(c.mode().mode, Mode::Nominal);
  ASSERT_EQ(c.log().size(), 3u);
  EXPECT_EQ(c.log()[1].action, "recover");
  EXPECT_EQ(c.log()[1].index, 20);
  EXPECT_EQ(c.log()[2].index, 40);
  EXPECT_FALSE(c.mode().cause.has_value());
}

TEST(Controller, RejectsOutOfOrder) {
  MitigationController c(policy());
  c.on_index(5, {});
  EXPECT_THROW(c.on_index(5, {}), std::invalid_argument);
}

TEST(Policy, Parse) {
  std::istringstream in(R"({"rules":{"a":"FailSafe","b":"FailDegraded"},"recovery_streak":5})");
  const MitigationPolicy p = read_policy(in);
  EXPECT_EQ(p.rules.at("a"), Strategy::FailSafe);
  EXPECT_EQ(p.recovery_streak, 5);
  std::istringstream bad(R"({"rules":{"a":"Panic"}})");
  EXPECT_THROW(read_policy(bad), std::invalid_argument);
  std::istringstream zero(R"({"rules":{},"recovery_streak":0})");
  EXPECT_THROW(read_policy(zero), std::invalid_argument);
  std::istringstream junk("{");
  EXPECT_THROW(read_policy(junk), std::invalid_argument);
}

TEST(Transition, Json) {
  const Transition t{7, Mode::Nominal, Mode::MRC, "safe", "enter_MRC"};
  EXPECT_EQ(to_json(t).dump(), R"({"action":"enter_MRC","cause":"safe","from":"Nominal","i":7,"to":"MRC"})");
}

namespace {

std::vector<VerdictEvent> random_batch(std::mt19937_64& rng, std::int64_t i) {
  static const char* ids[] = {"safe", "op", "deg", "deg2"};
  std::vector<VerdictEvent> out;
  for (const char* id : ids)
    if (std::bernoulli_distribution(0.6)(rng)) out.push_back(ev(id, i, std::bernoulli_distribution(0.85)(rng)));
  return out;
}

}  // namespace

TEST(Properties, MonotoneEscalationAndDeterminism) {
  std::mt19937_64 rng(51);
  const auto p = policy(3);
  for (int c = 0; c < 500; ++c) {
    SystemMode m{static_cast<Mode>(std::uniform_int_distribution<int>(0, 3)(rng)), std::nullopt, 0};
    auto batch = random_batch(rng, c);
    const auto a = arbitrate(m, batch, p);
    ASSERT_GE(static_cast<int>(a.mode.mode), static_cast<int>(m.mode));
    std::shuffle(batch.begin(), batch.end(), rng);
    const auto b = arbitrate(m, batch, p);
    ASSERT_EQ(a.mode, b.mode);
    ASSERT_EQ(a.action, b.action);
  }
}

TEST(Properties, MrcAbsorbing) {
  std::mt19937_64 rng(52);
  for (int c = 0; c < 500; ++c) {
    MitigationController ctl(policy(std::uniform_int_distribution<int>(1, 5)(rng)));
    std::int64_t i = 0;
    const int before = std::uniform_int_distribution<int>(0, 10)(rng);
    for (int k = 0; k < before; ++k, ++i) ctl.on_index(i, random_batch(rng, i));
    ctl.on_index(i, {ev("safe", i, false)});
    ++i;
    ASSERT_EQ(ctl.mode().mode, Mode::MRC);
    for (int k = 0; k < 60; ++k, ++i) {
      auto batch = random_batch(rng, i);
      if (k % 2) batch.clear();  // long compliant stretches too
      ctl.on_index(i, batch);
      ASSERT_EQ(ctl.mode().mode, Mode::MRC);
    }
  }
}
