#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "stlmon/window.hpp"

using namespace stlmon;

TEST(SlidingExtrema, MaxExample) {
  SlidingExtrema w(3, SlidingExtrema::Mode::Max);
  const double in[] = {1, 3, 2, 5};
  const double want[] = {1, 3, 3, 5};
  for (int k = 0; k < 4; ++k) EXPECT_EQ(w.push(k, in[k]), want[k]);
}

TEST(SlidingExtrema, WidthOneIsIdentity) {
  SlidingExtrema mn(1, SlidingExtrema::Mode::Min), mx(1, SlidingExtrema::Mode::Max);
  const double in[] = {4, -1, 7, 7, 0.5};
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(mn.push(k, in[k]), in[k]);
    EXPECT_EQ(mx.push(k, in[k]), in[k]);
  }
}

TEST(SlidingExtrema, MonotoneInputForMin) {
  SlidingExtrema w(4, SlidingExtrema::Mode::Min);
  const double in[] = {9, 8, 8, 5, 3, 3, 1};
  for (int k = 0; k < 7; ++k) EXPECT_EQ(w.push(k, in[k]), in[k]);
}

TEST(SlidingExtrema, RandomAgainstNaiveWithInvariants) {
  std::mt19937_64 rng(1);
  for (int c = 0; c < 500; ++c) {
    const std::size_t width = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    const auto mode = c % 2 ? SlidingExtrema::Mode::Max : SlidingExtrema::Mode::Min;
    SlidingExtrema w(width, mode);
    std::vector<double> xs;
    for (int k = 0; k < 80; ++k) {
      xs.push_back(std::uniform_int_distribution<int>(-5, 5)(rng));
      const double got = w.push(k, xs.back());
      const auto first = xs.begin() + std::max<std::ptrdiff_t>(0, k - static_cast<std::ptrdiff_t>(width) + 1);
      const double want = mode == SlidingExtrema::Mode::Max ? *std::max_element(first, xs.end()) : *std::min_element(first, xs.end());
      ASSERT_EQ(got, want);
      ASSERT_LE(w.wedge_size(), width);
      ASSERT_GT(w.wedge_at(0).index, k - static_cast<std::int64_t>(width));
      for (std::size_t j = 1; j < w.wedge_size(); ++j) {
        ASSERT_LT(w.wedge_at(j - 1).index, w.wedge_at(j).index);
        if (mode == SlidingExtrema::Mode::Max)
          ASSERT_GT(w.wedge_at(j - 1).value, w.wedge_at(j).value);
        else
          ASSERT_LT(w.wedge_at(j - 1).value, w.wedge_at(j).value);
      }
    }
    // Each push enters once and leaves at most once.
    EXPECT_LE(w.ops(), 2u * 80u);
  }
}

TEST(CountWindow, RandomAgainstNaive) {
  std::mt19937_64 rng(2);
  for (int c = 0; c < 500; ++c) {
    const std::size_t width = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
    CountWindow w(width);
    std::vector<int> flags;
    for (int k = 0; k < 60; ++k) {
      flags.push_back(std::bernoulli_distribution(0.6)(rng));
      const auto got = w.push(flags.back() != 0);
      const auto first = flags.begin() + std::max<std::ptrdiff_t>(0, k - static_cast<std::ptrdiff_t>(width) + 1);
      ASSERT_EQ(got, std::count(first, flags.end(), 1));
      ASSERT_GE(w.count(), 0);
      ASSERT_LE(w.count(), static_cast<std::int64_t>(width));
      ASSERT_EQ(w.filled(), std::min<std::int64_t>(k + 1, static_cast<std::int64_t>(width)));
    }
  }
}

TEST(DelayLine, Delays) {
  DelayLine d(3);
  for (int k = 0; k < 10; ++k) {
    const double out = d.shift(k);
    if (k >= 3) {
      EXPECT_EQ(out, k - 3);
    }
  }
  DelayLine id(0);
  EXPECT_EQ(id.shift(4.5), 4.5);
}

TEST(Windows, RejectZeroWidth) {
  EXPECT_THROW(SlidingExtrema(0, SlidingExtrema::Mode::Min), std::invalid_argument);
  EXPECT_THROW(CountWindow(0), std::invalid_argument);
}
