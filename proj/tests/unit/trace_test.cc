#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "sealedrules/error.h"
#include "sealedrules/trace.h"

namespace sealedrules {
namespace {

constexpr AccessSymbol R(Region r) { return {AccessOp::kRead, r}; }
constexpr AccessSymbol W(Region r) { return {AccessOp::kWrite, r}; }

std::size_t Cell(AccessSymbol a, AccessSymbol b) { return a.index() * kSymbolCount + b.index(); }

TEST(Alphabet, Sizes) {
  EXPECT_EQ(kSymbolCount, 12u);
  EXPECT_EQ(kBigramCount, 144u);
  EXPECT_EQ(W(Region::kOutBuf).index(), 11u);
  EXPECT_EQ(R(Region::kEventBuf).index(), 0u);
}

TEST(Regions, NamesRoundTrip) {
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const auto r = static_cast<Region>(i);
    EXPECT_EQ(ParseRegion(RegionName(r)), r);
  }
  EXPECT_EQ(ParseRegion("heap"), std::nullopt);
}

TEST(DumpTrace, RoundTrip) {
  const AccessTrace t = {R(Region::kEventBuf), R(Region::kCache), W(Region::kOutBuf)};
  const std::string text = DumpTrace(t);
  EXPECT_EQ(text, "R,event_buf\nR,cache\nW,out_buf\n");
  EXPECT_EQ(ParseTrace(text), t);
  EXPECT_THROW(ParseTrace("X,cache\n"), SyntaxError);
  EXPECT_THROW(ParseTrace("R,heap\n"), SyntaxError);
  EXPECT_THROW(ParseTrace("R\n"), SyntaxError);
}

TEST(BuildDistribution, CountsBigramsWithSmoothing) {
  const AccessTrace t = {R(Region::kEventBuf), R(Region::kCache), R(Region::kEventBuf)};
  const TraceDistribution raw = BuildDistribution(t, 0.0);
  EXPECT_EQ(raw.sample_count(), 2u);
  EXPECT_DOUBLE_EQ(raw.probabilities()[Cell(t[0], t[1])], 0.5);
  EXPECT_DOUBLE_EQ(raw.probabilities()[Cell(t[1], t[2])], 0.5);
  EXPECT_DOUBLE_EQ(raw.probabilities()[0], 0.0);

  const double a = 1e-3;
  const TraceDistribution smooth = BuildDistribution(t, a);
  EXPECT_NEAR(smooth.probabilities()[Cell(t[0], t[1])], (1 + a) / (2 + 144 * a), 1e-15);
  EXPECT_NEAR(smooth.probabilities()[0], a / (2 + 144 * a), 1e-15);
  const double total =
      std::accumulate(smooth.probabilities().begin(), smooth.probabilities().end(), 0.0);
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(BuildDistribution, EmptyTraceThrows) {
  EXPECT_THROW(BuildDistribution({}), EmptyTrace);
  // A single symbol has no bigrams; with no smoothing it falls back to uniform.
  const TraceDistribution one = BuildDistribution({R(Region::kCache)}, 0.0);
  EXPECT_DOUBLE_EQ(one.probabilities()[5], 1.0 / 144);
}

TEST(TraceDistribution, ValidatesProbabilities) {
  EXPECT_THROW(TraceDistribution({0.5, 0.6}), SchemaError);
  EXPECT_THROW(TraceDistribution({1.5, -0.5}), SchemaError);
  EXPECT_NO_THROW(TraceDistribution({0.25, 0.75}));
}

// Worked by hand: 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1) = 0.5108256...
TEST(KlDivergence, HandComputedTwoPointExample) {
  const double kl = KlDivergence(TraceDistribution({0.5, 0.5}), TraceDistribution({0.9, 0.1})).value;
  EXPECT_NEAR(kl, 0.5108256, 1e-4);
  EXPECT_NEAR(kl, 0.5108256237659907, 1e-12);
}

// Worked by hand from traces: ABAB gives AB 2/3, BA 1/3; ABA gives 1/2, 1/2.
// 2/3 ln(4/3) + 1/3 ln(2/3) = 0.0566330...
TEST(KlDivergence, HandComputedFromTraces) {
  const AccessSymbol A = R(Region::kCache), B = R(Region::kStore);
  const auto p = BuildDistribution({A, B, A, B}, 0.0);
  const auto q = BuildDistribution({A, B, A}, 0.0);
  EXPECT_NEAR(KlDivergence(p, q).value, 0.0566330, 1e-4);
}

TEST(KlDivergence, SelfDivergenceIsExactlyZero) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    AccessTrace t;
    for (int i = 0; i < 40; ++i) {
      t.push_back({static_cast<AccessOp>(rng() % 2), static_cast<Region>(rng() % kRegionCount)});
    }
    const auto p = BuildDistribution(t);
    EXPECT_EQ(KlDivergence(p, p).value, 0.0);
  }
}

TEST(KlDivergence, NonNegativeAndAsymmetric) {
  std::mt19937_64 rng(2);
  auto random_trace = [&](int n) {
    AccessTrace t;
    for (int i = 0; i < n; ++i) {
      t.push_back({static_cast<AccessOp>(rng() % 2), static_cast<Region>(rng() % 3)});
    }
    return t;
  };
  bool asymmetric = false;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = BuildDistribution(random_trace(30));
    const auto q = BuildDistribution(random_trace(60));
    const double pq = KlDivergence(p, q).value, qp = KlDivergence(q, p).value;
    EXPECT_GE(pq, 0.0);
    EXPECT_GE(qp, 0.0);
    asymmetric |= std::abs(pq - qp) > 1e-6;
  }
  EXPECT_TRUE(asymmetric);
}

TEST(KlDivergence, ZeroInQWhereMassInPIsInfinite) {
  EXPECT_TRUE(std::isinf(KlDivergence(TraceDistribution({1.0, 0.0}),
                                      TraceDistribution({0.0, 1.0})).value));
  EXPECT_THROW(KlDivergence(TraceDistribution({1.0}), TraceDistribution({0.5, 0.5})),
               AlphabetMismatch);
}

}  // namespace
}  // namespace sealedrules
