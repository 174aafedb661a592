#include <gtest/gtest.h>

#include <list>
#include <random>
#include <sstream>

#include "sealedrules/bench.h"
#include "sealedrules/cache.h"

namespace sealedrules {
namespace {

RuleList Dummy() { return std::make_shared<const std::vector<Rule>>(); }

// Engine access pattern: a Get, and a Put on a miss.
std::optional<DeviceId> Access(RuleCache& c, const std::string& d, bool* hit = nullptr) {
  const bool h = c.Get(DeviceId(d)) != nullptr;
  if (hit) *hit = h;
  return h ? std::nullopt : c.Put(DeviceId(d), Dummy());
}

std::vector<std::string> Names(const std::vector<DeviceId>& ids) {
  std::vector<std::string> out;
  for (const DeviceId& d : ids) out.push_back(d.value());
  return out;
}

struct HandCase {
  std::size_t capacity;
  // "x" accesses x, "-x" invalidates x, "!" clears.
  const char* ops;
  std::vector<std::string> evictions;
  std::vector<std::string> order;  // most recent first
  std::uint64_t hits;
};

void RunHandCase(const HandCase& hc, CachePolicy policy) {
  SCOPED_TRACE(std::string("capacity ") + std::to_string(hc.capacity) + ": " + hc.ops);
  RuleCache c(hc.capacity, policy);
  std::vector<std::string> evicted;
  std::istringstream in(hc.ops);
  std::string op;
  while (in >> op) {
    if (op == "!") {
      c.Clear();
    } else if (op[0] == '-') {
      c.Invalidate(DeviceId(op.substr(1)));
    } else if (auto v = Access(c, op)) {
      evicted.push_back(v->value());
    }
  }
  EXPECT_EQ(evicted, hc.evictions);
  if (!hc.order.empty()) {
    EXPECT_EQ(Names(c.Order()), hc.order);
  }
  EXPECT_EQ(c.stats().hits, hc.hits);
  EXPECT_EQ(c.stats().evictions, hc.evictions.size());
  EXPECT_LE(c.size(), hc.capacity);
}

// Worked by hand.
const HandCase kLruCases[] = {
    {1, "a b a", {"a", "b"}, {"a"}, 0},
    {2, "a b a c", {"b"}, {"c", "a"}, 1},
    {2, "a b c", {"a"}, {"c", "b"}, 0},
    {3, "a b c a d", {"b"}, {"d", "a", "c"}, 1},
    {3, "a b c d e", {"a", "b"}, {"e", "d", "c"}, 0},
    {3, "a a a", {}, {"a"}, 2},
    {2, "a b a b a b", {}, {"b", "a"}, 4},
    {2, "a b c a", {"a", "b"}, {"a", "c"}, 0},
    {3, "a b c b a d", {"c"}, {"d", "a", "b"}, 2},
    {4, "a b c d a e b f", {"b", "c", "d"}, {"f", "b", "e", "a"}, 1},
    {1, "a a b b a", {"a", "b"}, {"a"}, 2},
    {3, "a b c c c", {}, {"c", "b", "a"}, 2},
    {3, "a b c a b c d", {"a"}, {"d", "c", "b"}, 3},
    {2, "a b c b a", {"a", "c"}, {"a", "b"}, 1},
    {5, "a b c d e f g a", {"a", "b", "c"}, {"a", "g", "f", "e", "d"}, 0},
    {3, "a b a c a d", {"b"}, {"d", "a", "c"}, 2},
    {2, "a b a c b", {"b", "a"}, {"b", "c"}, 1},
    {2, "a b -a c", {}, {"c", "b"}, 0},
    {3, "a b c -b d e", {"a"}, {"e", "d", "c"}, 0},
    {2, "a b ! a b c", {"a"}, {"c", "b"}, 0},
    {4, "a b c d d c b a e", {"d"}, {"e", "a", "b", "c"}, 4},
    {3, "a b c d a b c", {"a", "b", "c", "d"}, {"c", "b", "a"}, 0},
    {3, "x y x z x w x", {"y"}, {"x", "w", "z"}, 3},
    {2, "a -a -a a", {}, {"a"}, 0},
};

TEST(LruHandCases, MatchHandSimulation) {
  static_assert(std::size(kLruCases) >= 20);
  for (const HandCase& hc : kLruCases) RunHandCase(hc, CachePolicy::kLru);
}

// LFU: lowest use count goes first, least recent among ties.
const HandCase kLfuCases[] = {
    {2, "a a b c", {"b"}, {}, 1},
    {2, "a b c", {"a"}, {}, 0},
    {3, "a a b b c d", {"c"}, {}, 2},
    {2, "a b b a a c", {"b"}, {}, 3},
    {2, "a b c d", {"a", "b"}, {}, 0},
};

TEST(LfuHandCases, MatchHandSimulation) {
  for (const HandCase& hc : kLfuCases) RunHandCase(hc, CachePolicy::kLfu);
}

// A list where the front is the most recent device.
class NaiveLru {
 public:
  explicit NaiveLru(std::size_t cap) : cap_(cap) {}
  std::optional<std::string> Access(const std::string& d, bool& hit) {
    for (auto it = items_.begin(); it != items_.end(); ++it) {
      if (*it == d) {
        items_.erase(it);
        items_.push_front(d);
        hit = true;
        return std::nullopt;
      }
    }
    hit = false;
    std::optional<std::string> victim;
    if (items_.size() == cap_) {
      victim = items_.back();
      items_.pop_back();
    }
    items_.push_front(d);
    return victim;
  }
  void Invalidate(const std::string& d) { items_.remove(d); }
  std::vector<std::string> Order() const { return {items_.begin(), items_.end()}; }

 private:
  std::size_t cap_;
  std::list<std::string> items_;
};

TEST(LruOracle, RandomSequencesAgreeWithNaiveList) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cap = 1 + rng() % 8;
    RuleCache c(cap, CachePolicy::kLru);
    NaiveLru n(cap);
    for (int step = 0; step < 200; ++step) {
      const std::string d = "d" + std::to_string(rng() % 12);
      if (rng() % 10 == 0) {
        c.Invalidate(DeviceId(d));
        n.Invalidate(d);
        continue;
      }
      bool hit_c = false, hit_n = false;
      auto vc = Access(c, d, &hit_c);
      auto vn = n.Access(d, hit_n);
      ASSERT_EQ(hit_c, hit_n);
      ASSERT_EQ(vc.has_value(), vn.has_value());
      if (vc) {
        ASSERT_EQ(vc->value(), *vn);
      }
      ASSERT_EQ(Names(c.Order()), n.Order());
    }
  }
}

TEST(RuleCache, PutReplacesAndPeekDoesNotCount) {
  RuleCache c(2);
  auto r1 = Dummy(), r2 = Dummy();
  c.Put(DeviceId("a"), r1);
  EXPECT_EQ(c.Peek(DeviceId("a")), r1);
  EXPECT_EQ(c.Put(DeviceId("a"), r2), std::nullopt);
  EXPECT_EQ(c.Get(DeviceId("a")), r2);
  EXPECT_EQ(c.stats().hits, 1u);
  EXPECT_EQ(c.stats().misses, 0u);
  EXPECT_EQ(c.Peek(DeviceId("zz")), nullptr);
  c.ResetStats();
  EXPECT_EQ(c.stats().hits, 0u);
  EXPECT_THROW(RuleCache(0), std::invalid_argument);
}

TEST(RuleCache, PolicyNames) {
  EXPECT_EQ(ParseCachePolicy("lru"), CachePolicy::kLru);
  EXPECT_EQ(ParseCachePolicy("lfu"), CachePolicy::kLfu);
  EXPECT_EQ(ParseCachePolicy("fifo"), std::nullopt);
  EXPECT_EQ(CachePolicyName(CachePolicy::kLfu), "lfu");
}

// 32 devices in a 100-entry cache: after each device has been seen once,
// every access hits.
TEST(RuleCache, SteadyStateWithinCapacityIsAllHits) {
  RuleCache c(100);
  const auto events = GenerateEvents(5000, 32, 1);
  std::size_t i = 0;
  for (; i < 32; ++i) Access(c, events[i].device.value());
  c.ResetStats();
  for (; i < events.size(); ++i) Access(c, events[i].device.value());
  EXPECT_EQ(c.stats().misses, 0u);
  EXPECT_DOUBLE_EQ(c.stats().hit_rate(), 1.0);
}

double HitRate(AccessPattern p, CachePolicy policy) {
  RuleCache c(20, policy);
  for (const DeviceEvent& e : GenerateEvents(20000, 200, 5, p, 1.1)) {
    Access(c, e.device.value());
  }
  return c.stats().hit_rate();
}

TEST(RuleCache, SkewedAccessHitsMoreThanUniform) {
  for (CachePolicy policy : {CachePolicy::kLru, CachePolicy::kLfu}) {
    const double zipf = HitRate(AccessPattern::kZipf, policy);
    const double uniform = HitRate(AccessPattern::kUniform, policy);
    EXPECT_GT(zipf, uniform + 0.2) << CachePolicyName(policy);
    EXPECT_NEAR(uniform, 0.1, 0.03);  // capacity / devices
  }
}

}  // namespace
}  // namespace sealedrules
