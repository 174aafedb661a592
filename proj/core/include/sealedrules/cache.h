#ifndef SEALEDRULES_CACHE_H_
#define SEALEDRULES_CACHE_H_

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "sealedrules/rule.h"

namespace sealedrules {

enum class CachePolicy { kLru, kLfu };

std::string_view CachePolicyName(CachePolicy p);
std::optional<CachePolicy> ParseCachePolicy(std::string_view name);

using RuleList = std::shared_ptr<const std::vector<Rule>>;

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;

  double hit_rate() const {
    const auto total = hits + misses;
    return total == 0 ? 0.0 : static_cast<double>(hits) / total;
  }
};

// Device-keyed cache of decrypted rule lists, bounded by entry count.
//
// LRU: a hit moves the device to the most-recent position; inserting past
// capacity evicts the least-recent device.
// LFU: eviction picks the lowest use count, least-recent among ties.
//
// All methods are internally synchronized.
class RuleCache {
 public:
  static constexpr std::size_t kDefaultCapacity = 100;

  explicit RuleCache(std::size_t capacity = kDefaultCapacity,
                     CachePolicy policy = CachePolicy::kLru);

  // nullptr on miss. A hit counts as a use.
  RuleList Get(const DeviceId& d);
  // Inserts or replaces; returns the evicted device, if any.
  std::optional<DeviceId> Put(const DeviceId& d, RuleList rules);
  // Lookup without counting a use or touching statistics.
  RuleList Peek(const DeviceId& d) const;
  void Invalidate(const DeviceId& d);
  void Clear();

  bool Contains(const DeviceId& d) const;
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  CachePolicy policy() const noexcept { return policy_; }
  CacheStats stats() const;
  void ResetStats();

  // Devices from most- to least-recently used (LRU order; for LFU the
  // eviction order reversed). Used by tests and diagnostics.
  std::vector<DeviceId> Order() const;

 private:
  struct Entry {
    RuleList rules;
    std::uint64_t uses = 0;
    std::uint64_t last_tick = 0;
    std::list<DeviceId>::iterator lru_pos;
  };
  using LfuKey = std::tuple<std::uint64_t, std::uint64_t, DeviceId>;

  void Touch(const DeviceId& d, Entry& e);
  std::optional<DeviceId> EvictOne();

  const std::size_t capacity_;
  const CachePolicy policy_;
  mutable std::mutex mu_;
  std::unordered_map<DeviceId, Entry> entries_;
  std::list<DeviceId> lru_;     // front = most recent
  std::set<LfuKey> lfu_;        // begin = next victim
  std::uint64_t tick_ = 0;
  CacheStats stats_;
};

}  // namespace sealedrules

#endif  // SEALEDRULES_CACHE_H_
