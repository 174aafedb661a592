#include "sealedrules/cache.h"

#include <algorithm>
#include <stdexcept>

namespace sealedrules {

std::string_view CachePolicyName(CachePolicy p) {
  return p == CachePolicy::kLru ? "lru" : "lfu";
}

std::optional<CachePolicy> ParseCachePolicy(std::string_view name) {
  if (name == "lru") return CachePolicy::kLru;
  if (name == "lfu") return CachePolicy::kLfu;
  return std::nullopt;
}

RuleCache::RuleCache(std::size_t capacity, CachePolicy policy)
    : capacity_(capacity), policy_(policy) {
  if (capacity_ == 0) throw std::invalid_argument("cache capacity must be > 0");
}

void RuleCache::Touch(const DeviceId& d, Entry& e) {
  if (policy_ == CachePolicy::kLru) {
    lru_.splice(lru_.begin(), lru_, e.lru_pos);
  } else {
    lfu_.erase(LfuKey{e.uses, e.last_tick, d});
  }
  ++e.uses;
  e.last_tick = ++tick_;
  if (policy_ == CachePolicy::kLfu) lfu_.insert(LfuKey{e.uses, e.last_tick, d});
}

RuleList RuleCache::Get(const DeviceId& d) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(d);
  if (it == entries_.end()) {
    ++stats_.misses;
    return nullptr;
  }
  ++stats_.hits;
  Touch(d, it->second);
  return it->second.rules;
}

RuleList RuleCache::Peek(const DeviceId& d) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(d);
  return it == entries_.end() ? nullptr : it->second.rules;
}

std::optional<DeviceId> RuleCache::EvictOne() {
  std::optional<DeviceId> victim;
  if (policy_ == CachePolicy::kLru) {
    victim = lru_.back();
    lru_.pop_back();
  } else {
    victim = std::get<2>(*lfu_.begin());
    lfu_.erase(lfu_.begin());
  }
  entries_.erase(*victim);
  ++stats_.evictions;
  return victim;
}

std::optional<DeviceId> RuleCache::Put(const DeviceId& d, RuleList rules) {
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(d); it != entries_.end()) {
    it->second.rules = std::move(rules);
    Touch(d, it->second);
    return std::nullopt;
  }
  std::optional<DeviceId> evicted;
  if (entries_.size() >= capacity_) evicted = EvictOne();
  Entry e;
  e.rules = std::move(rules);
  e.uses = 1;
  e.last_tick = ++tick_;
  if (policy_ == CachePolicy::kLru) {
    lru_.push_front(d);
    e.lru_pos = lru_.begin();
  } else {
    lfu_.insert(LfuKey{e.uses, e.last_tick, d});
  }
  entries_.emplace(d, std::move(e));
  return evicted;
}

void RuleCache::Invalidate(const DeviceId& d) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(d);
  if (it == entries_.end()) return;
  if (policy_ == CachePolicy::kLru) {
    lru_.erase(it->second.lru_pos);
  } else {
    lfu_.erase(LfuKey{it->second.uses, it->second.last_tick, d});
  }
  entries_.erase(it);
}

void RuleCache::Clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
  lru_.clear();
  lfu_.clear();
}

bool RuleCache::Contains(const DeviceId& d) const {
  std::lock_guard lock(mu_);
  return entries_.count(d) != 0;
}

std::size_t RuleCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

CacheStats RuleCache::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void RuleCache::ResetStats() {
  std::lock_guard lock(mu_);
  stats_ = {};
}

std::vector<DeviceId> RuleCache::Order() const {
  std::lock_guard lock(mu_);
  if (policy_ == CachePolicy::kLru) return {lru_.begin(), lru_.end()};
  std::vector<DeviceId> out;
  for (auto it = lfu_.rbegin(); it != lfu_.rend(); ++it) {
    out.push_back(std::get<2>(*it));
  }
  return out;
}

}  // namespace sealedrules
