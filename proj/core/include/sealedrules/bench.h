#ifndef SEALEDRULES_BENCH_H_
#define SEALEDRULES_BENCH_H_

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sealedrules/boundary.h"
#include "sealedrules/cache.h"
#include "sealedrules/rule.h"

namespace sealedrules {

// Which device an event comes from.
enum class AccessPattern { kRoundRobin, kUniform, kZipf };

std::string_view AccessPatternName(AccessPattern p);
std::optional<AccessPattern> ParseAccessPattern(std::string_view name);

struct BenchConfig {
  Mode mode = Mode::kFull;
  std::size_t ruleset_size = 100;
  std::size_t devices = 32;
  std::size_t events = 10000;
  std::size_t cache_capacity = 100;
  CachePolicy cache_policy = CachePolicy::kLru;
  std::uint64_t seed = 1;
  // Per-device workers; events of one device stay on one worker in order.
  std::size_t workers = 1;
  AccessPattern pattern = AccessPattern::kRoundRobin;
  double zipf_exponent = 1.1;
  std::chrono::nanoseconds transition_cost{2000};
};

// Throws InvalidConfig for non-positive counts, ruleset_size < devices,
// or zero workers.
void ValidateBenchConfig(const BenchConfig& cfg);

struct BenchResult {
  BenchConfig config;
  std::vector<double> latencies_us;  // one per event, in event order
  double mean_us = 0, p50_us = 0, p95_us = 0, p99_us = 0;
  double min_us = 0, max_us = 0;
  double wall_s = 0;
  // Over the whole run, and over the events after every device had been
  // seen once (single worker only; equals hit_rate otherwise).
  double hit_rate = 0;
  double steady_hit_rate = 0;
  BoundaryStats boundary;
};

// Device ids used by the generators: dev-000, dev-001, ...
std::vector<DeviceId> BenchDevices(std::size_t count);

// Attribute emitted by bench device i. Numeric attributes range over
// [0, 100]; "presence" takes "present" or "not present".
std::string BenchAttribute(std::size_t device_index);

// Deterministic for a seed. Every rule has a single trigger device and the
// first `devices` rules cover every device once. About half of the rules
// can be satisfied by GenerateEvents values; the rest use thresholds or
// values outside that range.
std::vector<Rule> GenerateRuleset(std::size_t size, std::size_t devices,
                                  std::uint64_t seed);

std::vector<DeviceEvent> GenerateEvents(std::size_t count, std::size_t devices,
                                        std::uint64_t seed,
                                        AccessPattern pattern = AccessPattern::kRoundRobin,
                                        double zipf_exponent = 1.1);

// Provisions a generated ruleset into a fresh boundary and replays the
// event stream. Latency is measured around each boundary call, from event
// ingress to the last command leaving the boundary.
BenchResult RunBench(const BenchConfig& cfg);

// Runs the same ruleset and event stream through one boundary per mode,
// handing each event to every mode before moving to the next, so that
// drift in machine speed during the run lands on all modes alike. Results
// come back in the order of `modes`. Single worker only; wall_s is shared.
std::vector<BenchResult> RunBenchInterleaved(const BenchConfig& base,
                                             const std::vector<Mode>& modes);

// Summary statistics of a latency sample (nearest-rank percentiles).
void Summarize(BenchResult& result);

// mode,ruleset,events,mean_us,p50_us,p95_us,p99_us,hit_rate
std::string BenchCsv(const std::vector<BenchResult>& results);
// Rows grouped by ruleset size, one column per mode.
std::string BenchTable(const std::vector<BenchResult>& results);

}  // namespace sealedrules

#endif  // SEALEDRULES_BENCH_H_
