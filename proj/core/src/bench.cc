#include "sealedrules/bench.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sealedrules/error.h"
#include "sealedrules/hub.h"

namespace sealedrules {

namespace {

constexpr const char* kNumericAttributes[] = {"temperature", "humidity", "carbonDioxide"};

Condition Cond(const DeviceId& d, const std::string& attr, Operator op, Scalar v) {
  return Condition{d, attr, op, std::move(v)};
}

template <typename T>
T Pick(std::mt19937_64& rng, std::initializer_list<T> options) {
  std::uniform_int_distribution<std::size_t> i(0, options.size() - 1);
  return *(options.begin() + i(rng));
}

int Between(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

ActionCommand RandomAction(std::mt19937_64& rng, std::size_t devices,
                           const std::vector<DeviceId>& ids) {
  const DeviceId& target = ids[std::uniform_int_distribution<std::size_t>(0, devices - 1)(rng)];
  switch (Between(rng, 0, 4)) {
    case 0: return {target, "switch", "on", {}};
    case 1: return {target, "switch", "off", {}};
    case 2:
      return {target, "thermostatMode", "setMode",
              {std::string(Pick(rng, {"cool", "heat", "auto"}))}};
    case 3: return {target, "switchLevel", "setLevel", {double(Between(rng, 0, 100))}};
    default: return {target, "notification", "notify", {std::string("threshold crossed")}};
  }
}

double Percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0;
  const std::size_t rank = static_cast<std::size_t>(std::ceil(q * sorted.size()));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace

std::string_view AccessPatternName(AccessPattern p) {
  switch (p) {
    case AccessPattern::kRoundRobin: return "round-robin";
    case AccessPattern::kUniform: return "uniform";
    case AccessPattern::kZipf: return "zipf";
  }
  return "round-robin";
}

std::optional<AccessPattern> ParseAccessPattern(std::string_view name) {
  for (AccessPattern p : {AccessPattern::kRoundRobin, AccessPattern::kUniform,
                          AccessPattern::kZipf}) {
    if (AccessPatternName(p) == name) return p;
  }
  return std::nullopt;
}

void ValidateBenchConfig(const BenchConfig& cfg) {
  if (cfg.events == 0) throw InvalidConfig("events must be positive");
  if (cfg.devices == 0) throw InvalidConfig("devices must be positive");
  if (cfg.ruleset_size < cfg.devices) {
    throw InvalidConfig("ruleset size must be at least the device count");
  }
  if (cfg.cache_capacity == 0) throw InvalidConfig("cache capacity must be positive");
  if (cfg.workers == 0) throw InvalidConfig("workers must be positive");
}

std::vector<DeviceId> BenchDevices(std::size_t count) {
  std::vector<DeviceId> out;
  out.reserve(count);
  char buf[32];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof(buf), "dev-%03zu", i);
    out.emplace_back(buf);
  }
  return out;
}

std::string BenchAttribute(std::size_t device_index) {
  const std::size_t k = device_index % 4;
  return k == 3 ? "presence" : kNumericAttributes[k];
}

std::vector<Rule> GenerateRuleset(std::size_t size, std::size_t devices,
                                  std::uint64_t seed) {
  if (devices == 0 || size < devices) {
    throw InvalidConfig("ruleset generation needs size >= devices >= 1");
  }
  const std::vector<DeviceId> ids = BenchDevices(devices);
  std::mt19937_64 rng(seed);
  std::vector<Rule> rules;
  rules.reserve(size);
  char id[32];
  for (std::size_t j = 0; j < size; ++j) {
    const std::size_t di =
        j < devices ? j : std::uniform_int_distribution<std::size_t>(0, devices - 1)(rng);
    const DeviceId& d = ids[di];
    const std::string attr = BenchAttribute(di);
    const bool satisfiable = Between(rng, 0, 1) == 1;

    Rule r;
    std::snprintf(id, sizeof(id), "rule-%05zu", j);
    r.id = id;
    r.name = attr + (satisfiable ? " trigger " : " guard ") + std::to_string(j);
    if (attr == "presence") {
      if (satisfiable) {
        r.conditions.push_back(Cond(d, attr, Operator::kEquals,
                                    std::string(Pick(rng, {"present", "not present"}))));
      } else if (Between(rng, 0, 1) == 0) {
        r.conditions.push_back(Cond(d, attr, Operator::kEquals, std::string("away")));
      } else {
        r.conditions.push_back(Cond(d, attr, Operator::kEquals, true));
      }
    } else {
      const int shape = Between(rng, 0, 2);
      if (satisfiable) {
        if (shape == 0) {
          const Operator op = Pick(rng, {Operator::kGreaterThan, Operator::kLessThan,
                                         Operator::kGreaterThanOrEquals,
                                         Operator::kLessThanOrEquals});
          r.conditions.push_back(Cond(d, attr, op, double(Between(rng, 10, 90))));
        } else if (shape == 1) {
          const int a = Between(rng, 10, 50);
          r.conditions.push_back(Cond(d, attr, Operator::kGreaterThan, double(a)));
          r.conditions.push_back(Cond(d, attr, Operator::kLessThan, double(a + Between(rng, 10, 40))));
        } else {
          r.combinator = Combinator::kAny;
          r.conditions.push_back(Cond(d, attr, Operator::kLessThan, double(Between(rng, 10, 40))));
          r.conditions.push_back(Cond(d, attr, Operator::kGreaterThan, double(Between(rng, 60, 90))));
        }
      } else {
        if (shape == 0) {
          if (Between(rng, 0, 1) == 0) {
            r.conditions.push_back(Cond(d, attr, Operator::kGreaterThanOrEquals,
                                        double(100 + Between(rng, 1, 50))));
          } else {
            r.conditions.push_back(Cond(d, attr, Operator::kLessThan,
                                        double(-Between(rng, 1, 50))));
          }
        } else if (shape == 1) {
          // Empty interval.
          const int a = Between(rng, 10, 50);
          r.conditions.push_back(Cond(d, attr, Operator::kGreaterThan, double(a + Between(rng, 10, 40))));
          r.conditions.push_back(Cond(d, attr, Operator::kLessThan, double(a)));
        } else {
          r.conditions.push_back(Cond(d, attr, Operator::kEquals, std::string("n/a")));
        }
      }
    }
    const int n_actions = Between(rng, 1, 2);
    for (int k = 0; k < n_actions; ++k) r.actions.push_back(RandomAction(rng, devices, ids));
    rules.push_back(std::move(r));
  }
  return rules;
}

std::vector<DeviceEvent> GenerateEvents(std::size_t count, std::size_t devices,
                                        std::uint64_t seed, AccessPattern pattern,
                                        double zipf_exponent) {
  if (devices == 0) throw InvalidConfig("events need at least one device");
  const std::vector<DeviceId> ids = BenchDevices(devices);
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  std::vector<double> weights(devices);
  for (std::size_t k = 0; k < devices; ++k) {
    weights[k] = 1.0 / std::pow(static_cast<double>(k + 1), zipf_exponent);
  }
  std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> uniform(0, devices - 1);

  std::vector<DeviceEvent> events;
  events.reserve(count);
  constexpr std::int64_t kEpochUs = 1'700'000'000'000'000;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t di = i % devices;
    if (pattern == AccessPattern::kUniform) di = uniform(rng);
    if (pattern == AccessPattern::kZipf) di = zipf(rng);
    const std::string attr = BenchAttribute(di);
    Scalar value;
    std::string capability;
    if (attr == "presence") {
      capability = "presenceSensor";
      value = std::string(Between(rng, 0, 1) ? "present" : "not present");
    } else {
      capability = attr + "Measurement";
      value = Between(rng, 0, 1000) / 10.0;
    }
    events.push_back(DeviceEvent{ids[di], std::move(capability), attr, std::move(value),
                                 kEpochUs + static_cast<std::int64_t>(i) * 1000});
  }
  return events;
}

void Summarize(BenchResult& result) {
  const std::vector<double>& lat = result.latencies_us;
  if (lat.empty()) return;
  std::vector<double> sorted = lat;
  std::sort(sorted.begin(), sorted.end());
  result.mean_us = std::accumulate(sorted.begin(), sorted.end(), 0.0) / sorted.size();
  result.p50_us = Percentile(sorted, 0.50);
  result.p95_us = Percentile(sorted, 0.95);
  result.p99_us = Percentile(sorted, 0.99);
  result.min_us = sorted.front();
  result.max_us = sorted.back();
}

namespace {

// One provisioned boundary with its inbound stream already wrapped, ready
// to replay. Device-side wrapping happens before any clock starts.
struct PreparedRun {
  std::unique_ptr<TrustedBoundary> boundary;
  std::vector<OutboundMessage> inbound;
};

PreparedRun Prepare(const BenchConfig& cfg, const std::vector<Rule>& rules,
                    const std::vector<DeviceEvent>& events) {
  SessionKeySet keys;
  for (const DeviceId& d : BenchDevices(cfg.devices)) {
    keys.device_keys.emplace(d, SymmetricKey::Generate("dk-" + d.value()));
  }
  keys.rules_key = SymmetricKey::Generate("rules");

  BoundaryConfig bc;
  bc.mode = cfg.mode;
  bc.cache_capacity = cfg.cache_capacity;
  bc.cache_policy = cfg.cache_policy;
  bc.transition_cost = cfg.transition_cost;
  PreparedRun run{std::make_unique<TrustedBoundary>(bc, keys), {}};

  // Large rulesets go up in several messages, as they would over the broker.
  Encryptor uploader(*keys.rules_key);
  for (const std::string& part : SplitRulesetUpload(rules, kMaxUploadPlaintext)) {
    if (cfg.mode == Mode::kFull) {
      run.boundary->ProvisionRuleset(AsBytes(EnvelopeToJson(
          uploader.Encrypt(AsBytes(part), AsBytes(kProvisionTopic), "bench"))));
    } else {
      run.boundary->ProvisionRuleset(AsBytes(part));
    }
  }

  Hub hub("bench-hub", keys.device_keys, cfg.mode);
  run.inbound.reserve(events.size());
  for (const DeviceEvent& e : events) run.inbound.push_back(hub.Upstream(e));
  run.boundary->ResetCacheStats();
  return run;
}

using Clock = std::chrono::steady_clock;

// Times one boundary call and tracks the steady-state hit rate: events
// after every distinct device has been seen once.
struct Replay {
  PreparedRun run;
  BenchResult result;
  std::set<DeviceId> seen;
  std::size_t distinct = 0;
  std::uint64_t steady_hits = 0, steady_events = 0;

  void Step(std::size_t i, const DeviceId& device) {
    const bool warm = seen.size() == distinct;
    const std::uint64_t misses_before = warm ? run.boundary->cache_stats().misses : 0;
    const auto t0 = Clock::now();
    run.boundary->HandleEvent(run.inbound[i].topic, run.inbound[i].payload);
    const auto t1 = Clock::now();
    result.latencies_us[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
    if (warm) {
      ++steady_events;
      if (run.boundary->cache_stats().misses == misses_before) ++steady_hits;
    } else {
      seen.insert(device);
    }
  }

  void Finish(double wall_s) {
    result.wall_s = wall_s;
    result.hit_rate = run.boundary->cache_stats().hit_rate();
    result.steady_hit_rate =
        steady_events ? static_cast<double>(steady_hits) / steady_events : 0.0;
    result.boundary = run.boundary->stats();
    Summarize(result);
  }
};

Replay StartReplay(const BenchConfig& cfg, const std::vector<Rule>& rules,
                   const std::vector<DeviceEvent>& events) {
  Replay r{Prepare(cfg, rules, events), {}, {}, 0, 0, 0};
  r.result.config = cfg;
  r.result.latencies_us.assign(events.size(), 0.0);
  std::set<DeviceId> distinct;
  for (const DeviceEvent& e : events) distinct.insert(e.device);
  r.distinct = distinct.size();
  return r;
}

}  // namespace

BenchResult RunBench(const BenchConfig& cfg) {
  ValidateBenchConfig(cfg);
  const std::vector<Rule> rules = GenerateRuleset(cfg.ruleset_size, cfg.devices, cfg.seed);
  const std::vector<DeviceEvent> events =
      GenerateEvents(cfg.events, cfg.devices, cfg.seed, cfg.pattern, cfg.zipf_exponent);
  Replay r = StartReplay(cfg, rules, events);

  const auto wall0 = Clock::now();
  if (cfg.workers == 1) {
    for (std::size_t i = 0; i < events.size(); ++i) r.Step(i, events[i].device);
    r.Finish(std::chrono::duration<double>(Clock::now() - wall0).count());
    return std::move(r.result);
  }

  std::vector<std::vector<std::size_t>> lanes(cfg.workers);
  for (std::size_t i = 0; i < events.size(); ++i) {
    lanes[std::hash<DeviceId>{}(events[i].device) % cfg.workers].push_back(i);
  }
  std::vector<std::thread> threads;
  for (const auto& lane : lanes) {
    threads.emplace_back([&, lane] {
      for (std::size_t i : lane) {
        const auto t0 = Clock::now();
        r.run.boundary->HandleEvent(r.run.inbound[i].topic, r.run.inbound[i].payload);
        r.result.latencies_us[i] =
            std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  r.Finish(std::chrono::duration<double>(Clock::now() - wall0).count());
  r.result.steady_hit_rate = r.result.hit_rate;
  return std::move(r.result);
}

std::vector<BenchResult> RunBenchInterleaved(const BenchConfig& base,
                                             const std::vector<Mode>& modes) {
  ValidateBenchConfig(base);
  if (base.workers != 1) throw InvalidConfig("interleaved runs need a single worker");
  if (modes.empty()) throw InvalidConfig("no modes to run");
  const std::vector<Rule> rules = GenerateRuleset(base.ruleset_size, base.devices, base.seed);
  const std::vector<DeviceEvent> events =
      GenerateEvents(base.events, base.devices, base.seed, base.pattern, base.zipf_exponent);

  std::vector<Replay> replays;
  for (Mode m : modes) {
    BenchConfig cfg = base;
    cfg.mode = m;
    replays.push_back(StartReplay(cfg, rules, events));
  }
  // Rotate which mode goes first so none always runs right after another.
  const auto wall0 = Clock::now();
  for (std::size_t i = 0; i < events.size(); ++i) {
    for (std::size_t k = 0; k < replays.size(); ++k) {
      replays[(i + k) % replays.size()].Step(i, events[i].device);
    }
  }
  const double wall_s = std::chrono::duration<double>(Clock::now() - wall0).count();

  std::vector<BenchResult> out;
  for (Replay& r : replays) {
    r.Finish(wall_s);
    out.push_back(std::move(r.result));
  }
  return out;
}

std::string BenchCsv(const std::vector<BenchResult>& results) {
  std::ostringstream out;
  out << "mode,ruleset,events,mean_us,p50_us,p95_us,p99_us,hit_rate\n";
  char buf[256];
  for (const BenchResult& r : results) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.3f,%.3f,%.3f,%.3f,%.4f\n",
                  std::string(ModeName(r.config.mode)).c_str(), r.config.ruleset_size,
                  r.latencies_us.size(), r.mean_us, r.p50_us, r.p95_us, r.p99_us,
                  r.hit_rate);
    out << buf;
  }
  return out.str();
}

std::string BenchTable(const std::vector<BenchResult>& results) {
  const Mode modes[] = {Mode::kPlain, Mode::kTrustedNoEnc, Mode::kFull};
  std::map<std::size_t, std::map<Mode, const BenchResult*>> grid;
  for (const BenchResult& r : results) grid[r.config.ruleset_size][r.config.mode] = &r;

  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s %20s %20s %20s\n", "rules", "plain (us)",
                "trusted-noenc (us)", "full (us)");
  out << buf;
  for (const auto& [size, row] : grid) {
    std::snprintf(buf, sizeof(buf), "%-10zu", size);
    out << buf;
    for (Mode m : modes) {
      auto it = row.find(m);
      if (it == row.end()) {
        std::snprintf(buf, sizeof(buf), " %20s", "-");
      } else {
        std::snprintf(buf, sizeof(buf), " %20.3f", it->second->mean_us);
      }
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace sealedrules
