// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Pass criterion names as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sealedrules/analysis.h"
#include "sealedrules/attestation.h"
#include "sealedrules/bench.h"
#include "sealedrules/boundary.h"
#include "sealedrules/broker.h"
#include "sealedrules/cache.h"
#include "sealedrules/config.h"
#include "sealedrules/error.h"
#include "sealedrules/hub.h"
#include "sealedrules/services.h"
#include "sealedrules/trace.h"
#include "test_support.h"

namespace sealedrules {
namespace {

using testing::CommandMultiset;
using testing::Drive;
using testing::KeysFor;
using testing::OracleEngine;
using testing::Provision;
using testing::RandomWorld;
using testing::SourceDir;

// Pinned tolerances and sizes.
constexpr double kScenarioLimitS = 5.0;
constexpr std::size_t kOracleEvents = 10000;
constexpr std::size_t kOracleRules = 100;
constexpr std::uint64_t kModeSeeds[] = {101, 202, 303};
constexpr std::size_t kModeEvents = 5000;
constexpr std::size_t kSweepSizes[] = {100, 400, 1000, 5000, 10000};
constexpr std::size_t kSweepDevices = 32;
constexpr std::size_t kSweepEvents = 10000;
constexpr double kSweepLimitS = 600.0;
constexpr int kTraceSeeds = 100;
constexpr int kTraceRequired = 95;
constexpr double kHandKlTolerance = 1e-4;
constexpr int kFaultyQuotes = 1000;
constexpr std::size_t kLruMinCases = 20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

BoundaryConfig Quick(Mode mode) {
  BoundaryConfig c;
  c.mode = mode;
  c.transition_cost = std::chrono::nanoseconds(0);
  return c;
}

std::vector<DeviceId> WorldDevices() {
  std::vector<DeviceId> out;
  for (int i = 0; i < 8; ++i) out.emplace_back("d" + std::to_string(i));
  for (int i = 0; i < 3; ++i) out.emplace_back("act" + std::to_string(i));
  return out;
}

// ---------------------------------------------------------------------------

Outcome PresenceScenario() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = LoadScenario(SourceDir() / "scenarios" / "presence.toml");
  const std::vector<Rule> rules = ParseRuleset(ReadTextFile(s.rules_file));
  const ScenarioReport r = RunScenario(s, rules);
  const double elapsed = Seconds(t0);

  std::string mode = "?", sw = "?";
  for (const ActuatorState& st : r.final_states) {
    if (st.device == DeviceId("thermostat-1")) mode = ScalarToString(st.attributes.at("mode"));
    if (st.device == DeviceId("switch-1")) sw = ScalarToString(st.attributes.at("switch"));
  }
  const bool ok = s.mode == Mode::kFull && r.emitted == 1 && r.commands_applied == 2 &&
                  r.tampered == 0 && mode == "cool" && sw == "on" && elapsed < kScenarioLimitS;
  return {ok, Fmt("%zu event, %zu authenticated commands applied, %zu tampered, "
                  "thermostat-1 mode=%s, switch-1 switch=%s, %.2f s (limit %.0f s)",
                  r.emitted, r.commands_applied, r.tampered, mode.c_str(), sw.c_str(), elapsed,
                  kScenarioLimitS)};
}

Outcome OracleEquivalence() {
  const SessionKeySet keys = KeysFor(WorldDevices());
  RandomWorld w(4242);
  const std::vector<Rule> rules = w.Rules(kOracleRules);
  TrustedBoundary b(Quick(Mode::kFull), keys);
  Provision(b, rules, keys);
  Hub hub("hub", keys.device_keys, Mode::kFull);
  std::vector<DeviceEvent> events;
  for (std::size_t i = 0; i < kOracleEvents; ++i) events.push_back(w.Event(i));
  const auto got = Drive(b, hub, keys, events);
  OracleEngine oracle(rules);
  std::size_t mismatches = 0, fired = 0, firing_events = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto expected = oracle.Handle(events[i]);
    fired += expected.size();
    firing_events += !expected.empty();
    if (CommandMultiset(got[i]) != CommandMultiset(expected)) ++mismatches;
  }
  // Guard against a vacuous pass.
  const bool ok = mismatches == 0 && firing_events > events.size() / 10;
  return {ok, Fmt("%zu events x %zu rules, %zu mismatches, %zu actions fired on %zu events",
                  events.size(), rules.size(), mismatches, fired, firing_events)};
}

Outcome ModeSemantics() {
  const SessionKeySet keys = KeysFor(WorldDevices());
  std::size_t divergent = 0, fired = 0;
  for (std::uint64_t seed : kModeSeeds) {
    RandomWorld w(seed);
    const auto rules = w.Rules(kOracleRules);
    std::vector<DeviceEvent> events;
    for (std::size_t i = 0; i < kModeEvents; ++i) events.push_back(w.Event(i));
    std::vector<std::vector<std::vector<std::string>>> per_mode;
    for (Mode m : {Mode::kPlain, Mode::kTrustedNoEnc, Mode::kFull}) {
      TrustedBoundary b(Quick(m), keys);
      Provision(b, rules, keys);
      Hub hub("hub", keys.device_keys, m);
      std::vector<std::vector<std::string>> sets;
      for (const auto& cmds : Drive(b, hub, keys, events)) {
        fired += cmds.size();
        sets.push_back(CommandMultiset(cmds));
      }
      per_mode.push_back(std::move(sets));
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
      divergent += per_mode[0][i] != per_mode[1][i] || per_mode[0][i] != per_mode[2][i];
    }
  }
  return {divergent == 0 && fired > 0,
          Fmt("%zu seeds x %zu events x 3 modes, %zu divergent events, %zu actions fired",
              std::size(kModeSeeds), kModeEvents, divergent, fired)};
}

Outcome ModeOrdering() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string rows;
  std::size_t ordered = 0;
  for (std::size_t size : kSweepSizes) {
    BenchConfig c;
    c.ruleset_size = size;
    c.devices = kSweepDevices;
    c.events = kSweepEvents;
    c.seed = 1;
    const std::vector<BenchResult> row =
        RunBenchInterleaved(c, {Mode::kPlain, Mode::kTrustedNoEnc, Mode::kFull});
    const double mean[3] = {row[0].mean_us, row[1].mean_us, row[2].mean_us};
    const bool ok = mean[0] < mean[1] && mean[1] < mean[2];
    ordered += ok;
    rows += Fmt(" %zu:%.1f<%.1f<%.1f%s", size, mean[0], mean[1], mean[2], ok ? "" : "(!)");
    std::fprintf(stderr, "  sweep %zu rules done (%.1f s)\n", size, Seconds(t0));
  }
  const double elapsed = Seconds(t0);
  const bool ok = ordered == std::size(kSweepSizes) && elapsed < kSweepLimitS;
  return {ok, Fmt("mean us plain<trusted-noenc<full, %zu devices, %zu events:%s; sweep %.1f s "
                  "(limit %.0f s)",
                  kSweepDevices, kSweepEvents, rows.c_str(), elapsed, kSweepLimitS)};
}

Outcome TamperSuite() {
  const DeviceId presence("presence-1"), sw("switch-1");
  const SessionKeySet keys = KeysFor({presence, sw});
  TrustedBoundary b(Quick(Mode::kFull), keys);
  Rule r;
  r.id = "home";
  r.name = "arrive";
  r.conditions.push_back({presence, "presence", Operator::kEquals, std::string("present")});
  r.actions.push_back({sw, "switch", "on", {}});
  Provision(b, {r}, keys);
  Hub hub("hub", keys.device_keys, Mode::kFull);
  hub.AddActuator(InitialActuatorState(sw, DeviceKind::kSwitch));
  const ActuatorState before = *hub.actuator(sw);

  const OutboundMessage event =
      hub.Upstream({presence, "presenceSensor", "presence", std::string("present"), 1});
  const std::vector<OutboundMessage> commands = b.HandleEvent(event.topic, event.payload);
  if (commands.size() != 1) return {false, "genuine event did not produce one command"};
  const OutboundMessage& command = commands[0];

  std::size_t event_flips = 0, event_rejected = 0, fired_on_tamper = 0;
  const std::uint64_t fired_before = b.stats().fired_actions;
  for (std::size_t i = 0; i < event.payload.size() * 8; ++i) {
    Bytes bad = event.payload;
    bad[i / 8] ^= static_cast<std::uint8_t>(1u << (i % 8));
    ++event_flips;
    try {
      fired_on_tamper += b.HandleEvent(event.topic, bad).size();
    } catch (const AuthenticationError&) {
      ++event_rejected;
    } catch (const Error&) {
    }
  }
  fired_on_tamper += b.stats().fired_actions - fired_before;

  std::size_t cmd_flips = 0, cmd_rejected = 0, applied = 0;
  for (std::size_t i = 0; i < command.payload.size() * 8; ++i) {
    Bytes bad = command.payload;
    bad[i / 8] ^= static_cast<std::uint8_t>(1u << (i % 8));
    ++cmd_flips;
    try {
      hub.VerifyCommand(command.topic, bad);
    } catch (const AuthenticationError&) {
      ++cmd_rejected;
    } catch (const Error&) {
    }
    applied += hub.Downstream(command.topic, bad).has_value();
  }
  const bool unchanged = *hub.actuator(sw) == before;
  // The untouched command still applies, so the suite is not vacuous.
  const bool genuine = hub.Downstream(command.topic, command.payload).has_value();

  const bool ok = event_rejected == event_flips && cmd_rejected == cmd_flips &&
                  fired_on_tamper == 0 && applied == 0 && unchanged && genuine;
  return {ok, Fmt("event envelope %zu/%zu bit flips rejected (%zu B), command envelope %zu/%zu "
                  "(%zu B), %zu actions fired and %zu applied on tampered input, actuator "
                  "unchanged=%s",
                  event_rejected, event_flips, event.payload.size(), cmd_rejected, cmd_flips,
                  command.payload.size(), fired_on_tamper, applied, unchanged ? "yes" : "no")};
}

// Everything readable on the wire: the raw frames and their decoded
// payloads (payloads travel base64-encoded inside the frame JSON).
std::string CapturedText(const std::vector<Bytes>& frames) {
  std::string all;
  for (const Bytes& wire : frames) {
    all += ToString(wire);
    if (wire.size() < 4) continue;
    try {
      const Frame f = DecodeFrameBody(
          std::string_view(reinterpret_cast<const char*>(wire.data()) + 4, wire.size() - 4));
      all += '\n' + f.topic + '\n' + ToString(f.payload) + '\n';
    } catch (const Error&) {
    }
  }
  return all;
}

Outcome TransitOpacity() {
  const Scenario full = LoadScenario(SourceDir() / "scenarios" / "presence.toml");
  const std::vector<Rule> rules = ParseRuleset(ReadTextFile(full.rules_file));
  std::vector<std::string> needles = {"present", "cool"};
  for (const Rule& r : rules) {
    for (const Condition& c : r.conditions) needles.push_back(ScalarToString(c.value));
  }

  auto capture_run = [&](Mode mode) {
    Scenario s = full;
    s.mode = mode;
    std::vector<Bytes> frames;
    std::mutex mu;
    const ScenarioReport rep =
        RunScenario(s, rules, std::chrono::milliseconds(2000), [&](ByteView wire) {
          std::lock_guard lock(mu);
          frames.emplace_back(wire.begin(), wire.end());
        });
    return std::make_pair(CapturedText(frames), rep.commands_applied);
  };

  const auto [full_text, full_applied] = capture_run(Mode::kFull);
  std::vector<std::string> leaked;
  for (const std::string& n : needles) {
    if (full_text.find(n) != std::string::npos) leaked.push_back(n);
  }
  // Control: the same scan over a plaintext run must find the values.
  const auto [plain_text, plain_applied] = capture_run(Mode::kPlain);
  std::size_t control_hits = 0;
  for (const std::string& n : needles) control_hits += plain_text.find(n) != std::string::npos;

  std::string leaked_list;
  for (const std::string& n : leaked) leaked_list += " " + n;
  const bool ok = leaked.empty() && full_applied == 2 && control_hits == needles.size() &&
                  plain_applied == 2;
  return {ok, Fmt("full-mode capture %zu B scanned for %zu needles, leaked:%s; plaintext control "
                  "run found %zu/%zu",
                  full_text.size(), needles.size(), leaked.empty() ? " none" : leaked_list.c_str(),
                  control_hits, needles.size())};
}

Outcome TraceDistinguishability() {
  int smallest = 0;
  bool self_zero = true;
  for (int seed = 1; seed <= kTraceSeeds; ++seed) {
    const ScoreMatrix m = DistinguishabilityReport(HomeTraceFixture(seed));
    // Indices 0, 1, 2 are S1, S2, S3. The S1/S2 score has to sit strictly
    // below every score that involves S3.
    const double s12 = m.kl[0][1];
    const bool below = s12 < m.kl[0][2] && s12 < m.kl[2][0] && s12 < m.kl[1][2] &&
                       s12 < m.kl[2][1];
    smallest += below;
    for (std::size_t i = 0; i < m.kl.size(); ++i) self_zero &= m.kl[i][i] == 0.0;
  }

  // KL(P,P) on a real trace distribution, exactly.
  const TraceFixture f = HomeTraceFixture(7);
  const TraceDistribution p = BuildDistribution(RecordEventSet(f, f.sets[0]));
  const double kl_pp = KlDivergence(p, p).value;

  // Hand-computed: 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1) = 0.5108256.
  const double two_point =
      KlDivergence(TraceDistribution({0.5, 0.5}), TraceDistribution({0.9, 0.1})).value;
  // From traces, alpha = 0: ABAB has bigrams AB 2/3, BA 1/3; ABA has AB 1/2,
  // BA 1/2. KL = 2/3 ln(4/3) + 1/3 ln(2/3) = 0.0566330.
  const AccessSymbol a{AccessOp::kRead, Region::kCache};
  const AccessSymbol b{AccessOp::kRead, Region::kStore};
  const double from_traces =
      KlDivergence(BuildDistribution({a, b, a, b}, 0.0), BuildDistribution({a, b, a}, 0.0)).value;
  const bool hand_ok = std::fabs(two_point - 0.5108256) <= kHandKlTolerance &&
                       std::fabs(from_traces - 0.0566330) <= kHandKlTolerance;

  const bool ok = smallest >= kTraceRequired && self_zero && kl_pp == 0.0 && hand_ok;
  return {ok, Fmt("KL(S1,S2) strictly smallest in %d/%d seeds (need %d); KL(P,P)=%g; hand "
                  "examples %.7f and %.7f (want 0.5108256, 0.0566330, tol %g)",
                  smallest, kTraceSeeds, kTraceRequired, kl_pp, two_point, from_traces,
                  kHandKlTolerance)};
}

Outcome AttestationGating() {
  const std::string build = DefaultBuildInfo();
  const PlatformSigner platform = PlatformSigner::Generate();
  const SessionKeySet server_keys = KeysFor(WorldDevices());
  ProvisioningServer server(Measure(AsBytes(build)), platform.verification_key(), server_keys);

  std::mt19937_64 rng(2024);
  std::size_t rejected = 0, answered = 0;
  for (int i = 0; i < kFaultyQuotes; ++i) {
    Quote q = EnclaveHandshake("enclave", AsBytes(build), platform).quote();
    if (i % 2 == 0) {
      // Bad signature.
      q.signature[rng() % q.signature.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    } else {
      // Wrong measurement, validly signed by the trusted platform key.
      q = EnclaveHandshake("enclave", AsBytes(build + "-modified-" + std::to_string(i)), platform)
              .quote();
    }
    try {
      server.ProvisionKeys("enclave", q);
      ++answered;
    } catch (const AttestationRejected&) {
      ++rejected;
    }
  }
  const std::uint64_t provisioned_after_faults = server.provisioned_count();

  EnclaveHandshake honest("enclave", AsBytes(build), platform);
  const SessionKeySet enclave_keys = honest.Complete(server.ProvisionKeys("enclave", honest.quote()));
  const bool identical = enclave_keys.device_keys == server_keys.device_keys &&
                         enclave_keys.rules_key == server_keys.rules_key;

  const bool ok = rejected == static_cast<std::size_t>(kFaultyQuotes) && answered == 0 &&
                  provisioned_after_faults == 0 && identical && server.provisioned_count() == 1;
  return {ok, Fmt("%zu/%d faulty quotes rejected, %llu provisioning events; honest handshake "
                  "key maps identical=%s (%zu device keys + rules key)",
                  rejected, kFaultyQuotes,
                  static_cast<unsigned long long>(provisioned_after_faults),
                  identical ? "yes" : "no", enclave_keys.device_keys.size())};
}

struct LruCase {
  std::size_t capacity;
  const char* accesses;
  std::vector<std::string> evictions;
  std::uint64_t hits;
};

// Worked by hand.
const LruCase kLruCases[] = {
    {1, "a b a", {"a", "b"}, 0},
    {2, "a b a c", {"b"}, 1},
    {2, "a b c", {"a"}, 0},
    {3, "a b c a d", {"b"}, 1},
    {3, "a b c d e", {"a", "b"}, 0},
    {3, "a a a", {}, 2},
    {2, "a b a b a b", {}, 4},
    {2, "a b c a", {"a", "b"}, 0},
    {3, "a b c b a d", {"c"}, 2},
    {4, "a b c d a e b f", {"b", "c", "d"}, 1},
    {1, "a a b b a", {"a", "b"}, 2},
    {3, "a b c c c", {}, 2},
    {3, "a b c a b c d", {"a"}, 3},
    {2, "a b c b a", {"a", "c"}, 1},
    {5, "a b c d e f g a", {"a", "b", "c"}, 0},
    {3, "a b a c a d", {"b"}, 2},
    {2, "a b a c b", {"b", "a"}, 1},
    {4, "a b c d d c b a e", {"d"}, 4},
    {3, "a b c d a b c", {"a", "b", "c", "d"}, 0},
    {3, "x y x z x w x", {"y"}, 3},
    {2, "p q p r q p", {"q", "p", "r"}, 1},
};

Outcome LruCache() {
  std::size_t matched = 0;
  std::string bad;
  for (const LruCase& c : kLruCases) {
    RuleCache cache(c.capacity, CachePolicy::kLru);
    std::vector<std::string> evicted;
    std::istringstream in(c.accesses);
    std::string d;
    while (in >> d) {
      if (cache.Get(DeviceId(d))) continue;
      if (auto v = cache.Put(DeviceId(d), std::make_shared<const std::vector<Rule>>())) {
        evicted.push_back(v->value());
      }
    }
    if (evicted == c.evictions && cache.stats().hits == c.hits) {
      ++matched;
    } else {
      bad += std::string(" [") + c.accesses + "]";
    }
  }

  // Steady state through the engine: 32 devices, capacity 100.
  BenchConfig cfg;
  cfg.mode = Mode::kFull;
  cfg.ruleset_size = 100;
  cfg.devices = 32;
  cfg.events = 3200;
  cfg.cache_capacity = 100;
  cfg.transition_cost = std::chrono::nanoseconds(0);
  const BenchResult r = RunBench(cfg);

  const bool ok = std::size(kLruCases) >= kLruMinCases && matched == std::size(kLruCases) &&
                  r.steady_hit_rate == 1.0;
  return {ok, Fmt("%zu/%zu hand-simulated eviction sequences match%s; 32-device/100-capacity "
                  "steady-state hit rate %.4f",
                  matched, std::size(kLruCases), bad.c_str(), r.steady_hit_rate)};
}

}  // namespace
}  // namespace sealedrules

int main(int argc, char** argv) {
  using namespace sealedrules;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"presence_scenario", PresenceScenario},
      {"oracle_equivalence", OracleEquivalence},
      {"mode_semantics", ModeSemantics},
      {"mode_latency_ordering", ModeOrdering},
      {"tamper_rejection", TamperSuite},
      {"transit_opacity", TransitOpacity},
      {"trace_distinguishability", TraceDistinguishability},
      {"attestation_gating", AttestationGating},
      {"lru_cache", LruCache},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0, ran = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    ++ran;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
