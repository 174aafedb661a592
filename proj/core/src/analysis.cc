#include "sealedrules/analysis.h"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "sealedrules/error.h"
#include "sealedrules/hub.h"

namespace sealedrules {

namespace {

struct Band {
  double lo, hi;
};

const DeviceId kThermo("thermo-1");
const DeviceId kHygro("hygro-1");
const DeviceId kCo2("co2-1");
const DeviceId kDoor("door-1");
const DeviceId kThermostat("thermostat-1");
const DeviceId kFan("fan-switch-1");
const DeviceId kBulb("hue-bulb-1");

Rule MakeRule(std::string id, std::string name, std::vector<Condition> conds,
              std::vector<ActionCommand> actions,
              Combinator comb = Combinator::kAll) {
  return Rule{std::move(id), std::move(name), std::move(conds), comb, std::move(actions)};
}

std::vector<Rule> FixtureRules() {
  using O = Operator;
  const ActionCommand fan_on{kFan, "switch", "on", {}};
  const ActionCommand fan_off{kFan, "switch", "off", {}};
  return {
      MakeRule("t1", "warm: fan on", {{kThermo, "temperature", O::kGreaterThan, 74.0}}, {fan_on}),
      MakeRule("t2", "hot: cool down",
               {{kThermo, "temperature", O::kGreaterThan, 85.0}},
               {{kThermostat, "thermostatMode", "setMode", {std::string("cool")}}, fan_on}),
      MakeRule("t3", "cold: heat up", {{kThermo, "temperature", O::kLessThan, 60.0}},
               {{kThermostat, "thermostatMode", "setMode", {std::string("heat")}}}),
      MakeRule("h1", "damp: fan on", {{kHygro, "humidity", O::kGreaterThan, 55.0}}, {fan_on}),
      MakeRule("h2", "very damp: notify",
               {{kHygro, "humidity", O::kGreaterThan, 75.0}},
               {{kBulb, "notification", "notify", {std::string("humidity high")}}, fan_on}),
      MakeRule("c1", "stale air: warn",
               {{kCo2, "carbonDioxide", O::kGreaterThan, 1000.0}},
               {{kBulb, "colorControl", "setColor", {std::string("red")}},
                {kBulb, "notification", "notify", {std::string("ventilate")}}}),
      MakeRule("c2", "bad air: ventilate",
               {{kCo2, "carbonDioxide", O::kGreaterThanOrEquals, 1500.0}}, {fan_on}),
      MakeRule("m1", "muggy: cool",
               {{kThermo, "temperature", O::kGreaterThan, 72.0},
                {kHygro, "humidity", O::kGreaterThan, 50.0}},
               {{kThermostat, "thermostatMode", "setMode", {std::string("cool")}}}),
      MakeRule("p1", "arrive: light on", {{kDoor, "presence", O::kEquals, std::string("present")}},
               {{kBulb, "switch", "on", {}}}),
      MakeRule("p2", "leave: all off",
               {{kDoor, "presence", O::kEquals, std::string("not present")}},
               {{kBulb, "switch", "off", {}}, fan_off}),
  };
}

struct Sensor {
  DeviceId device;
  std::string capability;
  std::string attribute;
  Band comfort;
  Band alarm;
};

const std::vector<Sensor>& FixtureSensors() {
  static const std::vector<Sensor> sensors = {
      {kThermo, "temperatureMeasurement", "temperature", {66, 76}, {86, 100}},
      {kHygro, "relativeHumidityMeasurement", "humidity", {40, 58}, {76, 95}},
      {kCo2, "carbonDioxideMeasurement", "carbonDioxide", {450, 900}, {1500, 2400}},
      {kDoor, "presenceSensor", "presence", {0, 0}, {0, 0}},
  };
  return sensors;
}

Scalar Draw(std::mt19937_64& rng, const Sensor& s, bool alarm) {
  if (s.attribute == "presence") {
    return std::string(std::uniform_int_distribution<int>(0, 1)(rng) ? "present"
                                                                      : "not present");
  }
  const Band b = alarm ? s.alarm : s.comfort;
  const double v = std::uniform_real_distribution<double>(b.lo, b.hi)(rng);
  return std::round(v * 10.0) / 10.0;
}

}  // namespace

AccessTrace RecordTrace(TrustedBoundary& boundary,
                        const std::vector<OutboundMessage>& messages) {
  if (!boundary.tracing()) throw TracingDisabled("tracing is not enabled");
  boundary.TakeTrace();  // discard anything recorded earlier
  for (const OutboundMessage& m : messages) boundary.HandleEvent(m.topic, m.payload);
  return boundary.TakeTrace();
}

std::unique_ptr<TrustedBoundary> ProvisionFixture(const TraceFixture& fixture) {
  BoundaryConfig cfg;
  cfg.mode = fixture.mode;
  cfg.transition_cost = std::chrono::nanoseconds(0);
  auto boundary = std::make_unique<TrustedBoundary>(cfg, fixture.keys);
  const std::string text = SerializeRuleset(fixture.rules);
  if (fixture.mode == Mode::kFull) {
    if (!fixture.keys.rules_key) throw InvalidConfig("fixture has no rules key");
    Encryptor uploader(*fixture.keys.rules_key);
    boundary->ProvisionRuleset(AsBytes(EnvelopeToJson(
        uploader.Encrypt(AsBytes(text), AsBytes(kProvisionTopic), "analysis"))));
  } else {
    boundary->ProvisionRuleset(AsBytes(text));
  }
  return boundary;
}

AccessTrace RecordEventSet(const TraceFixture& fixture, const EventSet& set) {
  std::unique_ptr<TrustedBoundary> boundary = ProvisionFixture(fixture);
  boundary->EnableTracing(true);
  Hub hub("analysis-hub", fixture.keys.device_keys, fixture.mode);
  std::vector<OutboundMessage> messages;
  messages.reserve(set.events.size());
  for (const DeviceEvent& e : set.events) messages.push_back(hub.Upstream(e));
  return RecordTrace(*boundary, messages);
}

ScoreMatrix DistinguishabilityReport(const TraceFixture& fixture, double threshold,
                                     double alpha) {
  if (fixture.sets.size() < 2) throw InvalidConfig("need at least two event sets");
  std::vector<TraceDistribution> dists;
  ScoreMatrix m;
  m.threshold = threshold;
  for (const EventSet& s : fixture.sets) {
    m.names.push_back(s.name);
    dists.push_back(BuildDistribution(RecordEventSet(fixture, s), alpha));
  }
  const std::size_t n = dists.size();
  m.kl.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m.kl[i][j] = KlDivergence(dists[i], dists[j]).value;
      if (i != j && m.kl[i][j] < threshold) m.flagged.emplace_back(i, j);
    }
  }
  return m;
}

std::string ScoreMatrixCsv(const ScoreMatrix& m) {
  std::ostringstream out;
  for (const std::string& name : m.names) out << ',' << name;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    out << m.names[i];
    for (double v : m.kl[i]) {
      std::snprintf(buf, sizeof(buf), ",%.6f", v);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

TraceFixture HomeTraceFixture(std::uint64_t seed) {
  TraceFixture f;
  f.rules = FixtureRules();
  for (const DeviceId& d : {kThermo, kHygro, kCo2, kDoor, kThermostat, kFan, kBulb}) {
    f.keys.device_keys.emplace(d, SymmetricKey::Generate("dk-" + d.value()));
  }
  f.keys.rules_key = SymmetricKey::Generate("rules");

  constexpr std::size_t kEvents = 10;
  constexpr std::int64_t kEpochUs = 1'700'000'000'000'000;
  std::mt19937_64 rng(seed);
  const std::vector<Sensor>& sensors = FixtureSensors();
  std::uniform_int_distribution<std::size_t> pick(0, sensors.size() - 1);

  std::vector<std::size_t> order(kEvents);
  for (std::size_t& i : order) i = pick(rng);

  EventSet s1{"S1", {}}, s3{"S3", {}};
  for (std::size_t k = 0; k < kEvents; ++k) {
    const Sensor& s = sensors[order[k]];
    const std::int64_t ts = kEpochUs + static_cast<std::int64_t>(k) * 1'000'000;
    s1.events.push_back({s.device, s.capability, s.attribute, Draw(rng, s, false), ts});
    s3.events.push_back({s.device, s.capability, s.attribute, Draw(rng, s, true), ts});
  }
  EventSet s2{"S2", s1.events};
  const std::size_t k = std::uniform_int_distribution<std::size_t>(0, kEvents - 1)(rng);
  s2.events[k].value = Draw(rng, sensors[order[k]], false);

  f.sets = {std::move(s1), std::move(s2), std::move(s3)};
  return f;
}

}  // namespace sealedrules
