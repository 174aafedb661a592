#include "sealedrules/device_sim.h"

#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "sealedrules/error.h"
#include "test_support.h"

namespace sealedrules {
namespace {

using testing::TempDir;

std::vector<DeviceProfile> Fleet(std::size_t sensors) {
  std::vector<DeviceProfile> out;
  for (std::size_t i = 0; i < sensors; ++i) {
    out.push_back(DefaultProfile(DeviceId("t" + std::to_string(i)), DeviceKind::kTemperature));
  }
  out.push_back(DefaultProfile(DeviceId("sw"), DeviceKind::kSwitch));
  return out;
}

TEST(Fleet, EmitsExactlyTheRequestedCountRoundRobin) {
  // 1000 readings over 32 sensors: 8 devices get 32, the rest 31.
  std::map<DeviceId, int> per_device;
  const auto log = RunFleet(Fleet(32), 1000, [&](const DeviceEvent& e) { ++per_device[e.device]; });
  EXPECT_EQ(log.size(), 1000u);
  EXPECT_EQ(per_device.size(), 32u);
  int at32 = 0, at31 = 0;
  for (const auto& [d, n] : per_device) {
    at32 += n == 32;
    at31 += n == 31;
  }
  EXPECT_EQ(at32, 8);
  EXPECT_EQ(at31, 24);
  EXPECT_EQ(per_device.count(DeviceId("sw")), 0u);

  // 10000 over 32: 312 or 313 each.
  per_device.clear();
  RunFleet(Fleet(32), 10000, [&](const DeviceEvent& e) { ++per_device[e.device]; });
  for (const auto& [d, n] : per_device) EXPECT_TRUE(n == 312 || n == 313) << n;
}

TEST(Fleet, ReadingsAreReproducible) {
  auto values = [](std::uint64_t seed) {
    std::vector<Scalar> out;
    RunFleet(Fleet(4), 200, [&](const DeviceEvent& e) { out.push_back(e.value); },
             FleetOptions{seed, false});
    return out;
  };
  EXPECT_EQ(values(7), values(7));
  EXPECT_NE(values(7), values(8));
}

TEST(Fleet, NoSensorsIsInvalid) {
  std::vector<DeviceProfile> actuators{DefaultProfile(DeviceId("sw"), DeviceKind::kSwitch)};
  EXPECT_THROW(RunFleet(actuators, 1, nullptr), InvalidConfig);
  EXPECT_TRUE(RunFleet(actuators, 0, nullptr).empty());
}

TEST(Fleet, MultiChannelDevicesCycleChannels) {
  std::vector<DeviceProfile> p{DefaultProfile(DeviceId("aq"), DeviceKind::kAirQuality)};
  std::vector<std::string> attrs;
  RunFleet(p, 6, [&](const DeviceEvent& e) { attrs.push_back(e.attribute); });
  EXPECT_EQ(attrs, (std::vector<std::string>{"temperature", "humidity", "carbonDioxide",
                                             "temperature", "humidity", "carbonDioxide"}));
}

TEST(Fleet, PacedEmissionHonoursPeriod) {
  auto p = Fleet(1);
  p[0].emit_period = std::chrono::milliseconds(20);
  const auto t0 = std::chrono::steady_clock::now();
  RunFleet(p, 4, nullptr, FleetOptions{1, true});
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(60));
}

TEST(Generators, StayInRangeAndKind) {
  GeneratorSpec u;
  u.kind = GeneratorSpec::Kind::kUniform;
  u.lo = 55;
  u.hi = 100;
  ValueGenerator g(u, 3);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::get<double>(g.Next());
    EXPECT_GE(v, 55.0);
    EXPECT_LE(v, 100.0);
    EXPECT_DOUBLE_EQ(v * 10, std::round(v * 10));
  }
  GeneratorSpec c;
  c.kind = GeneratorSpec::Kind::kChoice;
  c.values = {std::string("present"), std::string("not present")};
  ValueGenerator pick(c, 3);
  std::map<std::string, int> seen;
  for (int i = 0; i < 200; ++i) ++seen[std::get<std::string>(pick.Next())];
  EXPECT_EQ(seen.size(), 2u);

  GeneratorSpec k;
  k.constant = true;
  EXPECT_EQ(ValueGenerator(k, 1).Next(), Scalar(true));

  GeneratorSpec empty;
  empty.kind = GeneratorSpec::Kind::kChoice;
  EXPECT_THROW(ValueGenerator(empty, 1), InvalidConfig);
  GeneratorSpec backwards = u;
  backwards.lo = 5;
  backwards.hi = 1;
  EXPECT_THROW(ValueGenerator(backwards, 1), InvalidConfig);
}

TEST(Generators, TraceFilesAreTypedAndCycle) {
  TempDir dir;
  const auto p = dir / "trace.txt";
  std::ofstream(p) << "# readings\n72.5\n\n  present \ntrue\n";
  const auto values = LoadValueTrace(p);
  ASSERT_EQ(values.size(), 3u);
  EXPECT_EQ(values[0], Scalar(72.5));
  EXPECT_EQ(values[1], Scalar(std::string("present")));
  EXPECT_EQ(values[2], Scalar(true));
  GeneratorSpec t;
  t.kind = GeneratorSpec::Kind::kTrace;
  t.values = values;
  ValueGenerator g(t, 0);
  for (int i = 0; i < 3; ++i) g.Next();
  EXPECT_EQ(g.Next(), Scalar(72.5));

  std::ofstream(dir / "empty.txt") << "# nothing\n";
  EXPECT_THROW(LoadValueTrace(dir / "empty.txt"), InvalidConfig);
  EXPECT_THROW(LoadValueTrace(dir / "missing.txt"), IoError);
}

TEST(Actuators, CommandsPerKind) {
  const DeviceId bulb("bulb");
  ActuatorState s = InitialActuatorState(bulb, DeviceKind::kBulb);
  s = ApplyCommand(s, {bulb, "switch", "on", {}}, 5);
  s = ApplyCommand(s, {bulb, "switchLevel", "setLevel", {40.0}}, 6);
  s = ApplyCommand(s, {bulb, "colorControl", "setColor", {std::string("red")}}, 7);
  EXPECT_EQ(s.attributes.at("switch"), Scalar(std::string("on")));
  EXPECT_EQ(s.attributes.at("level"), Scalar(40.0));
  EXPECT_EQ(s.attributes.at("color"), Scalar(std::string("red")));
  EXPECT_EQ(s.last_command_at_us, 7);

  const DeviceId th("th");
  ActuatorState t = InitialActuatorState(th, DeviceKind::kThermostat);
  t = ApplyCommand(t, {th, "thermostatMode", "setMode", {std::string("cool")}}, 1);
  t = ApplyCommand(t, {th, "thermostat", "setCoolingSetpoint", {70.0}}, 1);
  t = ApplyCommand(t, {th, "notification", "notify", {std::string("hi")}}, 1);
  EXPECT_EQ(t.attributes.at("mode"), Scalar(std::string("cool")));
  EXPECT_EQ(t.attributes.at("coolingSetpoint"), Scalar(70.0));
  EXPECT_EQ(t.attributes.at("lastNotification"), Scalar(std::string("hi")));
}

TEST(Actuators, BadCommandsThrow) {
  const DeviceId sw("sw");
  const ActuatorState s = InitialActuatorState(sw, DeviceKind::kSwitch);
  EXPECT_THROW(ApplyCommand(s, {DeviceId("other"), "switch", "on", {}}, 0), BindingError);
  EXPECT_THROW(ApplyCommand(s, {sw, "thermostatMode", "setMode", {std::string("x")}}, 0),
               UnknownCommand);
  const DeviceId bulb("bulb");
  const ActuatorState b = InitialActuatorState(bulb, DeviceKind::kBulb);
  EXPECT_THROW(ApplyCommand(b, {bulb, "switchLevel", "setLevel", {std::string("50")}}, 0),
               SchemaError);
  EXPECT_THROW(ApplyCommand(b, {bulb, "switchLevel", "setLevel", {101.0}}, 0), SchemaError);
  EXPECT_THROW(ApplyCommand(b, {bulb, "colorControl", "setColor", {}}, 0), SchemaError);
}

TEST(Kinds, NamesRoundTrip) {
  for (DeviceKind k : {DeviceKind::kPresence, DeviceKind::kTemperature, DeviceKind::kHumidity,
                       DeviceKind::kCo2, DeviceKind::kAirQuality, DeviceKind::kSwitch,
                       DeviceKind::kBulb, DeviceKind::kThermostat}) {
    EXPECT_EQ(ParseDeviceKind(DeviceKindName(k)), k);
    EXPECT_EQ(IsSensor(k), !DefaultProfile(DeviceId("x"), k).channels.empty());
  }
  EXPECT_FALSE(ParseDeviceKind("toaster"));
}

TEST(EmissionLog, CsvQuotesWhereNeeded) {
  const std::vector<EmissionRecord> log{
      {DeviceId("p"), "presence", std::string("not, present"), 10},
      {DeviceId("t"), "temperature", 71.5, 11},
  };
  EXPECT_EQ(EmissionLogCsv(log),
            "device,attribute,value,sent_us\n"
            "p,presence,\"not, present\",10\n"
            "t,temperature,71.5,11\n");
}

}  // namespace
}  // namespace sealedrules
