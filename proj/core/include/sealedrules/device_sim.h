#ifndef SEALEDRULES_DEVICE_SIM_H_
#define SEALEDRULES_DEVICE_SIM_H_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sealedrules/rule.h"

namespace sealedrules {

enum class DeviceKind {
  kPresence,
  kTemperature,
  kHumidity,
  kCo2,
  kAirQuality,
  kSwitch,
  kBulb,
  kThermostat,
};

std::string_view DeviceKindName(DeviceKind kind);
std::optional<DeviceKind> ParseDeviceKind(std::string_view name);
bool IsSensor(DeviceKind kind);

// How a sensor channel produces values. kChoice draws uniformly from a list
// of values, which is what string-valued sensors (presence) need.
struct GeneratorSpec {
  enum class Kind { kConstant, kUniform, kChoice, kTrace };
  Kind kind = Kind::kConstant;
  Scalar constant = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<Scalar> values;  // kChoice options, or kTrace contents
};

// Reads a trace file: one value per line; numbers and true/false are typed,
// anything else is a string. Blank lines and '#' comments are skipped.
// Throws IoError, or InvalidConfig for an empty trace.
std::vector<Scalar> LoadValueTrace(const std::filesystem::path& path);

class ValueGenerator {
 public:
  ValueGenerator(GeneratorSpec spec, std::uint64_t seed);
  Scalar Next();

 private:
  GeneratorSpec spec_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

struct SensorChannel {
  std::string capability;
  std::string attribute;
  GeneratorSpec generator;
};

struct DeviceProfile {
  DeviceId device;
  DeviceKind kind;
  std::chrono::milliseconds emit_period{1000};
  // Sensors cycle through their channels, one reading per emission.
  // Actuators have none.
  std::vector<SensorChannel> channels;
};

// A profile with the default channels and generators for the kind.
DeviceProfile DefaultProfile(DeviceId device, DeviceKind kind);

struct ActuatorState {
  DeviceId device;
  DeviceKind kind = DeviceKind::kSwitch;
  std::map<std::string, Scalar, std::less<>> attributes;
  std::int64_t last_command_at_us = 0;

  friend bool operator==(const ActuatorState&, const ActuatorState&) = default;
};

// Initial register values for an actuator kind.
ActuatorState InitialActuatorState(DeviceId device, DeviceKind kind);

// Commands per kind:
//   switch      on, off
//   bulb        on, off, setLevel(n), setColor(s)
//   thermostat  setMode(s), setCoolingSetpoint(n), setHeatingSetpoint(n)
//   any         notify(s)
// Throws BindingError when the command is for another device, UnknownCommand
// for a command the kind does not support, SchemaError for bad arguments.
ActuatorState ApplyCommand(const ActuatorState& state, const ActionCommand& cmd,
                           std::int64_t now_us);

struct EmissionRecord {
  DeviceId device;
  std::string attribute;
  Scalar value;
  std::int64_t sent_us;
};

// device,attribute,value,sent_us
std::string EmissionLogCsv(const std::vector<EmissionRecord>& log);

struct FleetOptions {
  std::uint64_t seed = 1;
  // Honour each profile's emit_period instead of emitting back to back.
  bool paced = false;
};

// Receives every generated reading, e.g. a hub that encrypts and publishes.
using ReadingSink = std::function<void(const DeviceEvent&)>;

// Emits exactly event_count readings, round-robin over the sensor profiles
// (actuator profiles are skipped). Readings are reproducible from
// (seed, profiles). Throws InvalidConfig when events are requested from a
// fleet with no sensors.
std::vector<EmissionRecord> RunFleet(const std::vector<DeviceProfile>& profiles,
                                     std::size_t event_count,
                                     const ReadingSink& sink,
                                     const FleetOptions& options = {});

std::int64_t NowMicros();

}  // namespace sealedrules

#endif  // SEALEDRULES_DEVICE_SIM_H_
