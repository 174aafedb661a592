#include "sealedrules/device_sim.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "sealedrules/error.h"

namespace sealedrules {

namespace {

constexpr DeviceKind kAllKinds[] = {
    DeviceKind::kPresence, DeviceKind::kTemperature, DeviceKind::kHumidity,
    DeviceKind::kCo2,      DeviceKind::kAirQuality,  DeviceKind::kSwitch,
    DeviceKind::kBulb,     DeviceKind::kThermostat,
};

std::uint64_t Fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

GeneratorSpec Uniform(double lo, double hi) {
  GeneratorSpec g;
  g.kind = GeneratorSpec::Kind::kUniform;
  g.lo = lo;
  g.hi = hi;
  return g;
}

Scalar ParseTraceValue(std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  double d = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ec == std::errc() && ptr == text.data() + text.size()) return d;
  return std::string(text);
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double NumberArg(const ActionCommand& cmd) {
  if (cmd.arguments.size() != 1 || !IsNumeric(cmd.arguments[0])) {
    throw SchemaError(cmd.command + " takes one numeric argument");
  }
  return std::get<double>(cmd.arguments[0]);
}

std::string StringArg(const ActionCommand& cmd) {
  if (cmd.arguments.size() != 1 ||
      !std::holds_alternative<std::string>(cmd.arguments[0])) {
    throw SchemaError(cmd.command + " takes one string argument");
  }
  return std::get<std::string>(cmd.arguments[0]);
}

}  // namespace

std::string_view DeviceKindName(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::kPresence: return "presence";
    case DeviceKind::kTemperature: return "temperature";
    case DeviceKind::kHumidity: return "humidity";
    case DeviceKind::kCo2: return "co2";
    case DeviceKind::kAirQuality: return "air_quality";
    case DeviceKind::kSwitch: return "switch";
    case DeviceKind::kBulb: return "bulb";
    case DeviceKind::kThermostat: return "thermostat";
  }
  return "switch";
}

std::optional<DeviceKind> ParseDeviceKind(std::string_view name) {
  for (DeviceKind k : kAllKinds) {
    if (DeviceKindName(k) == name) return k;
  }
  return std::nullopt;
}

bool IsSensor(DeviceKind kind) {
  return kind != DeviceKind::kSwitch && kind != DeviceKind::kBulb &&
         kind != DeviceKind::kThermostat;
}

std::vector<Scalar> LoadValueTrace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file " + path.string());
  std::vector<Scalar> values;
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view v = Trim(line);
    if (v.empty() || v.front() == '#') continue;
    values.push_back(ParseTraceValue(v));
  }
  if (values.empty()) throw InvalidConfig("trace file " + path.string() + " has no values");
  return values;
}

ValueGenerator::ValueGenerator(GeneratorSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), rng_(seed) {
  using Kind = GeneratorSpec::Kind;
  if ((spec_.kind == Kind::kChoice || spec_.kind == Kind::kTrace) &&
      spec_.values.empty()) {
    throw InvalidConfig("generator has no values");
  }
  if (spec_.kind == Kind::kUniform && !(spec_.lo <= spec_.hi)) {
    throw InvalidConfig("uniform generator needs lo <= hi");
  }
}

Scalar ValueGenerator::Next() {
  switch (spec_.kind) {
    case GeneratorSpec::Kind::kConstant:
      return spec_.constant;
    case GeneratorSpec::Kind::kUniform: {
      // Readings are reported with one decimal, like most consumer sensors.
      const double v = std::uniform_real_distribution<double>(spec_.lo, spec_.hi)(rng_);
      return std::round(v * 10.0) / 10.0;
    }
    case GeneratorSpec::Kind::kChoice: {
      std::uniform_int_distribution<std::size_t> pick(0, spec_.values.size() - 1);
      return spec_.values[pick(rng_)];
    }
    case GeneratorSpec::Kind::kTrace: {
      const Scalar v = spec_.values[pos_];
      pos_ = (pos_ + 1) % spec_.values.size();
      return v;
    }
  }
  return spec_.constant;
}

DeviceProfile DefaultProfile(DeviceId device, DeviceKind kind) {
  DeviceProfile p{std::move(device), kind, std::chrono::milliseconds(1000), {}};
  switch (kind) {
    case DeviceKind::kPresence: {
      GeneratorSpec g;
      g.kind = GeneratorSpec::Kind::kChoice;
      g.values = {std::string("present"), std::string("not present")};
      p.channels.push_back({"presenceSensor", "presence", g});
      break;
    }
    case DeviceKind::kTemperature:
      p.channels.push_back({"temperatureMeasurement", "temperature", Uniform(55, 100)});
      break;
    case DeviceKind::kHumidity:
      p.channels.push_back({"relativeHumidityMeasurement", "humidity", Uniform(20, 80)});
      break;
    case DeviceKind::kCo2:
      p.channels.push_back({"carbonDioxideMeasurement", "carbonDioxide", Uniform(400, 2000)});
      break;
    case DeviceKind::kAirQuality:
      p.channels.push_back({"temperatureMeasurement", "temperature", Uniform(60, 90)});
      p.channels.push_back({"relativeHumidityMeasurement", "humidity", Uniform(20, 80)});
      p.channels.push_back({"carbonDioxideMeasurement", "carbonDioxide", Uniform(400, 2000)});
      break;
    case DeviceKind::kSwitch:
    case DeviceKind::kBulb:
    case DeviceKind::kThermostat:
      break;
  }
  return p;
}

ActuatorState InitialActuatorState(DeviceId device, DeviceKind kind) {
  ActuatorState s{std::move(device), kind, {}, 0};
  switch (kind) {
    case DeviceKind::kSwitch:
      s.attributes["switch"] = std::string("off");
      break;
    case DeviceKind::kBulb:
      s.attributes["switch"] = std::string("off");
      s.attributes["level"] = 100.0;
      s.attributes["color"] = std::string("white");
      break;
    case DeviceKind::kThermostat:
      s.attributes["mode"] = std::string("off");
      s.attributes["coolingSetpoint"] = 75.0;
      s.attributes["heatingSetpoint"] = 68.0;
      break;
    default:
      break;
  }
  return s;
}

ActuatorState ApplyCommand(const ActuatorState& state, const ActionCommand& cmd,
                           std::int64_t now_us) {
  if (cmd.device != state.device) {
    throw BindingError("command for '" + cmd.device.value() +
                       "' applied to '" + state.device.value() + "'");
  }
  ActuatorState next = state;
  const std::string& c = cmd.command;
  const bool has_switch =
      state.kind == DeviceKind::kSwitch || state.kind == DeviceKind::kBulb;
  if (c == "notify") {
    next.attributes["lastNotification"] = StringArg(cmd);
  } else if (has_switch && (c == "on" || c == "off")) {
    next.attributes["switch"] = c;
  } else if (state.kind == DeviceKind::kBulb && c == "setLevel") {
    const double level = NumberArg(cmd);
    if (level < 0 || level > 100) throw SchemaError("setLevel expects 0..100");
    next.attributes["level"] = level;
  } else if (state.kind == DeviceKind::kBulb && c == "setColor") {
    next.attributes["color"] = StringArg(cmd);
  } else if (state.kind == DeviceKind::kThermostat && c == "setMode") {
    next.attributes["mode"] = StringArg(cmd);
  } else if (state.kind == DeviceKind::kThermostat && c == "setCoolingSetpoint") {
    next.attributes["coolingSetpoint"] = NumberArg(cmd);
  } else if (state.kind == DeviceKind::kThermostat && c == "setHeatingSetpoint") {
    next.attributes["heatingSetpoint"] = NumberArg(cmd);
  } else {
    throw UnknownCommand("'" + c + "' is not a " +
                         std::string(DeviceKindName(state.kind)) + " command");
  }
  next.last_command_at_us = now_us;
  return next;
}

std::string EmissionLogCsv(const std::vector<EmissionRecord>& log) {
  std::ostringstream out;
  out << "device,attribute,value,sent_us\n";
  for (const EmissionRecord& r : log) {
    out << CsvField(r.device.value()) << ',' << CsvField(r.attribute) << ','
        << CsvField(ScalarToString(r.value)) << ',' << r.sent_us << '\n';
  }
  return out.str();
}

std::int64_t NowMicros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::vector<EmissionRecord> RunFleet(const std::vector<DeviceProfile>& profiles,
                                     std::size_t event_count,
                                     const ReadingSink& sink,
                                     const FleetOptions& options) {
  struct Actor {
    const DeviceProfile* profile;
    std::vector<ValueGenerator> generators;
    std::size_t emitted = 0;
  };
  std::vector<Actor> actors;
  for (const DeviceProfile& p : profiles) {
    if (p.channels.empty()) continue;
    Actor a{&p, {}, 0};
    for (std::size_t i = 0; i < p.channels.size(); ++i) {
      const std::uint64_t seed =
          options.seed ^ Fnv1a(p.device.value()) ^ (0x9e3779b97f4a7c15ull * (i + 1));
      a.generators.emplace_back(p.channels[i].generator, seed);
    }
    actors.push_back(std::move(a));
  }
  if (event_count > 0 && actors.empty()) {
    throw InvalidConfig("fleet has no sensor profiles");
  }

  std::vector<EmissionRecord> log;
  log.reserve(event_count);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < event_count; ++i) {
    Actor& a = actors[i % actors.size()];
    if (options.paced) {
      std::this_thread::sleep_until(start + a.profile->emit_period * a.emitted);
    }
    const std::size_t ch = a.emitted % a.profile->channels.size();
    const SensorChannel& channel = a.profile->channels[ch];
    DeviceEvent ev{a.profile->device, channel.capability, channel.attribute,
                   a.generators[ch].Next(), NowMicros()};
    ++a.emitted;
    if (sink) sink(ev);
    log.push_back({ev.device, ev.attribute, ev.value, ev.timestamp_us});
  }
  return log;
}

}  // namespace sealedrules
