#ifndef SEALEDRULES_CONFIG_H_
#define SEALEDRULES_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sealedrules/boundary.h"
#include "sealedrules/device_sim.h"
#include "sealedrules/rule.h"

namespace sealedrules {

// Values of the small TOML subset used for config and scenario files:
// strings, numbers, booleans and single-line arrays of those.
using ConfigValue = std::variant<std::string, double, bool, std::vector<Scalar>>;

class ConfigTable {
 public:
  void Set(std::string key, ConfigValue value);
  bool Has(std::string_view key) const;
  const std::map<std::string, ConfigValue, std::less<>>& values() const { return values_; }

  // Typed getters. Throw ConfigError when the key holds another type.
  std::optional<std::string> String(std::string_view key) const;
  std::optional<double> Number(std::string_view key) const;
  std::optional<bool> Bool(std::string_view key) const;
  std::optional<std::vector<Scalar>> Array(std::string_view key) const;
  // Non-negative whole number.
  std::optional<std::uint64_t> Count(std::string_view key) const;

 private:
  std::map<std::string, ConfigValue, std::less<>> values_;
};

struct ConfigDocument {
  ConfigTable root;
  std::map<std::string, ConfigTable, std::less<>> tables;               // [name]
  std::map<std::string, std::vector<ConfigTable>, std::less<>> arrays;  // [[name]]

  const ConfigTable* Table(std::string_view name) const;
};

// Supports comments, [table], [[array]], key = value with basic strings,
// numbers, true/false and one-line arrays. Inline tables, multi-line
// strings and dates are rejected. Throws ConfigError naming the line.
ConfigDocument ParseConfig(std::string_view text);
ConfigDocument LoadConfigFile(const std::filesystem::path& path);

std::string ReadTextFile(const std::filesystem::path& path);  // throws IoError
void WriteTextFile(const std::filesystem::path& path, std::string_view text);

struct BrokerAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 1883;
};

// "host:port". Throws ConfigError.
BrokerAddress ParseBrokerAddress(std::string_view text);
inline constexpr const char* kBrokerEnvVar = "SEALEDRULES_BROKER";

// A device fleet, its rules and the run parameters.
//
//   [scenario]  name, seed, events, mode, rules (path, relative to the file)
//   [[device]]  id, kind, period_ms, generator (constant|uniform|choice|trace),
//               value, lo, hi, values, trace (path)
struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  std::size_t events = 0;
  Mode mode = Mode::kFull;
  std::filesystem::path rules_file;
  std::vector<DeviceProfile> profiles;

  std::vector<DeviceId> devices() const;
  std::vector<DeviceId> actuators() const;
};

Scenario ScenarioFromConfig(const ConfigDocument& doc,
                            const std::filesystem::path& base_dir);
Scenario LoadScenario(const std::filesystem::path& path);

}  // namespace sealedrules

#endif  // SEALEDRULES_CONFIG_H_
