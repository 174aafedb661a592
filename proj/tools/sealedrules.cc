// sealedrules: operator entry point.
//
//   sealedrules run {broker|server|enclave|hub|fleet}
//   sealedrules rules {validate|provision|generate}
//   sealedrules bench | trace | keygen | scenario FILE
//
// Exit status: 0 success, 1 runtime error, 2 usage error.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sealedrules/analysis.h"
#include "sealedrules/bench.h"
#include "sealedrules/config.h"
#include "sealedrules/error.h"
#include "sealedrules/hub.h"
#include "sealedrules/services.h"

namespace fs = std::filesystem;
using namespace sealedrules;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Keys a --config file may set at top level. Anything else is rejected, as
// unknown flags are.
const std::set<std::string, std::less<>> kConfigKeys = {
    "broker", "host",  "port",  "mode",      "seed",      "events",  "devices",
    "cache",  "store", "keys",  "platform",  "enclave_id", "scenario", "transition_ns",
    "workers", "pattern", "policy", "rules", "threshold", "alpha", "timeout_ms",
};

// --- signals ---------------------------------------------------------------

// SIGINT/SIGTERM are blocked in every thread and collected by sigwait, so
// shutdown runs on the main thread with the components still intact.
sigset_t BlockShutdownSignals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int WaitForShutdown(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

// For finite jobs (the fleet): a watcher thread raises a flag instead.
class ShutdownFlag {
 public:
  explicit ShutdownFlag(const sigset_t& set) : set_(set) {
    thread_ = std::thread([this] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (sig == SIGUSR1) return;
      stop_ = true;
    });
  }
  ~ShutdownFlag() {
    if (thread_.joinable()) {
      pthread_kill(thread_.native_handle(), SIGUSR1);
      thread_.join();
    }
  }
  bool stopped() const { return stop_; }

 private:
  sigset_t set_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

// --- settings --------------------------------------------------------------

class Settings {
 public:
  void Load(const std::string& path) {
    if (path.empty()) return;
    doc_ = LoadConfigFile(path);
    if (!doc_.tables.empty() || !doc_.arrays.empty()) {
      throw ConfigError(path + ": config files are flat; tables are not allowed");
    }
    for (const auto& [key, value] : doc_.root.values()) {
      if (!kConfigKeys.contains(key)) throw ConfigError(path + ": unknown key '" + key + "'");
    }
  }

  // The config value for `key` replaces `var` unless the flag was given.
  void Apply(const CLI::Option* flag, std::string_view key, std::string& var) const {
    if (flag->count() == 0) {
      if (auto v = doc_.root.String(key)) var = *v;
    }
  }
  void Apply(const CLI::Option* flag, std::string_view key, double& var) const {
    if (flag->count() == 0) {
      if (auto v = doc_.root.Number(key)) var = *v;
    }
  }
  template <typename T>
    requires std::is_integral_v<T>
  void Apply(const CLI::Option* flag, std::string_view key, T& var) const {
    if (flag->count() == 0) {
      if (auto v = doc_.root.Count(key)) var = static_cast<T>(*v);
    }
  }

  const ConfigTable& root() const { return doc_.root; }

 private:
  ConfigDocument doc_;
};

// --broker, then $SEALEDRULES_BROKER, then the config file, then the default.
BrokerAddress ResolveBroker(const std::string& flag, const Settings& settings) {
  if (!flag.empty()) return ParseBrokerAddress(flag);
  if (const char* env = std::getenv(kBrokerEnvVar); env && *env) return ParseBrokerAddress(env);
  if (auto v = settings.root().String("broker")) return ParseBrokerAddress(*v);
  return BrokerAddress{};
}

Mode RequireMode(const std::string& name) {
  auto m = ParseMode(name);
  if (!m) throw ConfigError("unknown mode '" + name + "' (plain, trusted-noenc, full)");
  return *m;
}

std::unique_ptr<BrokerClient> ConnectTo(const BrokerAddress& addr) {
  return BrokerClient::Connect(addr.host, addr.port);
}

SessionKeySet LoadKeys(const std::string& path) {
  if (path.empty()) throw ConfigError("--keys is required in full mode");
  return SessionKeySetFromJson(ReadTextFile(path));
}

// Actuator spec "id:kind".
ActuatorState ParseActuator(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("actuator '" + spec + "' is not id:kind");
  auto kind = ParseDeviceKind(spec.substr(colon + 1));
  if (!kind || IsSensor(*kind)) throw ConfigError("'" + spec + "' is not an actuator kind");
  return InitialActuatorState(DeviceId(spec.substr(0, colon)), *kind);
}

std::vector<std::size_t> ParseSizes(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0) {
      throw ConfigError("bad ruleset size '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--rules needs at least one size");
  return out;
}

double Mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

void WriteOrPrint(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    WriteTextFile(path, text);
    std::cerr << "wrote " << path << "\n";
  }
}

// The enclave's sealing key, kept in a file so a restarted enclave can
// still open its store. Stands in for a platform-bound sealing key.
std::optional<SymmetricKey> LoadOrCreateSealingKey(const std::string& path) {
  if (path.empty()) return std::nullopt;
  if (fs::exists(path)) {
    const auto j = nlohmann::json::parse(ReadTextFile(path), nullptr, false);
    if (!j.is_object() || !j.contains("key") || !j["key"].is_string()) {
      throw ConfigError(path + ": not a sealing key file");
    }
    return SymmetricKey(j.value("kid", std::string("k_sgx")),
                        Base64Decode(j["key"].get<std::string>()));
  }
  SymmetricKey k = SymmetricKey::Generate("k_sgx");
  nlohmann::json j = {{"kid", k.key_id()}, {"key", Base64Encode(k.bytes())}};
  WriteTextFile(path, j.dump());
  fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write);
  return k;
}

}  // namespace

int main(int argc, char** argv) {
  // Blocked before any thread starts, so every thread inherits the mask.
  const sigset_t term_set = BlockShutdownSignals();
  sigset_t shutdown_set = term_set;
  sigaddset(&shutdown_set, SIGUSR1);
  pthread_sigmask(SIG_BLOCK, &shutdown_set, nullptr);

  CLI::App app{"Encrypted trigger-action rule engine"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Flat key = value config file; flags win")
      ->check(CLI::ExistingFile);
  Settings settings;

  // Shared option values.
  std::string broker_flag, mode_name = "full", keys_path, platform_path, scenario_path;
  std::string enclave_id = "enclave", out_path, store_path, sealing_key_path;
  std::uint64_t seed = 1;
  std::size_t events = 0, cache = RuleCache::kDefaultCapacity;

  // ---- run ----
  auto* run = app.add_subcommand("run", "Run one long-lived component until signalled");
  run->require_subcommand(1);

  std::string host = "127.0.0.1";
  std::uint16_t port = 1883;
  auto* run_broker = run->add_subcommand("broker", "Topic broker");
  auto* o_host = run_broker->add_option("--host", host, "Listen address");
  auto* o_port = run_broker->add_option("--port", port, "Listen port, 0 for any free port");

  std::vector<std::string> enclave_ids;
  auto* run_server = run->add_subcommand("server", "Attestation and key provisioning server");
  run_server->add_option("--broker", broker_flag, "host:port");
  auto* o_srv_keys = run_server->add_option("--keys", keys_path, "Session keys (keygen)");
  auto* o_srv_platform =
      run_server->add_option("--platform", platform_path, "Platform key file (keygen)");
  run_server->add_option("--enclave-id", enclave_ids, "Enclaves to serve")
      ->default_str("enclave");

  std::uint64_t transition_ns = 2000;
  int attest_attempts = 3;
  auto* run_enclave = run->add_subcommand("enclave", "Rule engine inside the trusted boundary");
  run_enclave->add_option("--broker", broker_flag, "host:port");
  auto* o_enc_mode = run_enclave->add_option("--mode", mode_name, "plain, trusted-noenc, full");
  auto* o_enc_platform = run_enclave->add_option(
      "--platform", platform_path, "Platform key file used to sign the quote");
  auto* o_enc_store = run_enclave->add_option("--store", store_path, "Store log path");
  run_enclave->add_option("--sealing-key", sealing_key_path,
                          "Keep the sealing key here so the store survives restarts");
  auto* o_enc_cache = run_enclave->add_option("--cache", cache, "Cache capacity (devices)");
  auto* o_enc_id = run_enclave->add_option("--enclave-id", enclave_id);
  auto* o_enc_transition =
      run_enclave->add_option("--transition-ns", transition_ns, "Modeled boundary crossing cost");
  run_enclave->add_option("--attest-attempts", attest_attempts)->check(CLI::PositiveNumber);

  std::vector<std::string> actuator_specs;
  auto* run_hub = run->add_subcommand("hub", "Delivers commands to simulated actuators");
  run_hub->add_option("--broker", broker_flag, "host:port");
  auto* o_hub_mode = run_hub->add_option("--mode", mode_name);
  auto* o_hub_keys = run_hub->add_option("--keys", keys_path);
  auto* o_hub_scenario =
      run_hub->add_option("--scenario", scenario_path, "Take actuators from a scenario file");
  run_hub->add_option("--actuator", actuator_specs, "id:kind, repeatable");

  bool paced = false;
  std::string emissions_path;
  auto* run_fleet = run->add_subcommand("fleet", "Simulated sensors publishing readings");
  run_fleet->add_option("--broker", broker_flag, "host:port");
  auto* o_fleet_scenario = run_fleet->add_option("--scenario", scenario_path);
  auto* o_fleet_keys = run_fleet->add_option("--keys", keys_path);
  auto* o_fleet_mode = run_fleet->add_option("--mode", mode_name, "Defaults to the scenario's");
  auto* o_fleet_events = run_fleet->add_option("--events", events, "Defaults to the scenario's");
  auto* o_fleet_seed = run_fleet->add_option("--seed", seed);
  run_fleet->add_flag("--paced", paced, "Honour device emit periods");
  run_fleet->add_option("--emissions", emissions_path, "Write the emission log CSV here");

  // ---- rules ----
  auto* rules = app.add_subcommand("rules", "Validate, provision or generate rulesets");
  rules->require_subcommand(1);
  std::string rules_file;
  auto* rules_validate = rules->add_subcommand("validate", "Parse and check a ruleset file");
  rules_validate->add_option("file", rules_file)->required()->check(CLI::ExistingFile);

  std::uint64_t timeout_ms = 10000;
  auto* rules_provision =
      rules->add_subcommand("provision", "Upload a ruleset to the enclave over the broker");
  rules_provision->add_option("file", rules_file)->required()->check(CLI::ExistingFile);
  rules_provision->add_option("--broker", broker_flag, "host:port");
  auto* o_prov_mode = rules_provision->add_option("--mode", mode_name);
  auto* o_prov_keys = rules_provision->add_option("--keys", keys_path, "Holds the rules key");
  auto* o_prov_timeout = rules_provision->add_option("--timeout-ms", timeout_ms);

  std::size_t gen_count = 100, gen_devices = 32;
  auto* rules_generate =
      rules->add_subcommand("generate", "Write a synthetic ruleset like the benchmark's");
  rules_generate->add_option("--count", gen_count)->check(CLI::PositiveNumber);
  rules_generate->add_option("--devices", gen_devices)->check(CLI::PositiveNumber);
  rules_generate->add_option("--seed", seed);
  rules_generate->add_option("--out", out_path, "Output file, - for stdout");

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "Per-event latency across protection modes");
  std::string bench_mode = "all", sizes = "100,400,1000,5000,10000", pattern_name = "round-robin";
  std::string policy_name = "lru";
  std::size_t devices = 32, workers = 1;
  std::size_t bench_events = 10000, bench_cache = 100;
  auto* o_b_mode = bench->add_option("--mode", bench_mode, "plain, trusted-noenc, full or all");
  auto* o_b_rules = bench->add_option("--rules", sizes, "Comma-separated ruleset sizes");
  auto* o_b_devices = bench->add_option("--devices", devices);
  auto* o_b_events = bench->add_option("--events", bench_events);
  auto* o_b_cache = bench->add_option("--cache", bench_cache);
  auto* o_b_seed = bench->add_option("--seed", seed);
  auto* o_b_workers = bench->add_option("--workers", workers);
  auto* o_b_pattern =
      bench->add_option("--pattern", pattern_name, "round-robin, uniform or zipf");
  auto* o_b_policy = bench->add_option("--policy", policy_name, "lru or lfu");
  auto* o_b_transition = bench->add_option("--transition-ns", transition_ns);
  bench->add_option("--out", out_path, "CSV output, stdout when absent");

  // ---- trace ----
  auto* trace = app.add_subcommand("trace", "Access-trace distinguishability matrix");
  std::string fixture = "home";
  double threshold = 0.05, alpha = 1e-3;
  trace->add_option("--fixture", fixture)->check(CLI::IsMember({"home"}));
  auto* o_t_seed = trace->add_option("--seed", seed);
  auto* o_t_threshold = trace->add_option("--threshold", threshold);
  auto* o_t_alpha = trace->add_option("--alpha", alpha, "Smoothing added to every bigram");
  trace->add_option("--out", out_path, "CSV output, stdout when absent");

  // ---- keygen ----
  auto* keygen = app.add_subcommand("keygen", "Create device/rules keys and a platform key");
  std::vector<std::string> key_devices;
  std::string out_dir = ".";
  keygen->add_option("--scenario", scenario_path, "Take devices from a scenario file");
  keygen->add_option("--device", key_devices, "Device id, repeatable");
  keygen->add_option("--out-dir", out_dir);

  // ---- scenario ----
  auto* scenario_cmd =
      app.add_subcommand("scenario", "Run a scenario file end to end in one process");
  scenario_cmd->add_option("file", scenario_path)->required()->check(CLI::ExistingFile);
  auto* o_s_mode = scenario_cmd->add_option("--mode", mode_name, "Defaults to the scenario's");
  auto* o_s_events = scenario_cmd->add_option("--events", events);
  scenario_cmd->add_option("--emissions", emissions_path, "Write the emission log CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    settings.Load(config_path);

    if (run_broker->parsed()) {
      settings.Apply(o_host, "host", host);
      settings.Apply(o_port, "port", port);
      BrokerOptions bo;
      bo.host = host;
      bo.port = port;
      Broker broker(bo);
      broker.Start();
      std::cout << "broker listening on " << broker.host() << ":" << broker.port() << std::endl;
      WaitForShutdown(term_set);
      broker.Stop();
      std::cout << "broker stopped" << std::endl;
      return 0;
    }

    if (run_server->parsed()) {
      settings.Apply(o_srv_keys, "keys", keys_path);
      settings.Apply(o_srv_platform, "platform", platform_path);
      if (platform_path.empty()) throw ConfigError("--platform is required");
      if (enclave_ids.empty()) {
        enclave_ids.push_back(settings.root().String("enclave_id").value_or("enclave"));
      }
      ProvisioningServer server(Measure(AsBytes(DefaultBuildInfo())),
                                PlatformVerificationKeyFromJson(ReadTextFile(platform_path)),
                                LoadKeys(keys_path));
      AttestationService service(server, enclave_ids,
                                 ConnectTo(ResolveBroker(broker_flag, settings)));
      std::cout << "attestation server ready" << std::endl;
      WaitForShutdown(term_set);
      service.Stop();
      std::cout << "provisioned " << server.provisioned_count() << ", rejected "
                << server.rejected_count() << std::endl;
      return 0;
    }

    if (run_enclave->parsed()) {
      settings.Apply(o_enc_mode, "mode", mode_name);
      settings.Apply(o_enc_platform, "platform", platform_path);
      settings.Apply(o_enc_store, "store", store_path);
      settings.Apply(o_enc_cache, "cache", cache);
      settings.Apply(o_enc_id, "enclave_id", enclave_id);
      settings.Apply(o_enc_transition, "transition_ns", transition_ns);
      BoundaryConfig bc;
      bc.mode = RequireMode(mode_name);
      bc.cache_capacity = cache;
      bc.enclave_id = enclave_id;
      bc.transition_cost = std::chrono::nanoseconds(transition_ns);
      if (!store_path.empty()) bc.store_path = store_path;
      const BrokerAddress addr = ResolveBroker(broker_flag, settings);

      SessionKeySet keys;
      if (bc.mode == Mode::kFull) {
        if (platform_path.empty()) throw ConfigError("--platform is required in full mode");
        const PlatformSigner platform = PlatformSignerFromJson(ReadTextFile(platform_path));
        EnclaveHandshake hs(enclave_id, AsBytes(DefaultBuildInfo()), platform);
        auto client = ConnectTo(addr);
        AttestOptions opts;
        opts.attempts = attest_attempts;
        keys = AttestOverBroker(*client, hs, opts);
        std::cout << "attested; " << keys.device_keys.size() << " device keys" << std::endl;
      }
      keys.k_sgx = LoadOrCreateSealingKey(sealing_key_path);
      TrustedBoundary boundary(bc, std::move(keys));
      EnclaveNode node(boundary, ConnectTo(addr));
      std::cout << "enclave running (" << ModeName(bc.mode) << ")" << std::endl;
      WaitForShutdown(term_set);
      node.Stop();
      boundary.FlushStore();
      const EnclaveNodeStats s = node.stats();
      std::cout << "events " << s.events << ", commands " << s.commands << ", rejected "
                << s.rejected << ", uploads " << s.uploads << std::endl;
      return 0;
    }

    if (run_hub->parsed()) {
      settings.Apply(o_hub_mode, "mode", mode_name);
      settings.Apply(o_hub_keys, "keys", keys_path);
      settings.Apply(o_hub_scenario, "scenario", scenario_path);
      const Mode mode = RequireMode(mode_name);
      SessionKeySet keys;
      if (mode == Mode::kFull) keys = LoadKeys(keys_path);
      Hub hub("hub", keys.device_keys, mode);
      if (!scenario_path.empty()) {
        for (const DeviceProfile& p : LoadScenario(scenario_path).profiles) {
          if (!IsSensor(p.kind)) hub.AddActuator(InitialActuatorState(p.device, p.kind));
        }
      }
      for (const std::string& spec : actuator_specs) hub.AddActuator(ParseActuator(spec));
      if (hub.actuators().empty()) throw ConfigError("hub has no actuators");
      HubNode node(hub, ConnectTo(ResolveBroker(broker_flag, settings)));
      std::cout << "hub serving " << hub.actuators().size() << " actuators" << std::endl;
      WaitForShutdown(term_set);
      node.Stop();
      const HubStats s = hub.stats();
      std::cout << "applied " << s.applied << ", tampered " << s.tampered << ", rejected "
                << s.rejected << std::endl;
      for (const DeviceId& d : hub.actuators()) {
        const std::optional<ActuatorState> st = hub.actuator(d);
        std::cout << d.value();
        for (const auto& [attr, v] : st->attributes) {
          std::cout << " " << attr << "=" << ScalarToString(v);
        }
        std::cout << "\n";
      }
      return 0;
    }

    if (run_fleet->parsed()) {
      settings.Apply(o_fleet_scenario, "scenario", scenario_path);
      settings.Apply(o_fleet_keys, "keys", keys_path);
      settings.Apply(o_fleet_seed, "seed", seed);
      settings.Apply(o_fleet_events, "events", events);
      if (scenario_path.empty()) throw ConfigError("--scenario is required");
      const Scenario sc = LoadScenario(scenario_path);
      if (o_fleet_mode->count() == 0 && !settings.root().Has("mode")) {
        mode_name = std::string(ModeName(sc.mode));
      }
      settings.Apply(o_fleet_mode, "mode", mode_name);
      const Mode mode = RequireMode(mode_name);
      if (o_fleet_seed->count() == 0 && !settings.root().Has("seed")) seed = sc.seed;
      if (events == 0) events = sc.events;
      SessionKeySet keys;
      if (mode == Mode::kFull) keys = LoadKeys(keys_path);
      Hub hub("fleet", keys.device_keys, mode);
      HubNode node(hub, ConnectTo(ResolveBroker(broker_flag, settings)));

      struct Interrupted {};
      ShutdownFlag flag(shutdown_set);
      std::vector<EmissionRecord> log;
      try {
        log = RunFleet(
            sc.profiles, events,
            [&](const DeviceEvent& e) {
              if (flag.stopped()) throw Interrupted{};
              node.Send(e);
            },
            FleetOptions{seed, paced});
      } catch (const Interrupted&) {
        std::cerr << "interrupted\n";
      }
      node.Stop();
      std::cout << "sent " << hub.stats().upstream << " readings" << std::endl;
      if (!emissions_path.empty()) WriteTextFile(emissions_path, EmissionLogCsv(log));
      return 0;
    }

    if (rules_validate->parsed()) {
      const std::vector<Rule> rs = ParseRuleset(ReadTextFile(rules_file));
      std::set<DeviceId> triggers;
      for (const Rule& r : rs) {
        for (const DeviceId& d : r.TriggerDevices()) triggers.insert(d);
      }
      std::cout << "valid: " << rs.size() << " rules over " << triggers.size()
                << " trigger devices" << std::endl;
      return 0;
    }

    if (rules_provision->parsed()) {
      settings.Apply(o_prov_mode, "mode", mode_name);
      settings.Apply(o_prov_keys, "keys", keys_path);
      settings.Apply(o_prov_timeout, "timeout_ms", timeout_ms);
      const Mode mode = RequireMode(mode_name);
      const std::vector<Rule> rs = ParseRuleset(ReadTextFile(rules_file));
      std::optional<SymmetricKey> rules_key;
      if (mode == Mode::kFull) {
        rules_key = LoadKeys(keys_path).rules_key;
        if (!rules_key) throw ConfigError(keys_path + " has no rules key");
      }
      auto client = ConnectTo(ResolveBroker(broker_flag, settings));
      const ProvisionSummary s = ProvisionOverBroker(*client, rs, rules_key,
                                                     std::chrono::milliseconds(timeout_ms));
      std::cout << "provisioned " << s.devices << " devices / " << s.rules << " rules"
                << std::endl;
      return 0;
    }

    if (rules_generate->parsed()) {
      if (gen_count < gen_devices) throw ConfigError("--count must be at least --devices");
      WriteOrPrint(out_path, SerializeRuleset(GenerateRuleset(gen_count, gen_devices, seed)));
      return 0;
    }

    if (bench->parsed()) {
      settings.Apply(o_b_mode, "mode", bench_mode);
      settings.Apply(o_b_rules, "rules", sizes);
      settings.Apply(o_b_devices, "devices", devices);
      settings.Apply(o_b_events, "events", bench_events);
      settings.Apply(o_b_cache, "cache", bench_cache);
      settings.Apply(o_b_seed, "seed", seed);
      settings.Apply(o_b_workers, "workers", workers);
      settings.Apply(o_b_pattern, "pattern", pattern_name);
      settings.Apply(o_b_policy, "policy", policy_name);
      settings.Apply(o_b_transition, "transition_ns", transition_ns);

      std::vector<Mode> modes;
      if (bench_mode == "all") {
        modes = {Mode::kPlain, Mode::kTrustedNoEnc, Mode::kFull};
      } else {
        modes = {RequireMode(bench_mode)};
      }
      auto pattern = ParseAccessPattern(pattern_name);
      if (!pattern) throw ConfigError("unknown pattern '" + pattern_name + "'");
      auto policy = ParseCachePolicy(policy_name);
      if (!policy) throw ConfigError("unknown cache policy '" + policy_name + "'");

      std::vector<BenchResult> results;
      for (std::size_t size : ParseSizes(sizes)) {
        BenchConfig cfg;
        cfg.mode = modes.front();
        cfg.ruleset_size = size;
        cfg.devices = devices;
        cfg.events = bench_events;
        cfg.cache_capacity = bench_cache;
        cfg.cache_policy = *policy;
        cfg.seed = seed;
        cfg.workers = workers;
        cfg.pattern = *pattern;
        cfg.transition_cost = std::chrono::nanoseconds(transition_ns);
        ValidateBenchConfig(cfg);
        // Several modes on one worker run interleaved, so they are compared
        // under the same machine conditions.
        std::vector<BenchResult> row;
        if (modes.size() > 1 && workers == 1) {
          std::cerr << "bench rules=" << size << " interleaved ..." << std::flush;
          row = RunBenchInterleaved(cfg, modes);
        } else {
          std::cerr << "bench rules=" << size << " ..." << std::flush;
          for (Mode m : modes) {
            cfg.mode = m;
            row.push_back(RunBench(cfg));
          }
        }
        for (const BenchResult& r : row) std::cerr << " " << ModeName(r.config.mode) << "=" << r.mean_us << "us";
        std::cerr << "\n";
        results.insert(results.end(), row.begin(), row.end());
      }
      std::cerr << BenchTable(results);
      WriteOrPrint(out_path, BenchCsv(results));
      return 0;
    }

    if (trace->parsed()) {
      settings.Apply(o_t_seed, "seed", seed);
      settings.Apply(o_t_threshold, "threshold", threshold);
      settings.Apply(o_t_alpha, "alpha", alpha);
      const ScoreMatrix m = DistinguishabilityReport(HomeTraceFixture(seed), threshold, alpha);
      WriteOrPrint(out_path, ScoreMatrixCsv(m));
      for (const auto& [i, j] : m.flagged) {
        std::cerr << "indistinguishable: " << m.names[i] << " vs " << m.names[j] << "\n";
      }
      return 0;
    }

    if (keygen->parsed()) {
      std::vector<DeviceId> ids;
      if (!scenario_path.empty()) ids = LoadScenario(scenario_path).devices();
      for (const std::string& d : key_devices) ids.emplace_back(d);
      if (ids.empty()) throw ConfigError("keygen needs --scenario or --device");
      fs::create_directories(out_dir);
      const fs::path keys_file = fs::path(out_dir) / "keys.json";
      const fs::path platform_file = fs::path(out_dir) / "platform.json";
      WriteTextFile(keys_file, SessionKeySetToJson(GenerateSessionKeys(ids)));
      WriteTextFile(platform_file, PlatformKeyToJson(PlatformSigner::Generate()));
      for (const fs::path& p : {keys_file, platform_file}) {
        fs::permissions(p, fs::perms::owner_read | fs::perms::owner_write);
      }
      std::cout << "wrote " << keys_file.string() << " (" << ids.size() << " devices) and "
                << platform_file.string() << std::endl;
      return 0;
    }

    if (scenario_cmd->parsed()) {
      Scenario sc = LoadScenario(scenario_path);
      if (o_s_mode->count() > 0) sc.mode = RequireMode(mode_name);
      if (o_s_events->count() > 0) sc.events = events;
      const std::vector<Rule> rs = ParseRuleset(ReadTextFile(sc.rules_file));
      const ScenarioReport r = RunScenario(sc, rs);
      std::cout << "scenario " << sc.name << " (" << ModeName(sc.mode) << ")\n"
                << "  provisioned " << r.provisioned.devices << " devices / "
                << r.provisioned.rules << " rules\n"
                << "  readings " << r.emitted << ", commands applied " << r.commands_applied
                << ", tampered " << r.tampered << "\n";
      std::printf("  mean end-to-end %.1f us, in engine %.1f us\n", Mean(r.end_to_end_us),
                  Mean(r.execution_us));
      for (const ActuatorState& st : r.final_states) {
        std::cout << "  " << st.device.value();
        for (const auto& [attr, v] : st.attributes) {
          std::cout << " " << attr << "=" << ScalarToString(v);
        }
        std::cout << "\n";
      }
      if (!emissions_path.empty()) WriteTextFile(emissions_path, r.emission_csv);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << ErrorCodeName(e.code()) << ": " << e.what() << std::endl;
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
