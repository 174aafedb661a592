#include "sealedrules/services.h"

#include <set>

#include "json.hpp"
#include "sealedrules/error.h"
#include "sealedrules/hub.h"

namespace sealedrules {

using json = nlohmann::json;

namespace {

constexpr auto kPoll = std::chrono::milliseconds(50);

// The "type" member of a JSON object payload, or "" for anything else.
std::string ControlType(ByteView payload) {
  const json j = json::parse(payload.begin(), payload.end(), nullptr, false);
  if (!j.is_object()) return "";
  auto it = j.find("type");
  return it != j.end() && it->is_string() ? it->get<std::string>() : "";
}

}  // namespace

// ---------------------------------------------------------------------------

AttestationService::AttestationService(ProvisioningServer& server,
                                       std::vector<std::string> enclave_ids,
                                       std::unique_ptr<BrokerClient> client)
    : server_(server), client_(std::move(client)) {
  for (const std::string& id : enclave_ids) client_->Subscribe(AttestTopic(id));
  thread_ = std::thread([this] { Loop(); });
}

AttestationService::~AttestationService() { Stop(); }

void AttestationService::Stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

void AttestationService::Loop() {
  while (!stop_) {
    std::optional<Frame> f = client_->Receive(kPoll);
    if (!f) {
      if (!client_->connected()) return;
      continue;
    }
    const std::string text = ToString(f->payload);
    if (HandshakeMessageType(text) != "quote") continue;
    const std::string enclave_id = f->topic.substr(std::string_view("attest/").size());
    try {
      const ServerHello hello = server_.ProvisionKeys(enclave_id, QuoteFromJson(text));
      client_->Publish(f->topic, AsBytes(ServerHelloToJson(hello)));
      client_->Publish(f->topic, AsBytes(ProvisioningMessageToJson(hello)));
    } catch (const Error&) {
      // Rejected or malformed quotes get no answer.
    }
  }
}

SessionKeySet AttestOverBroker(BrokerClient& client, const EnclaveHandshake& handshake,
                               const AttestOptions& options) {
  const std::string topic = AttestTopic(handshake.enclave_id());
  client.Subscribe(topic);
  const std::string quote = QuoteMessageToJson(handshake.enclave_id(), handshake.quote());
  for (int attempt = 0; attempt < options.attempts; ++attempt) {
    client.Publish(topic, AsBytes(quote));
    std::optional<PublicKey> server_public;
    const auto deadline = std::chrono::steady_clock::now() + options.wait;
    while (std::chrono::steady_clock::now() < deadline) {
      std::optional<Frame> f = client.Receive(kPoll);
      if (!f || f->topic != topic) continue;
      const std::string text = ToString(f->payload);
      const std::string type = HandshakeMessageType(text);
      try {
        if (type == "server_hello") {
          server_public = ServerHelloFromJson(text);
        } else if (type == "provisioning" && server_public) {
          return handshake.Complete(ServerHello{*server_public, ProvisioningFromJson(text)});
        }
      } catch (const AuthenticationError&) {
        // An answer to some other handshake on the same topic; keep waiting.
      }
    }
  }
  throw ConfigError("no attestation server answered on " + topic);
}

// ---------------------------------------------------------------------------

EnclaveNode::EnclaveNode(TrustedBoundary& boundary, std::unique_ptr<BrokerClient> client)
    : boundary_(boundary), client_(std::move(client)) {
  client_->Subscribe("evt/+");
  client_->Subscribe(kProvisionTopic);
  thread_ = std::thread([this] { Loop(); });
}

EnclaveNode::~EnclaveNode() { Stop(); }

void EnclaveNode::Stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

EnclaveNodeStats EnclaveNode::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::vector<double> EnclaveNode::execution_us() const {
  std::lock_guard lock(mu_);
  return execution_us_;
}

void EnclaveNode::Loop() {
  while (!stop_) {
    std::optional<Frame> f = client_->Receive(kPoll);
    if (!f) {
      if (!client_->connected()) return;
      continue;
    }
    try {
      if (f->topic == kProvisionTopic) {
        OnUpload(*f);
      } else {
        OnEvent(*f);
      }
    } catch (const Error&) {
      // Publishing failed; the broker connection is going away.
    }
  }
}

void EnclaveNode::OnUpload(const Frame& f) {
  if (!ControlType(f.payload).empty()) return;  // our own acks
  json reply;
  try {
    const ProvisionSummary s = boundary_.ProvisionRuleset(f.payload);
    reply = {{"type", "ack"}, {"devices", s.devices}, {"rules", s.rules}};
    std::lock_guard lock(mu_);
    ++stats_.uploads;
  } catch (const Error& e) {
    reply = {{"type", "nack"}, {"error", std::string(ErrorCodeName(e.code()))}};
    std::lock_guard lock(mu_);
    ++stats_.rejected;
  }
  client_->Publish(kProvisionTopic, AsBytes(reply.dump()));
}

void EnclaveNode::OnEvent(const Frame& f) {
  std::vector<OutboundMessage> out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    out = boundary_.HandleEvent(f.topic, f.payload);
  } catch (const Error&) {
    std::lock_guard lock(mu_);
    ++stats_.rejected;
    ++stats_.events;
    return;
  }
  const double us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
  for (const OutboundMessage& m : out) client_->Publish(m.topic, m.payload);
  std::lock_guard lock(mu_);
  execution_us_.push_back(us);
  stats_.commands += out.size();
  ++stats_.events;
}

ProvisionSummary ProvisionOverBroker(BrokerClient& client, const std::vector<Rule>& rules,
                                     const std::optional<SymmetricKey>& rules_key,
                                     std::chrono::milliseconds timeout) {
  client.Subscribe(kProvisionTopic);
  std::optional<Encryptor> uploader;
  if (rules_key) uploader.emplace(*rules_key);

  ProvisionSummary total;
  for (const std::string& part : SplitRulesetUpload(rules, kMaxUploadPlaintext)) {
    Bytes payload = uploader ? ToBytes(EnvelopeToJson(uploader->Encrypt(
                                   AsBytes(part), AsBytes(kProvisionTopic), "rules-client")))
                             : ToBytes(part);
    try {
      client.Publish(kProvisionTopic, payload);
    } catch (const Error& e) {
      throw PublishError(std::string("upload failed: ") + e.what());
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (std::chrono::steady_clock::now() >= deadline) {
        throw PublishError("no acknowledgement from the enclave");
      }
      std::optional<Frame> f = client.Receive(kPoll);
      if (!f || f->topic != kProvisionTopic) continue;
      const std::string type = ControlType(f->payload);
      if (type.empty()) continue;  // an upload, possibly our own
      const json j = json::parse(f->payload.begin(), f->payload.end());
      if (type == "nack") {
        throw PublishError("enclave rejected the ruleset: " + j.value("error", std::string("?")));
      }
      if (type == "ack") {
        total.rules += j.value("rules", std::size_t{0});
        break;
      }
    }
  }
  std::set<DeviceId> devices;
  for (const Rule& r : rules) {
    for (const DeviceId& d : r.TriggerDevices()) devices.insert(d);
  }
  total.devices = devices.size();
  return total;
}

std::string PlatformKeyToJson(const PlatformSigner& signer) {
  json j;
  j["private"] = Base64Encode(signer.private_bytes());
  j["public"] = Base64Encode(signer.verification_key());
  return j.dump(2);
}

namespace {

std::string PlatformField(std::string_view text, const char* name) {
  const json j = json::parse(text, nullptr, false);
  if (!j.is_object() || !j.contains(name) || !j[name].is_string()) {
    throw ConfigError(std::string("platform key file lacks '") + name + "'");
  }
  return j[name].get<std::string>();
}

}  // namespace

PlatformSigner PlatformSignerFromJson(std::string_view text) {
  return PlatformSigner::FromPrivateBytes(Base64Decode(PlatformField(text, "private")));
}

PublicKey PlatformVerificationKeyFromJson(std::string_view text) {
  const Bytes raw = Base64Decode(PlatformField(text, "public"));
  if (raw.size() != 32) throw ConfigError("platform public key must be 32 bytes");
  PublicKey pk;
  std::copy(raw.begin(), raw.end(), pk.begin());
  return pk;
}

SessionKeySet GenerateSessionKeys(const std::vector<DeviceId>& devices) {
  SessionKeySet keys;
  for (const DeviceId& d : devices) {
    keys.device_keys.emplace(d, SymmetricKey::Generate("dk-" + d.value()));
  }
  keys.rules_key = SymmetricKey::Generate("rules");
  return keys;
}

// ---------------------------------------------------------------------------

ScenarioReport RunScenario(const Scenario& scenario, const std::vector<Rule>& rules,
                           std::chrono::milliseconds per_event_timeout,
                           Broker::Capture capture) {
  Broker broker;
  if (capture) broker.SetCapture(std::move(capture));
  broker.Start();
  auto connect = [&] { return BrokerClient::Connect(broker.host(), broker.port()); };

  const SessionKeySet server_keys = GenerateSessionKeys(scenario.devices());
  const PlatformSigner platform = PlatformSigner::Generate();
  const std::string build = DefaultBuildInfo();
  ProvisioningServer server(Measure(AsBytes(build)), platform.verification_key(),
                            server_keys);

  BoundaryConfig bc;
  bc.mode = scenario.mode;
  SessionKeySet enclave_keys;
  std::optional<AttestationService> attestation;
  if (scenario.mode == Mode::kFull) {
    attestation.emplace(server, std::vector<std::string>{bc.enclave_id}, connect());
    auto c = connect();
    EnclaveHandshake hs(bc.enclave_id, AsBytes(build), platform);
    enclave_keys = AttestOverBroker(*c, hs);
  }
  TrustedBoundary boundary(bc, enclave_keys);
  EnclaveNode enclave(boundary, connect());

  ScenarioReport report;
  {
    auto c = connect();
    report.provisioned = ProvisionOverBroker(
        *c, rules, scenario.mode == Mode::kFull ? server_keys.rules_key : std::nullopt);
  }

  Hub hub("hub", server_keys.device_keys, scenario.mode);
  for (const DeviceProfile& p : scenario.profiles) {
    if (!IsSensor(p.kind)) hub.AddActuator(InitialActuatorState(p.device, p.kind));
  }
  HubNode node(hub, connect());

  std::uint64_t sent = 0;
  auto wait_for = [&](auto&& done) {
    const auto deadline = std::chrono::steady_clock::now() + per_event_timeout;
    while (!done()) {
      if (std::chrono::steady_clock::now() >= deadline) {
        throw TimeoutError("scenario stalled waiting for the enclave");
      }
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  };
  const std::vector<EmissionRecord> log = RunFleet(
      scenario.profiles, scenario.events,
      [&](const DeviceEvent& e) {
        node.Send(e);
        ++sent;
        wait_for([&] { return enclave.stats().events >= sent; });
        const std::uint64_t commands = enclave.stats().commands;
        if (!node.WaitForCommands(commands, per_event_timeout)) {
          throw TimeoutError("scenario stalled waiting for commands");
        }
      },
      FleetOptions{scenario.seed, false});

  node.Stop();
  enclave.Stop();
  if (attestation) attestation->Stop();
  broker.Stop();

  report.emitted = log.size();
  report.emission_csv = EmissionLogCsv(log);
  const HubStats hs = hub.stats();
  report.commands_applied = hs.applied;
  report.tampered = hs.tampered;
  report.end_to_end_us = hub.latencies_us();
  report.execution_us = enclave.execution_us();
  for (const DeviceId& d : hub.actuators()) report.final_states.push_back(*hub.actuator(d));
  return report;
}

}  // namespace sealedrules
