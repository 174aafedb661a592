#ifndef SEALEDRULES_SERVICES_H_
#define SEALEDRULES_SERVICES_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sealedrules/attestation.h"
#include "sealedrules/boundary.h"
#include "sealedrules/broker.h"
#include "sealedrules/config.h"

// Long-running components that talk to each other over the broker.

namespace sealedrules {

// Answers quotes published on attest/<enclave_id> with a server hello and a
// provisioning message. A rejected quote gets no answer at all.
class AttestationService {
 public:
  AttestationService(ProvisioningServer& server, std::vector<std::string> enclave_ids,
                     std::unique_ptr<BrokerClient> client);
  ~AttestationService();
  void Stop();

 private:
  void Loop();

  ProvisioningServer& server_;
  std::unique_ptr<BrokerClient> client_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

struct AttestOptions {
  int attempts = 3;
  std::chrono::milliseconds wait{2000};  // per attempt
};

// Enclave half of the handshake over the broker. Publishes the quote and
// waits for the server's answer, retrying. Throws ConfigError when no
// attestation server answers.
SessionKeySet AttestOverBroker(BrokerClient& client, const EnclaveHandshake& handshake,
                               const AttestOptions& options = {});

struct EnclaveNodeStats {
  std::uint64_t events = 0;
  std::uint64_t commands = 0;
  std::uint64_t rejected = 0;  // events or uploads that failed
  std::uint64_t uploads = 0;
};

// Serves a TrustedBoundary on the broker: events from evt/+ are handled
// and their commands published; uploads on prov/rules are provisioned and
// answered on prov/rules with {"type":"ack","devices":n,"rules":m}, or
// {"type":"nack","error":name}.
class EnclaveNode {
 public:
  EnclaveNode(TrustedBoundary& boundary, std::unique_ptr<BrokerClient> client);
  ~EnclaveNode();
  void Stop();

  EnclaveNodeStats stats() const;
  // Time spent inside HandleEvent, per handled event.
  std::vector<double> execution_us() const;

 private:
  void Loop();
  void OnUpload(const Frame& f);
  void OnEvent(const Frame& f);

  TrustedBoundary& boundary_;
  std::unique_ptr<BrokerClient> client_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
  mutable std::mutex mu_;
  EnclaveNodeStats stats_;
  std::vector<double> execution_us_;
};

// Uploads a ruleset on prov/rules, split into messages that fit the broker
// and encrypted under the rules key when one is given, and waits for the
// enclave to acknowledge each. Throws PublishError on a nack or timeout.
ProvisionSummary ProvisionOverBroker(BrokerClient& client, const std::vector<Rule>& rules,
                                     const std::optional<SymmetricKey>& rules_key,
                                     std::chrono::milliseconds timeout =
                                         std::chrono::milliseconds(10000));

// Platform key pair of the simulated attestation layer, as written by
// keygen: {"private": b64, "public": b64}.
std::string PlatformKeyToJson(const PlatformSigner& signer);
PlatformSigner PlatformSignerFromJson(std::string_view text);
PublicKey PlatformVerificationKeyFromJson(std::string_view text);

// Fresh session keys for the devices plus a rules key.
SessionKeySet GenerateSessionKeys(const std::vector<DeviceId>& devices);

struct ScenarioReport {
  std::size_t emitted = 0;
  std::size_t commands_applied = 0;
  std::size_t tampered = 0;
  ProvisionSummary provisioned;
  // Per applied command: reading sent to command applied, and the part of
  // that spent inside the engine. The remainder is transport.
  std::vector<double> end_to_end_us;
  std::vector<double> execution_us;
  std::vector<ActuatorState> final_states;
  std::string emission_csv;
};

// Runs a scenario end to end in one process: broker, attestation server,
// enclave, hub and fleet, with readings sent one at a time. `capture`, when
// set, sees every frame the broker reads or writes.
ScenarioReport RunScenario(const Scenario& scenario, const std::vector<Rule>& rules,
                           std::chrono::milliseconds per_event_timeout =
                               std::chrono::milliseconds(2000),
                           Broker::Capture capture = nullptr);

}  // namespace sealedrules

#endif  // SEALEDRULES_SERVICES_H_
