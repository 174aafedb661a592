#ifndef SEALEDRULES_HUB_H_
#define SEALEDRULES_HUB_H_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sealedrules/boundary.h"
#include "sealedrules/broker.h"
#include "sealedrules/crypto.h"
#include "sealedrules/device_sim.h"
#include "sealedrules/rule.h"

namespace sealedrules {

struct HubStats {
  std::uint64_t upstream = 0;
  std::uint64_t applied = 0;
  // Command messages that failed verification; nothing was forwarded.
  std::uint64_t tampered = 0;
  // Authentic commands the actuator refused (unknown command, bad args).
  std::uint64_t rejected = 0;
};

// Local gateway between devices and the broker. Upstream it wraps readings
// into envelopes on evt/<device>; downstream it verifies command envelopes
// from cmd/<device> and applies them to the local actuator. In modes other
// than kFull the payloads are plain JSON.
class Hub {
 public:
  Hub(std::string hub_id, std::map<DeviceId, SymmetricKey> keys,
      Mode mode = Mode::kFull);

  void AddActuator(ActuatorState initial);
  std::vector<DeviceId> actuators() const;
  std::optional<ActuatorState> actuator(const DeviceId& d) const;

  // Throws KeyMismatch for a device without a session key (kFull only).
  OutboundMessage Upstream(const DeviceEvent& reading);

  // Opens a message received on cmd/<device>. Throws AuthenticationError
  // for anything that is not a command for that device under its key (in
  // kFull), including malformed envelopes.
  ActionCommand VerifyCommand(std::string_view topic, ByteView payload) const;

  // Returns the command that was applied, or nothing when the message was
  // dropped (failed verification, unknown actuator, refused by the device).
  std::optional<ActionCommand> Downstream(std::string_view topic,
                                          ByteView payload);

  HubStats stats() const;
  // Time from the most recent upstream reading to each applied command, in
  // microseconds. Meaningful when readings are sent one at a time.
  std::vector<double> latencies_us() const;

 private:
  std::string hub_id_;
  Mode mode_;
  std::map<DeviceId, SymmetricKey> keys_;
  std::map<DeviceId, std::unique_ptr<Encryptor>> encryptors_;
  mutable std::mutex mu_;
  std::map<DeviceId, ActuatorState> actuators_;
  HubStats stats_;
  std::int64_t last_upstream_us_ = 0;
  std::vector<double> latencies_us_;
};

// Hub attached to a broker: publishes readings and applies the commands
// delivered on cmd/<actuator> by a background thread.
class HubNode {
 public:
  HubNode(Hub& hub, std::unique_ptr<BrokerClient> client);
  ~HubNode();

  // Throws the publish errors of BrokerClient.
  void Send(const DeviceEvent& reading);
  // Blocks until `count` commands have been applied or dropped, or timeout.
  bool WaitForCommands(std::uint64_t count, std::chrono::milliseconds timeout);
  void Stop();

 private:
  void Loop();

  Hub& hub_;
  std::unique_ptr<BrokerClient> client_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t handled_ = 0;
};

}  // namespace sealedrules

#endif  // SEALEDRULES_HUB_H_
