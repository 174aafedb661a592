#include "sealedrules/hub.h"

#include "sealedrules/error.h"

namespace sealedrules {

Hub::Hub(std::string hub_id, std::map<DeviceId, SymmetricKey> keys, Mode mode)
    : hub_id_(std::move(hub_id)), mode_(mode), keys_(std::move(keys)) {
  for (const auto& [device, key] : keys_) {
    encryptors_.emplace(device, std::make_unique<Encryptor>(key));
  }
}

void Hub::AddActuator(ActuatorState initial) {
  std::lock_guard lock(mu_);
  const DeviceId d = initial.device;
  actuators_.insert_or_assign(d, std::move(initial));
}

std::vector<DeviceId> Hub::actuators() const {
  std::lock_guard lock(mu_);
  std::vector<DeviceId> out;
  for (const auto& [d, s] : actuators_) out.push_back(d);
  return out;
}

std::optional<ActuatorState> Hub::actuator(const DeviceId& d) const {
  std::lock_guard lock(mu_);
  auto it = actuators_.find(d);
  if (it == actuators_.end()) return std::nullopt;
  return it->second;
}

OutboundMessage Hub::Upstream(const DeviceEvent& reading) {
  std::string topic = EventTopic(reading.device);
  const std::string text = SerializeEvent(reading);
  Bytes payload;
  if (mode_ == Mode::kFull) {
    auto it = encryptors_.find(reading.device);
    if (it == encryptors_.end()) {
      throw KeyMismatch("hub holds no key for '" + reading.device.value() + "'");
    }
    // The hub encrypts on the device's behalf, so the device is the sender.
    payload = ToBytes(EnvelopeToJson(
        it->second->Encrypt(AsBytes(text), AsBytes(topic), reading.device.value())));
  } else {
    payload = ToBytes(text);
  }
  std::lock_guard lock(mu_);
  ++stats_.upstream;
  last_upstream_us_ = NowMicros();
  return OutboundMessage{std::move(topic), std::move(payload)};
}

ActionCommand Hub::VerifyCommand(std::string_view topic, ByteView payload) const {
  const std::optional<DeviceId> target = DeviceFromTopic(topic, "cmd/");
  if (!target) throw AuthenticationError("not a command topic: '" + std::string(topic) + "'");
  try {
    std::string text;
    if (mode_ == Mode::kFull) {
      const Envelope env = EnvelopeFromJson(ToString(payload));
      auto key = keys_.find(*target);
      if (key == keys_.end() || ToString(env.aad) != topic) {
        throw AuthenticationError("command not bound to " + std::string(topic));
      }
      Bytes plain = Decrypt(key->second, env);
      text = ToString(plain);
      SecureZero(plain);
    } else {
      text = ToString(payload);
    }
    ActionCommand cmd = ParseCommand(text);
    if (cmd.device != *target) {
      throw AuthenticationError("command device does not match its topic");
    }
    return cmd;
  } catch (const AuthenticationError&) {
    throw;
  } catch (const Error& e) {
    throw AuthenticationError(std::string("command message: ") + e.what());
  }
}

std::optional<ActionCommand> Hub::Downstream(std::string_view topic,
                                             ByteView payload) {
  std::optional<ActionCommand> verified;
  try {
    verified = VerifyCommand(topic, payload);
  } catch (const AuthenticationError&) {
    std::lock_guard lock(mu_);
    ++stats_.tampered;
    return std::nullopt;
  }
  const ActionCommand& cmd = *verified;
  const DeviceId& target = cmd.device;

  std::lock_guard lock(mu_);
  auto it = actuators_.find(target);
  if (it == actuators_.end()) {
    ++stats_.rejected;
    return std::nullopt;
  }
  const std::int64_t now = NowMicros();
  try {
    it->second = ApplyCommand(it->second, cmd, now);
  } catch (const Error&) {
    ++stats_.rejected;
    return std::nullopt;
  }
  ++stats_.applied;
  if (last_upstream_us_ > 0) {
    latencies_us_.push_back(static_cast<double>(now - last_upstream_us_));
  }
  return cmd;
}

HubStats Hub::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::vector<double> Hub::latencies_us() const {
  std::lock_guard lock(mu_);
  return latencies_us_;
}

HubNode::HubNode(Hub& hub, std::unique_ptr<BrokerClient> client)
    : hub_(hub), client_(std::move(client)) {
  for (const DeviceId& d : hub_.actuators()) client_->Subscribe(CommandTopic(d));
  thread_ = std::thread([this] { Loop(); });
}

HubNode::~HubNode() { Stop(); }

void HubNode::Stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

void HubNode::Send(const DeviceEvent& reading) {
  const OutboundMessage m = hub_.Upstream(reading);
  client_->Publish(m.topic, m.payload);
}

bool HubNode::WaitForCommands(std::uint64_t count,
                              std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return handled_ >= count; });
}

void HubNode::Loop() {
  while (!stop_) {
    std::optional<Frame> f = client_->Receive(std::chrono::milliseconds(50));
    if (!f) {
      if (!client_->connected()) return;
      continue;
    }
    hub_.Downstream(f->topic, f->payload);
    {
      std::lock_guard lock(mu_);
      ++handled_;
    }
    cv_.notify_all();
  }
}

}  // namespace sealedrules
