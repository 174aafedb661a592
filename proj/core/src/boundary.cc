#include "sealedrules/boundary.h"

#include <algorithm>

#include "sealedrules/error.h"

namespace sealedrules {

std::string_view ModeName(Mode m) {
  switch (m) {
    case Mode::kPlain:
      return "plain";
    case Mode::kTrustedNoEnc:
      return "trusted-noenc";
    case Mode::kFull:
      return "full";
  }
  return "full";
}

std::optional<Mode> ParseMode(std::string_view name) {
  for (Mode m : {Mode::kPlain, Mode::kTrustedNoEnc, Mode::kFull}) {
    if (ModeName(m) == name) return m;
  }
  return std::nullopt;
}

std::string EventTopic(const DeviceId& d) { return "evt/" + d.value(); }
std::string CommandTopic(const DeviceId& d) { return "cmd/" + d.value(); }

std::optional<DeviceId> DeviceFromTopic(std::string_view topic,
                                        std::string_view prefix) {
  if (topic.size() <= prefix.size() || topic.substr(0, prefix.size()) != prefix) {
    return std::nullopt;
  }
  const std::string_view rest = topic.substr(prefix.size());
  if (rest.size() > DeviceId::kMaxLength ||
      rest.find('/') != std::string_view::npos) {
    return std::nullopt;
  }
  return DeviceId(std::string(rest));
}

struct TrustedBoundary::DeviceLocks {
  static constexpr std::size_t kStripes = 64;
  std::array<std::mutex, kStripes> stripes;
  std::mutex& For(const DeviceId& d) {
    return stripes[std::hash<DeviceId>{}(d) % kStripes];
  }
};

// Enclave entry for the lifetime of the object: charges the transition
// cost on entry and exit and counts both crossings.
class TrustedBoundary::Gate {
 public:
  explicit Gate(TrustedBoundary* b) : b_(b) {
    b_->Transition();
    b_->Count(&BoundaryStats::crossings);
  }
  ~Gate() {
    b_->Transition();
    b_->Count(&BoundaryStats::crossings);
  }
  Gate(const Gate&) = delete;
  Gate& operator=(const Gate&) = delete;

 private:
  TrustedBoundary* b_;
};

namespace {

SessionKeySet WithSealingKey(SessionKeySet keys) {
  if (!keys.k_sgx) keys.k_sgx = SymmetricKey::Generate("k_sgx");
  return keys;
}

void SpinFor(std::chrono::nanoseconds d) {
  if (d.count() <= 0) return;
  const auto until = std::chrono::steady_clock::now() + d;
  while (std::chrono::steady_clock::now() < until) {
  }
}

}  // namespace

TrustedBoundary::TrustedBoundary(BoundaryConfig config, SessionKeySet keys_in)
    : config_(std::move(config)),
      mode_(config_.mode),
      k_sgx_(*WithSealingKey(keys_in).k_sgx),
      sealer_(k_sgx_),
      rules_key_(keys_in.rules_key),
      device_keys_(std::move(keys_in.device_keys)),
      cache_(config_.cache_capacity, config_.cache_policy),
      store_(config_.store_path
                 ? std::make_unique<SealedStore>(*config_.store_path)
                 : std::make_unique<SealedStore>()),
      device_locks_(std::make_unique<DeviceLocks>()) {
  for (const auto& [device, key] : device_keys_) {
    command_encryptors_.emplace(device, std::make_unique<Encryptor>(key));
  }
}

TrustedBoundary::~TrustedBoundary() { store_->Flush(); }

void TrustedBoundary::Transition() { SpinFor(config_.transition_cost); }

void TrustedBoundary::Count(std::uint64_t BoundaryStats::*field,
                            std::uint64_t n) {
  std::lock_guard lock(stats_mu_);
  stats_.*field += n;
}

BoundaryStats TrustedBoundary::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

void TrustedBoundary::Record(AccessOp op, Region region) {
  if (tracing_) trace_.push_back({op, region});
}

void TrustedBoundary::Observe(CrossingDirection dir, std::string_view what,
                              ByteView bytes) {
  if (observer_) observer_(dir, what, bytes);
}

void TrustedBoundary::SetCrossingObserver(CrossingObserver observer) {
  std::unique_lock lock(busy_mu_);
  observer_ = std::move(observer);
}

void TrustedBoundary::EnableTracing(bool on) {
  std::unique_lock lock(busy_mu_);
  tracing_ = on;
  trace_.clear();
}

AccessTrace TrustedBoundary::TakeTrace() {
  if (!tracing_) throw TracingDisabled("tracing is not enabled");
  AccessTrace out;
  out.swap(trace_);
  return out;
}

Encryptor* TrustedBoundary::CommandEncryptor(const DeviceId& d) {
  auto it = command_encryptors_.find(d);
  return it == command_encryptors_.end() ? nullptr : it->second.get();
}

std::string TrustedBoundary::EncodeRecord(Mode mode, const DeviceId& d,
                                          const std::vector<Rule>& rules) {
  if (mode == Mode::kFull) {
    return SealedRecordToJson(SealRules(sealer_, d, rules));
  }
  return SerializeRuleset(rules);
}

std::vector<Rule> TrustedBoundary::DecodeRecord(Mode mode, const DeviceId& d,
                                                const std::string& value) const {
  if (mode == Mode::kFull) {
    const SealedRecord rec = [&] {
      try {
        return SealedRecordFromJson(value);
      } catch (const Error& e) {
        throw AuthenticationError(std::string("sealed record: ") + e.what());
      }
    }();
    if (rec.device != d) {
      throw AuthenticationError("sealed record stored under another device");
    }
    return UnsealRules(k_sgx_, rec);
  }
  return ParseRuleset(value);
}

RuleList TrustedBoundary::FetchRules(Mode mode, const DeviceId& d) {
  Record(AccessOp::kRead, Region::kCache);
  if (RuleList hit = cache_.Get(d)) return hit;

  Record(AccessOp::kRead, Region::kStore);
  std::optional<std::string> value;
  if (mode == Mode::kPlain) {
    value = store_->Get(d);
  } else {
    // ocall out to the untrusted store and copy the record back in.
    Transition();
    value = store_->Get(d);
    Transition();
    Count(&BoundaryStats::crossings, 2);
    if (value) Observe(CrossingDirection::kIn, "store_record", AsBytes(*value));
  }
  if (!value) return nullptr;
  auto rules = std::make_shared<const std::vector<Rule>>(DecodeRecord(mode, d, *value));
  if (mode == Mode::kFull) Count(&BoundaryStats::unseals);
  Record(AccessOp::kWrite, Region::kCache);
  cache_.Put(d, rules);
  return rules;
}

std::optional<Scalar> TrustedBoundary::LastValue(const DeviceId& d,
                                                 std::string_view attr) const {
  std::lock_guard lock(values_mu_);
  auto dev = last_values_.find(d);
  if (dev == last_values_.end()) return std::nullopt;
  auto it = dev->second.find(attr);
  if (it == dev->second.end()) return std::nullopt;
  return it->second;
}

ProvisionSummary TrustedBoundary::ProvisionRuleset(ByteView message) {
  std::shared_lock busy(busy_mu_);
  const Mode mode = mode_.load();
  std::optional<Gate> gate;
  Bytes inbuf;
  ByteView text = message;
  if (mode != Mode::kPlain) {
    gate.emplace(this);
    Observe(CrossingDirection::kIn, "ruleset", message);
    inbuf.assign(message.begin(), message.end());
    text = inbuf;
  }
  Bytes plain;
  if (mode == Mode::kFull) {
    if (!rules_key_) {
      throw AuthenticationError("no rules key has been provisioned");
    }
    try {
      const Envelope env = EnvelopeFromJson(ToString(text));
      if (ToString(env.aad) != kProvisionTopic) {
        throw AuthenticationError("ruleset envelope bound to another topic");
      }
      plain = Decrypt(*rules_key_, env);
    } catch (const AuthenticationError&) {
      Count(&BoundaryStats::auth_failures);
      throw;
    } catch (const Error& e) {
      Count(&BoundaryStats::auth_failures);
      throw AuthenticationError(std::string("ruleset message: ") + e.what());
    }
    Count(&BoundaryStats::decrypts);
    text = plain;
  }

  const RulesetUpload upload = ParseRulesetUpload(
      std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
  const std::vector<Rule>& rules = upload.rules;
  if (!plain.empty()) SecureZero(plain);
  if (!inbuf.empty()) SecureZero(inbuf);

  // Group by trigger device, keeping ruleset order inside each group. An
  // appending upload extends what is already stored.
  std::map<DeviceId, std::vector<Rule>> groups;
  for (const Rule& r : rules) {
    for (const DeviceId& d : r.TriggerDevices()) {
      auto [it, fresh] = groups.try_emplace(d);
      if (fresh && upload.append) {
        if (std::optional<std::string> stored = store_->Get(d)) {
          it->second = DecodeRecord(mode, d, *stored);
        }
      }
      it->second.push_back(r);
    }
  }
  if (upload.append) {
    for (const auto& [device, group] : groups) ValidateRuleset(group);
  }
  std::vector<std::pair<DeviceId, std::string>> encoded;
  encoded.reserve(groups.size());
  for (const auto& [device, group] : groups) {
    encoded.emplace_back(device, EncodeRecord(mode, device, group));
  }
  for (auto& [device, value] : encoded) {
    std::lock_guard lock(device_locks_->For(device));
    if (mode != Mode::kPlain) {
      Observe(CrossingDirection::kOut, "store_record", AsBytes(value));
    }
    store_->Put(device, std::move(value));
    cache_.Invalidate(device);
  }
  // A replacing upload is the whole ruleset: devices it no longer names
  // lose their rules.
  if (!upload.append) {
    for (const DeviceId& d : store_->Keys()) {
      if (groups.count(d) != 0) continue;
      std::lock_guard lock(device_locks_->For(d));
      store_->Erase(d);
      cache_.Invalidate(d);
    }
  }
  return ProvisionSummary{encoded.size(), rules.size()};
}

std::vector<OutboundMessage> TrustedBoundary::HandleEvent(std::string_view topic,
                                                          ByteView payload) {
  std::shared_lock busy(busy_mu_);
  const Mode mode = mode_.load();
  const std::optional<DeviceId> device = DeviceFromTopic(topic, "evt/");
  if (!device) throw TopicInvalid("not an event topic: '" + std::string(topic) + "'");
  Count(&BoundaryStats::events);

  if (mode == Mode::kPlain) return Process(mode, *device, topic, payload);

  Gate gate(this);
  Observe(CrossingDirection::kIn, "event", payload);
  Record(AccessOp::kWrite, Region::kEventBuf);
  Bytes inbuf(payload.begin(), payload.end());
  std::vector<OutboundMessage> inside = Process(mode, *device, topic, inbuf);
  SecureZero(inbuf);

  // Copy-out into untrusted buffers.
  std::vector<OutboundMessage> out;
  out.reserve(inside.size());
  for (OutboundMessage& m : inside) {
    Observe(CrossingDirection::kOut, "command", m.payload);
    out.push_back(OutboundMessage{m.topic, Bytes(m.payload.begin(), m.payload.end())});
    SecureZero(m.payload);
  }
  return out;
}

std::vector<OutboundMessage> TrustedBoundary::Process(Mode mode,
                                                      const DeviceId& device,
                                                      std::string_view topic,
                                                      ByteView payload) {
  Record(AccessOp::kRead, Region::kEventBuf);
  Bytes plain;
  std::string_view event_text(reinterpret_cast<const char*>(payload.data()),
                              payload.size());
  if (mode == Mode::kFull) {
    try {
      const Envelope env = EnvelopeFromJson(event_text);
      auto key = device_keys_.find(device);
      if (key == device_keys_.end()) {
        throw AuthenticationError("no session key for device '" +
                                  device.value() + "'");
      }
      if (ToString(env.aad) != topic) {
        throw AuthenticationError("event envelope bound to another topic");
      }
      plain = Decrypt(key->second, env);
    } catch (const AuthenticationError&) {
      Count(&BoundaryStats::auth_failures);
      throw;
    } catch (const Error& e) {
      Count(&BoundaryStats::auth_failures);
      throw AuthenticationError(std::string("event message: ") + e.what());
    }
    Count(&BoundaryStats::decrypts);
    event_text = std::string_view(reinterpret_cast<const char*>(plain.data()),
                                  plain.size());
  }

  const DeviceEvent event = ParseEvent(event_text);
  if (!plain.empty()) SecureZero(plain);
  if (event.device != device) {
    Count(&BoundaryStats::auth_failures);
    throw AuthenticationError("event device does not match its topic");
  }

  std::lock_guard device_lock(device_locks_->For(device));
  {
    std::lock_guard lock(values_mu_);
    last_values_[event.device].insert_or_assign(event.attribute, event.value);
  }

  const RuleList rules = FetchRules(mode, device);
  if (!rules) {
    Count(&BoundaryStats::unknown_device);
    return {};
  }

  EvaluationHooks hooks;
  if (tracing_) {
    hooks.on_condition = [this] { Record(AccessOp::kRead, Region::kRuleCond); };
    hooks.on_action = [this] { Record(AccessOp::kRead, Region::kRuleAct); };
  }
  const ValueLookup lookup = [this](const DeviceId& d, std::string_view attr) {
    return LastValue(d, attr);
  };

  std::vector<OutboundMessage> out;
  std::uint64_t fired = 0, encrypted = 0, undeliverable = 0;
  for (const Rule& rule : *rules) {
    for (const ActionCommand& action :
         EvaluateRuleWithContext(rule, event, lookup, tracing_ ? &hooks : nullptr)) {
      ++fired;
      std::string cmd_topic = CommandTopic(action.device);
      const std::string text = SerializeCommand(action);
      Bytes payload_out;
      if (mode == Mode::kFull) {
        Encryptor* enc = CommandEncryptor(action.device);
        if (enc == nullptr) {
          ++undeliverable;
          continue;
        }
        payload_out = ToBytes(EnvelopeToJson(
            enc->Encrypt(AsBytes(text), AsBytes(cmd_topic), config_.enclave_id)));
        ++encrypted;
      } else {
        payload_out = ToBytes(text);
      }
      Record(AccessOp::kWrite, Region::kOutBuf);
      out.push_back(OutboundMessage{std::move(cmd_topic), std::move(payload_out)});
    }
  }
  {
    std::lock_guard lock(stats_mu_);
    stats_.fired_actions += fired;
    stats_.encrypts += encrypted;
    stats_.undeliverable += undeliverable;
  }
  return out;
}

void TrustedBoundary::SetMode(Mode mode) {
  std::unique_lock busy(busy_mu_, std::try_to_lock);
  if (!busy.owns_lock()) {
    throw ModeChangeWhileBusy("cannot change mode while events are in flight");
  }
  const Mode old = mode_.load();
  if (old == mode) return;
  std::vector<std::pair<DeviceId, std::string>> reencoded;
  for (const DeviceId& d : store_->Keys()) {
    const std::vector<Rule> rules = DecodeRecord(old, d, *store_->Get(d));
    reencoded.emplace_back(d, EncodeRecord(mode, d, rules));
  }
  for (auto& [d, value] : reencoded) store_->Put(d, std::move(value));
  cache_.Clear();
  mode_.store(mode);
}

std::optional<std::vector<Rule>> TrustedBoundary::CachedRules(
    const DeviceId& d) const {
  RuleList rules = cache_.Peek(d);
  if (!rules) return std::nullopt;
  return *rules;
}

std::optional<std::vector<Rule>> TrustedBoundary::StoredRules(
    const DeviceId& d) const {
  std::optional<std::string> value = store_->Get(d);
  if (!value) return std::nullopt;
  return DecodeRecord(mode_.load(), d, *value);
}

}  // namespace sealedrules
