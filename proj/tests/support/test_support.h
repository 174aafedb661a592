#ifndef SEALEDRULES_TEST_SUPPORT_H_
#define SEALEDRULES_TEST_SUPPORT_H_

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sealedrules/boundary.h"
#include "sealedrules/broker.h"
#include "sealedrules/hub.h"
#include "sealedrules/rule.h"

namespace sealedrules::testing {

inline std::filesystem::path DataDir() { return SEALEDRULES_TEST_DATA_DIR; }
inline std::filesystem::path SourceDir() { return SEALEDRULES_SOURCE_DIR; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sealedrules-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Brute-force reference for the engine's firing semantics, written without
// the library's evaluator: keep the latest value of every (device,
// attribute); on an event, record it, then scan the whole ruleset and fire
// every rule that has a condition on the event's device and whose
// combinator holds over the recorded values.
class OracleEngine {
 public:
  explicit OracleEngine(std::vector<Rule> rules) : rules_(std::move(rules)) {}

  std::vector<ActionCommand> Handle(const DeviceEvent& e) {
    state_[{e.device.value(), e.attribute}] = e.value;
    std::vector<ActionCommand> out;
    for (const Rule& r : rules_) {
      bool concerned = false;
      for (const Condition& c : r.conditions) concerned |= c.device == e.device;
      if (!concerned) continue;
      std::size_t holding = 0;
      for (const Condition& c : r.conditions) holding += Holds(c) ? 1 : 0;
      const bool fire = r.combinator == Combinator::kAll ? holding == r.conditions.size()
                                                         : holding > 0;
      if (fire) out.insert(out.end(), r.actions.begin(), r.actions.end());
    }
    return out;
  }

 private:
  bool Holds(const Condition& c) const {
    auto it = state_.find({c.device.value(), c.attribute});
    if (it == state_.end()) return false;
    const Scalar& v = it->second;
    if (c.op == Operator::kEquals) {
      if (v.index() != c.value.index()) return false;
      if (auto* s = std::get_if<std::string>(&v)) return *s == std::get<std::string>(c.value);
      if (auto* b = std::get_if<bool>(&v)) return *b == std::get<bool>(c.value);
      return std::get<double>(v) == std::get<double>(c.value);
    }
    if (!std::holds_alternative<double>(v) || !std::holds_alternative<double>(c.value)) {
      return false;
    }
    const double x = std::get<double>(v), t = std::get<double>(c.value);
    switch (c.op) {
      case Operator::kGreaterThan: return x > t;
      case Operator::kLessThan: return x < t;
      case Operator::kGreaterThanOrEquals: return x >= t;
      case Operator::kLessThanOrEquals: return x <= t;
      default: return false;
    }
  }

  std::vector<Rule> rules_;
  std::map<std::pair<std::string, std::string>, Scalar> state_;
};

// Commands as a sorted list of their JSON forms, for multiset comparison.
inline std::vector<std::string> CommandMultiset(const std::vector<ActionCommand>& cmds) {
  std::vector<std::string> out;
  for (const ActionCommand& c : cmds) out.push_back(SerializeCommand(c));
  std::sort(out.begin(), out.end());
  return out;
}

// Random rules with cross-device conditions, mixed value kinds and both
// combinators, over devices d0..d{n-1} with attributes a0..a2. Values are
// drawn from small grids so that equality and boundaries get hit.
struct RandomWorld {
  std::size_t devices = 8;
  std::mt19937_64 rng;

  explicit RandomWorld(std::uint64_t seed, std::size_t n = 8) : devices(n), rng(seed) {}

  DeviceId Device() {
    return DeviceId("d" + std::to_string(Pick(devices)));
  }
  std::size_t Pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

  // a0 numeric, a1 string, a2 boolean.
  Scalar Value(const std::string& attr) {
    if (attr == "a1") {
      static const char* kWords[] = {"on", "off", "present", "not present"};
      return std::string(kWords[Pick(4)]);
    }
    if (attr == "a2") return Pick(2) == 1;
    return static_cast<double>(Pick(11)) * 10.0;
  }

  Condition MakeCondition() {
    const std::string attr = "a" + std::to_string(Pick(3));
    Operator op = Operator::kEquals;
    if (attr == "a0") op = static_cast<Operator>(Pick(5));
    Scalar v = Value(attr);
    // A kind mismatch parses for equals and never matches.
    if (op == Operator::kEquals && Pick(20) == 0) v = std::string("90");
    return Condition{Device(), attr, op, v};
  }

  std::vector<Rule> Rules(std::size_t count) {
    std::vector<Rule> out;
    for (std::size_t i = 0; i < count; ++i) {
      Rule r;
      r.id = "r" + std::to_string(i);
      r.name = "random " + std::to_string(i);
      const std::size_t nc = 1 + Pick(3);
      for (std::size_t k = 0; k < nc; ++k) r.conditions.push_back(MakeCondition());
      r.combinator = Pick(2) ? Combinator::kAll : Combinator::kAny;
      const std::size_t na = 1 + Pick(2);
      for (std::size_t k = 0; k < na; ++k) {
        r.actions.push_back(ActionCommand{DeviceId("act" + std::to_string(Pick(3))), "switch",
                                          Pick(2) ? "on" : "off", {}});
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  DeviceEvent Event(std::int64_t ts) {
    const std::string attr = "a" + std::to_string(Pick(3));
    return DeviceEvent{Device(), "cap", attr, Value(attr), ts};
  }
};

// Every device key a RandomWorld or bench fixture may need.
inline SessionKeySet KeysFor(const std::vector<DeviceId>& devices) {
  SessionKeySet keys;
  for (const DeviceId& d : devices) keys.device_keys.emplace(d, SymmetricKey::Generate("dk-" + d.value()));
  keys.rules_key = SymmetricKey::Generate("rules");
  return keys;
}

// Provisions rules into a boundary in its own mode: an envelope under the
// rules key in kFull, raw JSON otherwise.
inline ProvisionSummary Provision(TrustedBoundary& b, const std::vector<Rule>& rules,
                                  const SessionKeySet& keys) {
  const std::string text = SerializeRuleset(rules);
  if (b.mode() != Mode::kFull) return b.ProvisionRuleset(AsBytes(text));
  Encryptor up(*keys.rules_key);
  return b.ProvisionRuleset(
      AsBytes(EnvelopeToJson(up.Encrypt(AsBytes(text), AsBytes(kProvisionTopic), "test"))));
}

// Runs events through a boundary via a hub (for wrapping) and returns the
// decoded commands per event.
inline std::vector<std::vector<ActionCommand>> Drive(TrustedBoundary& b, Hub& wrap,
                                                     const SessionKeySet& keys,
                                                     const std::vector<DeviceEvent>& events) {
  std::map<DeviceId, SymmetricKey> by_device = keys.device_keys;
  std::vector<std::vector<ActionCommand>> out;
  out.reserve(events.size());
  for (const DeviceEvent& e : events) {
    const OutboundMessage m = wrap.Upstream(e);
    std::vector<ActionCommand> cmds;
    for (const OutboundMessage& o : b.HandleEvent(m.topic, m.payload)) {
      if (b.mode() == Mode::kFull) {
        const Envelope env = EnvelopeFromJson(ToString(o.payload));
        const auto target = DeviceFromTopic(o.topic, "cmd/");
        cmds.push_back(ParseCommand(ToString(Decrypt(by_device.at(*target), env))));
      } else {
        cmds.push_back(ParseCommand(ToString(o.payload)));
      }
    }
    out.push_back(std::move(cmds));
  }
  return out;
}

// Polls until pred() holds or the timeout passes.
template <typename Pred>
bool Eventually(Pred pred, std::chrono::milliseconds timeout = std::chrono::milliseconds(3000)) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!pred()) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return true;
}

}  // namespace sealedrules::testing

#endif  // SEALEDRULES_TEST_SUPPORT_H_
