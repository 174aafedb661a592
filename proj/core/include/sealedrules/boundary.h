#ifndef SEALEDRULES_BOUNDARY_H_
#define SEALEDRULES_BOUNDARY_H_

#include <array>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sealedrules/attestation.h"
#include "sealedrules/bytes.h"
#include "sealedrules/cache.h"
#include "sealedrules/crypto.h"
#include "sealedrules/rule.h"
#include "sealedrules/store.h"
#include "sealedrules/trace.h"

namespace sealedrules {

// Protection level of the engine.
//   kPlain        no boundary, plaintext payloads and store
//   kTrustedNoEnc boundary gates (copy-in/copy-out), plaintext payloads
//   kFull         boundary gates plus envelope decryption/encryption and
//                 sealed store records
enum class Mode { kPlain, kTrustedNoEnc, kFull };

std::string_view ModeName(Mode m);
std::optional<Mode> ParseMode(std::string_view name);

inline constexpr std::string_view kProvisionTopic = "prov/rules";
// Largest ruleset plaintext per upload message; its base64 envelope still
// fits in one 1 MiB broker payload.
inline constexpr std::size_t kMaxUploadPlaintext = 720 * 1024;
std::string EventTopic(const DeviceId& d);
std::string CommandTopic(const DeviceId& d);
// Device named by an evt/<d> or cmd/<d> topic.
std::optional<DeviceId> DeviceFromTopic(std::string_view topic,
                                        std::string_view prefix);

struct BoundaryConfig {
  Mode mode = Mode::kFull;
  std::size_t cache_capacity = RuleCache::kDefaultCapacity;
  CachePolicy cache_policy = CachePolicy::kLru;
  // Memory-only store when unset.
  std::optional<std::filesystem::path> store_path;
  // Fixed cost charged on every enclave entry/exit (ecall or ocall),
  // standing in for the hardware context switch.
  std::chrono::nanoseconds transition_cost{2000};
  std::string enclave_id = "enclave";
};

struct ProvisionSummary {
  std::size_t devices = 0;  // store records written
  std::size_t rules = 0;    // rules in the uploaded set
};

struct OutboundMessage {
  std::string topic;
  Bytes payload;
};

struct BoundaryStats {
  std::uint64_t events = 0;
  std::uint64_t auth_failures = 0;
  std::uint64_t unknown_device = 0;
  std::uint64_t fired_actions = 0;
  std::uint64_t undeliverable = 0;
  std::uint64_t decrypts = 0;
  std::uint64_t encrypts = 0;
  std::uint64_t unseals = 0;
  std::uint64_t crossings = 0;
};

enum class CrossingDirection { kIn, kOut };

// The trusted rule engine. Plaintext rules and events only exist inside
// member functions of this class; everything handed in or out is a byte
// buffer that, in kFull mode, is ciphertext.
//
// Events for different devices may be handled concurrently; events for one
// device are serialized. Tracing forces callers to a single thread.
class TrustedBoundary {
 public:
  // keys.k_sgx is generated when absent.
  TrustedBoundary(BoundaryConfig config, SessionKeySet keys);
  ~TrustedBoundary();

  TrustedBoundary(const TrustedBoundary&) = delete;
  TrustedBoundary& operator=(const TrustedBoundary&) = delete;

  // Loads a ruleset (envelope under the rules key in kFull, raw JSON
  // otherwise), groups rules by trigger device and writes one store record
  // per device. Nothing is written when the message fails to authenticate
  // or parse.
  ProvisionSummary ProvisionRuleset(ByteView message);

  // Handles one message received on evt/<device>. Returns one message per
  // fired action, addressed to cmd/<target>. A device without stored rules
  // yields an empty result. Throws AuthenticationError in kFull mode for
  // anything that is not a valid envelope from that device.
  std::vector<OutboundMessage> HandleEvent(std::string_view topic,
                                           ByteView payload);

  // Re-encodes the store for the new mode and clears the cache. Throws
  // ModeChangeWhileBusy while events are in flight.
  void SetMode(Mode mode);
  Mode mode() const noexcept { return mode_.load(); }

  void EnableTracing(bool on);
  bool tracing() const noexcept { return tracing_; }
  AccessTrace TakeTrace();

  // Observes every buffer passed across the boundary interface.
  using CrossingObserver =
      std::function<void(CrossingDirection, std::string_view what, ByteView)>;
  void SetCrossingObserver(CrossingObserver observer);

  BoundaryStats stats() const;
  CacheStats cache_stats() const { return cache_.stats(); }
  void ResetCacheStats() { cache_.ResetStats(); }
  const RuleCache& cache() const noexcept { return cache_; }
  const SealedStore& store() const noexcept { return *store_; }
  void FlushStore() { store_->Flush(); }

  // Diagnostics used by coherence checks: rules as held in the cache, and
  // rules as decoded from the store record.
  std::optional<std::vector<Rule>> CachedRules(const DeviceId& d) const;
  std::optional<std::vector<Rule>> StoredRules(const DeviceId& d) const;

 private:
  class Gate;
  struct DeviceLocks;

  std::vector<Rule> DecodeRecord(Mode mode, const DeviceId& d,
                                 const std::string& value) const;
  std::string EncodeRecord(Mode mode, const DeviceId& d,
                           const std::vector<Rule>& rules);
  std::vector<OutboundMessage> Process(Mode mode, const DeviceId& device,
                                       std::string_view topic,
                                       ByteView payload);
  RuleList FetchRules(Mode mode, const DeviceId& d);
  std::optional<Scalar> LastValue(const DeviceId& d, std::string_view attr) const;
  void Record(AccessOp op, Region region);
  void Transition();
  void Count(std::uint64_t BoundaryStats::*field, std::uint64_t n = 1);
  void Observe(CrossingDirection dir, std::string_view what, ByteView bytes);
  Encryptor* CommandEncryptor(const DeviceId& d);

  BoundaryConfig config_;
  std::atomic<Mode> mode_;
  SymmetricKey k_sgx_;
  Encryptor sealer_;
  std::optional<SymmetricKey> rules_key_;
  std::map<DeviceId, SymmetricKey> device_keys_;
  std::map<DeviceId, std::unique_ptr<Encryptor>> command_encryptors_;

  RuleCache cache_;
  std::unique_ptr<SealedStore> store_;
  std::unique_ptr<DeviceLocks> device_locks_;

  mutable std::mutex values_mu_;
  std::map<DeviceId, std::map<std::string, Scalar, std::less<>>> last_values_;

  // Held shared by every operation on the event path, exclusively by
  // SetMode.
  std::shared_mutex busy_mu_;

  bool tracing_ = false;
  AccessTrace trace_;

  CrossingObserver observer_;

  mutable std::mutex stats_mu_;
  BoundaryStats stats_;
};

}  // namespace sealedrules

#endif  // SEALEDRULES_BOUNDARY_H_
