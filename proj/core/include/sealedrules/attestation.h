#ifndef SEALEDRULES_ATTESTATION_H_
#define SEALEDRULES_ATTESTATION_H_

#include <array>
#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "sealedrules/bytes.h"
#include "sealedrules/crypto.h"
#include "sealedrules/rule.h"

// Simulated remote attestation. A locally generated Ed25519 "platform" key
// stands in for the hardware quoting infrastructure; key agreement is
// ephemeral X25519 with an HKDF-SHA256 derived channel key.

namespace sealedrules {

inline constexpr std::string_view kEngineVersion = "sealedrules-engine/1.0";
inline constexpr std::string_view kRuleSchemaVersion = "rule-schema/1";

// Engine version and rule schema version, the input to the measurement.
std::string DefaultBuildInfo();

struct Measurement {
  Digest digest{};
  friend bool operator==(const Measurement&, const Measurement&) = default;
};

Measurement Measure(ByteView build_info);

using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

// Simulated platform signing key (Ed25519).
class PlatformSigner {
 public:
  static PlatformSigner Generate();
  // 32-byte raw private key. Throws SchemaError on bad length.
  static PlatformSigner FromPrivateBytes(ByteView raw);

  Signature Sign(ByteView message) const;
  PublicKey verification_key() const;
  Bytes private_bytes() const;

 private:
  struct KeyHandle;
  explicit PlatformSigner(std::shared_ptr<KeyHandle> key);
  std::shared_ptr<KeyHandle> key_;
};

bool VerifyPlatformSignature(const PublicKey& verification_key,
                             ByteView message, const Signature& signature);

struct Quote {
  Measurement measurement;
  PublicKey enclave_ephemeral_public{};
  Signature signature{};

  // measurement || public, the signed bytes.
  Bytes SignedBytes() const;
  friend bool operator==(const Quote&, const Quote&) = default;
};

// True iff the signature verifies and the measurement is the expected one.
bool VerifyQuote(const Quote& quote, const Measurement& expected,
                 const PublicKey& platform_vk);

struct SessionKeySet {
  std::map<DeviceId, SymmetricKey> device_keys;
  // Key under which rulesets are uploaded to the enclave.
  std::optional<SymmetricKey> rules_key;
  // Generated inside the enclave; never part of a provisioning message.
  std::optional<SymmetricKey> k_sgx;
};

struct ServerHello {
  PublicKey server_ephemeral_public{};
  Envelope provisioning;
};

// Enclave half of one handshake. Each instance owns a fresh ephemeral key.
class EnclaveHandshake {
 public:
  EnclaveHandshake(std::string enclave_id, ByteView build_info,
                   const PlatformSigner& platform);
  ~EnclaveHandshake();
  EnclaveHandshake(EnclaveHandshake&&) noexcept;
  EnclaveHandshake& operator=(EnclaveHandshake&&) noexcept;

  const Quote& quote() const noexcept { return quote_; }
  const std::string& enclave_id() const noexcept { return enclave_id_; }

  // Derives the channel key and opens the provisioning envelope; generates
  // k_sgx. Throws AuthenticationError when the hello was not made for this
  // handshake.
  SessionKeySet Complete(const ServerHello& hello) const;

 private:
  struct Ephemeral;
  std::string enclave_id_;
  std::unique_ptr<Ephemeral> ephemeral_;
  Quote quote_;
};

// Convenience wrapper: measurement = SHA-256(build_info), fresh ephemeral.
Quote GenerateQuote(ByteView build_info, const PlatformSigner& platform);

// Server half. Releases keys only after VerifyQuote succeeds.
class ProvisioningServer {
 public:
  ProvisioningServer(Measurement expected, PublicKey platform_vk,
                     SessionKeySet keys);

  // Throws AttestationRejected; no key material is produced on that path.
  ServerHello ProvisionKeys(std::string_view enclave_id, const Quote& quote);

  std::uint64_t provisioned_count() const noexcept { return provisioned_; }
  std::uint64_t rejected_count() const noexcept { return rejected_; }

 private:
  Measurement expected_;
  PublicKey platform_vk_;
  SessionKeySet keys_;
  std::atomic<std::uint64_t> provisioned_{0};
  std::atomic<std::uint64_t> rejected_{0};
};

// Free-function form of ProvisioningServer::ProvisionKeys.
ServerHello ProvisionKeys(std::string_view enclave_id, const Quote& quote,
                          const Measurement& expected,
                          const PublicKey& platform_vk,
                          const SessionKeySet& server_keys);

std::string AttestTopic(std::string_view enclave_id);

// Handshake messages on attest/<enclave_id>.
std::string QuoteMessageToJson(std::string_view enclave_id, const Quote& q);
std::string ServerHelloToJson(const ServerHello& hello);
std::string ProvisioningMessageToJson(const ServerHello& hello);
// "quote", "server_hello", "provisioning", or "" when unrecognized.
std::string HandshakeMessageType(std::string_view text);
Quote QuoteFromJson(std::string_view text);
PublicKey ServerHelloFromJson(std::string_view text);
Envelope ProvisioningFromJson(std::string_view text);

// Session keys without k_sgx; used as the provisioning plaintext.
std::string SessionKeySetToJson(const SessionKeySet& keys);
SessionKeySet SessionKeySetFromJson(std::string_view text);

}  // namespace sealedrules

#endif  // SEALEDRULES_ATTESTATION_H_
