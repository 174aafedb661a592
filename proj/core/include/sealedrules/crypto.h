#ifndef SEALEDRULES_CRYPTO_H_
#define SEALEDRULES_CRYPTO_H_

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sealedrules/bytes.h"
#include "sealedrules/rule.h"

namespace sealedrules {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kMaxPlaintextSize = 1 << 20;
inline constexpr int kEnvelopeVersion = 1;

using KeyBytes = std::array<std::uint8_t, kKeySize>;
using Nonce = std::array<std::uint8_t, kNonceSize>;
using Digest = std::array<std::uint8_t, 32>;

// A 256-bit AES key with a short label. There is deliberately no stream
// operator; key bytes must not end up in logs.
class SymmetricKey {
 public:
  SymmetricKey(std::string key_id, const KeyBytes& bytes);
  SymmetricKey(std::string key_id, ByteView bytes);  // throws SchemaError
  SymmetricKey(const SymmetricKey&) = default;
  SymmetricKey& operator=(const SymmetricKey&) = default;
  ~SymmetricKey();

  static SymmetricKey Generate(std::string key_id);

  const std::string& key_id() const noexcept { return key_id_; }
  const KeyBytes& bytes() const noexcept { return bytes_; }

  friend bool operator==(const SymmetricKey&, const SymmetricKey&) = default;

 private:
  std::string key_id_;
  KeyBytes bytes_{};
};

struct Envelope {
  int version = kEnvelopeVersion;
  std::string key_id;
  std::string sender;
  Nonce nonce{};
  Bytes ciphertext_and_tag;
  Bytes aad;

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

// Wire form: {"v":1,"kid":..,"sid":..,"n":b64,"ct":b64,"aad":b64}, keys in
// that order, no whitespace.
std::string EnvelopeToJson(const Envelope& env);
// Throws SyntaxError / SchemaError on malformed input.
Envelope EnvelopeFromJson(std::string_view text);

// Raw AES-256-GCM. Output is ciphertext || 16-byte tag.
Bytes AeadSeal(const KeyBytes& key, const Nonce& nonce, ByteView plaintext,
               ByteView aad);
// Throws AuthenticationError when the tag does not verify.
Bytes AeadOpen(const KeyBytes& key, const Nonce& nonce,
               ByteView ciphertext_and_tag, ByteView aad);

// The associated data actually fed to GCM: the envelope header (version,
// key id, sender) and the caller's aad, each length-prefixed.
Bytes EnvelopeAuthenticatedData(int version, std::string_view key_id,
                                std::string_view sender, ByteView aad);

// Encrypts with an explicit nonce. Only for known-answer tests and interop
// fixtures; production callers go through Encryptor.
Envelope EncryptWithNonce(const SymmetricKey& key, const Nonce& nonce,
                          ByteView plaintext, ByteView aad,
                          std::string_view sender);

// Returns the plaintext iff the tag verifies over the header, nonce,
// ciphertext and aad. Any modification yields AuthenticationError.
Bytes Decrypt(const SymmetricKey& key, const Envelope& env);

// Owns a key and its nonce sequence: 4-byte random salt || 8-byte
// big-endian counter. Encrypt() is safe to call concurrently.
class Encryptor {
 public:
  explicit Encryptor(SymmetricKey key);
  Encryptor(SymmetricKey key, std::array<std::uint8_t, 4> salt,
            std::uint64_t first_counter);

  Encryptor(const Encryptor&) = delete;
  Encryptor& operator=(const Encryptor&) = delete;

  // Throws NonceExhausted once the counter space is used up.
  Envelope Encrypt(ByteView plaintext, ByteView aad, std::string_view sender);

  const SymmetricKey& key() const noexcept { return key_; }

 private:
  Nonce NextNonce();

  SymmetricKey key_;
  std::array<std::uint8_t, 4> salt_;
  std::atomic<std::uint64_t> counter_;
};

// Key lookup by key id, for receivers that hold several keys.
class Keyring {
 public:
  void Add(const SymmetricKey& key);
  bool Contains(std::string_view key_id) const;
  // Throws KeyMismatch when env.key_id is unknown.
  Bytes Decrypt(const Envelope& env) const;

 private:
  std::map<std::string, SymmetricKey, std::less<>> keys_;
};

// Rules of one device, encrypted under the enclave sealing key.
struct SealedRecord {
  DeviceId device;
  Envelope blob;
  std::uint32_t rule_count = 0;

  friend bool operator==(const SealedRecord&, const SealedRecord&) = default;
};

std::string SealedRecordToJson(const SealedRecord& rec);
SealedRecord SealedRecordFromJson(std::string_view text);

// Associated data binding a sealed blob to its device.
std::string SealAad(const DeviceId& device);

// Every rule must reference the device (BindingError otherwise). Each rule
// is framed individually inside the blob.
SealedRecord SealRules(Encryptor& sealer, const DeviceId& device,
                       const std::vector<Rule>& rules);
// AuthenticationError on any tamper, including a record moved to another
// device or a rule_count that disagrees with the blob.
std::vector<Rule> UnsealRules(const SymmetricKey& k_sgx, const SealedRecord& rec);

Digest Sha256(ByteView data);
Bytes RandomBytes(std::size_t n);

}  // namespace sealedrules

#endif  // SEALEDRULES_CRYPTO_H_
