#include "sealedrules/attestation.h"

#include <openssl/evp.h>
#include <openssl/kdf.h>

#include "json.hpp"
#include "sealedrules/error.h"

namespace sealedrules {

using ojson = nlohmann::ordered_json;

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
using Pkey = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

[[noreturn]] void Fail(const char* what) {
  throw Error(ErrorCode::kIo, std::string("openssl: ") + what);
}

Pkey GenerateKey(int type) {
  PkeyCtx ctx(EVP_PKEY_CTX_new_id(type, nullptr));
  EVP_PKEY* raw = nullptr;
  if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 ||
      EVP_PKEY_keygen(ctx.get(), &raw) != 1) {
    Fail("keygen");
  }
  return Pkey(raw);
}

PublicKey RawPublic(EVP_PKEY* key) {
  PublicKey out;
  std::size_t len = out.size();
  if (EVP_PKEY_get_raw_public_key(key, out.data(), &len) != 1 ||
      len != out.size()) {
    Fail("raw public key");
  }
  return out;
}

KeyBytes X25519Shared(EVP_PKEY* mine, const PublicKey& theirs) {
  Pkey peer(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr,
                                        theirs.data(), theirs.size()));
  if (!peer) throw AuthenticationError("invalid peer key share");
  PkeyCtx ctx(EVP_PKEY_CTX_new(mine, nullptr));
  KeyBytes secret;
  std::size_t len = secret.size();
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1 ||
      EVP_PKEY_derive_set_peer(ctx.get(), peer.get()) != 1 ||
      EVP_PKEY_derive(ctx.get(), secret.data(), &len) != 1 ||
      len != secret.size()) {
    throw AuthenticationError("key agreement failed");
  }
  return secret;
}

constexpr std::string_view kKdfSalt = "sealedrules-attest-v1";

// HKDF-SHA256(shared, salt, info = enclave_pub || server_pub).
SymmetricKey DeriveChannelKey(const KeyBytes& shared,
                              const PublicKey& enclave_pub,
                              const PublicKey& server_pub) {
  Bytes info(enclave_pub.begin(), enclave_pub.end());
  info.insert(info.end(), server_pub.begin(), server_pub.end());
  PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  KeyBytes out;
  std::size_t len = out.size();
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1 ||
      EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()) != 1 ||
      EVP_PKEY_CTX_set1_hkdf_salt(
          ctx.get(), reinterpret_cast<const unsigned char*>(kKdfSalt.data()),
          static_cast<int>(kKdfSalt.size())) != 1 ||
      EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), shared.data(),
                                 static_cast<int>(shared.size())) != 1 ||
      EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), info.data(),
                                  static_cast<int>(info.size())) != 1 ||
      EVP_PKEY_derive(ctx.get(), out.data(), &len) != 1) {
    Fail("hkdf");
  }
  SymmetricKey key("attest-channel", out);
  SecureZero(out);
  return key;
}

template <std::size_t N>
std::array<std::uint8_t, N> FixedFromBase64(const ojson& j, const char* name) {
  if (!j.contains(name) || !j[name].is_string()) {
    throw SchemaError(std::string("handshake: missing field '") + name + "'");
  }
  const Bytes raw = Base64Decode(j[name].get<std::string>());
  if (raw.size() != N) {
    throw SchemaError(std::string("handshake: field '") + name +
                      "' has wrong length");
  }
  std::array<std::uint8_t, N> out;
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

ojson ParseHandshake(std::string_view text) {
  try {
    ojson j = ojson::parse(text);
    if (!j.is_object()) throw SchemaError("handshake: expected object");
    return j;
  } catch (const ojson::parse_error& e) {
    throw SyntaxError(std::string("handshake: ") + e.what());
  }
}

}  // namespace

std::string DefaultBuildInfo() {
  return std::string(kEngineVersion) + ";" + std::string(kRuleSchemaVersion);
}

Measurement Measure(ByteView build_info) { return {Sha256(build_info)}; }

struct PlatformSigner::KeyHandle {
  Pkey key;
};

PlatformSigner::PlatformSigner(std::shared_ptr<KeyHandle> key)
    : key_(std::move(key)) {}

PlatformSigner PlatformSigner::Generate() {
  return PlatformSigner(
      std::make_shared<KeyHandle>(KeyHandle{GenerateKey(EVP_PKEY_ED25519)}));
}

PlatformSigner PlatformSigner::FromPrivateBytes(ByteView raw) {
  if (raw.size() != 32) throw SchemaError("platform key must be 32 bytes");
  Pkey key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, raw.data(),
                                        raw.size()));
  if (!key) Fail("ed25519 import");
  return PlatformSigner(std::make_shared<KeyHandle>(KeyHandle{std::move(key)}));
}

Signature PlatformSigner::Sign(ByteView message) const {
  MdCtx ctx(EVP_MD_CTX_new());
  Signature sig;
  std::size_t len = sig.size();
  if (!ctx ||
      EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr,
                         key_->key.get()) != 1 ||
      EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(),
                     message.size()) != 1) {
    Fail("ed25519 sign");
  }
  return sig;
}

PublicKey PlatformSigner::verification_key() const {
  return RawPublic(key_->key.get());
}

Bytes PlatformSigner::private_bytes() const {
  Bytes out(32);
  std::size_t len = out.size();
  if (EVP_PKEY_get_raw_private_key(key_->key.get(), out.data(), &len) != 1) {
    Fail("ed25519 export");
  }
  return out;
}

bool VerifyPlatformSignature(const PublicKey& verification_key,
                             ByteView message, const Signature& signature) {
  Pkey key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr,
                                       verification_key.data(),
                                       verification_key.size()));
  if (!key) return false;
  MdCtx ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr,
                                   key.get()) != 1) {
    return false;
  }
  return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(),
                          message.data(), message.size()) == 1;
}

Bytes Quote::SignedBytes() const {
  Bytes out(measurement.digest.begin(), measurement.digest.end());
  out.insert(out.end(), enclave_ephemeral_public.begin(),
             enclave_ephemeral_public.end());
  return out;
}

bool VerifyQuote(const Quote& quote, const Measurement& expected,
                 const PublicKey& platform_vk) {
  return quote.measurement == expected &&
         VerifyPlatformSignature(platform_vk, quote.SignedBytes(),
                                 quote.signature);
}

struct EnclaveHandshake::Ephemeral {
  Pkey key;
};

EnclaveHandshake::EnclaveHandshake(std::string enclave_id, ByteView build_info,
                                   const PlatformSigner& platform)
    : enclave_id_(std::move(enclave_id)),
      ephemeral_(std::make_unique<Ephemeral>(
          Ephemeral{GenerateKey(EVP_PKEY_X25519)})) {
  quote_.measurement = Measure(build_info);
  quote_.enclave_ephemeral_public = RawPublic(ephemeral_->key.get());
  quote_.signature = platform.Sign(quote_.SignedBytes());
}

EnclaveHandshake::~EnclaveHandshake() = default;
EnclaveHandshake::EnclaveHandshake(EnclaveHandshake&&) noexcept = default;
EnclaveHandshake& EnclaveHandshake::operator=(EnclaveHandshake&&) noexcept =
    default;

SessionKeySet EnclaveHandshake::Complete(const ServerHello& hello) const {
  KeyBytes shared =
      X25519Shared(ephemeral_->key.get(), hello.server_ephemeral_public);
  const SymmetricKey channel =
      DeriveChannelKey(shared, quote_.enclave_ephemeral_public,
                       hello.server_ephemeral_public);
  SecureZero(shared);
  if (ToString(hello.provisioning.aad) != AttestTopic(enclave_id_)) {
    throw AuthenticationError("provisioning addressed to another enclave");
  }
  Bytes plain = Decrypt(channel, hello.provisioning);
  SessionKeySet keys = SessionKeySetFromJson(ToString(plain));
  SecureZero(plain);
  keys.k_sgx = SymmetricKey::Generate("k_sgx");
  return keys;
}

Quote GenerateQuote(ByteView build_info, const PlatformSigner& platform) {
  return EnclaveHandshake("quote", build_info, platform).quote();
}

ProvisioningServer::ProvisioningServer(Measurement expected,
                                       PublicKey platform_vk,
                                       SessionKeySet keys)
    : expected_(expected), platform_vk_(platform_vk), keys_(std::move(keys)) {
  keys_.k_sgx.reset();
}

ServerHello ProvisioningServer::ProvisionKeys(std::string_view enclave_id,
                                              const Quote& quote) {
  if (!VerifyQuote(quote, expected_, platform_vk_)) {
    ++rejected_;
    throw AttestationRejected("quote verification failed for enclave '" +
                              std::string(enclave_id) + "'");
  }
  ServerHello hello = sealedrules::ProvisionKeys(enclave_id, quote, expected_,
                                                 platform_vk_, keys_);
  ++provisioned_;
  return hello;
}

ServerHello ProvisionKeys(std::string_view enclave_id, const Quote& quote,
                          const Measurement& expected,
                          const PublicKey& platform_vk,
                          const SessionKeySet& server_keys) {
  if (!VerifyQuote(quote, expected, platform_vk)) {
    throw AttestationRejected("quote verification failed");
  }
  Pkey ephemeral = GenerateKey(EVP_PKEY_X25519);
  ServerHello hello;
  hello.server_ephemeral_public = RawPublic(ephemeral.get());
  KeyBytes shared =
      X25519Shared(ephemeral.get(), quote.enclave_ephemeral_public);
  const SymmetricKey channel = DeriveChannelKey(
      shared, quote.enclave_ephemeral_public, hello.server_ephemeral_public);
  SecureZero(shared);
  std::string plain = SessionKeySetToJson(server_keys);
  // A fresh channel key per handshake, so a fixed nonce never repeats.
  hello.provisioning = EncryptWithNonce(channel, Nonce{}, AsBytes(plain),
                                        AsBytes(AttestTopic(enclave_id)),
                                        "attestation-server");
  SecureZero(std::span(reinterpret_cast<std::uint8_t*>(plain.data()),
                       plain.size()));
  return hello;
}

std::string AttestTopic(std::string_view enclave_id) {
  return "attest/" + std::string(enclave_id);
}

std::string QuoteMessageToJson(std::string_view enclave_id, const Quote& q) {
  ojson j;
  j["type"] = "quote";
  j["enclave_id"] = enclave_id;
  j["measurement"] = Base64Encode(q.measurement.digest);
  j["public"] = Base64Encode(q.enclave_ephemeral_public);
  j["signature"] = Base64Encode(q.signature);
  return j.dump();
}

std::string ServerHelloToJson(const ServerHello& hello) {
  ojson j;
  j["type"] = "server_hello";
  j["public"] = Base64Encode(hello.server_ephemeral_public);
  return j.dump();
}

std::string ProvisioningMessageToJson(const ServerHello& hello) {
  ojson j;
  j["type"] = "provisioning";
  j["envelope"] = EnvelopeToJson(hello.provisioning);
  return j.dump();
}

std::string HandshakeMessageType(std::string_view text) {
  try {
    const ojson j = ParseHandshake(text);
    if (j.contains("type") && j["type"].is_string()) {
      return j["type"].get<std::string>();
    }
  } catch (const Error&) {
  }
  return {};
}

Quote QuoteFromJson(std::string_view text) {
  const ojson j = ParseHandshake(text);
  Quote q;
  q.measurement.digest = FixedFromBase64<32>(j, "measurement");
  q.enclave_ephemeral_public = FixedFromBase64<32>(j, "public");
  q.signature = FixedFromBase64<64>(j, "signature");
  return q;
}

PublicKey ServerHelloFromJson(std::string_view text) {
  return FixedFromBase64<32>(ParseHandshake(text), "public");
}

Envelope ProvisioningFromJson(std::string_view text) {
  const ojson j = ParseHandshake(text);
  if (!j.contains("envelope") || !j["envelope"].is_string()) {
    throw SchemaError("handshake: missing field 'envelope'");
  }
  return EnvelopeFromJson(j["envelope"].get<std::string>());
}

std::string SessionKeySetToJson(const SessionKeySet& keys) {
  auto key_json = [](const SymmetricKey& k) {
    ojson j;
    j["kid"] = k.key_id();
    j["key"] = Base64Encode(k.bytes());
    return j;
  };
  ojson j;
  if (keys.rules_key) j["rules_key"] = key_json(*keys.rules_key);
  ojson devices = ojson::array();
  for (const auto& [device, key] : keys.device_keys) {
    ojson d = key_json(key);
    d["device"] = device.value();
    devices.push_back(std::move(d));
  }
  j["device_keys"] = std::move(devices);
  return j.dump();
}

SessionKeySet SessionKeySetFromJson(std::string_view text) {
  const ojson j = ParseHandshake(text);
  auto key_from = [](const ojson& k) {
    if (!k.is_object() || !k.contains("kid") || !k["kid"].is_string() ||
        !k.contains("key") || !k["key"].is_string()) {
      throw SchemaError("key set: malformed key entry");
    }
    return SymmetricKey(k["kid"].get<std::string>(),
                        ByteView(Base64Decode(k["key"].get<std::string>())));
  };
  SessionKeySet keys;
  if (j.contains("rules_key")) keys.rules_key = key_from(j["rules_key"]);
  if (!j.contains("device_keys") || !j["device_keys"].is_array()) {
    throw SchemaError("key set: missing 'device_keys'");
  }
  for (const ojson& d : j["device_keys"]) {
    if (!d.contains("device") || !d["device"].is_string()) {
      throw SchemaError("key set: device entry without 'device'");
    }
    keys.device_keys.insert_or_assign(DeviceId(d["device"].get<std::string>()),
                                      key_from(d));
  }
  return keys;
}

}  // namespace sealedrules
