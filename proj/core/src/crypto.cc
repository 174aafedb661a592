#include "sealedrules/crypto.h"

#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <limits>
#include <memory>

#include "json.hpp"
#include "sealedrules/error.h"

namespace sealedrules {

using ojson = nlohmann::ordered_json;

namespace {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

CipherCtx NewCipherCtx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw std::bad_alloc();
  return ctx;
}

[[noreturn]] void CryptoFailure(const char* what) {
  throw Error(ErrorCode::kIo, std::string("openssl: ") + what);
}

}  // namespace

SymmetricKey::SymmetricKey(std::string key_id, const KeyBytes& bytes)
    : key_id_(std::move(key_id)), bytes_(bytes) {}

SymmetricKey::SymmetricKey(std::string key_id, ByteView bytes)
    : key_id_(std::move(key_id)) {
  if (bytes.size() != kKeySize) {
    throw SchemaError("symmetric key must be exactly 32 bytes");
  }
  std::copy(bytes.begin(), bytes.end(), bytes_.begin());
}

SymmetricKey::~SymmetricKey() { SecureZero(bytes_); }

SymmetricKey SymmetricKey::Generate(std::string key_id) {
  KeyBytes bytes;
  if (RAND_bytes(bytes.data(), static_cast<int>(bytes.size())) != 1) {
    CryptoFailure("RAND_bytes");
  }
  SymmetricKey key(std::move(key_id), bytes);
  SecureZero(bytes);
  return key;
}

Bytes AeadSeal(const KeyBytes& key, const Nonce& nonce, ByteView plaintext,
               ByteView aad) {
  if (plaintext.size() > kMaxPlaintextSize) {
    throw SchemaError("plaintext exceeds 1 MiB");
  }
  CipherCtx ctx = NewCipherCtx();
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr,
                         nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize,
                          nullptr) != 1 ||
      EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(),
                         nonce.data()) != 1) {
    CryptoFailure("gcm init");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(),
                        static_cast<int>(aad.size())) != 1) {
    CryptoFailure("gcm aad");
  }
  Bytes out(plaintext.size() + kTagSize);
  int written = 0;
  if (!plaintext.empty()) {
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1) {
      CryptoFailure("gcm encrypt");
    }
    written = len;
  }
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    CryptoFailure("gcm final");
  }
  written += len;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize,
                          out.data() + written) != 1) {
    CryptoFailure("gcm tag");
  }
  return out;
}

Bytes AeadOpen(const KeyBytes& key, const Nonce& nonce,
               ByteView ciphertext_and_tag, ByteView aad) {
  if (ciphertext_and_tag.size() < kTagSize) {
    throw AuthenticationError("ciphertext shorter than the tag");
  }
  const std::size_t ct_len = ciphertext_and_tag.size() - kTagSize;
  CipherCtx ctx = NewCipherCtx();
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr,
                         nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize,
                          nullptr) != 1 ||
      EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(),
                         nonce.data()) != 1) {
    CryptoFailure("gcm init");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(),
                        static_cast<int>(aad.size())) != 1) {
    CryptoFailure("gcm aad");
  }
  Bytes out(ct_len);
  int written = 0;
  if (ct_len > 0) {
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len,
                          ciphertext_and_tag.data(),
                          static_cast<int>(ct_len)) != 1) {
      CryptoFailure("gcm decrypt");
    }
    written = len;
  }
  Bytes tag(ciphertext_and_tag.begin() + static_cast<std::ptrdiff_t>(ct_len),
            ciphertext_and_tag.end());
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize,
                          tag.data()) != 1) {
    CryptoFailure("gcm set tag");
  }
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    SecureZero(out);
    throw AuthenticationError("authentication tag mismatch");
  }
  return out;
}

Bytes EnvelopeAuthenticatedData(int version, std::string_view key_id,
                                std::string_view sender, ByteView aad) {
  Bytes out;
  out.reserve(16 + key_id.size() + sender.size() + aad.size());
  AppendU32BE(out, static_cast<std::uint32_t>(version));
  AppendU32BE(out, static_cast<std::uint32_t>(key_id.size()));
  out.insert(out.end(), key_id.begin(), key_id.end());
  AppendU32BE(out, static_cast<std::uint32_t>(sender.size()));
  out.insert(out.end(), sender.begin(), sender.end());
  AppendU32BE(out, static_cast<std::uint32_t>(aad.size()));
  out.insert(out.end(), aad.begin(), aad.end());
  return out;
}

Envelope EncryptWithNonce(const SymmetricKey& key, const Nonce& nonce,
                          ByteView plaintext, ByteView aad,
                          std::string_view sender) {
  Envelope env;
  env.key_id = key.key_id();
  env.sender = std::string(sender);
  env.nonce = nonce;
  env.aad.assign(aad.begin(), aad.end());
  env.ciphertext_and_tag = AeadSeal(
      key.bytes(), nonce, plaintext,
      EnvelopeAuthenticatedData(env.version, env.key_id, env.sender, aad));
  return env;
}

Bytes Decrypt(const SymmetricKey& key, const Envelope& env) {
  return AeadOpen(key.bytes(), env.nonce, env.ciphertext_and_tag,
                  EnvelopeAuthenticatedData(env.version, env.key_id,
                                            env.sender, env.aad));
}

Encryptor::Encryptor(SymmetricKey key) : key_(std::move(key)), counter_(0) {
  if (RAND_bytes(salt_.data(), static_cast<int>(salt_.size())) != 1) {
    CryptoFailure("RAND_bytes");
  }
}

Encryptor::Encryptor(SymmetricKey key, std::array<std::uint8_t, 4> salt,
                     std::uint64_t first_counter)
    : key_(std::move(key)), salt_(salt), counter_(first_counter) {}

Nonce Encryptor::NextNonce() {
  std::uint64_t n = counter_.load(std::memory_order_relaxed);
  do {
    if (n == std::numeric_limits<std::uint64_t>::max()) {
      throw NonceExhausted("nonce counter exhausted for key '" +
                           key_.key_id() + "'");
    }
  } while (!counter_.compare_exchange_weak(n, n + 1, std::memory_order_relaxed));
  Nonce nonce;
  std::copy(salt_.begin(), salt_.end(), nonce.begin());
  for (int i = 0; i < 8; ++i) {
    nonce[4 + i] = static_cast<std::uint8_t>(n >> (56 - 8 * i));
  }
  return nonce;
}

Envelope Encryptor::Encrypt(ByteView plaintext, ByteView aad,
                            std::string_view sender) {
  return EncryptWithNonce(key_, NextNonce(), plaintext, aad, sender);
}

void Keyring::Add(const SymmetricKey& key) {
  keys_.insert_or_assign(key.key_id(), key);
}

bool Keyring::Contains(std::string_view key_id) const {
  return keys_.find(key_id) != keys_.end();
}

Bytes Keyring::Decrypt(const Envelope& env) const {
  auto it = keys_.find(env.key_id);
  if (it == keys_.end()) {
    throw KeyMismatch("unknown key id '" + env.key_id + "'");
  }
  return sealedrules::Decrypt(it->second, env);
}

namespace {

ojson EnvelopeJson(const Envelope& env) {
  ojson j;
  j["v"] = env.version;
  j["kid"] = env.key_id;
  j["sid"] = env.sender;
  j["n"] = Base64Encode(env.nonce);
  j["ct"] = Base64Encode(env.ciphertext_and_tag);
  j["aad"] = Base64Encode(env.aad);
  return j;
}

Envelope EnvelopeFromObject(const ojson& j) {
  if (!j.is_object()) throw SchemaError("envelope: expected an object");
  auto str = [&](const char* name) -> std::string {
    auto it = j.find(name);
    if (it == j.end() || !it->is_string()) {
      throw SchemaError(std::string("envelope: missing string field '") +
                        name + "'");
    }
    return it->get<std::string>();
  };
  Envelope env;
  auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer()) {
    throw SchemaError("envelope: missing integer field 'v'");
  }
  const auto version = v->get<std::int64_t>();
  if (version < 0 || version > std::numeric_limits<int>::max()) {
    throw SchemaError("envelope: version out of range");
  }
  env.version = static_cast<int>(version);
  env.key_id = str("kid");
  env.sender = str("sid");
  const Bytes nonce = Base64Decode(str("n"));
  if (nonce.size() != kNonceSize) {
    throw SchemaError("envelope: nonce must be 12 bytes");
  }
  std::copy(nonce.begin(), nonce.end(), env.nonce.begin());
  env.ciphertext_and_tag = Base64Decode(str("ct"));
  if (env.ciphertext_and_tag.size() < kTagSize) {
    throw SchemaError("envelope: ciphertext shorter than the tag");
  }
  env.aad = Base64Decode(str("aad"));
  return env;
}

}  // namespace

std::string EnvelopeToJson(const Envelope& env) {
  return EnvelopeJson(env).dump();
}

Envelope EnvelopeFromJson(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw SyntaxError(std::string("envelope: ") + e.what());
  }
  return EnvelopeFromObject(j);
}

std::string SealedRecordToJson(const SealedRecord& rec) {
  ojson j;
  j["device"] = rec.device.value();
  j["rule_count"] = rec.rule_count;
  j["blob"] = EnvelopeJson(rec.blob);
  return j.dump();
}

SealedRecord SealedRecordFromJson(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw SyntaxError(std::string("sealed record: ") + e.what());
  }
  if (!j.is_object() || !j.contains("device") || !j["device"].is_string() ||
      !j.contains("rule_count") || !j["rule_count"].is_number_unsigned() ||
      !j.contains("blob")) {
    throw SchemaError("sealed record: missing or ill-typed field");
  }
  return SealedRecord{DeviceId(j["device"].get<std::string>()),
                      EnvelopeFromObject(j["blob"]),
                      j["rule_count"].get<std::uint32_t>()};
}

std::string SealAad(const DeviceId& device) { return "sealed/" + device.value(); }

SealedRecord SealRules(Encryptor& sealer, const DeviceId& device,
                       const std::vector<Rule>& rules) {
  Bytes plain;
  AppendU32BE(plain, static_cast<std::uint32_t>(rules.size()));
  for (const Rule& r : rules) {
    if (!r.References(device)) {
      throw BindingError("rule '" + r.id + "' does not reference device '" +
                         device.value() + "'");
    }
    const std::string text = SerializeRule(r);
    AppendU32BE(plain, static_cast<std::uint32_t>(text.size()));
    plain.insert(plain.end(), text.begin(), text.end());
  }
  SealedRecord rec{device,
                   sealer.Encrypt(plain, AsBytes(SealAad(device)), "enclave"),
                   static_cast<std::uint32_t>(rules.size())};
  SecureZero(plain);
  return rec;
}

std::vector<Rule> UnsealRules(const SymmetricKey& k_sgx,
                              const SealedRecord& rec) {
  if (ToString(rec.blob.aad) != SealAad(rec.device)) {
    throw AuthenticationError("sealed record bound to another device");
  }
  Bytes plain = Decrypt(k_sgx, rec.blob);
  const ByteView view(plain);
  std::vector<Rule> rules;
  std::size_t pos = 0;
  auto take_u32 = [&]() -> std::uint32_t {
    if (view.size() - pos < 4) {
      throw AuthenticationError("sealed blob truncated");
    }
    const std::uint32_t v = ReadU32BE(view.subspan(pos, 4));
    pos += 4;
    return v;
  };
  const std::uint32_t count = take_u32();
  if (count != rec.rule_count) {
    SecureZero(plain);
    throw AuthenticationError("sealed record rule_count mismatch");
  }
  rules.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = take_u32();
    if (view.size() - pos < len) throw AuthenticationError("sealed blob truncated");
    rules.push_back(ParseRule(std::string_view(
        reinterpret_cast<const char*>(view.data() + pos), len)));
    pos += len;
  }
  SecureZero(plain);
  return rules;
}

Digest Sha256(ByteView data) {
  Digest d;
  SHA256(data.data(), data.size(), d.data());
  return d;
}

Bytes RandomBytes(std::size_t n) {
  Bytes out(n);
  if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
    CryptoFailure("RAND_bytes");
  }
  return out;
}

}  // namespace sealedrules
