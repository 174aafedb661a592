#include "sealedrules/store.h"

#include <cstring>

#include "sealedrules/bytes.h"
#include "sealedrules/error.h"

namespace sealedrules {

namespace {
constexpr char kMagic[8] = {'S', 'R', 'S', 'T', 'O', 'R', 'E', 0x01};
constexpr std::uint32_t kTombstone = 0xffffffff;
}

SealedStore::SealedStore(std::filesystem::path path) : path_(std::move(path)) {
  Load();
  file_ = std::fopen(path_->c_str(), "ab");
  if (file_ == nullptr) {
    throw IoError("cannot open store '" + path_->string() + "'");
  }
  if (std::ftell(file_) == 0) {
    std::fwrite(kMagic, 1, sizeof(kMagic), file_);
    std::fflush(file_);
  }
}

SealedStore::~SealedStore() {
  if (file_ != nullptr) {
    std::fflush(file_);
    std::fclose(file_);
  }
}

void SealedStore::Load() {
  std::FILE* in = std::fopen(path_->c_str(), "rb");
  if (in == nullptr) return;
  std::string data;
  char buf[1 << 14];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), in)) > 0) data.append(buf, n);
  std::fclose(in);
  if (data.empty()) return;
  if (data.size() < sizeof(kMagic) ||
      std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("store '" + path_->string() + "' has an unknown header");
  }
  const ByteView view = AsBytes(data);
  std::size_t pos = sizeof(kMagic);
  bool erased = false;
  auto take = [&](std::string& out) {
    if (view.size() - pos < 4) return false;
    const std::uint32_t len = ReadU32BE(view.subspan(pos, 4));
    if (len == kTombstone) {
      pos += 4;
      erased = true;
      return true;
    }
    if (view.size() - pos - 4 < len) return false;
    out.assign(data, pos + 4, len);
    pos += 4 + len;
    return true;
  };
  std::size_t good = pos;
  while (pos < view.size()) {
    std::string device, value;
    erased = false;
    if (!take(device) || erased || !take(value)) break;
    if (erased) {
      values_.erase(DeviceId(std::move(device)));
    } else {
      values_.insert_or_assign(DeviceId(std::move(device)), std::move(value));
    }
    good = pos;
  }
  // Drop a torn tail so that later appends start on a record boundary.
  if (good < data.size()) {
    std::error_code ec;
    std::filesystem::resize_file(*path_, good, ec);
    if (ec) throw IoError("cannot truncate store '" + path_->string() + "': " + ec.message());
  }
}

void SealedStore::Put(const DeviceId& d, std::string value) {
  std::lock_guard lock(mu_);
  if (file_ != nullptr) {
    Bytes frame;
    AppendU32BE(frame, static_cast<std::uint32_t>(d.value().size()));
    frame.insert(frame.end(), d.value().begin(), d.value().end());
    AppendU32BE(frame, static_cast<std::uint32_t>(value.size()));
    frame.insert(frame.end(), value.begin(), value.end());
    if (std::fwrite(frame.data(), 1, frame.size(), file_) != frame.size()) {
      throw IoError("short write to store");
    }
  }
  values_.insert_or_assign(d, std::move(value));
}

void SealedStore::Erase(const DeviceId& d) {
  std::lock_guard lock(mu_);
  if (values_.erase(d) == 0) return;
  if (file_ != nullptr) {
    Bytes frame;
    AppendU32BE(frame, static_cast<std::uint32_t>(d.value().size()));
    frame.insert(frame.end(), d.value().begin(), d.value().end());
    AppendU32BE(frame, kTombstone);
    if (std::fwrite(frame.data(), 1, frame.size(), file_) != frame.size()) {
      throw IoError("short write to store");
    }
  }
}

std::optional<std::string> SealedStore::Get(const DeviceId& d) const {
  std::lock_guard lock(mu_);
  ++reads_;
  auto it = values_.find(d);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

bool SealedStore::Contains(const DeviceId& d) const {
  std::lock_guard lock(mu_);
  return values_.count(d) != 0;
}

std::size_t SealedStore::size() const {
  std::lock_guard lock(mu_);
  return values_.size();
}

std::vector<DeviceId> SealedStore::Keys() const {
  std::lock_guard lock(mu_);
  std::vector<DeviceId> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

void SealedStore::Flush() {
  std::lock_guard lock(mu_);
  if (file_ != nullptr) std::fflush(file_);
}

std::uint64_t SealedStore::reads() const {
  std::lock_guard lock(mu_);
  return reads_;
}

}  // namespace sealedrules
