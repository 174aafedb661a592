#ifndef SEALEDRULES_STORE_H_
#define SEALEDRULES_STORE_H_

#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sealedrules/rule.h"

namespace sealedrules {

// Durable device-keyed record store kept outside the trusted boundary.
// Values are opaque: sealed records in full mode, plaintext otherwise.
//
// File layout: the 8-byte header "SRSTORE" 0x01, then records of
//   u32be len | device id | u32be len | value
// appended on every Put. Erase appends the device with length 0xffffffff
// and no value. On open the log is replayed and the last record for a
// device wins; a torn trailing record is dropped.
class SealedStore {
 public:
  // Memory only.
  SealedStore() = default;
  // Opens or creates the log. Throws IoError on a bad header or I/O error.
  explicit SealedStore(std::filesystem::path path);
  ~SealedStore();

  SealedStore(const SealedStore&) = delete;
  SealedStore& operator=(const SealedStore&) = delete;

  void Put(const DeviceId& d, std::string value);
  void Erase(const DeviceId& d);
  std::optional<std::string> Get(const DeviceId& d) const;
  bool Contains(const DeviceId& d) const;
  std::size_t size() const;
  std::vector<DeviceId> Keys() const;
  void Flush();

  // Number of Get calls; lets tests and the harness observe store reads.
  std::uint64_t reads() const;

 private:
  void Load();

  std::optional<std::filesystem::path> path_;
  std::FILE* file_ = nullptr;
  mutable std::mutex mu_;
  std::map<DeviceId, std::string> values_;
  mutable std::uint64_t reads_ = 0;
};

}  // namespace sealedrules

#endif  // SEALEDRULES_STORE_H_
