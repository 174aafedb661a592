#ifndef SEALEDRULES_BYTES_H_
#define SEALEDRULES_BYTES_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sealedrules {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView AsBytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes ToBytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string ToString(ByteView b) {
  return std::string(b.begin(), b.end());
}

// Standard alphabet, padded.
std::string Base64Encode(ByteView data);
// Throws SyntaxError on any non-canonical input.
Bytes Base64Decode(std::string_view text);

std::string HexEncode(ByteView data);
Bytes HexDecode(std::string_view text);

void AppendU32BE(Bytes& out, std::uint32_t v);
std::uint32_t ReadU32BE(ByteView in);
void AppendU64BE(Bytes& out, std::uint64_t v);

// True when needle occurs anywhere in haystack.
bool ContainsSubsequence(ByteView haystack, ByteView needle);

// Overwrites the buffer in a way the optimizer may not elide.
void SecureZero(std::span<std::uint8_t> data);

}  // namespace sealedrules

#endif  // SEALEDRULES_BYTES_H_
