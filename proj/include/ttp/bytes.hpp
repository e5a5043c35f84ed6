#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ttp {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

inline Bytes toBytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string toString(BytesView b) { return std::string(b.begin(), b.end()); }

inline void append(Bytes& out, BytesView more) { out.insert(out.end(), more.begin(), more.end()); }

inline Bytes concat(BytesView a, BytesView b) {
  Bytes out(a.begin(), a.end());
  append(out, b);
  return out;
}

std::string toHex(BytesView b);

/// Accepts upper or lower case; whitespace is skipped. Throws MalformedEncoding
/// on odd length or non-hex characters.
Bytes fromHex(std::string_view hex);

}  // namespace ttp
