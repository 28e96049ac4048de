#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace au2av {

/// 64-bit FNV-1a, rendered as 16 hex digits. Used for config fingerprints.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace au2av
