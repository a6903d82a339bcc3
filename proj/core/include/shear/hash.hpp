#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace shear {

// 64-bit FNV-1a over raw bytes.
constexpr uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

}  // namespace shear
