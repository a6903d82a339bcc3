#include "shear/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

#include "shear/rng.hpp"

namespace shear {

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256: EVP_Digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

uint64_t derive_seed(uint64_t seed, const std::string& tag, uint64_t n) {
  uint64_t h = fnv1a64(tag);
  // SplitMix64 finalizer over the combined words.
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (h ^ (n + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace shear
