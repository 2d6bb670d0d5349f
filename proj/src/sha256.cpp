#include "splitwise/sha256.hpp"

#include <openssl/sha.h>

namespace splitwise {

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> digest{};
  SHA256(data.data(), data.size(), digest.data());
  return digest;
}

}  // namespace splitwise
