#include "securecast/rng.hpp"

#include <sodium.h>

#include <array>
#include <vector>

namespace securecast {

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index) {
  std::vector<std::uint8_t> input(label.begin(), label.end());
  for (int i = 0; i < 8; ++i) input.push_back(static_cast<std::uint8_t>(parent >> (8 * i)));
  for (int i = 0; i < 8; ++i) input.push_back(static_cast<std::uint8_t>(index >> (8 * i)));
  std::array<std::uint8_t, 8> out{};
  crypto_generichash(out.data(), out.size(), input.data(), input.size(), nullptr, 0);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | out[i];
  return v;
}

}  // namespace securecast
