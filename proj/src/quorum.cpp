#include "securecast/quorum.hpp"

#include <sodium.h>

#include <algorithm>
#include <numeric>

#include "securecast/rng.hpp"

namespace securecast {

namespace {

constexpr std::uint8_t kDomainW3t = 0x31;
constexpr std::uint8_t kDomainActive = 0x41;

// Keyed BLAKE2b output stream for one (domain, message id): block i is
// H_key(domain | sender | seq | i), split into eight 64-bit words.
class KeyedStream {
 public:
  KeyedStream(const WitnessSeed& seed, std::uint8_t domain, const MessageId& id)
      : key_(seed.key()), domain_(domain), id_(id) {}

  std::uint64_t next() {
    if (pos_ == words_.size()) refill();
    return words_[pos_++];
  }

  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t max = ~std::uint64_t{0};
    const std::uint64_t limit = max - (max % bound + 1) % bound;
    std::uint64_t x;
    do {
      x = next();
    } while (x > limit);
    return x % bound;
  }

 private:
  void refill() {
    std::array<std::uint8_t, 17> input{};
    input[0] = domain_;
    const auto s = to_index(id_.sender);
    for (int i = 0; i < 4; ++i) input[1 + i] = static_cast<std::uint8_t>(s >> (8 * i));
    for (int i = 0; i < 8; ++i) input[5 + i] = static_cast<std::uint8_t>(id_.seq >> (8 * i));
    for (int i = 0; i < 4; ++i) input[13 + i] = static_cast<std::uint8_t>(block_ >> (8 * i));
    std::array<std::uint8_t, 64> out{};
    crypto_generichash(out.data(), out.size(), input.data(), input.size(), key_.data(), key_.size());
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t v = 0;
      for (int b = 7; b >= 0; --b) v = (v << 8) | out[8 * w + b];
      words_[w] = v;
    }
    ++block_;
    pos_ = 0;
  }

  std::array<std::uint8_t, 32> key_;
  std::uint8_t domain_;
  MessageId id_;
  std::uint32_t block_ = 0;
  std::array<std::uint64_t, 8> words_{};
  std::size_t pos_ = 8;
};

// Uniform k-subset of [0, n) without replacement, driven by the keyed stream.
std::vector<ProcessId> sample(KeyedStream& stream, std::uint32_t n, std::uint32_t k) {
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  for (std::uint32_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::uint32_t>(stream.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<ProcessId> out;
  out.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) out.push_back(ProcessId{pool[i]});
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void QuorumParams::validate() const {
  if (t < 1) throw InvalidParams("t: at least one tolerated fault is required (t >= 1)");
  if (3ull * t + 1 > n) {
    throw InvalidParams("n/t: 3t+1 > n (3t+1 = " + std::to_string(3ull * t + 1) + ", n = " + std::to_string(n) + ")");
  }
}

std::uint32_t dissemination_quorum_size(const QuorumParams& params) {
  params.validate();
  return (params.n + params.t + 2) / 2;
}

bool check_dissemination_properties(const QuorumParams& params, std::uint32_t q) noexcept {
  const auto two_q = 2ll * q;
  return two_q - params.n > static_cast<long long>(params.t) &&
         static_cast<long long>(q) <= static_cast<long long>(params.n) - params.t;
}

WitnessSeed::WitnessSeed(std::uint64_t value) : value_(value) {
  std::array<std::uint8_t, 26> input{};
  const char label[] = "securecast/witness";
  std::copy(label, label + 18, input.begin());
  for (int i = 0; i < 8; ++i) input[18 + i] = static_cast<std::uint8_t>(value >> (8 * i));
  crypto_generichash(key_.data(), key_.size(), input.data(), input.size(), nullptr, 0);
}

bool WitnessSet::contains(ProcessId p) const { return std::binary_search(members.begin(), members.end(), p); }

std::string_view to_string(W3tMode mode) { return mode == W3tMode::uniform ? "uniform" : "blocks"; }

W3tMode parse_w3t_mode(std::string_view text) {
  if (text == "uniform") return W3tMode::uniform;
  if (text == "blocks") return W3tMode::blocks;
  throw InvalidParams("w3t_mode: expected 'uniform' or 'blocks'");
}

WitnessSet w3t(const MessageId& id, const QuorumParams& params, const WitnessSeed& seed, W3tMode mode) {
  params.validate();
  const std::uint32_t size = 3 * params.t + 1;
  WitnessSet set;
  set.kind = WitnessKind::w3t_range;
  if (mode == W3tMode::blocks) {
    // Consecutive ranges of 3t+1 ids, rotated by sender and sequence number.
    const std::uint64_t base = (to_index(id.sender) + id.seq * size) % params.n;
    for (std::uint32_t i = 0; i < size; ++i) set.members.push_back(ProcessId{static_cast<std::uint32_t>((base + i) % params.n)});
    std::sort(set.members.begin(), set.members.end());
    return set;
  }
  KeyedStream stream(seed, kDomainW3t, id);
  set.members = sample(stream, params.n, size);
  return set;
}

WitnessSet w_active(const MessageId& id, std::uint32_t kappa, const QuorumParams& params, const WitnessSeed& seed) {
  if (kappa > params.n) throw InvalidParams("kappa: must not exceed n");
  KeyedStream stream(seed, kDomainActive, id);
  WitnessSet set;
  set.kind = WitnessKind::w_active;
  set.members = sample(stream, params.n, kappa);
  return set;
}

}  // namespace securecast
