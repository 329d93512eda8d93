#pragma once

// Dissemination-quorum arithmetic and the two witness-selection functions.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "securecast/core.hpp"

namespace securecast {

class InvalidParams : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct QuorumParams {
  std::uint32_t n = 4;
  std::uint32_t t = 1;

  /// Throws InvalidParams unless 1 <= t and 3t+1 <= n.
  void validate() const;
};

/// q = ceil((n+t+1)/2): two q-sets meet in more than t processes and q <= n-t.
std::uint32_t dissemination_quorum_size(const QuorumParams& params);

/// Consistency (2q - n > t) and Availability (q <= n - t).
bool check_dissemination_properties(const QuorumParams& params, std::uint32_t q) noexcept;

/// Keys the pseudorandom witness functions. Fixed at run setup.
class WitnessSeed {
 public:
  WitnessSeed() : WitnessSeed(0) {}
  explicit WitnessSeed(std::uint64_t value);

  std::uint64_t value() const noexcept { return value_; }
  const std::array<std::uint8_t, 32>& key() const noexcept { return key_; }

  bool operator==(const WitnessSeed& other) const noexcept { return value_ == other.value_; }

 private:
  std::uint64_t value_ = 0;
  std::array<std::uint8_t, 32> key_{};
};

enum class WitnessKind { e_quorum, w3t_range, w3t_quorum, w_active, peer_targets };

/// Sorted, distinct members.
struct WitnessSet {
  std::vector<ProcessId> members;
  WitnessKind kind = WitnessKind::w3t_range;

  bool contains(ProcessId p) const;
  std::size_t size() const noexcept { return members.size(); }
};

/// How W_3T spreads ranges over the process set.
enum class W3tMode { uniform, blocks };

std::string_view to_string(W3tMode mode);
W3tMode parse_w3t_mode(std::string_view text);

/// The 3t+1 potential witnesses of a message id.
WitnessSet w3t(const MessageId& id, const QuorumParams& params, const WitnessSeed& seed,
               W3tMode mode = W3tMode::uniform);

/// The kappa active witnesses of a message id (the random function R).
WitnessSet w_active(const MessageId& id, std::uint32_t kappa, const QuorumParams& params,
                    const WitnessSeed& seed);

}  // namespace securecast
