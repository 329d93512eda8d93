#pragma once

// Byzantine strategies for the faulty processes of a run.
//
// A single Strategy object drives every faulty process, so colluding
// processes coordinate through its private state. It signs only with keys the
// KeyRing has handed over (compromised processes), never reads correct
// processes' state, and returns the same Action vocabulary the honest engines
// use; the simulator executes those actions on behalf of `self`.

#include <boost/dynamic_bitset.hpp>

#include <memory>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "securecast/core.hpp"
#include "securecast/protocols.hpp"
#include "securecast/quorum.hpp"

namespace securecast {

enum class AdversaryKind { none, silent, crash, equivocate, collusive, regime_split, seq_burner };

std::string_view to_string(AdversaryKind kind);
AdversaryKind parse_adversary(std::string_view text);

class TooManyFaulty : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// What the faulty processes know when the run starts.
struct AdversaryContext {
  const KeyRing* keys = nullptr;
  ProtocolKind kind = ProtocolKind::E;
  ProtocolParams params;
  WitnessSeed seed;           // needed to take part in the protocol at all
  bool knows_r = true;        // may plan attacks around W_active
  std::vector<ProcessId> faulty;  // sorted
  Tick crash_at = 0;
  Tick attack_window = 200;   // how long a conflicting sender waits for both certificates
  std::uint64_t rng_seed = 0;

  std::uint32_t n() const noexcept { return params.quorum.n; }
  bool is_faulty(ProcessId p) const;
  std::vector<ProcessId> correct() const;
};

class Strategy {
 public:
  explicit Strategy(AdversaryContext ctx) : ctx_(std::move(ctx)) {}
  virtual ~Strategy() = default;

  Strategy(const Strategy&) = delete;
  Strategy& operator=(const Strategy&) = delete;

  /// The workload asks faulty process `self` to multicast `payload` as its next message.
  virtual Actions on_multicast(ProcessId self, Bytes payload, Tick now) = 0;
  virtual Actions on_message(ProcessId self, ProcessId from, const WireMessage& msg, Tick now) = 0;
  virtual Actions on_timer(ProcessId /*self*/, const TimerId& /*timer*/, Tick /*now*/) { return {}; }
  virtual Actions on_stability_update(ProcessId /*self*/, const MessageId& /*subject*/,
                                      const boost::dynamic_bitset<>& /*delivered_by*/) {
    return {};
  }

  /// Ids for which the adversary attempted a conflicting delivery.
  const std::vector<MessageId>& attacks() const noexcept { return attacks_; }
  const AdversaryContext& context() const noexcept { return ctx_; }

 protected:
  void note_attack(const MessageId& id) { attacks_.push_back(id); }

  AdversaryContext ctx_;

 private:
  std::vector<MessageId> attacks_;
};

/// The faulty set: a pure function of (n, count, adversary seed).
std::vector<ProcessId> choose_faulty(std::uint32_t n, std::uint32_t count, std::uint64_t adversary_seed);

/// Hands the faulty processes' keys to the adversary. Throws TooManyFaulty when |faulty| > t.
void bind_adversary(KeyRing& keys, const std::vector<ProcessId>& faulty, std::uint32_t t);

/// Throws InvalidParams when the strategy cannot run under ctx.kind (regime-split and seq-burner need ACT).
std::unique_ptr<Strategy> make_strategy(AdversaryKind kind, AdversaryContext ctx);

}  // namespace securecast
