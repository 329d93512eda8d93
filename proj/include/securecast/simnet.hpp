#pragma once

// Deterministic discrete-event network for running the engines.
//
// Channels are authenticated and FIFO per ordered pair. Each transmission
// attempt is dropped independently with probability p_drop and retried after
// retransmit_interval, so the chance that a message has arrived approaches one
// as time passes. Alerts travel on a separate control plane with a hard latency
// bound. Stability news comes from a trusted oracle that only reports real
// deliveries.

#include <boost/dynamic_bitset.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "securecast/adversary.hpp"
#include "securecast/checker.hpp"
#include "securecast/core.hpp"
#include "securecast/protocols.hpp"
#include "securecast/rng.hpp"
#include "securecast/trace.hpp"

namespace securecast {

struct SimSeeds {
  std::uint64_t world = 0;
  std::uint64_t witness = 0;
  std::uint64_t adversary = 0;

  /// The three independent seeds behind a single --seed value.
  static SimSeeds from(std::uint64_t seed);
};

struct SimConfig {
  std::uint32_t n = 4;
  std::uint32_t t = 1;
  ProtocolKind protocol = ProtocolKind::E;
  std::uint32_t kappa = 3;
  std::uint32_t delta = 5;
  std::uint32_t slack_c = 0;
  W3tMode w3t_mode = W3tMode::uniform;

  double p_drop = 0.0;
  Tick retransmit_interval = 10;
  Tick latency_lo = 1;
  Tick latency_hi = 10;
  Tick alert_latency = 5;
  bool alert_can_lose = false;  // outside the model; experiments only

  std::optional<Tick> recovery_ack_delay;  // default 2 * alert_latency
  std::optional<Tick> recovery_timeout;    // default 6 * latency_hi
  Tick stability_lag = 20;
  Tick stability_timeout = 100;
  std::size_t holdback_cap = 4096;

  std::uint64_t messages = 1;         // multicasts by uniformly chosen correct senders
  Tick message_interval = 1;
  std::uint64_t faulty_messages = 1;  // multicasts requested from each faulty process

  AdversaryKind adversary = AdversaryKind::none;
  std::optional<std::uint32_t> faulty_count;  // default t, or 0 without an adversary
  std::optional<std::vector<std::uint32_t>> faulty;  // explicit faulty set, bypasses the seeded choice
  Tick crash_at = 15;
  bool adversary_knows_r = true;

  SimSeeds seeds;
  Tick max_ticks = 100'000'000;
  bool check_invariants = true;

  Tick effective_recovery_ack_delay() const { return recovery_ack_delay.value_or(2 * alert_latency); }
  Tick effective_recovery_timeout() const { return recovery_timeout.value_or(6 * latency_hi); }
  std::uint32_t effective_faulty_count() const;
  ProtocolParams protocol_params() const;

  /// Throws InvalidParams naming the offending field.
  void validate() const;
};

struct RunReport {
  std::uint32_t n = 0;
  std::vector<ProcessId> faulty;
  std::uint64_t multicasts = 0;  // by correct senders
  std::vector<std::uint64_t> deliveries;  // per process, correct processes only
  std::uint64_t conflicts = 0;
  std::vector<MessageId> conflicting_ids;
  std::uint64_t alerts = 0;  // raised by correct processes
  std::vector<std::array<std::uint64_t, kRoleCount>> handled;  // messages handled per role, per process
  std::vector<std::uint64_t> witness_accesses;  // signer of a certificate broadcast by a correct sender
  std::vector<std::uint64_t> peer_accesses;     // verify sent while serving as a probed peer
  std::vector<MessageId> attacked;
  Tick ticks = 0;
  std::uint64_t events = 0;
  bool quiescent = false;
  std::vector<Violation> violations;

  std::uint64_t total_deliveries() const;
  /// Conflicting ids among the attacked ones.
  std::uint64_t attacked_conflicts() const;
};

class SimWorld {
 public:
  /// Throws InvalidParams / TooManyFaulty.
  explicit SimWorld(const SimConfig& config, TraceSink* sink = nullptr);
  ~SimWorld();

  SimWorld(SimWorld&&) noexcept;
  SimWorld& operator=(SimWorld&&) noexcept;

  const SimConfig& config() const noexcept { return config_; }
  Tick now() const noexcept { return clock_; }
  bool idle() const noexcept { return queue_.empty(); }
  const std::vector<ProcessId>& faulty() const noexcept { return faulty_; }
  bool is_faulty(ProcessId p) const { return faulty_mask_[to_index(p)]; }
  const ProcessEngine* engine(ProcessId p) const;
  const WitnessSeed& witness_seed() const noexcept { return witness_seed_; }

  /// Pops and dispatches one event. Returns false when the queue is empty.
  bool step();
  RunReport run_to_quiescence();
  RunReport run_to_quiescence(Tick max_ticks);

  /// Hash over the clock, the pending events and every engine's delivery state.
  std::uint64_t state_hash() const;

 private:
  struct Transmission {
    ProcessId src{}, dst{};
    std::uint64_t chan = 0;
    WireMessage msg;
    std::optional<Tick> req;
  };
  struct Arrival { std::shared_ptr<Transmission> tx; };
  struct Retransmit { std::shared_ptr<Transmission> tx; };
  struct TimerFire { ProcessId p{}; TimerId id; Tick set_at = 0; };
  struct MulticastStart { ProcessId p{}; std::uint64_t index = 0; };
  struct AlertArrival { ProcessId raiser{}; ProcessId dst{}; std::shared_ptr<const Evidence> evidence; };
  struct StabilityBatch { MessageId id; };
  using Payload = std::variant<Arrival, Retransmit, TimerFire, MulticastStart, AlertArrival, StabilityBatch>;

  struct Event {
    Tick time = 0;
    std::uint64_t order = 0;
    std::uint32_t slot = 0;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : order > o.order; }
  };

  struct Channel {
    std::uint64_t sent = 0;
    std::uint64_t next_recv = 1;
    std::map<std::uint64_t, std::shared_ptr<Transmission>> early;
    std::optional<Rng> rng;
  };

  void schedule(Tick at, Payload payload);
  Channel& channel(ProcessId src, ProcessId dst);
  void emit(TraceRecord&& r);

  void execute(ProcessId p, Actions actions, std::optional<Tick> req = std::nullopt);
  void transmit(ProcessId src, ProcessId dst, WireMessage msg, std::optional<Tick> req);
  void attempt(const std::shared_ptr<Transmission>& tx);
  void on_arrival(const std::shared_ptr<Transmission>& tx);
  void dispatch(const Transmission& tx);
  void on_timer(const TimerFire& fire);
  void on_multicast(const MulticastStart& start);
  void on_alert(const AlertArrival& alert);
  void on_stability(const StabilityBatch& batch);
  void record_delivery(ProcessId p, const Deliver& d);
  void raise_alert(ProcessId p, const RaiseAlert& alert);
  void note_attacks();
  RunReport report();
  bool tracing() const noexcept { return sink_ != nullptr || checker_ != nullptr; }

  SimConfig config_;
  TraceSink* sink_ = nullptr;
  std::unique_ptr<InvariantChecker> checker_;

  Tick clock_ = 0;
  std::uint64_t order_ = 0;
  std::uint64_t events_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::vector<std::optional<Payload>> slots_;
  std::vector<std::uint32_t> free_slots_;

  std::unique_ptr<KeyRing> keys_;
  WitnessSeed witness_seed_;
  std::vector<ProcessId> faulty_;
  std::vector<bool> faulty_mask_;
  std::vector<std::optional<ProcessEngine>> engines_;
  std::unique_ptr<Strategy> strategy_;
  std::size_t attacks_seen_ = 0;
  bool ended_ = false;

  std::vector<Channel> channels_;
  Rng workload_rng_;
  Rng alert_rng_;

  std::map<MessageId, boost::dynamic_bitset<>> stability_pending_;
  std::map<MessageId, std::set<Digest>> delivered_digests_;
  std::set<MessageId> certified_broadcast_;

  RunReport stats_;
};

}  // namespace securecast
