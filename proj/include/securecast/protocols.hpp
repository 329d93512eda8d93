#pragma once

// The E, 3T and ACT(t) engines as event-driven state machines.
//
// An engine consumes one input (a wire message, a timer, a multicast request)
// and returns the actions it wants performed. It never touches the network or
// the clock directly, and all of its randomness comes from the RNG stream that
// lives inside its ProcessState, so copying an engine forks it exactly.

#include <boost/dynamic_bitset.hpp>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "securecast/core.hpp"
#include "securecast/quorum.hpp"
#include "securecast/rng.hpp"

namespace securecast {

enum class ProtocolKind { E, ThreeT, Act };

std::string_view to_string(ProtocolKind kind);
ProtocolKind parse_protocol(std::string_view text);

enum class Role : std::uint8_t { regular, ack, deliver, inform, verify, alert, sm_notify };

constexpr std::size_t kRoleCount = 7;

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

/// A signed sender claim: enough to convict the sender if it ever signs a
/// different digest for the same id.
struct SignedClaim {
  MessageId id;
  Digest digest;
  Signature sender_sig;

  bool operator==(const SignedClaim&) const = default;
};

/// Proof of equivocation: two claims for one id with different digests.
struct Evidence {
  SignedClaim first;
  SignedClaim second;

  bool operator==(const Evidence&) const = default;
};

bool verify_evidence(const KeyRing& keys, const Evidence& ev);

struct WireMessage {
  Tag proto = Tag::E;
  Role role = Role::regular;
  MessageId subject;
  std::optional<Digest> digest;
  std::shared_ptr<const MulticastMessage> body;  // deliver
  std::shared_ptr<const AckSet> ack_set;         // deliver
  std::optional<Signature> sender_sig;           // AV regular/inform, ACT 3T regular
  std::optional<Ack> ack;                        // ack (the signer signature lives inside)
  std::optional<Evidence> evidence;              // alert
};

WireMessage make_regular(Tag proto, const MessageId& id, const Digest& d, std::optional<Signature> sender_sig = {});
WireMessage make_deliver(Tag proto, std::shared_ptr<const MulticastMessage> body, std::shared_ptr<const AckSet> acks);
WireMessage make_ack_message(Ack ack);
WireMessage make_alert(Evidence ev);

enum class TimerKind : std::uint8_t { recovery, ack_release, reforward, adversary };

std::string_view to_string(TimerKind kind);

struct TimerId {
  TimerKind kind = TimerKind::recovery;
  MessageId subject;
  std::uint64_t token = 0;

  auto operator<=>(const TimerId&) const = default;
};

struct Send {
  ProcessId to{};
  WireMessage msg;
};

/// Send to every process in P, including the emitter.
struct Broadcast {
  WireMessage msg;
};

struct Deliver {
  std::shared_ptr<const MulticastMessage> message;
  std::shared_ptr<const AckSet> certificate;
};

struct SetTimer {
  TimerId id;
  Tick delay = 0;
};

struct RaiseAlert {
  Evidence evidence;
};

using Action = std::variant<Send, Broadcast, Deliver, SetTimer, RaiseAlert>;
using Actions = std::vector<Action>;

struct ProtocolParams {
  QuorumParams quorum;
  std::uint32_t kappa = 3;
  std::uint32_t delta = 5;
  std::uint32_t slack_c = 0;
  Tick recovery_timeout = 60;
  Tick recovery_ack_delay = 10;
  Tick stability_timeout = 100;
  std::size_t holdback_cap = 4096;
  W3tMode w3t_mode = W3tMode::uniform;

  /// Throws InvalidParams with a field-precise message.
  void validate(ProtocolKind kind) const;
};

enum class Regime { active, recovery };

struct PendingSend {
  std::shared_ptr<const MulticastMessage> message;
  Digest digest;
  std::optional<Signature> sender_sig;
  Regime regime = Regime::active;
  Tag ack_tag = Tag::E;
  std::vector<Ack> acks;
  std::size_t required = 0;
  Tick deadline = 0;
};

struct RecordedClaim {
  Digest digest;
  std::optional<Signature> sender_sig;
};

struct Probe {
  Digest digest;
  Signature sender_sig;
  std::vector<ProcessId> targets;
  std::set<ProcessId> verified;
  bool acked = false;
};

struct Certified {
  std::shared_ptr<const MulticastMessage> message;
  std::shared_ptr<const AckSet> certificate;
  Tag proto = Tag::E;
};

struct ProcessState {
  ProcessId me{};
  ProtocolKind kind = ProtocolKind::E;
  ProtocolParams params;
  WitnessSeed seed;

  std::vector<std::uint64_t> delivery;  // last delivered seq per sender
  std::uint64_t last_sent = 0;
  std::map<MessageId, RecordedClaim> recorded;
  std::map<MessageId, PendingSend> pending_sends;
  std::map<MessageId, Certified> holdback;
  std::map<MessageId, Probe> peers_chosen;
  std::map<MessageId, Digest> pending_ack_release;
  std::set<ProcessId> known_faulty;
  std::map<MessageId, boost::dynamic_bitset<>> stability_view;
  std::map<MessageId, Certified> reforward;
  Rng rng;
};

class SequenceGap : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Empty state with a zero delivery vector. Throws InvalidParams.
ProcessState init_process(ProcessId me, ProtocolKind kind, const ProtocolParams& params, const WitnessSeed& seed,
                          std::uint64_t rng_seed);

/// delta peers drawn without replacement from `range` minus `self`.
std::vector<ProcessId> choose_peers(Rng& rng, const std::vector<ProcessId>& range, ProcessId self,
                                    std::uint32_t delta);

/// Certificate check used by on_deliver: which rule (if any) the ack set meets.
std::optional<Tag> validate_certificate(const KeyRing& keys, const ProcessState& state, const MulticastMessage& m,
                                        const Digest& d, const AckSet& acks);

class ProcessEngine {
 public:
  ProcessEngine(ProcessState state, const KeyRing& keys);

  const ProcessState& state() const noexcept { return state_; }
  ProcessId id() const noexcept { return state_.me; }

  /// Multicasts the next message in sequence with `payload`.
  Actions wan_multicast(Bytes payload, Tick now);
  /// Throws SequenceGap unless m.id is (me, last_sent + 1).
  Actions wan_multicast(const MulticastMessage& m, Tick now);

  /// Dispatches on msg.role.
  Actions handle(ProcessId from, const WireMessage& msg, Tick now);

  Actions on_regular(ProcessId from, const WireMessage& msg, Tick now);
  Actions on_inform(ProcessId from, const WireMessage& msg, Tick now);
  Actions on_verify(ProcessId from, const WireMessage& msg, Tick now);
  Actions on_ack(ProcessId from, const WireMessage& msg, Tick now);
  Actions on_deliver(ProcessId from, const WireMessage& msg, Tick now);
  Actions on_alert(ProcessId from, const WireMessage& msg, Tick now);
  Actions on_sm_notify(ProcessId from, const WireMessage& msg, Tick now);

  /// Batched stability news: `delivered_by` marks processes known to have delivered `subject`.
  Actions on_stability_update(const MessageId& subject, const boost::dynamic_bitset<>& delivered_by);

  Actions on_timer(const TimerId& timer, Tick now);
  Actions on_recovery_timeout(const MessageId& subject, Tick now);

 private:
  Principal self() const { return Principal::process(state_.me); }
  const QuorumParams& quorum() const { return state_.params.quorum; }

  bool accepts_tag(Tag tag) const;
  bool shunned(ProcessId p) const { return state_.known_faulty.count(p) != 0; }

  /// Records the claim, or reports the conflicting prior record.
  enum class Record { fresh, duplicate, conflict };
  Record record(const MessageId& id, const Digest& d, const std::optional<Signature>& sig, Actions& out);

  void send_ack(Tag proto, const MessageId& subject, const Digest& d, std::optional<Signature> sender_sig,
                Actions& out);
  void try_deliver(std::shared_ptr<const MulticastMessage> m, std::shared_ptr<const AckSet> acks, Tag cert,
                   Actions& out);
  Actions on_reforward(const MessageId& subject);
  Actions on_ack_release(const MessageId& subject);

  ProcessState state_;
  const KeyRing* keys_;
};

}  // namespace securecast
