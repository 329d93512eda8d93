#include "securecast/adversary.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "securecast/rng.hpp"

namespace securecast {

std::string_view to_string(AdversaryKind kind) {
  switch (kind) {
    case AdversaryKind::none: return "none";
    case AdversaryKind::silent: return "silent";
    case AdversaryKind::crash: return "crash";
    case AdversaryKind::equivocate: return "equivocate";
    case AdversaryKind::collusive: return "collusive";
    case AdversaryKind::regime_split: return "regime-split";
    case AdversaryKind::seq_burner: return "seq-burner";
  }
  return "?";
}

AdversaryKind parse_adversary(std::string_view text) {
  for (auto kind : {AdversaryKind::none, AdversaryKind::silent, AdversaryKind::crash, AdversaryKind::equivocate,
                    AdversaryKind::collusive, AdversaryKind::regime_split, AdversaryKind::seq_burner}) {
    if (to_string(kind) == text) return kind;
  }
  throw InvalidParams("adversary: expected one of none, silent, crash, equivocate, collusive, regime-split, "
                      "seq-burner (got '" + std::string(text) + "')");
}

bool AdversaryContext::is_faulty(ProcessId p) const { return std::binary_search(faulty.begin(), faulty.end(), p); }

std::vector<ProcessId> AdversaryContext::correct() const {
  std::vector<ProcessId> out;
  for (std::uint32_t i = 0; i < n(); ++i)
    if (!is_faulty(ProcessId{i})) out.push_back(ProcessId{i});
  return out;
}

std::vector<ProcessId> choose_faulty(std::uint32_t n, std::uint32_t count, std::uint64_t adversary_seed) {
  if (count > n) throw TooManyFaulty("faulty_count: more faulty processes than processes");
  std::vector<ProcessId> all;
  for (std::uint32_t i = 0; i < n; ++i) all.push_back(ProcessId{i});
  Rng rng(derive_seed(adversary_seed, "faulty-set"));
  partial_shuffle(rng, std::span<ProcessId>(all), count);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

void bind_adversary(KeyRing& keys, const std::vector<ProcessId>& faulty, std::uint32_t t) {
  if (faulty.size() > t) {
    throw TooManyFaulty("faulty_count: " + std::to_string(faulty.size()) + " faulty processes exceed t = " +
                        std::to_string(t));
  }
  for (auto p : faulty) keys.compromise(p);
}

namespace {

Tag deliver_tag(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::E: return Tag::E;
    case ProtocolKind::ThreeT: return Tag::ThreeT;
    case ProtocolKind::Act: return Tag::AV;
  }
  return Tag::E;
}

constexpr std::uint64_t kDeadlineToken = 0;
constexpr std::uint64_t kRecoveryToken = 1;

class Silent final : public Strategy {
 public:
  using Strategy::Strategy;
  Actions on_multicast(ProcessId, Bytes, Tick) override { return {}; }
  Actions on_message(ProcessId, ProcessId, const WireMessage&, Tick) override { return {}; }
};

// Runs the honest engine until crash_at, then goes silent for good.
class Crash final : public Strategy {
 public:
  explicit Crash(AdversaryContext ctx) : Strategy(std::move(ctx)) {
    for (auto p : ctx_.faulty) {
      auto state = init_process(p, ctx_.kind, ctx_.params, ctx_.seed, derive_seed(ctx_.rng_seed, "crash-shadow", to_index(p)));
      engines_.emplace(p, ProcessEngine(std::move(state), *ctx_.keys));
    }
  }

  Actions on_multicast(ProcessId self, Bytes payload, Tick now) override {
    if (now >= ctx_.crash_at) return {};
    return engine(self).wan_multicast(std::move(payload), now);
  }

  Actions on_message(ProcessId self, ProcessId from, const WireMessage& msg, Tick now) override {
    if (now >= ctx_.crash_at) return {};
    return engine(self).handle(from, msg, now);
  }

  Actions on_timer(ProcessId self, const TimerId& timer, Tick now) override {
    if (now >= ctx_.crash_at) return {};
    return engine(self).on_timer(timer, now);
  }

  Actions on_stability_update(ProcessId self, const MessageId& subject,
                              const boost::dynamic_bitset<>& delivered_by) override {
    return engine(self).on_stability_update(subject, delivered_by);
  }

 private:
  ProcessEngine& engine(ProcessId p) { return engines_.at(p); }

  std::map<ProcessId, ProcessEngine> engines_;
};

// Faulty senders that try to get two versions of one message delivered.
//
//   equivocate   : the sender splits correct processes into two halves and
//                  feeds each half its own version; other faulty processes stay
//                  silent and only the sender's own acks are forged.
//   collusive    : as equivocate, but every faulty process acks anything,
//                  both for its own senders and for correct ones.
//   regime_split : ACT only. m goes to W_active(m), a signed 3T regular for m'
//                  goes to a 2t+1 subset S of W_3T disjoint from W_active.
//   seq_burner   : ACT only. Runs through its sequence numbers honestly and
//                  equivocates only on ids whose W_active is entirely faulty.
class Conflicting final : public Strategy {
 public:
  enum class Plan { equivocate, collusive, regime_split, seq_burner };

  Conflicting(AdversaryContext ctx, Plan plan) : Strategy(std::move(ctx)), plan_(plan) {
    const auto correct = ctx_.correct();
    const auto mid = (correct.size() + 1) / 2;
    halves_[0].assign(correct.begin(), correct.begin() + static_cast<std::ptrdiff_t>(mid));
    halves_[1].assign(correct.begin() + static_cast<std::ptrdiff_t>(mid), correct.end());
  }

  Actions on_multicast(ProcessId self, Bytes payload, Tick now) override;
  Actions on_message(ProcessId self, ProcessId from, const WireMessage& msg, Tick now) override;
  Actions on_timer(ProcessId self, const TimerId& timer, Tick now) override;

 private:
  struct Version {
    std::shared_ptr<const MulticastMessage> message;
    Digest digest;
    Signature sender_sig;
    Tag ack_tag = Tag::E;
    std::vector<ProcessId> targets;  // correct processes that receive the regular
    std::vector<Ack> acks;
    std::shared_ptr<const AckSet> certificate;
    std::vector<ProcessId> deliver_to;
    bool sent = false;
  };

  struct Attack {
    std::vector<Version> versions;
    bool deadline_passed = false;
  };

  bool colludes() const { return plan_ != Plan::equivocate; }
  const QuorumParams& quorum() const { return ctx_.params.quorum; }

  Version make_version(const MessageId& id, Bytes payload) const;
  bool in_half(int half, ProcessId p) const {
    return std::binary_search(halves_[half].begin(), halves_[half].end(), p);
  }
  WitnessSet range_for(const MessageId& id, Tag tag) const;
  std::size_t threshold(Tag tag) const;
  void forge_acks(ProcessId self, const MessageId& id, Version& v, const std::vector<ProcessId>& allowed);
  void send_regulars(const MessageId& id, const Version& v, Actions& out) const;
  void check_certified(Version& v) const;
  void maybe_deliver(Attack& attack, Actions& out);

  Actions witness(ProcessId self, ProcessId from, const WireMessage& msg);
  Actions collect_ack(const WireMessage& msg, Tick now);

  Plan plan_;
  std::vector<ProcessId> halves_[2];
  std::map<ProcessId, std::uint64_t> last_seq_;
  std::map<MessageId, Attack> live_;
};

Conflicting::Version Conflicting::make_version(const MessageId& id, Bytes payload) const {
  Version v;
  v.message = std::make_shared<const MulticastMessage>(MulticastMessage{id, std::move(payload)});
  v.digest = digest(*v.message);
  v.sender_sig = sign_claim(*ctx_.keys, Principal::adversary(), id, v.digest);
  return v;
}

WitnessSet Conflicting::range_for(const MessageId& id, Tag tag) const {
  switch (tag) {
    case Tag::E: {
      WitnessSet all;
      all.kind = WitnessKind::e_quorum;
      for (std::uint32_t i = 0; i < ctx_.n(); ++i) all.members.push_back(ProcessId{i});
      return all;
    }
    case Tag::ThreeT: return w3t(id, quorum(), ctx_.seed, ctx_.params.w3t_mode);
    case Tag::AV: return w_active(id, ctx_.params.kappa, quorum(), ctx_.seed);
  }
  return {};
}

std::size_t Conflicting::threshold(Tag tag) const {
  switch (tag) {
    case Tag::E: return dissemination_quorum_size(quorum());
    case Tag::ThreeT: return 2 * quorum().t + 1;
    case Tag::AV: return ctx_.params.kappa - ctx_.params.slack_c;
  }
  return 0;
}

// Acks signed with faulty keys, for every faulty member of the current range
// that the plan lets take part (`allowed` empty means all of them).
void Conflicting::forge_acks(ProcessId self, const MessageId& id, Version& v, const std::vector<ProcessId>& allowed) {
  const auto range = range_for(id, v.ack_tag);
  for (auto p : ctx_.faulty) {
    if (!range.contains(p)) continue;
    if (!colludes() && p != self) continue;
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), p) == allowed.end()) continue;
    std::optional<Signature> sig;
    if (v.ack_tag == Tag::AV) sig = v.sender_sig;
    v.acks.push_back(make_ack(*ctx_.keys, Principal::adversary(), v.ack_tag, p, id, v.digest, sig));
  }
}

void Conflicting::send_regulars(const MessageId& id, const Version& v, Actions& out) const {
  std::optional<Signature> sig;
  if (ctx_.kind == ProtocolKind::Act) sig = v.sender_sig;
  for (auto p : v.targets) out.push_back(Send{p, make_regular(v.ack_tag, id, v.digest, sig)});
}

void Conflicting::check_certified(Version& v) const {
  if (v.certificate || v.acks.size() < threshold(v.ack_tag)) return;
  v.certificate = std::make_shared<const AckSet>(AckSet{v.acks});
}

void Conflicting::maybe_deliver(Attack& attack, Actions& out) {
  const bool all_ready = std::all_of(attack.versions.begin(), attack.versions.end(),
                                     [](const Version& v) { return v.certificate != nullptr; });
  if (!all_ready && !attack.deadline_passed) return;
  for (auto& v : attack.versions) {
    if (!v.certificate || v.sent) continue;
    v.sent = true;
    for (auto p : v.deliver_to) out.push_back(Send{p, make_deliver(deliver_tag(ctx_.kind), v.message, v.certificate)});
  }
}

Actions Conflicting::on_multicast(ProcessId self, Bytes payload, Tick /*now*/) {
  Actions out;
  const MessageId id{self, ++last_seq_[self]};
  Attack attack;
  const auto correct = ctx_.correct();

  Bytes alternative = payload;
  alternative.push_back('\'');

  if (plan_ == Plan::seq_burner) {
    const auto active = w_active(id, ctx_.params.kappa, quorum(), ctx_.seed);
    const bool all_faulty = ctx_.knows_r && std::all_of(active.members.begin(), active.members.end(),
                                                        [&](ProcessId p) { return ctx_.is_faulty(p); });
    if (!all_faulty) {
      Version v = make_version(id, std::move(payload));
      v.ack_tag = Tag::AV;
      for (auto p : active.members)
        if (!ctx_.is_faulty(p)) v.targets.push_back(p);
      v.deliver_to = correct;
      forge_acks(self, id, v, {});
      check_certified(v);
      send_regulars(id, v, out);
      attack.versions.push_back(std::move(v));
      auto& stored = live_.emplace(id, std::move(attack)).first->second;
      maybe_deliver(stored, out);
      out.push_back(SetTimer{TimerId{TimerKind::adversary, id, kRecoveryToken}, ctx_.params.recovery_timeout});
      return out;
    }
  }

  note_attack(id);
  Version first = make_version(id, std::move(payload));
  Version second = make_version(id, std::move(alternative));
  first.deliver_to = halves_[0];
  second.deliver_to = halves_[1];

  if (plan_ == Plan::regime_split) {
    const auto active = w_active(id, ctx_.params.kappa, quorum(), ctx_.seed);
    const auto range = w3t(id, quorum(), ctx_.seed, ctx_.params.w3t_mode);
    // S: faulty members of W_3T first, then the lowest correct ids, all outside
    // W_active when the adversary can evaluate R.
    std::vector<ProcessId> s;
    const auto eligible = [&](ProcessId p) { return !ctx_.knows_r || !active.contains(p); };
    for (auto p : range.members)
      if (ctx_.is_faulty(p) && eligible(p) && s.size() < 2 * quorum().t + 1) s.push_back(p);
    for (auto p : range.members)
      if (!ctx_.is_faulty(p) && eligible(p) && s.size() < 2 * quorum().t + 1) s.push_back(p);

    first.ack_tag = Tag::AV;
    for (auto p : active.members)
      if (!ctx_.is_faulty(p)) first.targets.push_back(p);
    second.ack_tag = Tag::ThreeT;
    for (auto p : s)
      if (!ctx_.is_faulty(p)) second.targets.push_back(p);
    forge_acks(self, id, first, {});
    forge_acks(self, id, second, s);
  } else {
    const Tag tag = ctx_.kind == ProtocolKind::E ? Tag::E : ctx_.kind == ProtocolKind::ThreeT ? Tag::ThreeT : Tag::AV;
    const auto range = range_for(id, tag);
    for (auto* v : {&first, &second}) {
      v->ack_tag = tag;
      const int half = v == &first ? 0 : 1;
      for (auto p : range.members)
        if (in_half(half, p)) v->targets.push_back(p);
      forge_acks(self, id, *v, {});
    }
    if (ctx_.kind == ProtocolKind::Act)
      out.push_back(SetTimer{TimerId{TimerKind::adversary, id, kRecoveryToken}, ctx_.params.recovery_timeout});
  }

  for (auto* v : {&first, &second}) {
    check_certified(*v);
    send_regulars(id, *v, out);
  }
  attack.versions.push_back(std::move(first));
  attack.versions.push_back(std::move(second));
  auto& stored = live_.emplace(id, std::move(attack)).first->second;
  maybe_deliver(stored, out);
  out.push_back(SetTimer{TimerId{TimerKind::adversary, id, kDeadlineToken}, ctx_.attack_window});
  return out;
}

Actions Conflicting::witness(ProcessId self, ProcessId from, const WireMessage& msg) {
  Actions out;
  if (!colludes() || !msg.digest) return out;
  if (ctx_.is_faulty(msg.subject.sender)) {
    // Probes about our own versions are confirmed so the prober acks.
    auto it = live_.find(msg.subject);
    if (msg.role != Role::inform || it == live_.end()) return out;
    const auto& versions = it->second.versions;
    if (std::none_of(versions.begin(), versions.end(), [&](const Version& v) { return v.digest == *msg.digest; }))
      return out;
  }
  if (msg.role == Role::regular) {
    if (msg.proto == Tag::AV && !msg.sender_sig) return out;
    std::optional<Signature> sig;
    if (msg.proto == Tag::AV) sig = msg.sender_sig;
    out.push_back(Send{msg.subject.sender,
                       make_ack_message(make_ack(*ctx_.keys, Principal::adversary(), msg.proto, self, msg.subject,
                                                 *msg.digest, sig))});
  } else if (msg.role == Role::inform) {
    WireMessage verify;
    verify.proto = Tag::AV;
    verify.role = Role::verify;
    verify.subject = msg.subject;
    verify.digest = msg.digest;
    out.push_back(Send{from, std::move(verify)});
  }
  return out;
}

Actions Conflicting::collect_ack(const WireMessage& msg, Tick /*now*/) {
  Actions out;
  const Ack& ack = *msg.ack;
  auto it = live_.find(ack.subject);
  if (it == live_.end()) return out;
  for (auto& v : it->second.versions) {
    if (v.digest != ack.digest || v.ack_tag != ack.proto || v.certificate) continue;
    if (ack.proto == Tag::AV && ack.sender_sig != v.sender_sig) continue;
    if (!range_for(ack.subject, ack.proto).contains(ack.signer)) continue;
    const bool seen =
        std::any_of(v.acks.begin(), v.acks.end(), [&](const Ack& a) { return a.signer == ack.signer; });
    if (seen || !verify_ack(*ctx_.keys, ack)) continue;
    v.acks.push_back(ack);
    check_certified(v);
  }
  maybe_deliver(it->second, out);
  return out;
}

Actions Conflicting::on_message(ProcessId self, ProcessId from, const WireMessage& msg, Tick now) {
  if (msg.role == Role::ack && msg.ack && msg.subject.sender == self) return collect_ack(msg, now);
  if (msg.role == Role::regular || msg.role == Role::inform) return witness(self, from, msg);
  return {};
}

Actions Conflicting::on_timer(ProcessId self, const TimerId& timer, Tick /*now*/) {
  Actions out;
  if (timer.kind != TimerKind::adversary) return out;
  auto it = live_.find(timer.subject);
  if (it == live_.end()) return out;
  Attack& attack = it->second;
  if (timer.token == kDeadlineToken) {
    attack.deadline_passed = true;
    maybe_deliver(attack, out);
    return out;
  }
  // Recovery: every version still short of an AV certificate falls back to
  // signed 3T regulars, each to the correct part of W_3T that saw it.
  const auto range = w3t(timer.subject, quorum(), ctx_.seed, ctx_.params.w3t_mode);
  const bool single = attack.versions.size() == 1;
  for (std::size_t i = 0; i < attack.versions.size(); ++i) {
    Version& v = attack.versions[i];
    if (v.certificate || v.ack_tag != Tag::AV) continue;
    v.ack_tag = Tag::ThreeT;
    v.acks.clear();
    v.targets.clear();
    for (auto p : range.members) {
      if (ctx_.is_faulty(p)) continue;
      if (single || in_half(static_cast<int>(i), p)) v.targets.push_back(p);
    }
    forge_acks(self, timer.subject, v, {});
    check_certified(v);
    send_regulars(timer.subject, v, out);
  }
  maybe_deliver(attack, out);
  return out;
}

}  // namespace

std::unique_ptr<Strategy> make_strategy(AdversaryKind kind, AdversaryContext ctx) {
  using Plan = Conflicting::Plan;
  const bool act = ctx.kind == ProtocolKind::Act;
  switch (kind) {
    case AdversaryKind::none:
    case AdversaryKind::silent: return std::make_unique<Silent>(std::move(ctx));
    case AdversaryKind::crash: return std::make_unique<Crash>(std::move(ctx));
    case AdversaryKind::equivocate: return std::make_unique<Conflicting>(std::move(ctx), Plan::equivocate);
    case AdversaryKind::collusive: return std::make_unique<Conflicting>(std::move(ctx), Plan::collusive);
    case AdversaryKind::regime_split:
      if (!act) throw InvalidParams("adversary: regime-split requires protocol act");
      return std::make_unique<Conflicting>(std::move(ctx), Plan::regime_split);
    case AdversaryKind::seq_burner:
      if (!act) throw InvalidParams("adversary: seq-burner requires protocol act");
      return std::make_unique<Conflicting>(std::move(ctx), Plan::seq_burner);
  }
  return nullptr;
}

}  // namespace securecast
