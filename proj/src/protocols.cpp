#include "securecast/protocols.hpp"

#include <algorithm>
#include <string>

namespace securecast {

std::string_view to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::E: return "e";
    case ProtocolKind::ThreeT: return "3t";
    case ProtocolKind::Act: return "act";
  }
  return "?";
}

ProtocolKind parse_protocol(std::string_view text) {
  if (text == "e" || text == "E") return ProtocolKind::E;
  if (text == "3t" || text == "3T") return ProtocolKind::ThreeT;
  if (text == "act" || text == "ACT") return ProtocolKind::Act;
  throw InvalidParams("protocol: expected one of e, 3t, act (got '" + std::string(text) + "')");
}

namespace {

constexpr std::string_view kRoleNames[kRoleCount] = {"regular", "ack", "deliver", "inform",
                                                     "verify",  "alert", "sm_notify"};

Tag deliver_tag(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::E: return Tag::E;
    case ProtocolKind::ThreeT: return Tag::ThreeT;
    case ProtocolKind::Act: return Tag::AV;
  }
  return Tag::E;
}

std::size_t count_in(const AckSet& acks, const WitnessSet& range) {
  return static_cast<std::size_t>(
      std::count_if(acks.acks.begin(), acks.acks.end(), [&](const Ack& a) { return range.contains(a.signer); }));
}

}  // namespace

std::string_view to_string(Role role) { return kRoleNames[static_cast<std::size_t>(role)]; }

std::optional<Role> parse_role(std::string_view text) {
  for (std::size_t i = 0; i < kRoleCount; ++i)
    if (kRoleNames[i] == text) return static_cast<Role>(i);
  return std::nullopt;
}

std::string_view to_string(TimerKind kind) {
  switch (kind) {
    case TimerKind::recovery: return "recovery";
    case TimerKind::ack_release: return "ack_release";
    case TimerKind::reforward: return "reforward";
    case TimerKind::adversary: return "adversary";
  }
  return "?";
}

bool verify_evidence(const KeyRing& keys, const Evidence& ev) {
  return ev.first.id == ev.second.id && ev.first.digest != ev.second.digest &&
         verify_claim(keys, ev.first.id, ev.first.digest, ev.first.sender_sig) &&
         verify_claim(keys, ev.second.id, ev.second.digest, ev.second.sender_sig);
}

WireMessage make_regular(Tag proto, const MessageId& id, const Digest& d, std::optional<Signature> sender_sig) {
  WireMessage msg;
  msg.proto = proto;
  msg.role = Role::regular;
  msg.subject = id;
  msg.digest = d;
  msg.sender_sig = std::move(sender_sig);
  return msg;
}

WireMessage make_deliver(Tag proto, std::shared_ptr<const MulticastMessage> body, std::shared_ptr<const AckSet> acks) {
  WireMessage msg;
  msg.proto = proto;
  msg.role = Role::deliver;
  msg.subject = body->id;
  msg.digest = digest(*body);  // informational; receivers recompute it
  msg.body = std::move(body);
  msg.ack_set = std::move(acks);
  return msg;
}

WireMessage make_ack_message(Ack ack) {
  WireMessage msg;
  msg.proto = ack.proto;
  msg.role = Role::ack;
  msg.subject = ack.subject;
  msg.digest = ack.digest;
  msg.ack = std::move(ack);
  return msg;
}

WireMessage make_alert(Evidence ev) {
  WireMessage msg;
  msg.proto = Tag::AV;
  msg.role = Role::alert;
  msg.subject = ev.first.id;
  msg.digest = ev.first.digest;
  msg.evidence = std::move(ev);
  return msg;
}

void ProtocolParams::validate(ProtocolKind kind) const {
  quorum.validate();
  if (holdback_cap == 0) throw InvalidParams("holdback_cap: must be positive");
  if (stability_timeout <= 0) throw InvalidParams("stability_timeout: must be positive");
  if (kind != ProtocolKind::Act) return;
  const auto n = quorum.n;
  const auto t = quorum.t;
  if (kappa < 1 || kappa > n) throw InvalidParams("kappa: must satisfy 1 <= κ <= n");
  if (static_cast<std::uint64_t>(n - t) < static_cast<std::uint64_t>(kappa) * delta) {
    throw InvalidParams("kappa/delta: n−t ≥ κδ violated (n−t = " + std::to_string(n - t) +
                        ", κδ = " + std::to_string(static_cast<std::uint64_t>(kappa) * delta) + ")");
  }
  if (delta > 3 * t) throw InvalidParams("delta: must satisfy δ <= 3t (peers are drawn from W_3T without the prober)");
  if (slack_c >= kappa) throw InvalidParams("slack_c: must be smaller than kappa");
  if (recovery_timeout <= 0) throw InvalidParams("recovery_timeout: must be positive");
  if (recovery_ack_delay < 0) throw InvalidParams("recovery_ack_delay: must be non-negative");
}

ProcessState init_process(ProcessId me, ProtocolKind kind, const ProtocolParams& params, const WitnessSeed& seed,
                          std::uint64_t rng_seed) {
  params.validate(kind);
  if (to_index(me) >= params.quorum.n) throw InvalidParams("me: process id outside [0, n)");
  ProcessState s;
  s.me = me;
  s.kind = kind;
  s.params = params;
  s.seed = seed;
  s.delivery.assign(params.quorum.n, 0);
  s.rng.seed(rng_seed);
  return s;
}

std::vector<ProcessId> choose_peers(Rng& rng, const std::vector<ProcessId>& range, ProcessId self,
                                    std::uint32_t delta) {
  std::vector<ProcessId> pool;
  pool.reserve(range.size());
  for (auto p : range)
    if (p != self) pool.push_back(p);
  if (delta > pool.size()) throw InvalidParams("delta: more peers requested than the witness range offers");
  partial_shuffle(rng, std::span<ProcessId>(pool), delta);
  pool.resize(delta);
  return pool;
}

std::optional<Tag> validate_certificate(const KeyRing& keys, const ProcessState& state, const MulticastMessage& m,
                                        const Digest& d, const AckSet& acks) {
  if (acks.acks.empty()) return std::nullopt;
  const Ack& first = acks.acks.front();
  if (first.subject != m.id || first.digest != d) return std::nullopt;
  const auto& q = state.params.quorum;
  switch (state.kind) {
    case ProtocolKind::E:
      if (first.proto != Tag::E || acks.size() < dissemination_quorum_size(q)) return std::nullopt;
      break;
    case ProtocolKind::ThreeT:
      if (first.proto != Tag::ThreeT) return std::nullopt;
      if (count_in(acks, w3t(m.id, q, state.seed, state.params.w3t_mode)) < 2 * q.t + 1) return std::nullopt;
      break;
    case ProtocolKind::Act:
      if (first.proto == Tag::AV) {
        if (!first.sender_sig || !verify_claim(keys, m.id, d, *first.sender_sig)) return std::nullopt;
        const auto active = w_active(m.id, state.params.kappa, q, state.seed);
        if (count_in(acks, active) < state.params.kappa - state.params.slack_c) return std::nullopt;
      } else if (first.proto == Tag::ThreeT) {
        if (count_in(acks, w3t(m.id, q, state.seed, state.params.w3t_mode)) < 2 * q.t + 1) return std::nullopt;
      } else {
        return std::nullopt;
      }
      break;
  }
  if (!valid_ack_set(keys, acks)) return std::nullopt;
  return first.proto;
}

ProcessEngine::ProcessEngine(ProcessState state, const KeyRing& keys) : state_(std::move(state)), keys_(&keys) {}

bool ProcessEngine::accepts_tag(Tag tag) const {
  switch (state_.kind) {
    case ProtocolKind::E: return tag == Tag::E;
    case ProtocolKind::ThreeT: return tag == Tag::ThreeT;
    case ProtocolKind::Act: return tag == Tag::AV || tag == Tag::ThreeT;
  }
  return false;
}

Actions ProcessEngine::wan_multicast(Bytes payload, Tick now) {
  MulticastMessage m{MessageId{state_.me, state_.last_sent + 1}, std::move(payload)};
  return wan_multicast(m, now);
}

Actions ProcessEngine::wan_multicast(const MulticastMessage& m, Tick now) {
  if (m.id.sender != state_.me) throw SequenceGap("wan_multicast: message sender is not this process");
  if (m.id.seq != state_.last_sent + 1) {
    throw SequenceGap("wan_multicast: expected seq " + std::to_string(state_.last_sent + 1) + ", got " +
                      std::to_string(m.id.seq));
  }
  state_.last_sent = m.id.seq;

  PendingSend pending;
  pending.message = std::make_shared<const MulticastMessage>(m);
  pending.digest = digest(m);
  Actions out;
  std::vector<ProcessId> targets;
  Tag tag = Tag::E;
  switch (state_.kind) {
    case ProtocolKind::E:
      for (std::uint32_t i = 0; i < quorum().n; ++i) targets.push_back(ProcessId{i});
      pending.required = dissemination_quorum_size(quorum());
      tag = Tag::E;
      break;
    case ProtocolKind::ThreeT:
      targets = w3t(m.id, quorum(), state_.seed, state_.params.w3t_mode).members;
      pending.required = 2 * quorum().t + 1;
      tag = Tag::ThreeT;
      break;
    case ProtocolKind::Act:
      targets = w_active(m.id, state_.params.kappa, quorum(), state_.seed).members;
      pending.required = state_.params.kappa - state_.params.slack_c;
      pending.sender_sig = sign_claim(*keys_, self(), m.id, pending.digest);
      pending.deadline = now + state_.params.recovery_timeout;
      tag = Tag::AV;
      out.push_back(SetTimer{TimerId{TimerKind::recovery, m.id, 0}, state_.params.recovery_timeout});
      break;
  }
  pending.ack_tag = tag;
  pending.regime = Regime::active;
  for (auto p : targets) out.push_back(Send{p, make_regular(tag, m.id, pending.digest, pending.sender_sig)});
  state_.pending_sends.emplace(m.id, std::move(pending));
  return out;
}

Actions ProcessEngine::handle(ProcessId from, const WireMessage& msg, Tick now) {
  switch (msg.role) {
    case Role::regular: return on_regular(from, msg, now);
    case Role::ack: return on_ack(from, msg, now);
    case Role::deliver: return on_deliver(from, msg, now);
    case Role::inform: return on_inform(from, msg, now);
    case Role::verify: return on_verify(from, msg, now);
    case Role::alert: return on_alert(from, msg, now);
    case Role::sm_notify: return on_sm_notify(from, msg, now);
  }
  return {};
}

ProcessEngine::Record ProcessEngine::record(const MessageId& id, const Digest& d, const std::optional<Signature>& sig,
                                            Actions& out) {
  auto [it, inserted] = state_.recorded.try_emplace(id, RecordedClaim{d, sig});
  if (inserted) return Record::fresh;
  RecordedClaim& prior = it->second;
  if (prior.digest == d) {
    if (!prior.sender_sig && sig) prior.sender_sig = sig;
    return Record::duplicate;
  }
  if (state_.kind == ProtocolKind::Act && prior.sender_sig && sig && !shunned(id.sender)) {
    state_.known_faulty.insert(id.sender);
    out.push_back(RaiseAlert{Evidence{SignedClaim{id, prior.digest, *prior.sender_sig}, SignedClaim{id, d, *sig}}});
  }
  return Record::conflict;
}

void ProcessEngine::send_ack(Tag proto, const MessageId& subject, const Digest& d, std::optional<Signature> sender_sig,
                             Actions& out) {
  out.push_back(
      Send{subject.sender, make_ack_message(make_ack(*keys_, self(), proto, state_.me, subject, d, std::move(sender_sig)))});
}

Actions ProcessEngine::on_regular(ProcessId from, const WireMessage& msg, Tick /*now*/) {
  Actions out;
  if (!accepts_tag(msg.proto) || !msg.digest || from != msg.subject.sender || shunned(from)) return out;
  if (to_index(from) >= quorum().n) return out;
  const MessageId& id = msg.subject;
  const Digest& d = *msg.digest;

  if (state_.kind != ProtocolKind::Act) {
    if (record(id, d, msg.sender_sig, out) == Record::conflict) return out;
    send_ack(msg.proto, id, d, std::nullopt, out);
    return out;
  }

  // Every regular in ACT carries the sender's signature over (sender, seq, H(m)).
  if (!msg.sender_sig || !verify_claim(*keys_, id, d, *msg.sender_sig)) return out;
  if (record(id, d, msg.sender_sig, out) == Record::conflict) return out;

  if (msg.proto == Tag::ThreeT) {
    // Recovery regime: hold the ack back so that pending alerts win the race.
    if (state_.pending_ack_release.try_emplace(id, d).second)
      out.push_back(SetTimer{TimerId{TimerKind::ack_release, id, 0}, state_.params.recovery_ack_delay});
    return out;
  }

  if (state_.peers_chosen.count(id)) return out;
  Probe probe;
  probe.digest = d;
  probe.sender_sig = *msg.sender_sig;
  const auto range = w3t(id, quorum(), state_.seed, state_.params.w3t_mode);
  probe.targets = choose_peers(state_.rng, range.members, state_.me, state_.params.delta);
  for (auto peer : probe.targets) {
    WireMessage inform = make_regular(Tag::AV, id, d, msg.sender_sig);
    inform.role = Role::inform;
    out.push_back(Send{peer, std::move(inform)});
  }
  if (probe.targets.empty()) {
    probe.acked = true;
    send_ack(Tag::AV, id, d, probe.sender_sig, out);
  }
  state_.peers_chosen.emplace(id, std::move(probe));
  return out;
}

Actions ProcessEngine::on_inform(ProcessId from, const WireMessage& msg, Tick /*now*/) {
  Actions out;
  if (state_.kind != ProtocolKind::Act || msg.proto != Tag::AV || !msg.digest || !msg.sender_sig) return out;
  if (shunned(from) || shunned(msg.subject.sender)) return out;
  if (!verify_claim(*keys_, msg.subject, *msg.digest, *msg.sender_sig)) return out;
  if (record(msg.subject, *msg.digest, msg.sender_sig, out) == Record::conflict) return out;
  WireMessage verify;
  verify.proto = Tag::AV;
  verify.role = Role::verify;
  verify.subject = msg.subject;
  verify.digest = msg.digest;
  out.push_back(Send{from, std::move(verify)});
  return out;
}

Actions ProcessEngine::on_verify(ProcessId from, const WireMessage& msg, Tick /*now*/) {
  Actions out;
  if (state_.kind != ProtocolKind::Act || !msg.digest) return out;
  auto it = state_.peers_chosen.find(msg.subject);
  if (it == state_.peers_chosen.end()) return out;
  Probe& probe = it->second;
  if (probe.acked || probe.digest != *msg.digest) return out;
  if (std::find(probe.targets.begin(), probe.targets.end(), from) == probe.targets.end()) return out;
  probe.verified.insert(from);
  if (probe.verified.size() < probe.targets.size()) return out;
  probe.acked = true;
  const auto rec = state_.recorded.find(msg.subject);
  if (shunned(msg.subject.sender) || rec == state_.recorded.end() || rec->second.digest != probe.digest) return out;
  // The ack carries nothing about which peers were probed.
  send_ack(Tag::AV, msg.subject, probe.digest, probe.sender_sig, out);
  return out;
}

Actions ProcessEngine::on_ack(ProcessId from, const WireMessage& msg, Tick /*now*/) {
  Actions out;
  if (!msg.ack || msg.subject.sender != state_.me) return out;
  const Ack& ack = *msg.ack;
  auto it = state_.pending_sends.find(ack.subject);
  if (it == state_.pending_sends.end()) return out;
  PendingSend& pending = it->second;
  if (ack.signer != from || ack.proto != pending.ack_tag || ack.digest != pending.digest) return out;
  if (pending.ack_tag == Tag::AV && ack.sender_sig != pending.sender_sig) return out;
  if (pending.ack_tag != Tag::AV && ack.sender_sig) return out;

  switch (pending.ack_tag) {
    case Tag::E: break;
    case Tag::ThreeT:
      if (!w3t(ack.subject, quorum(), state_.seed, state_.params.w3t_mode).contains(ack.signer)) return out;
      break;
    case Tag::AV:
      if (!w_active(ack.subject, state_.params.kappa, quorum(), state_.seed).contains(ack.signer)) return out;
      break;
  }
  const bool seen = std::any_of(pending.acks.begin(), pending.acks.end(),
                                [&](const Ack& a) { return a.signer == ack.signer; });
  if (seen || !verify_ack(*keys_, ack)) return out;
  pending.acks.push_back(ack);
  if (pending.acks.size() < pending.required) return out;

  auto certificate = std::make_shared<const AckSet>(AckSet{std::move(pending.acks)});
  out.push_back(Broadcast{make_deliver(deliver_tag(state_.kind), pending.message, std::move(certificate))});
  state_.pending_sends.erase(it);
  return out;
}

Actions ProcessEngine::on_recovery_timeout(const MessageId& subject, Tick now) {
  Actions out;
  if (state_.kind != ProtocolKind::Act) return out;
  auto it = state_.pending_sends.find(subject);
  if (it == state_.pending_sends.end() || it->second.regime != Regime::active) return out;
  PendingSend& pending = it->second;
  pending.regime = Regime::recovery;
  pending.acks.clear();
  pending.ack_tag = Tag::ThreeT;
  pending.required = 2 * quorum().t + 1;
  pending.deadline = now;
  for (auto p : w3t(subject, quorum(), state_.seed, state_.params.w3t_mode).members)
    out.push_back(Send{p, make_regular(Tag::ThreeT, subject, pending.digest, pending.sender_sig)});
  return out;
}

Actions ProcessEngine::on_deliver(ProcessId from, const WireMessage& msg, Tick /*now*/) {
  Actions out;
  if (shunned(from) || !msg.body || !msg.ack_set || msg.proto != deliver_tag(state_.kind)) return out;
  const MulticastMessage& m = *msg.body;
  const auto sender = to_index(m.id.sender);
  if (sender >= quorum().n || m.id.seq == 0) return out;
  if (state_.delivery[sender] >= m.id.seq) return out;  // duplicate delivery suppressed
  if (state_.holdback.count(m.id)) return out;

  const Digest d = digest(m);
  const auto cert = validate_certificate(*keys_, state_, m, d, *msg.ack_set);
  if (!cert) return out;
  if (state_.delivery[sender] + 1 == m.id.seq) {
    try_deliver(msg.body, msg.ack_set, *cert, out);
  } else if (state_.holdback.size() < state_.params.holdback_cap) {
    state_.holdback.emplace(m.id, Certified{msg.body, msg.ack_set, *cert});
  }
  return out;
}

void ProcessEngine::try_deliver(std::shared_ptr<const MulticastMessage> m, std::shared_ptr<const AckSet> acks,
                                Tag cert, Actions& out) {
  while (m) {
    const MessageId id = m->id;
    state_.delivery[to_index(id.sender)] = id.seq;
    out.push_back(Deliver{m, acks});
    state_.reforward[id] = Certified{m, acks, cert};
    out.push_back(SetTimer{TimerId{TimerKind::reforward, id, 0}, state_.params.stability_timeout});

    auto next = state_.holdback.find(MessageId{id.sender, id.seq + 1});
    if (next == state_.holdback.end()) break;
    m = next->second.message;
    acks = next->second.certificate;
    cert = next->second.proto;
    state_.holdback.erase(next);
  }
}

Actions ProcessEngine::on_alert(ProcessId /*from*/, const WireMessage& msg, Tick /*now*/) {
  if (msg.evidence && verify_evidence(*keys_, *msg.evidence)) state_.known_faulty.insert(msg.evidence->first.id.sender);
  return {};
}

Actions ProcessEngine::on_sm_notify(ProcessId from, const WireMessage& msg, Tick /*now*/) {
  boost::dynamic_bitset<> bits(quorum().n);
  if (to_index(from) < quorum().n) bits.set(to_index(from));
  return on_stability_update(msg.subject, bits);
}

Actions ProcessEngine::on_stability_update(const MessageId& subject, const boost::dynamic_bitset<>& delivered_by) {
  const auto sender = to_index(subject.sender);
  // News about a message whose re-forward window already closed is useless.
  if (sender < quorum().n && state_.delivery[sender] >= subject.seq && !state_.reforward.count(subject)) return {};
  auto [it, inserted] = state_.stability_view.try_emplace(subject, quorum().n);
  it->second |= delivered_by;
  return {};
}

Actions ProcessEngine::on_reforward(const MessageId& subject) {
  Actions out;
  auto it = state_.reforward.find(subject);
  if (it == state_.reforward.end()) return out;
  const auto view = state_.stability_view.find(subject);
  std::optional<WireMessage> msg;
  for (std::uint32_t q = 0; q < quorum().n; ++q) {
    const ProcessId p{q};
    if (p == state_.me || shunned(p)) continue;
    if (view != state_.stability_view.end() && view->second.test(q)) continue;
    if (!msg) msg = make_deliver(deliver_tag(state_.kind), it->second.message, it->second.certificate);
    out.push_back(Send{p, *msg});
  }
  state_.reforward.erase(it);
  if (view != state_.stability_view.end()) state_.stability_view.erase(view);
  return out;
}

Actions ProcessEngine::on_ack_release(const MessageId& subject) {
  Actions out;
  auto it = state_.pending_ack_release.find(subject);
  if (it == state_.pending_ack_release.end()) return out;
  const Digest d = it->second;
  state_.pending_ack_release.erase(it);
  const auto rec = state_.recorded.find(subject);
  if (shunned(subject.sender) || rec == state_.recorded.end() || rec->second.digest != d) return out;
  send_ack(Tag::ThreeT, subject, d, std::nullopt, out);
  return out;
}

Actions ProcessEngine::on_timer(const TimerId& timer, Tick now) {
  switch (timer.kind) {
    case TimerKind::recovery: return on_recovery_timeout(timer.subject, now);
    case TimerKind::ack_release: return on_ack_release(timer.subject);
    case TimerKind::reforward: return on_reforward(timer.subject);
    case TimerKind::adversary: return {};
  }
  return {};
}

}  // namespace securecast
