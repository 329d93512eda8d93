#include "securecast/simnet.hpp"

#include <sodium.h>

#include <algorithm>
#include <string>

namespace securecast {

SimSeeds SimSeeds::from(std::uint64_t seed) {
  return SimSeeds{derive_seed(seed, "world"), derive_seed(seed, "witness"), derive_seed(seed, "adversary")};
}

std::uint32_t SimConfig::effective_faulty_count() const {
  if (faulty) return static_cast<std::uint32_t>(faulty->size());
  if (faulty_count) return *faulty_count;
  return adversary == AdversaryKind::none ? 0 : t;
}

ProtocolParams SimConfig::protocol_params() const {
  ProtocolParams p;
  p.quorum = QuorumParams{n, t};
  p.kappa = kappa;
  p.delta = delta;
  p.slack_c = slack_c;
  p.recovery_timeout = effective_recovery_timeout();
  p.recovery_ack_delay = effective_recovery_ack_delay();
  p.stability_timeout = stability_timeout;
  p.holdback_cap = holdback_cap;
  p.w3t_mode = w3t_mode;
  return p;
}

void SimConfig::validate() const {
  protocol_params().validate(protocol);
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw InvalidParams("p_drop: must lie in [0, 1)");
  if (retransmit_interval < 1) throw InvalidParams("retransmit_interval: must be at least 1 tick");
  if (latency_lo < 1) throw InvalidParams("latency_lo: must be at least 1 tick");
  if (latency_hi < latency_lo) throw InvalidParams("latency_hi: must not be below latency_lo");
  if (alert_latency < 1) throw InvalidParams("alert_latency: must be at least 1 tick");
  if (stability_lag < 0) throw InvalidParams("stability_lag: must be non-negative");
  if (message_interval < 0) throw InvalidParams("message_interval: must be non-negative");
  if (crash_at < 0) throw InvalidParams("crash_at: must be non-negative");
  if (max_ticks < 0) throw InvalidParams("max_ticks: must be non-negative");
  if (protocol == ProtocolKind::Act && alert_latency >= effective_recovery_ack_delay()) {
    throw InvalidParams("alert_latency: must be smaller than recovery_ack_delay (" + std::to_string(alert_latency) +
                        " >= " + std::to_string(effective_recovery_ack_delay()) + ")");
  }
  if ((adversary == AdversaryKind::regime_split || adversary == AdversaryKind::seq_burner) &&
      protocol != ProtocolKind::Act) {
    throw InvalidParams("adversary: " + std::string(to_string(adversary)) + " requires protocol act");
  }
  if (faulty) {
    auto ids = *faulty;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw InvalidParams("faulty: duplicate process id");
    if (!ids.empty() && ids.back() >= n) throw InvalidParams("faulty: process id outside [0, n)");
  }
  if (effective_faulty_count() > t) {
    throw TooManyFaulty("faulty_count: " + std::to_string(effective_faulty_count()) +
                        " faulty processes exceed t = " + std::to_string(t));
  }
}

std::uint64_t RunReport::total_deliveries() const {
  std::uint64_t sum = 0;
  for (auto d : deliveries) sum += d;
  return sum;
}

std::uint64_t RunReport::attacked_conflicts() const {
  std::set<MessageId> attacked_set(attacked.begin(), attacked.end());
  return static_cast<std::uint64_t>(std::count_if(conflicting_ids.begin(), conflicting_ids.end(),
                                                  [&](const MessageId& id) { return attacked_set.count(id) != 0; }));
}

SimWorld::SimWorld(const SimConfig& config, TraceSink* sink) : config_(config), sink_(sink) {
  config_.validate();
  const auto n = config_.n;
  if (config_.check_invariants) checker_ = std::make_unique<InvariantChecker>();

  // The faulty set is fixed from the adversary seed before the witness seed exists.
  if (config_.faulty) {
    for (auto p : *config_.faulty) faulty_.push_back(ProcessId{p});
    std::sort(faulty_.begin(), faulty_.end());
  } else {
    faulty_ = choose_faulty(n, config_.effective_faulty_count(), config_.seeds.adversary);
  }
  faulty_mask_.assign(n, false);
  for (auto p : faulty_) faulty_mask_[to_index(p)] = true;

  keys_ = std::make_unique<KeyRing>(n, derive_seed(config_.seeds.world, "keys"));
  bind_adversary(*keys_, faulty_, config_.t);
  witness_seed_ = WitnessSeed(config_.seeds.witness);

  const auto params = config_.protocol_params();
  engines_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (faulty_mask_[i]) continue;
    engines_[i].emplace(init_process(ProcessId{i}, config_.protocol, params, witness_seed_,
                                     derive_seed(config_.seeds.world, "process", i)),
                        *keys_);
  }
  if (!faulty_.empty()) {
    AdversaryContext ctx;
    ctx.keys = keys_.get();
    ctx.kind = config_.protocol;
    ctx.params = params;
    ctx.seed = witness_seed_;
    ctx.knows_r = config_.adversary_knows_r;
    ctx.faulty = faulty_;
    ctx.crash_at = config_.crash_at;
    ctx.attack_window = params.recovery_timeout + params.recovery_ack_delay + 6 * config_.latency_hi;
    ctx.rng_seed = derive_seed(config_.seeds.adversary, "strategy");
    strategy_ = make_strategy(config_.adversary == AdversaryKind::none ? AdversaryKind::silent : config_.adversary,
                              std::move(ctx));
  }

  channels_.resize(static_cast<std::size_t>(n) * n);
  workload_rng_.seed(derive_seed(config_.seeds.world, "workload"));
  alert_rng_.seed(derive_seed(config_.seeds.world, "alert-plane"));

  stats_.n = n;
  stats_.faulty = faulty_;
  stats_.deliveries.assign(n, 0);
  stats_.handled.assign(n, {});
  stats_.witness_accesses.assign(n, 0);
  stats_.peer_accesses.assign(n, 0);

  if (tracing()) {
    TraceRecord r;
    r.kind = EventKind::config;
    std::string faulty_list;
    for (auto p : faulty_) {
      if (!faulty_list.empty()) faulty_list += ';';
      faulty_list += std::to_string(to_index(p));
    }
    r.extra = "n=" + std::to_string(n) + ",t=" + std::to_string(config_.t) +
              ",protocol=" + std::string(to_string(config_.protocol)) + ",kappa=" + std::to_string(config_.kappa) +
              ",delta=" + std::to_string(config_.delta) + ",slack_c=" + std::to_string(config_.slack_c) +
              ",faulty=" + faulty_list + ",wseed=" + std::to_string(witness_seed_.value()) +
              ",w3t=" + std::string(to_string(config_.w3t_mode)) +
              ",adversary=" + std::string(to_string(config_.adversary));
    emit(std::move(r));
  }

  std::vector<ProcessId> correct;
  for (std::uint32_t i = 0; i < n; ++i)
    if (!faulty_mask_[i]) correct.push_back(ProcessId{i});
  for (std::uint64_t i = 0; i < config_.messages; ++i) {
    const auto sender = correct[uniform_below(workload_rng_, correct.size())];
    schedule(static_cast<Tick>(i) * config_.message_interval, MulticastStart{sender, i});
  }
  for (auto f : faulty_) {
    for (std::uint64_t j = 0; j < config_.faulty_messages; ++j)
      schedule(static_cast<Tick>(j) * config_.message_interval, MulticastStart{f, j});
  }
}

SimWorld::~SimWorld() = default;
SimWorld::SimWorld(SimWorld&&) noexcept = default;
SimWorld& SimWorld::operator=(SimWorld&&) noexcept = default;

const ProcessEngine* SimWorld::engine(ProcessId p) const {
  const auto& e = engines_.at(to_index(p));
  return e ? &*e : nullptr;
}

void SimWorld::schedule(Tick at, Payload payload) {
  std::uint32_t slot;
  if (!free_slots_.empty()) {
    slot = free_slots_.back();
    free_slots_.pop_back();
    slots_[slot].emplace(std::move(payload));
  } else {
    slot = static_cast<std::uint32_t>(slots_.size());
    slots_.emplace_back(std::move(payload));
  }
  queue_.push(Event{at, order_++, slot});
}

SimWorld::Channel& SimWorld::channel(ProcessId src, ProcessId dst) {
  auto& ch = channels_[static_cast<std::size_t>(to_index(src)) * config_.n + to_index(dst)];
  if (!ch.rng) ch.rng.emplace(derive_seed(config_.seeds.world, "channel", to_index(src) * std::uint64_t{config_.n} + to_index(dst)));
  return ch;
}

void SimWorld::emit(TraceRecord&& r) {
  if (checker_) checker_->on_record(r);
  if (sink_) sink_->on_record(r);
}

namespace {

TraceRecord wire_record(EventKind kind, Tick tick, ProcessId src, ProcessId dst, const WireMessage& msg,
                        std::uint64_t chan) {
  TraceRecord r;
  r.tick = tick;
  r.kind = kind;
  r.src = to_index(src);
  r.dst = to_index(dst);
  r.proto = msg.proto;
  r.role = msg.role;
  r.subject = msg.subject;
  if (msg.digest) r.digest = msg.digest->prefix64();
  r.chan = chan;
  return r;
}

}  // namespace

bool SimWorld::step() {
  if (queue_.empty()) return false;
  const Event ev = queue_.top();
  queue_.pop();
  clock_ = ev.time;
  Payload payload = std::move(*slots_[ev.slot]);
  slots_[ev.slot].reset();
  free_slots_.push_back(ev.slot);
  ++events_;

  std::visit(
      [this](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Arrival>) on_arrival(p.tx);
        else if constexpr (std::is_same_v<T, Retransmit>) attempt(p.tx);
        else if constexpr (std::is_same_v<T, TimerFire>) on_timer(p);
        else if constexpr (std::is_same_v<T, MulticastStart>) on_multicast(p);
        else if constexpr (std::is_same_v<T, AlertArrival>) on_alert(p);
        else if constexpr (std::is_same_v<T, StabilityBatch>) on_stability(p);
      },
      payload);
  return true;
}

void SimWorld::execute(ProcessId p, Actions actions, std::optional<Tick> req) {
  const bool correct = !is_faulty(p);
  for (auto& action : actions) {
    std::visit(
        [&](auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, Send>) {
            if (correct && a.msg.role == Role::verify) ++stats_.peer_accesses[to_index(p)];
            const bool delayed_ack = a.msg.role == Role::ack;
            transmit(p, a.to, std::move(a.msg), delayed_ack ? req : std::nullopt);
          } else if constexpr (std::is_same_v<T, Broadcast>) {
            if (correct && a.msg.role == Role::deliver && a.msg.subject.sender == p && a.msg.ack_set &&
                certified_broadcast_.insert(a.msg.subject).second) {
              for (const auto& ack : a.msg.ack_set->acks) ++stats_.witness_accesses[to_index(ack.signer)];
            }
            for (std::uint32_t q = 0; q < config_.n; ++q) transmit(p, ProcessId{q}, a.msg, std::nullopt);
          } else if constexpr (std::is_same_v<T, Deliver>) {
            if (correct) record_delivery(p, a);
          } else if constexpr (std::is_same_v<T, SetTimer>) {
            schedule(clock_ + a.delay, TimerFire{p, a.id, clock_});
          } else if constexpr (std::is_same_v<T, RaiseAlert>) {
            if (correct) raise_alert(p, a);
          }
        },
        action);
  }
}

void SimWorld::transmit(ProcessId src, ProcessId dst, WireMessage msg, std::optional<Tick> req) {
  auto& ch = channel(src, dst);
  auto tx = std::make_shared<Transmission>(Transmission{src, dst, ++ch.sent, std::move(msg), req});
  if (tracing()) {
    auto r = wire_record(EventKind::send, clock_, src, dst, tx->msg, tx->chan);
    r.req = req;
    emit(std::move(r));
  }
  attempt(tx);
}

void SimWorld::attempt(const std::shared_ptr<Transmission>& tx) {
  auto& ch = channel(tx->src, tx->dst);
  if (bernoulli(*ch.rng, config_.p_drop)) {
    if (tracing()) emit(wire_record(EventKind::drop, clock_, tx->src, tx->dst, tx->msg, tx->chan));
    schedule(clock_ + config_.retransmit_interval, Retransmit{tx});
    return;
  }
  schedule(clock_ + uniform_between(*ch.rng, config_.latency_lo, config_.latency_hi), Arrival{tx});
}

void SimWorld::on_arrival(const std::shared_ptr<Transmission>& tx) {
  auto& ch = channel(tx->src, tx->dst);
  if (tx->chan != ch.next_recv) {
    ch.early.emplace(tx->chan, tx);
    return;
  }
  dispatch(*tx);
  ++ch.next_recv;
  // dispatch() may touch other channels but never reallocates channels_.
  for (auto it = ch.early.find(ch.next_recv); it != ch.early.end(); it = ch.early.find(ch.next_recv)) {
    const auto next = std::move(it->second);
    ch.early.erase(it);
    dispatch(*next);
    ++ch.next_recv;
  }
}

void SimWorld::dispatch(const Transmission& tx) {
  if (tracing()) emit(wire_record(EventKind::recv, clock_, tx.src, tx.dst, tx.msg, tx.chan));
  ++stats_.handled[to_index(tx.dst)][static_cast<std::size_t>(tx.msg.role)];
  if (is_faulty(tx.dst)) {
    execute(tx.dst, strategy_->on_message(tx.dst, tx.src, tx.msg, clock_));
    note_attacks();
  } else {
    execute(tx.dst, engines_[to_index(tx.dst)]->handle(tx.src, tx.msg, clock_));
  }
}

void SimWorld::on_timer(const TimerFire& fire) {
  if (tracing()) {
    TraceRecord r;
    r.tick = clock_;
    r.kind = EventKind::timer;
    r.src = to_index(fire.p);
    r.subject = fire.id.subject;
    r.extra = "timer=" + std::string(to_string(fire.id.kind));
    emit(std::move(r));
  }
  if (is_faulty(fire.p)) {
    execute(fire.p, strategy_->on_timer(fire.p, fire.id, clock_));
    note_attacks();
    return;
  }
  std::optional<Tick> req;
  if (fire.id.kind == TimerKind::ack_release) req = fire.set_at;
  execute(fire.p, engines_[to_index(fire.p)]->on_timer(fire.id, clock_), req);
}

void SimWorld::on_multicast(const MulticastStart& start) {
  if (is_faulty(start.p)) {
    const std::string text = "f" + std::to_string(to_index(start.p)) + "-" + std::to_string(start.index);
    execute(start.p, strategy_->on_multicast(start.p, Bytes(text.begin(), text.end()), clock_));
    note_attacks();
    return;
  }
  auto& engine = *engines_[to_index(start.p)];
  const std::string text = "m" + std::to_string(start.index);
  MulticastMessage m{MessageId{start.p, engine.state().last_sent + 1}, Bytes(text.begin(), text.end())};
  ++stats_.multicasts;
  if (tracing()) {
    TraceRecord r;
    r.tick = clock_;
    r.kind = EventKind::multicast;
    r.src = to_index(start.p);
    r.subject = m.id;
    r.digest = digest(m).prefix64();
    emit(std::move(r));
  }
  execute(start.p, engine.wan_multicast(m, clock_));
}

void SimWorld::note_attacks() {
  const auto& attacks = strategy_->attacks();
  for (; attacks_seen_ < attacks.size(); ++attacks_seen_) {
    if (!tracing()) continue;
    TraceRecord r;
    r.tick = clock_;
    r.kind = EventKind::attack;
    r.src = to_index(attacks[attacks_seen_].sender);
    r.subject = attacks[attacks_seen_];
    emit(std::move(r));
  }
}

void SimWorld::raise_alert(ProcessId p, const RaiseAlert& alert) {
  ++stats_.alerts;
  const auto evidence = std::make_shared<const Evidence>(alert.evidence);
  if (tracing()) {
    TraceRecord r;
    r.tick = clock_;
    r.kind = EventKind::alert_raise;
    r.src = to_index(p);
    r.dst = kAllProcesses;
    r.proto = Tag::AV;
    r.role = Role::alert;
    r.subject = evidence->first.id;
    r.digest = evidence->first.digest.prefix64();
    emit(std::move(r));
  }
  for (std::uint32_t q = 0; q < config_.n; ++q) {
    if (q == to_index(p)) continue;
    if (config_.alert_can_lose && bernoulli(alert_rng_, config_.p_drop)) continue;
    schedule(clock_ + uniform_between(alert_rng_, 1, config_.alert_latency), AlertArrival{p, ProcessId{q}, evidence});
  }
}

void SimWorld::on_alert(const AlertArrival& alert) {
  const WireMessage msg = make_alert(*alert.evidence);
  if (tracing()) {
    TraceRecord r;
    r.tick = clock_;
    r.kind = EventKind::alert_recv;
    r.src = to_index(alert.raiser);
    r.dst = to_index(alert.dst);
    r.proto = Tag::AV;
    r.role = Role::alert;
    r.subject = msg.subject;
    r.digest = msg.digest->prefix64();
    emit(std::move(r));
  }
  ++stats_.handled[to_index(alert.dst)][static_cast<std::size_t>(Role::alert)];
  if (is_faulty(alert.dst)) {
    execute(alert.dst, strategy_->on_message(alert.dst, alert.raiser, msg, clock_));
    note_attacks();
  } else {
    execute(alert.dst, engines_[to_index(alert.dst)]->on_alert(alert.raiser, msg, clock_));
  }
}

void SimWorld::record_delivery(ProcessId p, const Deliver& d) {
  const auto& m = *d.message;
  const Digest dg = digest(m);
  ++stats_.deliveries[to_index(p)];
  auto& seen = delivered_digests_[m.id];
  if (seen.insert(dg).second && seen.size() == 2) {
    ++stats_.conflicts;
    stats_.conflicting_ids.push_back(m.id);
  }
  if (tracing()) {
    TraceRecord r;
    r.tick = clock_;
    r.kind = EventKind::deliver;
    r.src = to_index(p);
    r.subject = m.id;
    r.digest = dg.prefix64();
    if (d.certificate && !d.certificate->acks.empty()) {
      r.proto = d.certificate->acks.front().proto;
      r.cert = r.proto;
      for (const auto& ack : d.certificate->acks) r.signers.push_back(to_index(ack.signer));
    }
    emit(std::move(r));
  }
  auto [it, fresh] = stability_pending_.try_emplace(m.id);
  if (fresh) {
    it->second.resize(config_.n);
    schedule(clock_ + config_.stability_lag, StabilityBatch{m.id});
  }
  it->second.set(to_index(p));
}

void SimWorld::on_stability(const StabilityBatch& batch) {
  auto it = stability_pending_.find(batch.id);
  if (it == stability_pending_.end()) return;
  const boost::dynamic_bitset<> bits = std::move(it->second);
  stability_pending_.erase(it);
  if (tracing()) {
    TraceRecord r;
    r.tick = clock_;
    r.kind = EventKind::sm_notify;
    r.dst = kAllProcesses;
    r.role = Role::sm_notify;
    r.subject = batch.id;
    for (auto i = bits.find_first(); i != boost::dynamic_bitset<>::npos; i = bits.find_next(i))
      r.signers.push_back(static_cast<std::uint32_t>(i));
    emit(std::move(r));
  }
  for (std::uint32_t q = 0; q < config_.n; ++q) {
    const ProcessId p{q};
    if (is_faulty(p)) execute(p, strategy_->on_stability_update(p, batch.id, bits));
    else execute(p, engines_[q]->on_stability_update(batch.id, bits));
  }
}

RunReport SimWorld::run_to_quiescence() { return run_to_quiescence(config_.max_ticks); }

RunReport SimWorld::run_to_quiescence(Tick max_ticks) {
  while (!queue_.empty() && queue_.top().time <= max_ticks) step();
  return report();
}

RunReport SimWorld::report() {
  RunReport out = stats_;
  out.ticks = clock_;
  out.events = events_;
  out.quiescent = queue_.empty();
  if (strategy_) out.attacked = strategy_->attacks();
  if (!ended_) {
    ended_ = true;
    if (tracing()) {
      TraceRecord r;
      r.tick = clock_;
      r.kind = EventKind::end;
      r.extra = std::string("quiescent=") + (out.quiescent ? "1" : "0") + ",events=" + std::to_string(events_);
      emit(std::move(r));
    }
  }
  if (checker_) out.violations = checker_->finish().violations;
  if (!out.quiescent) {
    out.violations.push_back(Violation{0, clock_, "quiescence",
                                       "event queue not drained within max_ticks = " + std::to_string(config_.max_ticks)});
  }
  return out;
}

std::uint64_t SimWorld::state_hash() const {
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, 8);
  auto feed = [&](std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    crypto_generichash_update(&st, b, sizeof b);
  };
  feed(static_cast<std::uint64_t>(clock_));
  feed(events_);
  feed(order_);
  feed(queue_.size());
  feed(witness_seed_.value());
  for (auto p : faulty_) feed(to_index(p));
  auto pending = queue_;
  while (!pending.empty()) {
    const auto ev = pending.top();
    pending.pop();
    feed(static_cast<std::uint64_t>(ev.time));
    feed(ev.order);
    feed(slots_[ev.slot] ? slots_[ev.slot]->index() : 99);
  }
  for (const auto& e : engines_) {
    if (!e) continue;
    feed(e->state().last_sent);
    for (auto d : e->state().delivery) feed(d);
    feed(e->state().recorded.size());
  }
  std::uint8_t out[8];
  crypto_generichash_final(&st, out, sizeof out);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | out[i];
  return v;
}

}  // namespace securecast
