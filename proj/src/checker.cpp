#include "securecast/checker.hpp"

#include <algorithm>

namespace securecast {

namespace {

std::uint32_t required_value(const std::string& extra, const char* key) {
  const auto v = annotation_value(extra, key);
  if (!v) throw TraceParseError(std::string("config line lacks '") + key + "'");
  return static_cast<std::uint32_t>(std::stoul(*v));
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void InvariantChecker::fail(const TraceRecord& r, std::string property, std::string detail) {
  summary_.violations.push_back(Violation{index_, r.tick, std::move(property), std::move(detail)});
}

void InvariantChecker::on_record(const TraceRecord& r) {
  if (r.kind != EventKind::config && !config_) throw TraceParseError("trace does not start with a config line");
  last_tick_ = r.tick;
  switch (r.kind) {
    case EventKind::config: on_config(r); break;
    case EventKind::multicast:
      if (r.src && r.subject && r.digest && correct(*r.src)) multicast_[*r.subject] = *r.digest;
      break;
    case EventKind::deliver: on_deliver(r); break;
    case EventKind::send: on_send(r); break;
    case EventKind::drop:
      if (r.src && r.dst && r.chan) {
        const auto& ch = channels_[{*r.src, *r.dst}];
        if (*r.chan > ch.sent || *r.chan <= ch.received)
          fail(r, "conservation", "drop of a transmission that is not in flight");
      }
      break;
    case EventKind::recv: on_recv(r); break;
    case EventKind::alert_raise:
      if (r.src && r.subject) {
        first_alert_.emplace(to_index(r.subject->sender), r.tick);
        alert_seen_.emplace(std::pair{*r.src, to_index(r.subject->sender)}, r.tick);
        if (correct(*r.src)) ++summary_.alerts;
      }
      break;
    case EventKind::alert_recv:
      if (r.dst && r.subject) alert_seen_.emplace(std::pair{*r.dst, to_index(r.subject->sender)}, r.tick);
      break;
    case EventKind::sm_notify:
      if (r.subject) {
        for (auto p : r.signers)
          if (!delivered_.count({p, *r.subject}))
            fail(r, "sm-integrity", "stability news claims " + std::to_string(p) + " delivered " + to_string(*r.subject));
      }
      break;
    case EventKind::end:
      summary_.ended = true;
      summary_.quiescent = annotation_value(r.extra, "quiescent") == std::optional<std::string>("1");
      break;
    case EventKind::attack:
    case EventKind::timer: break;
  }
  ++index_;
}

void InvariantChecker::on_config(const TraceRecord& r) {
  Config c;
  c.quorum.n = required_value(r.extra, "n");
  c.quorum.t = required_value(r.extra, "t");
  c.kind = parse_protocol(annotation_value(r.extra, "protocol").value_or(""));
  c.kappa = required_value(r.extra, "kappa");
  c.slack_c = required_value(r.extra, "slack_c");
  c.seed = WitnessSeed(std::stoull(annotation_value(r.extra, "wseed").value_or("0")));
  c.mode = parse_w3t_mode(annotation_value(r.extra, "w3t").value_or("uniform"));
  const auto faulty = annotation_value(r.extra, "faulty").value_or("");
  std::size_t start = 0;
  while (start < faulty.size()) {
    auto semi = faulty.find(';', start);
    if (semi == std::string::npos) semi = faulty.size();
    c.faulty.insert(static_cast<std::uint32_t>(std::stoul(faulty.substr(start, semi - start))));
    start = semi + 1;
  }
  config_ = std::move(c);
}

void InvariantChecker::check_certificate(const TraceRecord& r) {
  const auto& c = *config_;
  const auto& id = *r.subject;
  if (!r.cert) {
    fail(r, "certificate", "delivery without a certificate tag");
    return;
  }
  std::vector<std::uint32_t> signers = r.signers;
  std::sort(signers.begin(), signers.end());
  signers.erase(std::unique(signers.begin(), signers.end()), signers.end());
  auto count_in = [&](const WitnessSet& range) {
    return static_cast<std::size_t>(
        std::count_if(signers.begin(), signers.end(), [&](std::uint32_t p) { return range.contains(ProcessId{p}); }));
  };
  const std::size_t w3t_need = 2 * c.quorum.t + 1;
  bool ok = false;
  std::string rule;
  if (*r.cert == Tag::E && c.kind == ProtocolKind::E) {
    ok = signers.size() >= dissemination_quorum_size(c.quorum);
    rule = "q distinct signers";
  } else if (*r.cert == Tag::ThreeT && c.kind != ProtocolKind::E) {
    ok = count_in(w3t(id, c.quorum, c.seed, c.mode)) >= w3t_need;
    rule = "2t+1 signers inside W_3T";
  } else if (*r.cert == Tag::AV && c.kind == ProtocolKind::Act) {
    ok = count_in(w_active(id, c.kappa, c.quorum, c.seed)) >= c.kappa - c.slack_c;
    rule = "kappa-C signers inside W_active";
  } else {
    rule = "a certificate tag the protocol accepts";
  }
  if (!ok) fail(r, "certificate", "delivery of " + to_string(id) + " lacks " + rule);
}

void InvariantChecker::on_deliver(const TraceRecord& r) {
  if (!r.src || !r.subject || !r.digest || !correct(*r.src)) return;
  const auto p = *r.src;
  const auto& id = *r.subject;
  ++summary_.deliveries;
  if (!delivered_.emplace(std::pair{p, id}, *r.digest).second) {
    fail(r, "integrity", std::to_string(p) + " delivered " + to_string(id) + " twice");
    return;
  }
  const auto sender = to_index(id.sender);
  if (correct(sender)) {
    const auto m = multicast_.find(id);
    if (m == multicast_.end() || m->second != *r.digest)
      fail(r, "integrity", to_string(id) + " delivered with content its correct sender never multicast");
  }
  auto& last = last_delivered_[p][sender];
  if (id.seq != last + 1)
    fail(r, "order", std::to_string(p) + " delivered " + to_string(id) + " after seq " + std::to_string(last));
  last = std::max(last, id.seq);

  auto& seen = digests_[id];
  seen.insert(*r.digest);
  if (seen.size() == 2) {
    ++summary_.conflicts;
    if (config_->kind != ProtocolKind::Act)
      fail(r, "agreement", to_string(id) + " delivered with two different digests");
  }
  check_certificate(r);
}

void InvariantChecker::on_send(const TraceRecord& r) {
  if (!r.src || !r.dst) return;
  auto& ch = channels_[{*r.src, *r.dst}];
  if (!r.chan || *r.chan != ch.sent + 1) fail(r, "fifo", "channel sequence numbers out of order on send");
  if (r.chan) ch.sent = std::max(ch.sent, *r.chan);

  if (r.role != Role::ack || !r.subject || !r.digest || !correct(*r.src)) return;
  const auto signer = *r.src;
  const auto& id = *r.subject;
  const auto [it, fresh] = acked_.emplace(std::pair{signer, id}, *r.digest);
  if (!fresh && it->second != *r.digest)
    fail(r, "conflicting-acks", std::to_string(signer) + " signed acks for two digests of " + to_string(id));
  if (correct(to_index(id.sender))) {
    const auto m = multicast_.find(id);
    if (m == multicast_.end() || m->second != *r.digest)
      fail(r, "ack-origin", std::to_string(signer) + " acked " + to_string(id) + " with digest " + hex(*r.digest) +
                                " that its correct sender never multicast");
  }
  if (config_->kind == ProtocolKind::Act && r.proto == Tag::ThreeT && r.req) {
    ++summary_.recovery_acks_checked;
    const auto convicted = to_index(id.sender);
    const auto alert = first_alert_.find(convicted);
    if (alert != first_alert_.end() && alert->second <= *r.req) {
      const auto seen = alert_seen_.find({signer, convicted});
      if (seen == alert_seen_.end() || seen->second > r.tick)
        fail(r, "alert-race", std::to_string(signer) + " signed a recovery ack for " + to_string(id) +
                                  " before the alert raised at tick " + std::to_string(alert->second) + " reached it");
    }
  }
}

void InvariantChecker::on_recv(const TraceRecord& r) {
  if (!r.src || !r.dst) return;
  auto& ch = channels_[{*r.src, *r.dst}];
  if (!r.chan || *r.chan != ch.received + 1) {
    fail(r, "fifo", "channel " + std::to_string(*r.src) + "->" + std::to_string(*r.dst) + " delivered out of order");
  } else if (*r.chan > ch.sent) {
    fail(r, "conservation", "receipt of a transmission that was never sent");
  }
  if (r.chan) ch.received = std::max(ch.received, *r.chan);
}

const CheckSummary& InvariantChecker::finish() {
  if (finished_ || !config_) return summary_;
  finished_ = true;
  if (!summary_.ended || !summary_.quiescent) return summary_;
  TraceRecord end;
  end.kind = EventKind::end;
  end.tick = last_tick_;
  --index_;

  for (const auto& [key, ch] : channels_) {
    if (ch.sent != ch.received)
      fail(end, "conservation", "channel " + std::to_string(key.first) + "->" + std::to_string(key.second) +
                                    " ended with transmissions in flight");
  }
  for (const auto& [id, d] : multicast_) {
    if (!delivered_.count({to_index(id.sender), id}))
      fail(end, "self-delivery", "correct sender never delivered its own " + to_string(id));
  }
  for (const auto& [id, ds] : digests_) {
    for (std::uint32_t p = 0; p < config_->quorum.n; ++p) {
      if (correct(p) && !delivered_.count({p, id}))
        fail(end, "reliability", std::to_string(p) + " never delivered " + to_string(id));
    }
  }
  ++index_;
  return summary_;
}

}  // namespace securecast
