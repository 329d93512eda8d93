#pragma once

// Streaming property checker over trace records.
//
// The simulator feeds it records as they are produced; trace-check feeds it
// parsed lines. Both see exactly the same stream, so a trace file replays to the
// same verdict as the live run.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "securecast/protocols.hpp"
#include "securecast/quorum.hpp"
#include "securecast/trace.hpp"

namespace securecast {

struct Violation {
  std::size_t record = 0;  // 0-based index of the offending record
  Tick tick = 0;
  std::string property;
  std::string detail;
};

struct CheckSummary {
  std::vector<Violation> violations;
  std::uint64_t deliveries = 0;       // by correct processes
  std::uint64_t conflicts = 0;        // ids delivered with two digests among correct processes
  std::uint64_t alerts = 0;
  std::uint64_t recovery_acks_checked = 0;
  bool quiescent = false;
  bool ended = false;
};

class InvariantChecker final : public TraceSink {
 public:
  void on_record(const TraceRecord& r) override;

  /// Runs the end-of-run checks (self-delivery, reliability, conservation) if the
  /// trace ended quiescent, and returns everything found.
  const CheckSummary& finish();
  const CheckSummary& summary() const noexcept { return summary_; }

 private:
  struct Config {
    QuorumParams quorum;
    ProtocolKind kind = ProtocolKind::E;
    std::uint32_t kappa = 0;
    std::uint32_t slack_c = 0;
    WitnessSeed seed;
    W3tMode mode = W3tMode::uniform;
    std::set<std::uint32_t> faulty;
  };

  struct ChannelState {
    std::uint64_t sent = 0;
    std::uint64_t received = 0;
  };

  bool correct(std::uint32_t p) const { return config_ && !config_->faulty.count(p); }
  void fail(const TraceRecord& r, std::string property, std::string detail);
  void on_config(const TraceRecord& r);
  void on_deliver(const TraceRecord& r);
  void on_send(const TraceRecord& r);
  void on_recv(const TraceRecord& r);
  void check_certificate(const TraceRecord& r);

  std::optional<Config> config_;
  CheckSummary summary_;
  std::size_t index_ = 0;
  Tick last_tick_ = 0;
  bool finished_ = false;

  std::map<MessageId, std::uint64_t> multicast_;                  // correct senders
  std::map<std::pair<std::uint32_t, MessageId>, std::uint64_t> delivered_;
  std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>> last_delivered_;  // process -> sender -> seq
  std::map<MessageId, std::set<std::uint64_t>> digests_;           // correct deliveries per id
  std::map<std::pair<std::uint32_t, MessageId>, std::uint64_t> acked_;  // correct signer -> digest
  std::map<std::pair<std::uint32_t, std::uint32_t>, ChannelState> channels_;
  std::map<std::uint32_t, Tick> first_alert_;                     // convicted sender -> first raise tick
  std::map<std::pair<std::uint32_t, std::uint32_t>, Tick> alert_seen_;  // (receiver, convicted) -> tick
};

}  // namespace securecast
