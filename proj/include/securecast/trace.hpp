#pragma once

// Line-delimited run traces.
//
// One event per line, nine space-separated fields:
//
//   tick kind src dst proto role subject digest annotation
//
// Empty fields are '-'. dst '*' addresses every process. subject is
// "sender:seq", digest is the first 16 hex characters of H(m), and the
// annotation is a comma-separated k=v list in this fixed key order:
//
//   c        per-channel sequence number (send, drop, recv)
//   req      tick at which a delayed ack was requested (send of an ack)
//   cert     certificate tag of a delivery (deliver)
//   signers  certificate signers, ';'-separated (deliver)
//   by       processes known to have delivered (sm_notify)
//
// followed by free-form keys (config, timer, end lines).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "securecast/core.hpp"
#include "securecast/protocols.hpp"

namespace securecast {

enum class EventKind : std::uint8_t {
  config,
  multicast,
  attack,
  send,
  drop,
  recv,
  deliver,
  timer,
  alert_raise,
  alert_recv,
  sm_notify,
  end
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

constexpr std::uint32_t kAllProcesses = 0xffffffffu;

struct TraceRecord {
  Tick tick = 0;
  EventKind kind = EventKind::config;
  std::optional<std::uint32_t> src;
  std::optional<std::uint32_t> dst;  // kAllProcesses prints as '*'
  std::optional<Tag> proto;
  std::optional<Role> role;
  std::optional<MessageId> subject;
  std::optional<std::uint64_t> digest;  // Digest::prefix64()

  std::optional<std::uint64_t> chan;
  std::optional<Tick> req;
  std::optional<Tag> cert;
  std::vector<std::uint32_t> signers;  // "signers" on deliver lines, "by" on sm_notify lines
  std::string extra;                   // remaining k=v pairs, comma-joined

  bool operator==(const TraceRecord&) const = default;
};

std::string format_record(const TraceRecord& r);

class TraceParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inverse of format_record. Throws TraceParseError.
TraceRecord parse_record(std::string_view line);

/// Looks up `key` in a comma-joined k=v list.
std::optional<std::string> annotation_value(std::string_view extra, std::string_view key);

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void on_record(const TraceRecord& r) = 0;
};

class TextTraceWriter final : public TraceSink {
 public:
  explicit TextTraceWriter(std::ostream& out) : out_(&out) {}
  void on_record(const TraceRecord& r) override;

 private:
  std::ostream* out_;
};

/// Keeps every record in memory; handy in tests.
class TraceBuffer final : public TraceSink {
 public:
  void on_record(const TraceRecord& r) override { records.push_back(r); }
  std::vector<TraceRecord> records;
};

}  // namespace securecast
