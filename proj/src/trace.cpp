#include "securecast/trace.hpp"

#include <array>
#include <charconv>
#include <ostream>

namespace securecast {

namespace {

constexpr std::array<std::string_view, 12> kKindNames = {"config", "multicast", "attack",     "send",
                                                         "drop",   "recv",      "deliver",    "timer",
                                                         "alert_raise", "alert_recv", "sm_notify", "end"};

template <typename T>
void append_number(std::string& out, T v) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

void append_hex64(std::string& out, std::uint64_t v) {
  char buf[16];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xf];
    v >>= 4;
  }
  out.append(buf, 16);
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw TraceParseError("bad " + std::string(what) + " '" + std::string(text) + "'");
  return v;
}

std::uint64_t parse_hex64(std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (text.size() != 16 || ec != std::errc{} || ptr != text.data() + text.size())
    throw TraceParseError("bad digest '" + std::string(text) + "'");
  return v;
}

MessageId parse_subject(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw TraceParseError("bad subject '" + std::string(text) + "'");
  return MessageId{ProcessId{parse_number<std::uint32_t>(text.substr(0, colon), "subject sender")},
                   parse_number<std::uint64_t>(text.substr(colon + 1), "subject seq")};
}

void append_list(std::string& out, const std::vector<std::uint32_t>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ';';
    append_number(out, ids[i]);
  }
}

std::vector<std::uint32_t> parse_list(std::string_view text) {
  std::vector<std::uint32_t> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto semi = text.find(';', start);
    out.push_back(parse_number<std::uint32_t>(text.substr(start, semi - start), "process list"));
    if (semi == std::string_view::npos) break;
    start = semi + 1;
  }
  return out;
}

}  // namespace

std::string_view to_string(EventKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == text) return static_cast<EventKind>(i);
  return std::nullopt;
}

std::string format_record(const TraceRecord& r) {
  std::string out;
  out.reserve(96);
  append_number(out, r.tick);
  out += ' ';
  out += to_string(r.kind);
  out += ' ';
  if (r.src) append_number(out, *r.src); else out += '-';
  out += ' ';
  if (!r.dst) out += '-';
  else if (*r.dst == kAllProcesses) out += '*';
  else append_number(out, *r.dst);
  out += ' ';
  out += r.proto ? to_string(*r.proto) : "-";
  out += ' ';
  out += r.role ? to_string(*r.role) : "-";
  out += ' ';
  if (r.subject) out += to_string(*r.subject); else out += '-';
  out += ' ';
  if (r.digest) append_hex64(out, *r.digest); else out += '-';
  out += ' ';

  const auto before = out.size();
  auto key = [&](std::string_view k) {
    if (out.size() != before) out += ',';
    out += k;
    out += '=';
  };
  if (r.chan) { key("c"); append_number(out, *r.chan); }
  if (r.req) { key("req"); append_number(out, *r.req); }
  if (r.cert) { key("cert"); out += to_string(*r.cert); }
  if (!r.signers.empty()) {
    key(r.kind == EventKind::sm_notify ? "by" : "signers");
    append_list(out, r.signers);
  }
  if (!r.extra.empty()) {
    if (out.size() != before) out += ',';
    out += r.extra;
  }
  if (out.size() == before) out += '-';
  return out;
}

TraceRecord parse_record(std::string_view line) {
  std::array<std::string_view, 9> f;
  std::size_t count = 0, pos = 0;
  while (pos <= line.size() && count < f.size()) {
    auto space = line.find(' ', pos);
    if (count == f.size() - 1) space = std::string_view::npos;
    f[count++] = line.substr(pos, space == std::string_view::npos ? std::string_view::npos : space - pos);
    if (space == std::string_view::npos) break;
    pos = space + 1;
  }
  if (count != f.size()) throw TraceParseError("expected 9 fields, got " + std::to_string(count));

  TraceRecord r;
  r.tick = parse_number<Tick>(f[0], "tick");
  const auto kind = parse_event_kind(f[1]);
  if (!kind) throw TraceParseError("unknown event kind '" + std::string(f[1]) + "'");
  r.kind = *kind;
  if (f[2] != "-") r.src = parse_number<std::uint32_t>(f[2], "src");
  if (f[3] == "*") r.dst = kAllProcesses;
  else if (f[3] != "-") r.dst = parse_number<std::uint32_t>(f[3], "dst");
  if (f[4] != "-") {
    r.proto = parse_tag(f[4]);
    if (!r.proto) throw TraceParseError("unknown proto '" + std::string(f[4]) + "'");
  }
  if (f[5] != "-") {
    r.role = parse_role(f[5]);
    if (!r.role) throw TraceParseError("unknown role '" + std::string(f[5]) + "'");
  }
  if (f[6] != "-") r.subject = parse_subject(f[6]);
  if (f[7] != "-") r.digest = parse_hex64(f[7]);

  if (f[8] != "-") {
    std::string_view rest = f[8];
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto comma = rest.find(',', start);
      const auto item = rest.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) throw TraceParseError("bad annotation '" + std::string(item) + "'");
      const auto k = item.substr(0, eq);
      const auto v = item.substr(eq + 1);
      if (k == "c") r.chan = parse_number<std::uint64_t>(v, "c");
      else if (k == "req") r.req = parse_number<Tick>(v, "req");
      else if (k == "cert") {
        r.cert = parse_tag(v);
        if (!r.cert) throw TraceParseError("bad cert '" + std::string(v) + "'");
      } else if (k == "signers" || k == "by") r.signers = parse_list(v);
      else {
        if (!r.extra.empty()) r.extra += ',';
        r.extra += item;
      }
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  return r;
}

std::optional<std::string> annotation_value(std::string_view extra, std::string_view key) {
  std::size_t start = 0;
  while (start <= extra.size()) {
    const auto comma = extra.find(',', start);
    const auto item = extra.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const auto eq = item.find('=');
    if (eq != std::string_view::npos && item.substr(0, eq) == key) return std::string(item.substr(eq + 1));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return std::nullopt;
}

void TextTraceWriter::on_record(const TraceRecord& r) { *out_ << format_record(r) << '\n'; }

}  // namespace securecast
