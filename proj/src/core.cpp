#include "securecast/core.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <unordered_set>

namespace securecast {

namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  });
}

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(ByteView bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

 private:
  Bytes& out_;
};

}  // namespace

std::string to_string(const MessageId& id) {
  return std::to_string(to_index(id.sender)) + ":" + std::to_string(id.seq);
}

std::uint64_t Digest::prefix64() const noexcept {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | bytes[i];
  return v;
}

std::string Digest::hex() const {
  std::string out;
  out.reserve(2 * bytes.size());
  char buf[3];
  for (auto b : bytes) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    out += buf;
  }
  return out;
}

Digest digest(ByteView data) {
  ensure_sodium();
  Digest d;
  crypto_generichash(d.bytes.data(), d.bytes.size(), data.data(), data.size(), nullptr, 0);
  return d;
}

Digest digest(const MulticastMessage& m) { return digest(encode(m)); }

std::string_view to_string(Tag tag) {
  switch (tag) {
    case Tag::E: return "E";
    case Tag::ThreeT: return "3T";
    case Tag::AV: return "AV";
  }
  return "?";
}

std::optional<Tag> parse_tag(std::string_view text) {
  if (text == "E") return Tag::E;
  if (text == "3T") return Tag::ThreeT;
  if (text == "AV") return Tag::AV;
  return std::nullopt;
}

bool conflicts(const Ack& a, const Ack& b) noexcept {
  return a.subject == b.subject && a.digest != b.digest;
}

KeyRing::KeyRing(std::uint32_t n, std::uint64_t secret_seed) : compromised_(n, false) {
  ensure_sodium();
  Bytes seed_bytes;
  Writer w(seed_bytes);
  w.raw(ByteView(reinterpret_cast<const std::uint8_t*>("securecast/keyring"), 18));
  w.u64(secret_seed);
  crypto_generichash(secret_.data(), secret_.size(), seed_bytes.data(), seed_bytes.size(), nullptr, 0);
}

void KeyRing::compromise(ProcessId p) { compromised_.at(to_index(p)) = true; }

bool KeyRing::compromised(ProcessId p) const { return compromised_.at(to_index(p)); }

std::array<std::uint8_t, kKeyTagBytes> KeyRing::tag_for(ProcessId signer, const Digest& over) const noexcept {
  std::array<std::uint8_t, 4 + kDigestBytes> input{};
  const auto s = to_index(signer);
  for (int i = 0; i < 4; ++i) input[i] = static_cast<std::uint8_t>(s >> (8 * i));
  std::copy(over.bytes.begin(), over.bytes.end(), input.begin() + 4);
  std::array<std::uint8_t, kKeyTagBytes> tag{};
  crypto_generichash(tag.data(), tag.size(), input.data(), input.size(), secret_.data(), secret_.size());
  return tag;
}

Signature KeyRing::sign(Principal caller, ProcessId signer, ByteView data) const {
  if (to_index(signer) >= compromised_.size()) throw std::out_of_range("signer outside the process set");
  const bool allowed = caller.kind == Principal::Kind::process ? caller.id == signer : compromised(signer);
  if (!allowed) {
    throw ForgeryAttempt("signature requested for process " + std::to_string(to_index(signer)) +
                         " without its private key");
  }
  Signature sig;
  sig.signer = signer;
  sig.over = digest(data);
  sig.key_tag = tag_for(signer, sig.over);
  return sig;
}

bool KeyRing::verify(ProcessId signer, ByteView data, const Signature& sig) const noexcept {
  if (sig.signer != signer || to_index(signer) >= compromised_.size()) return false;
  if (digest(data) != sig.over) return false;
  return sodium_memcmp(tag_for(signer, sig.over).data(), sig.key_tag.data(), kKeyTagBytes) == 0;
}

Bytes encode(const MulticastMessage& m) {
  Bytes out;
  out.reserve(17 + m.payload.size());
  Writer w(out);
  w.u8(0x03);
  w.u32(to_index(m.id.sender));
  w.u64(m.id.seq);
  w.u32(static_cast<std::uint32_t>(m.payload.size()));
  w.raw(m.payload);
  return out;
}

Bytes encode_sender_claim(const MessageId& id, const Digest& d) {
  Bytes out;
  out.reserve(13 + kDigestBytes);
  Writer w(out);
  w.u8(0x02);
  w.u32(to_index(id.sender));
  w.u64(id.seq);
  w.raw(d.bytes);
  return out;
}

Bytes encode_ack_body(Tag proto, const MessageId& subject, const Digest& d,
                      const std::optional<Signature>& sender_sig) {
  Bytes out;
  out.reserve(15 + 2 * kDigestBytes + 4 + kKeyTagBytes);
  Writer w(out);
  w.u8(0x01);
  w.u8(static_cast<std::uint8_t>(proto));
  w.u32(to_index(subject.sender));
  w.u64(subject.seq);
  w.raw(d.bytes);
  w.u8(sender_sig ? 1 : 0);
  if (sender_sig) {
    w.u32(to_index(sender_sig->signer));
    w.raw(sender_sig->over.bytes);
    w.raw(sender_sig->key_tag);
  }
  return out;
}

Signature sign_claim(const KeyRing& keys, Principal caller, const MessageId& id, const Digest& d) {
  return keys.sign(caller, id.sender, encode_sender_claim(id, d));
}

bool verify_claim(const KeyRing& keys, const MessageId& id, const Digest& d, const Signature& sig) {
  return keys.verify(id.sender, encode_sender_claim(id, d), sig);
}

Ack make_ack(const KeyRing& keys, Principal caller, Tag proto, ProcessId signer,
             const MessageId& subject, const Digest& d, std::optional<Signature> sender_sig) {
  Ack ack;
  ack.proto = proto;
  ack.signer = signer;
  ack.subject = subject;
  ack.digest = d;
  ack.sender_sig = std::move(sender_sig);
  ack.sig = keys.sign(caller, signer, encode_ack_body(proto, subject, d, ack.sender_sig));
  return ack;
}

bool verify_ack(const KeyRing& keys, const Ack& ack) noexcept {
  return keys.verify(ack.signer, encode_ack_body(ack.proto, ack.subject, ack.digest, ack.sender_sig), ack.sig);
}

bool valid_ack_set(const KeyRing& keys, const AckSet& set) noexcept {
  if (set.acks.empty()) return true;
  const Ack& first = set.acks.front();
  std::unordered_set<std::uint32_t> signers;
  for (const Ack& a : set.acks) {
    if (a.proto != first.proto || a.subject != first.subject || a.digest != first.digest ||
        a.sender_sig != first.sender_sig)
      return false;
    if (!signers.insert(to_index(a.signer)).second) return false;
    if (!verify_ack(keys, a)) return false;
  }
  return true;
}

}  // namespace securecast
