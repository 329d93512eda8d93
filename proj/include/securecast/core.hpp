#pragma once

// Identities, digests and simulated signatures shared by every protocol.
//
// Signatures are simulation-sound tokens: a keyed BLAKE2b tag over
// (signer, digest-of-data) under a per-world secret. Only the KeyRing knows the
// secret, and it refuses to sign on behalf of a correct process for anyone but
// that process itself.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace securecast {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Tick = std::int64_t;

enum class ProcessId : std::uint32_t {};

constexpr std::uint32_t to_index(ProcessId p) noexcept { return static_cast<std::uint32_t>(p); }

struct MessageId {
  ProcessId sender{};
  std::uint64_t seq = 0;

  auto operator<=>(const MessageId&) const = default;
};

std::string to_string(const MessageId& id);

struct MulticastMessage {
  MessageId id;
  Bytes payload;

  bool operator==(const MulticastMessage&) const = default;
};

constexpr std::size_t kDigestBytes = 32;
constexpr std::size_t kKeyTagBytes = 16;

struct Digest {
  std::array<std::uint8_t, kDigestBytes> bytes{};

  auto operator<=>(const Digest&) const = default;

  /// First eight bytes, big-endian. Used for compact trace output.
  std::uint64_t prefix64() const noexcept;
  std::string hex() const;
};

Digest digest(ByteView data);

/// H(m): digest of the canonical encoding of (sender, seq, payload).
Digest digest(const MulticastMessage& m);

struct Signature {
  ProcessId signer{};
  Digest over;
  std::array<std::uint8_t, kKeyTagBytes> key_tag{};

  auto operator<=>(const Signature&) const = default;
};

/// Message-layer protocol tag carried in every PDU and ack.
enum class Tag : std::uint8_t { E = 0, ThreeT = 1, AV = 2 };

std::string_view to_string(Tag tag);
std::optional<Tag> parse_tag(std::string_view text);

struct Ack {
  Tag proto = Tag::E;
  ProcessId signer{};
  MessageId subject;
  Digest digest;
  std::optional<Signature> sender_sig;  // AV acks only
  Signature sig;

  bool operator==(const Ack&) const = default;
};

/// Two acks conflict iff they acknowledge the same (sender, seq) with different digests.
bool conflicts(const Ack& a, const Ack& b) noexcept;

struct AckSet {
  std::vector<Ack> acks;

  std::size_t size() const noexcept { return acks.size(); }
  bool operator==(const AckSet&) const = default;
};

class ForgeryAttempt : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Who is asking the KeyRing for a signature.
struct Principal {
  enum class Kind { process, adversary };
  Kind kind = Kind::process;
  ProcessId id{};

  static Principal process(ProcessId p) { return {Kind::process, p}; }
  static Principal adversary() { return {Kind::adversary, ProcessId{0}}; }
};

class KeyRing {
 public:
  KeyRing(std::uint32_t n, std::uint64_t secret_seed);

  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(compromised_.size()); }

  /// Hands `p`'s private key to the adversary. Models p being faulty.
  void compromise(ProcessId p);
  bool compromised(ProcessId p) const;

  /// Throws ForgeryAttempt when `caller` does not hold `signer`'s key.
  Signature sign(Principal caller, ProcessId signer, ByteView data) const;
  bool verify(ProcessId signer, ByteView data, const Signature& sig) const noexcept;

 private:
  std::array<std::uint8_t, kKeyTagBytes> tag_for(ProcessId signer, const Digest& over) const noexcept;

  std::array<std::uint8_t, 32> secret_{};
  std::vector<bool> compromised_;
};

// Canonical encodings. All integers little-endian, fixed width:
//   message  : 0x03 | u32 sender | u64 seq | u32 len | payload
//   regular  : 0x02 | u32 sender | u64 seq | digest[32]
//   ack      : 0x01 | u8 tag | u32 sender | u64 seq | digest[32] | u8 has_sig
//              [ | u32 signer | digest[32] | key_tag[16] ]
Bytes encode(const MulticastMessage& m);
Bytes encode_sender_claim(const MessageId& id, const Digest& d);
Bytes encode_ack_body(Tag proto, const MessageId& subject, const Digest& d,
                      const std::optional<Signature>& sender_sig);

/// Signs the sender claim (p_i, seq, H(m)) carried by signed regulars.
Signature sign_claim(const KeyRing& keys, Principal caller, const MessageId& id, const Digest& d);
bool verify_claim(const KeyRing& keys, const MessageId& id, const Digest& d, const Signature& sig);

Ack make_ack(const KeyRing& keys, Principal caller, Tag proto, ProcessId signer,
             const MessageId& subject, const Digest& d, std::optional<Signature> sender_sig = {});
bool verify_ack(const KeyRing& keys, const Ack& ack) noexcept;

/// All acks share (proto, subject, digest, sender_sig), signers are distinct, and every
/// signature verifies.
bool valid_ack_set(const KeyRing& keys, const AckSet& set) noexcept;

}  // namespace securecast

template <>
struct std::hash<securecast::MessageId> {
  std::size_t operator()(const securecast::MessageId& id) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(securecast::to_index(id.sender)) << 40) ^ id.seq);
  }
};
