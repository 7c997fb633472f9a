#pragma once

// Keyed tagging of log records and agent emission units, and record-level winnowing.
//
// Record MAC:  HMAC-SHA256(key, "CWREC" 0x00 agent_id 0x00 be64(seq) 0x00 payload)
// Agent token: HMAC-SHA256(key, "CWAGT" 0x00 agent_id 0x00 be64(epoch))
//
// Agent ids never contain 0x00 and the sequence/epoch fields are fixed width, so both
// encodings are injective and the two prefixes keep the roles apart.

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chaffwin/encoding.hpp"
#include "chaffwin/errors.hpp"
#include "chaffwin/random.hpp"

namespace chaffwin {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kMacSize = 32;

class SecretKey {
 public:
  SecretKey() = default;
  explicit SecretKey(const std::array<std::uint8_t, kKeySize>& bytes) : bytes_(bytes) {}

  // Fresh key from the OS-seeded CSPRNG.
  static SecretKey generate() {
    SecretKey key;
    if (RAND_bytes(key.bytes_.data(), static_cast<int>(kKeySize)) != 1) {
      throw Error("RAND_bytes failed");
    }
    return key;
  }

  // Deterministic key for tests and reproducible configurations.
  static SecretKey from_seed(std::uint64_t seed) {
    SecretKey key;
    std::uint64_t state = seed;
    for (std::size_t i = 0; i < kKeySize; i += 8) {
      std::uint64_t word = splitmix64(state);
      for (std::size_t b = 0; b < 8; ++b) key.bytes_[i + b] = static_cast<std::uint8_t>(word >> (8 * b));
    }
    return key;
  }

  // Accepts upper- or lowercase hex, exactly 64 digits.
  static SecretKey from_hex(std::string_view hex) {
    SecretKey key;
    if (!chaffwin::from_hex(hex, key.bytes_, /*lowercase_only=*/false)) {
      throw FormatError("key must be 64 hex digits");
    }
    return key;
  }

  std::string hex() const { return to_hex(bytes_); }
  std::span<const std::uint8_t, kKeySize> bytes() const { return bytes_; }

  bool operator==(const SecretKey&) const = default;

 private:
  std::array<std::uint8_t, kKeySize> bytes_{};
};

class Mac {
 public:
  Mac() = default;
  explicit Mac(const std::array<std::uint8_t, kMacSize>& bytes) : bytes_(bytes) {}

  // Lowercase only, exactly 64 digits.
  static Mac from_hex(std::string_view hex) {
    Mac mac;
    if (!chaffwin::from_hex(hex, mac.bytes_)) throw FormatError("MAC must be 64 lowercase hex digits");
    return mac;
  }

  std::string hex() const { return to_hex(bytes_); }
  std::span<const std::uint8_t, kMacSize> bytes() const { return bytes_; }
  std::span<std::uint8_t, kMacSize> mutable_bytes() { return bytes_; }

  bool operator==(const Mac&) const = default;
  auto operator<=>(const Mac&) const = default;

 private:
  std::array<std::uint8_t, kMacSize> bytes_{};
};

// Printable ASCII, 1-64 characters, no tab or control characters.
class AgentId {
 public:
  AgentId() = default;
  explicit AgentId(std::string id) : id_(std::move(id)) {
    if (!is_valid(id_)) throw FormatError("invalid agent id '" + id_ + "'");
  }

  static bool is_valid(std::string_view id) {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id) {
      if (c < 0x20 || c > 0x7e) return false;
    }
    return true;
  }

  const std::string& str() const { return id_; }

  bool operator==(const AgentId&) const = default;
  auto operator<=>(const AgentId&) const = default;

 private:
  std::string id_;
};

struct Tag {
  AgentId agent_id;
  std::uint64_t seq = 0;
  Mac mac;

  bool operator==(const Tag&) const = default;
};

struct TaggedRecord {
  Tag tag;
  std::string payload;

  bool operator==(const TaggedRecord&) const = default;
};

struct AgentToken {
  AgentId agent_id;
  std::uint64_t epoch = 0;
  Mac token;

  bool operator==(const AgentToken&) const = default;
};

inline bool has_line_break(std::string_view payload) {
  return payload.find_first_of("\n\r") != std::string_view::npos;
}

namespace detail {

inline void append_be64(std::string& out, std::uint64_t value) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((value >> shift) & 0xff));
}

inline Mac hmac_sha256(const SecretKey& key, std::string_view message) {
  std::array<std::uint8_t, kMacSize> out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.bytes().data(), static_cast<int>(kKeySize),
           reinterpret_cast<const unsigned char*>(message.data()), message.size(), out.data(),
           &len) == nullptr ||
      len != kMacSize) {
    throw Error("HMAC-SHA256 failed");
  }
  return Mac(out);
}

inline Mac record_mac_unchecked(const SecretKey& key, const AgentId& agent_id, std::uint64_t seq,
                                std::string_view payload) {
  std::string message;
  message.reserve(16 + agent_id.str().size() + payload.size());
  message.append("CWREC", 5);
  message.push_back('\0');
  message.append(agent_id.str());
  message.push_back('\0');
  append_be64(message, seq);
  message.push_back('\0');
  message.append(payload);
  return hmac_sha256(key, message);
}

}  // namespace detail

// Equality that always reads every byte. The probe is called once per byte index
// examined, so tests can observe the access pattern.
struct NoProbe {
  void operator()(std::size_t) const noexcept {}
};

template <class Probe = NoProbe>
bool constant_time_equal(const Mac& a, const Mac& b, Probe&& probe = {}) {
  std::uint8_t diff = 0;
  auto lhs = a.bytes();
  auto rhs = b.bytes();
  for (std::size_t i = 0; i < kMacSize; ++i) {
    probe(i);
    diff = static_cast<std::uint8_t>(diff | (lhs[i] ^ rhs[i]));
  }
  return diff == 0;
}

inline Mac compute_record_mac(const SecretKey& key, const AgentId& agent_id, std::uint64_t seq,
                              std::string_view payload) {
  if (has_line_break(payload)) throw FormatError("record payload contains a line break");
  return detail::record_mac_unchecked(key, agent_id, seq, payload);
}

inline Mac compute_agent_token(const SecretKey& key, const AgentId& agent_id, std::uint64_t epoch) {
  std::string message;
  message.reserve(16 + agent_id.str().size());
  message.append("CWAGT", 5);
  message.push_back('\0');
  message.append(agent_id.str());
  message.push_back('\0');
  detail::append_be64(message, epoch);
  return detail::hmac_sha256(key, message);
}

inline bool verify_record(const SecretKey& key, const TaggedRecord& record) {
  Mac expected = detail::record_mac_unchecked(key, record.tag.agent_id, record.tag.seq, record.payload);
  return constant_time_equal(expected, record.tag.mac);
}

inline TaggedRecord make_wheat_record(const SecretKey& key, const AgentId& agent_id, std::uint64_t seq,
                                      std::string payload) {
  Mac mac = compute_record_mac(key, agent_id, seq, payload);
  return TaggedRecord{Tag{agent_id, seq, mac}, std::move(payload)};
}

// Chaff is signed exactly like wheat, only under a key the analyzer does not hold.
inline TaggedRecord make_chaff_record(const SecretKey& fake_key, const AgentId& agent_id, std::uint64_t seq,
                                      std::string payload) {
  return make_wheat_record(fake_key, agent_id, seq, std::move(payload));
}

inline std::vector<TaggedRecord> winnow_records(const SecretKey& key, std::span<const TaggedRecord> records) {
  std::vector<TaggedRecord> wheat;
  for (const TaggedRecord& record : records) {
    if (verify_record(key, record)) wheat.push_back(record);
  }
  return wheat;
}

}  // namespace chaffwin
