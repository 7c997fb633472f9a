#pragma once

// Agent -> collector -> stream tiers, and the key-free stream file format.
//
//   #CW1 <epoch> <record-count>
//   A <agent_id> <count> <token-hex64>                    one per agent, sorted by id
//   R <agent_id> <seq> <mac-hex64> <base64(payload)>      record-count lines
//
// Fields are tab-separated, every line ends in LF.

#include <algorithm>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chaffwin/clf.hpp"
#include "chaffwin/encoding.hpp"
#include "chaffwin/errors.hpp"
#include "chaffwin/random.hpp"
#include "chaffwin/tagging.hpp"

namespace chaffwin {

enum class AgentKind { Real, Fake };

inline std::string_view kind_name(AgentKind kind) { return kind == AgentKind::Real ? "real" : "fake"; }

// CSC-side only; the kind never leaves the collector.
struct AgentConfig {
  AgentId agent_id;
  SecretKey key;
  AgentKind kind = AgentKind::Real;
  std::uint64_t content_seed = 0;

  bool operator==(const AgentConfig&) const = default;
};

struct Batch {
  AgentId agent_id;
  std::uint64_t epoch = 0;
  AgentToken token;
  std::vector<TaggedRecord> records;

  bool operator==(const Batch&) const = default;
};

struct ManifestEntry {
  AgentId agent_id;
  std::uint64_t count = 0;
  Mac token;

  bool operator==(const ManifestEntry&) const = default;
};

struct Stream {
  std::uint64_t epoch = 0;
  std::vector<TaggedRecord> records;
  std::vector<ManifestEntry> manifest;  // sorted by agent_id

  bool operator==(const Stream&) const = default;

  const ManifestEntry* find_agent(const AgentId& id) const {
    auto it = std::lower_bound(manifest.begin(), manifest.end(), id,
                               [](const ManifestEntry& e, const AgentId& key) { return e.agent_id < key; });
    return it != manifest.end() && it->agent_id == id ? &*it : nullptr;
  }
};

inline Batch agent_emit(const AgentConfig& config, std::span<const LogRecord> records, std::uint64_t epoch,
                        std::uint64_t seq_start) {
  Batch batch;
  batch.agent_id = config.agent_id;
  batch.epoch = epoch;
  batch.token = AgentToken{config.agent_id, epoch, compute_agent_token(config.key, config.agent_id, epoch)};
  batch.records.reserve(records.size());
  std::uint64_t seq = seq_start;
  for (const LogRecord& rec : records) {
    std::string line = format_clf(rec);
    if (has_line_break(line)) {
      throw Error("agent " + config.agent_id.str() + ": formatted record " + std::to_string(seq) +
                  " contains a line break");
    }
    batch.records.push_back(config.kind == AgentKind::Real
                                ? make_wheat_record(config.key, config.agent_id, seq, std::move(line))
                                : make_chaff_record(config.key, config.agent_id, seq, std::move(line)));
    ++seq;
  }
  return batch;
}

// Interleaves every batch with a seeded uniform shuffle. Batches are concatenated in
// agent-id order first, so the result does not depend on the order they arrive in.
inline Stream collect(std::span<const Batch> batches, std::uint64_t shuffle_seed) {
  Stream stream;
  if (batches.empty()) return stream;
  stream.epoch = batches.front().epoch;

  std::vector<const Batch*> sorted;
  std::set<AgentId> seen;
  for (const Batch& b : batches) {
    if (b.epoch != stream.epoch) {
      throw ConfigError("collect: mixed epochs " + std::to_string(stream.epoch) + " and " + std::to_string(b.epoch));
    }
    if (!seen.insert(b.agent_id).second) throw ConfigError("collect: duplicate agent id " + b.agent_id.str());
    sorted.push_back(&b);
  }
  std::sort(sorted.begin(), sorted.end(), [](const Batch* a, const Batch* b) { return a->agent_id < b->agent_id; });

  std::size_t total = 0;
  for (const Batch* b : sorted) total += b->records.size();
  stream.records.reserve(total);
  for (const Batch* b : sorted) {
    stream.manifest.push_back(ManifestEntry{b->agent_id, b->records.size(), b->token.token});
    stream.records.insert(stream.records.end(), b->records.begin(), b->records.end());
  }
  Rng rng(shuffle_seed);
  rng.shuffle(std::span(stream.records));
  return stream;
}

inline void serialize_stream(const Stream& stream, std::ostream& sink) {
  std::string out;
  out += "#CW1\t" + std::to_string(stream.epoch) + '\t' + std::to_string(stream.records.size()) + '\n';
  for (const ManifestEntry& e : stream.manifest) {
    out += "A\t" + e.agent_id.str() + '\t' + std::to_string(e.count) + '\t' + e.token.hex() + '\n';
  }
  sink << out;
  for (const TaggedRecord& r : stream.records) {
    out.clear();
    out += "R\t";
    out += r.tag.agent_id.str();
    out += '\t';
    out += std::to_string(r.tag.seq);
    out += '\t';
    out += r.tag.mac.hex();
    out += '\t';
    out += base64_encode(r.payload);
    out += '\n';
    sink << out;
  }
  sink.flush();
  if (!sink) throw IoError("stream: write failed");
}

inline std::string serialize_stream(const Stream& stream) {
  std::ostringstream out;
  serialize_stream(stream, out);
  return out.str();
}

// Checks the grammar only. Records are not verified here: the loader runs on the
// provider side and has no key.
inline Stream deserialize_stream(std::string_view body) {
  std::vector<std::string_view> lines = split_lines(body);
  if (lines.empty()) throw FormatError("stream: empty file, expected #CW1 header", 1);

  auto header = split(lines[0], '\t');
  if (header.size() != 3 || header[0] != "#CW1") throw FormatError("stream: bad magic or header field count", 1);
  auto epoch = parse_decimal(header[1]);
  auto count = parse_decimal(header[2]);
  if (!epoch || !count) throw FormatError("stream: header epoch and record count must be decimal", 1);

  Stream stream;
  stream.epoch = *epoch;
  std::size_t i = 1;
  for (; i < lines.size() && lines[i].substr(0, 2) == "A\t"; ++i) {
    auto f = split(lines[i], '\t');
    if (f.size() != 4) throw FormatError("stream: agent line needs 4 fields", i + 1);
    if (!AgentId::is_valid(f[1])) throw FormatError("stream: invalid agent id", i + 1);
    auto n = parse_decimal(f[2]);
    if (!n) throw FormatError("stream: agent record count must be decimal", i + 1);
    Mac token;
    if (!from_hex(f[3], token.mutable_bytes())) throw FormatError("stream: token is not 64 lowercase hex digits", i + 1);
    AgentId id{std::string(f[1])};
    if (!stream.manifest.empty() && !(stream.manifest.back().agent_id < id)) {
      throw FormatError("stream: agent lines must be strictly sorted by id", i + 1);
    }
    stream.manifest.push_back(ManifestEntry{std::move(id), *n, token});
  }

  std::uint64_t available = lines.size() - i;
  if (available != *count) {
    throw FormatError("stream: header declares " + std::to_string(*count) + " record lines, found " +
                          std::to_string(available),
                      lines.size() + 1);
  }
  std::map<AgentId, std::uint64_t> seen;
  stream.records.reserve(available);
  for (; i < lines.size(); ++i) {
    auto f = split(lines[i], '\t');
    if (f.size() != 5 || f[0] != "R") throw FormatError("stream: record line needs 5 fields starting with R", i + 1);
    if (!AgentId::is_valid(f[1])) throw FormatError("stream: invalid agent id", i + 1);
    TaggedRecord rec;
    rec.tag.agent_id = AgentId{std::string(f[1])};
    if (stream.find_agent(rec.tag.agent_id) == nullptr) {
      throw FormatError("stream: record for agent " + rec.tag.agent_id.str() + " missing from manifest", i + 1);
    }
    auto seq = parse_decimal(f[2]);
    if (!seq) throw FormatError("stream: seq must be decimal", i + 1);
    rec.tag.seq = *seq;
    if (!from_hex(f[3], rec.tag.mac.mutable_bytes())) throw FormatError("stream: MAC is not 64 lowercase hex digits", i + 1);
    auto payload = base64_decode(f[4]);
    if (!payload) throw FormatError("stream: payload is not valid base64", i + 1);
    if (has_line_break(*payload)) throw FormatError("stream: payload contains a line break", i + 1);
    rec.payload = std::move(*payload);
    ++seen[rec.tag.agent_id];
    stream.records.push_back(std::move(rec));
  }
  for (const ManifestEntry& e : stream.manifest) {
    std::uint64_t actual = seen.count(e.agent_id) ? seen[e.agent_id] : 0;
    if (actual != e.count) {
      throw FormatError("stream: manifest declares " + std::to_string(e.count) + " records for agent " +
                        e.agent_id.str() + ", found " + std::to_string(actual));
    }
  }
  return stream;
}

inline Stream deserialize_stream(std::istream& source) {
  std::string body{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  if (source.bad()) throw IoError("stream: read failed");
  return deserialize_stream(std::string_view(body));
}

// Fake-record count over real-record count, from CSC-side kinds. Zero when there is
// no real record.
struct ChaffBookkeeping {
  std::uint64_t real_records = 0;
  std::uint64_t fake_records = 0;
  double ratio() const {
    return real_records == 0 ? 0.0 : static_cast<double>(fake_records) / static_cast<double>(real_records);
  }
};

inline ChaffBookkeeping chaff_bookkeeping(const Stream& stream, const std::map<AgentId, AgentKind>& kinds) {
  ChaffBookkeeping b;
  for (const ManifestEntry& e : stream.manifest) {
    auto it = kinds.find(e.agent_id);
    if (it == kinds.end()) throw ConfigError("no kind configured for agent " + e.agent_id.str());
    (it->second == AgentKind::Real ? b.real_records : b.fake_records) += e.count;
  }
  return b;
}

}  // namespace chaffwin
