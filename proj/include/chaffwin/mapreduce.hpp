#pragma once

// Provider-side map/shuffle/reduce engine. Nothing in here accepts a SecretKey:
// the engine groups by (agent_id, logical key) and echoes each agent's manifest
// token into its result rows without checking it.
//
// Output file:
//   #CWO1 <job-name> <epoch> <row-count>
//   E <agent_id> <parse-error-count>                      one per manifest agent, sorted
//   O <agent_id> <token-hex64> <base64(logical_key)> <value>   sorted by (agent_id, logical_key)

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chaffwin/clf.hpp"
#include "chaffwin/encoding.hpp"
#include "chaffwin/errors.hpp"
#include "chaffwin/pipeline.hpp"
#include "chaffwin/tagging.hpp"

namespace chaffwin {

enum class JobKind { PageHits, SessionStats, TrendingTerms };

struct JobSpec {
  JobKind kind = JobKind::PageHits;
  std::int64_t session_gap = 1800;  // session_stats
  std::uint32_t top_k = 10;         // trending_terms

  bool operator==(const JobSpec&) const = default;

  std::string_view name() const {
    switch (kind) {
      case JobKind::PageHits: return "page_hits";
      case JobKind::SessionStats: return "session_stats";
      case JobKind::TrendingTerms: return "trending_terms";
    }
    return "page_hits";
  }

  static std::optional<JobKind> parse_name(std::string_view name) {
    if (name == "page_hits") return JobKind::PageHits;
    if (name == "session_stats") return JobKind::SessionStats;
    if (name == "trending_terms") return JobKind::TrendingTerms;
    return std::nullopt;
  }

  void validate() const {
    if (session_gap <= 0) throw ConfigError("session_stats: gap must be positive");
    if (top_k == 0) throw ConfigError("trending_terms: top_k must be at least 1");
  }
};

struct OutputRow {
  AgentId agent_id;
  Mac token;
  std::string logical_key;
  std::string value;

  bool operator==(const OutputRow&) const = default;
};

struct AgentErrorCount {
  AgentId agent_id;
  std::uint64_t parse_errors = 0;

  bool operator==(const AgentErrorCount&) const = default;
};

struct JobOutput {
  JobSpec job;
  std::uint64_t epoch = 0;
  std::vector<OutputRow> rows;
  std::vector<AgentErrorCount> parse_errors;  // every manifest agent, sorted

  bool operator==(const JobOutput&) const = default;
};

// Per-agent record accounting, not part of the output file.
struct RunStats {
  struct Agent {
    AgentId agent_id;
    std::uint64_t mapped = 0;
    std::uint64_t parse_errors = 0;
  };
  std::vector<Agent> agents;
};

// ---------------------------------------------------------------------------
// Jobs

// map() appends (logical_key, value) pairs and returns false when the record must be
// skipped and counted as a parse error. reduce() sees the group's values ordered by
// originating seq.
template <class J>
concept MapReduceJob = requires(const J& job, const LogRecord& rec,
                                std::vector<std::pair<std::string, typename J::Value>>& out,
                                std::span<const typename J::Value> values, const typename J::Reduced& reduced) {
  { job.map(rec, out) } -> std::same_as<bool>;
  { job.reduce(values) } -> std::same_as<typename J::Reduced>;
  { job.render(reduced) } -> std::convertible_to<std::string>;
};

struct SessionSummary {
  std::uint64_t sessions = 0;
  std::uint64_t total_duration = 0;
  std::uint64_t requests = 0;

  bool operator==(const SessionSummary&) const = default;

  std::string str() const {
    return "sessions=" + std::to_string(sessions) + ";total_duration=" + std::to_string(total_duration) +
           ";requests=" + std::to_string(requests);
  }

  static std::optional<SessionSummary> parse(std::string_view text) {
    auto fields = split(text, ';');
    if (fields.size() != 3) return std::nullopt;
    constexpr std::string_view kNames[] = {"sessions=", "total_duration=", "requests="};
    std::uint64_t values[3];
    for (int i = 0; i < 3; ++i) {
      if (fields[i].substr(0, kNames[i].size()) != kNames[i]) return std::nullopt;
      auto v = parse_decimal(fields[i].substr(kNames[i].size()));
      if (!v) return std::nullopt;
      values[i] = *v;
    }
    return SessionSummary{values[0], values[1], values[2]};
  }
};

// Splits sorted timestamps into maximal runs whose successive gaps stay below `gap`.
inline SessionSummary sessionize(std::span<const std::int64_t> sorted_timestamps, std::int64_t gap) {
  SessionSummary s;
  s.requests = sorted_timestamps.size();
  if (sorted_timestamps.empty()) return s;
  std::int64_t first = sorted_timestamps.front();
  for (std::size_t i = 1; i < sorted_timestamps.size(); ++i) {
    if (sorted_timestamps[i] - sorted_timestamps[i - 1] >= gap) {
      s.total_duration += static_cast<std::uint64_t>(sorted_timestamps[i - 1] - first);
      ++s.sessions;
      first = sorted_timestamps[i];
    }
  }
  s.total_duration += static_cast<std::uint64_t>(sorted_timestamps.back() - first);
  ++s.sessions;
  return s;
}

// Percent-decodes `text`; nullopt on a truncated or non-hex escape.
inline std::optional<std::string> percent_decode(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '%') {
      out.push_back(text[i]);
      continue;
    }
    if (i + 2 >= text.size()) return std::nullopt;
    int hi = detail::hex_value(text[i + 1], false);
    int lo = detail::hex_value(text[i + 2], false);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<char>((hi << 4) | lo));
    i += 2;
  }
  return out;
}

// First "q" parameter of a query string. nullopt when absent.
inline std::optional<std::string_view> first_q_parameter(std::string_view query) {
  for (std::string_view param : split(query, '&')) {
    if (param.substr(0, 2) == "q=") return param.substr(2);
  }
  return std::nullopt;
}

struct PageHitsJob {
  using Value = std::uint64_t;
  using Reduced = std::uint64_t;

  bool map(const LogRecord& rec, std::vector<std::pair<std::string, Value>>& out) const {
    out.emplace_back(rec.path, 1);
    return true;
  }
  Reduced reduce(std::span<const Value> values) const {
    Reduced total = 0;
    for (Value v : values) total += v;
    return total;
  }
  std::string render(Reduced count) const { return std::to_string(count); }
};

struct SessionStatsJob {
  using Value = std::int64_t;
  using Reduced = SessionSummary;

  std::int64_t gap = 1800;

  bool map(const LogRecord& rec, std::vector<std::pair<std::string, Value>>& out) const {
    out.emplace_back(rec.client_ip, rec.timestamp);
    return true;
  }
  Reduced reduce(std::span<const Value> values) const {
    std::vector<std::int64_t> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return sessionize(sorted, gap);
  }
  std::string render(const Reduced& s) const { return s.str(); }
};

struct TrendingTermsJob {
  using Value = std::uint64_t;
  using Reduced = std::uint64_t;

  std::uint32_t top_k = 10;

  bool map(const LogRecord& rec, std::vector<std::pair<std::string, Value>>& out) const {
    if (rec.path != "/search") return true;
    auto raw = first_q_parameter(rec.query);
    if (!raw) return true;
    auto term = percent_decode(*raw);
    if (!term) return false;
    for (char& c : *term) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    if (!term->empty()) out.emplace_back(std::move(*term), 1);
    return true;
  }
  Reduced reduce(std::span<const Value> values) const {
    Reduced total = 0;
    for (Value v : values) total += v;
    return total;
  }
  std::string render(Reduced count) const { return std::to_string(count); }

  // Keeps the agent's top_k keys by (count desc, key asc); input and output sorted by key.
  void finalize(std::vector<std::pair<std::string, Reduced>>& rows) const {
    if (rows.size() <= top_k) return;
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    rows.resize(top_k);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
};

// ---------------------------------------------------------------------------
// Engine

template <MapReduceJob Job>
class MapReduceEngine {
 public:
  using Value = typename Job::Value;
  using Reduced = typename Job::Reduced;

  MapReduceEngine(Job job, std::size_t workers) : job_(std::move(job)), workers_(std::max<std::size_t>(1, workers)) {}

  JobOutput run(const JobSpec& spec, const Stream& stream, RunStats* stats = nullptr) const {
    const std::size_t agents = stream.manifest.size();
    std::unordered_map<std::string_view, std::uint32_t> agent_index;
    for (std::uint32_t a = 0; a < agents; ++a) agent_index.emplace(stream.manifest[a].agent_id.str(), a);

    // Map: contiguous shards of the record sequence, each sorted locally.
    std::vector<Shard> shards(std::min(workers_, std::max<std::size_t>(1, stream.records.size())));
    for (Shard& s : shards) {
      s.mapped.assign(agents, 0);
      s.errors.assign(agents, 0);
    }
    parallel_for(shards.size(), [&](std::size_t w) {
      std::size_t begin = stream.records.size() * w / shards.size();
      std::size_t end = stream.records.size() * (w + 1) / shards.size();
      map_shard(stream, agent_index, begin, end, shards[w]);
    });
    for (Shard& s : shards) {
      if (s.unknown_agent) throw FormatError("record for agent " + *s.unknown_agent + " missing from manifest");
    }

    // Shuffle: merge the sorted shards into one ordered run.
    std::vector<Pair> pairs = std::move(shards[0].pairs);
    for (std::size_t w = 1; w < shards.size(); ++w) {
      std::vector<Pair> merged;
      merged.reserve(pairs.size() + shards[w].pairs.size());
      std::merge(std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()),
                 std::make_move_iterator(shards[w].pairs.begin()), std::make_move_iterator(shards[w].pairs.end()),
                 std::back_inserter(merged), pair_less);
      pairs = std::move(merged);
    }

    std::vector<std::size_t> group_starts;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (i == 0 || pairs[i].agent != pairs[i - 1].agent || pairs[i].key != pairs[i - 1].key) group_starts.push_back(i);
    }
    group_starts.push_back(pairs.size());
    const std::size_t groups = group_starts.size() - 1;

    // Reduce: contiguous ranges of groups per worker.
    std::vector<std::optional<Reduced>> reduced(groups);
    std::size_t reduce_workers = std::min(workers_, std::max<std::size_t>(1, groups));
    parallel_for(reduce_workers, [&](std::size_t w) {
      std::vector<Value> values;
      for (std::size_t g = groups * w / reduce_workers; g < groups * (w + 1) / reduce_workers; ++g) {
        values.clear();
        for (std::size_t i = group_starts[g]; i < group_starts[g + 1]; ++i) values.push_back(pairs[i].value);
        reduced[g] = job_.reduce(std::span<const Value>(values));
      }
    });

    JobOutput out;
    out.job = spec;
    out.epoch = stream.epoch;
    for (std::size_t g = 0; g < groups;) {
      std::uint32_t agent = pairs[group_starts[g]].agent;
      std::vector<std::pair<std::string, Reduced>> agent_rows;
      for (; g < groups && pairs[group_starts[g]].agent == agent; ++g) {
        agent_rows.emplace_back(pairs[group_starts[g]].key, std::move(*reduced[g]));
      }
      if constexpr (requires { job_.finalize(agent_rows); }) job_.finalize(agent_rows);
      const ManifestEntry& entry = stream.manifest[agent];
      for (auto& [key, value] : agent_rows) {
        out.rows.push_back(OutputRow{entry.agent_id, entry.token, std::move(key), job_.render(value)});
      }
    }

    if (stats) stats->agents.clear();
    for (std::size_t a = 0; a < agents; ++a) {
      std::uint64_t errors = 0, mapped = 0;
      for (const Shard& s : shards) {
        errors += s.errors[a];
        mapped += s.mapped[a];
      }
      out.parse_errors.push_back(AgentErrorCount{stream.manifest[a].agent_id, errors});
      if (stats) stats->agents.push_back(RunStats::Agent{stream.manifest[a].agent_id, mapped, errors});
    }
    return out;
  }

 private:
  struct Pair {
    std::uint32_t agent;  // manifest index; manifest order is agent-id order
    std::string key;
    std::uint64_t seq;
    std::size_t position;  // index in the stream, breaks ties between duplicate seqs
    Value value;
  };

  struct Shard {
    std::vector<Pair> pairs;
    std::vector<std::uint64_t> mapped;
    std::vector<std::uint64_t> errors;
    std::optional<std::string> unknown_agent;
  };

  static bool pair_less(const Pair& a, const Pair& b) {
    if (a.agent != b.agent) return a.agent < b.agent;
    if (int c = a.key.compare(b.key); c != 0) return c < 0;
    if (a.seq != b.seq) return a.seq < b.seq;
    return a.position < b.position;
  }

  void map_shard(const Stream& stream, const std::unordered_map<std::string_view, std::uint32_t>& agent_index,
                 std::size_t begin, std::size_t end, Shard& shard) const {
    std::vector<std::pair<std::string, Value>> emitted;
    for (std::size_t i = begin; i < end; ++i) {
      const TaggedRecord& rec = stream.records[i];
      auto it = agent_index.find(rec.tag.agent_id.str());
      if (it == agent_index.end()) {
        shard.unknown_agent = rec.tag.agent_id.str();
        return;
      }
      std::uint32_t agent = it->second;
      auto parsed = try_parse_clf(rec.payload);
      emitted.clear();
      if (!parsed || !job_.map(*parsed, emitted)) {
        ++shard.errors[agent];
        continue;
      }
      ++shard.mapped[agent];
      for (auto& [key, value] : emitted) {
        shard.pairs.push_back(Pair{agent, std::move(key), rec.tag.seq, i, std::move(value)});
      }
    }
    std::sort(shard.pairs.begin(), shard.pairs.end(), pair_less);
  }

  template <class Fn>
  static void parallel_for(std::size_t n, Fn&& fn) {
    if (n <= 1) {
      if (n == 1) fn(0);
      return;
    }
    std::vector<std::jthread> threads;
    threads.reserve(n - 1);
    for (std::size_t w = 1; w < n; ++w) threads.emplace_back([&fn, w] { fn(w); });
    fn(0);
  }

  Job job_;
  std::size_t workers_;
};

inline JobOutput run_job(const JobSpec& job, const Stream& stream, std::size_t workers, RunStats* stats = nullptr) {
  if (workers == 0) throw ConfigError("workers must be at least 1");
  job.validate();
  switch (job.kind) {
    case JobKind::PageHits:
      return MapReduceEngine<PageHitsJob>(PageHitsJob{}, workers).run(job, stream, stats);
    case JobKind::SessionStats:
      return MapReduceEngine<SessionStatsJob>(SessionStatsJob{job.session_gap}, workers).run(job, stream, stats);
    case JobKind::TrendingTerms:
      return MapReduceEngine<TrendingTermsJob>(TrendingTermsJob{job.top_k}, workers).run(job, stream, stats);
  }
  throw ConfigError("unknown job");
}

// ---------------------------------------------------------------------------
// Output file

inline void serialize_output(const JobOutput& out, std::ostream& sink) {
  std::string text = "#CWO1\t" + std::string(out.job.name()) + '\t' + std::to_string(out.epoch) + '\t' +
                     std::to_string(out.rows.size()) + '\n';
  for (const AgentErrorCount& e : out.parse_errors) {
    text += "E\t" + e.agent_id.str() + '\t' + std::to_string(e.parse_errors) + '\n';
  }
  for (const OutputRow& r : out.rows) {
    text += "O\t" + r.agent_id.str() + '\t' + r.token.hex() + '\t' + base64_encode(r.logical_key) + '\t' + r.value +
            '\n';
  }
  sink << text;
  sink.flush();
  if (!sink) throw IoError("output: write failed");
}

inline std::string serialize_output(const JobOutput& out) {
  std::ostringstream s;
  serialize_output(out, s);
  return s.str();
}

inline bool valid_value_field(std::string_view value) {
  if (value.empty()) return false;
  for (char c : value) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u == 0x7f) return false;
  }
  return true;
}

// The file carries only the job name; `params` supplies gap and top_k, which stay
// on the consumer side.
inline JobOutput deserialize_output(std::string_view body, const JobSpec& params = {}) {
  std::vector<std::string_view> lines = split_lines(body);
  if (lines.empty()) throw FormatError("output: empty file, expected #CWO1 header", 1);
  auto header = split(lines[0], '\t');
  if (header.size() != 4 || header[0] != "#CWO1") throw FormatError("output: bad magic or header field count", 1);
  auto kind = JobSpec::parse_name(header[1]);
  if (!kind) throw FormatError("output: unknown job '" + std::string(header[1]) + "'", 1);
  auto epoch = parse_decimal(header[2]);
  auto count = parse_decimal(header[3]);
  if (!epoch || !count) throw FormatError("output: header epoch and row count must be decimal", 1);

  JobOutput out;
  out.job = params;
  out.job.kind = *kind;
  out.epoch = *epoch;
  std::size_t i = 1;
  for (; i < lines.size() && lines[i].substr(0, 2) == "E\t"; ++i) {
    auto f = split(lines[i], '\t');
    if (f.size() != 3 || !AgentId::is_valid(f[1])) throw FormatError("output: bad error-count line", i + 1);
    auto n = parse_decimal(f[2]);
    if (!n) throw FormatError("output: parse-error count must be decimal", i + 1);
    AgentId id{std::string(f[1])};
    if (!out.parse_errors.empty() && !(out.parse_errors.back().agent_id < id)) {
      throw FormatError("output: error-count lines must be strictly sorted by agent id", i + 1);
    }
    out.parse_errors.push_back(AgentErrorCount{std::move(id), *n});
  }
  if (lines.size() - i != *count) {
    throw FormatError("output: header declares " + std::to_string(*count) + " rows, found " +
                          std::to_string(lines.size() - i),
                      lines.size() + 1);
  }
  for (; i < lines.size(); ++i) {
    auto f = split(lines[i], '\t');
    if (f.size() != 5 || f[0] != "O") throw FormatError("output: row needs 5 fields starting with O", i + 1);
    if (!AgentId::is_valid(f[1])) throw FormatError("output: invalid agent id", i + 1);
    OutputRow row;
    row.agent_id = AgentId{std::string(f[1])};
    auto known = std::lower_bound(out.parse_errors.begin(), out.parse_errors.end(), row.agent_id,
                                  [](const AgentErrorCount& e, const AgentId& id) { return e.agent_id < id; });
    if (known == out.parse_errors.end() || known->agent_id != row.agent_id) throw FormatError("output: row agent " + row.agent_id.str() + " has no error-count line", i + 1);
    if (!from_hex(f[2], row.token.mutable_bytes())) throw FormatError("output: token is not 64 lowercase hex digits", i + 1);
    auto key = base64_decode(f[3]);
    if (!key) throw FormatError("output: logical key is not valid base64", i + 1);
    row.logical_key = std::move(*key);
    if (!valid_value_field(f[4])) throw FormatError("output: empty or non-printable value", i + 1);
    row.value = std::string(f[4]);
    if (!out.rows.empty()) {
      const OutputRow& prev = out.rows.back();
      if (std::tie(prev.agent_id, prev.logical_key) == std::tie(row.agent_id, row.logical_key)) {
        throw FormatError("output: duplicate row for (" + row.agent_id.str() + ", key)", i + 1);
      }
      if (!(std::tie(prev.agent_id, prev.logical_key) < std::tie(row.agent_id, row.logical_key))) {
        throw FormatError("output: rows must be sorted by (agent id, logical key)", i + 1);
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline JobOutput deserialize_output(std::istream& source, const JobSpec& params = {}) {
  std::string body{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  if (source.bad()) throw IoError("output: read failed");
  return deserialize_output(std::string_view(body), params);
}

}  // namespace chaffwin
