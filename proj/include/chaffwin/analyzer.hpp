#pragma once

// Consumer-side winnowing of provider results. An agent's rows survive only if the
// token echoed with them equals compute_agent_token(shared_key, agent, epoch); the
// surviving rows are merged per logical key.
//
// Clean file:
//   #CWC1 <job> <row-count>
//   C <base64(logical_key)> <value>          sorted by logical key

#include <algorithm>
#include <charconv>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chaffwin/encoding.hpp"
#include "chaffwin/errors.hpp"
#include "chaffwin/mapreduce.hpp"
#include "chaffwin/pipeline.hpp"
#include "chaffwin/tagging.hpp"

namespace chaffwin {

struct CleanRow {
  std::string logical_key;
  std::string value;

  bool operator==(const CleanRow&) const = default;
};

struct CleanOutput {
  JobSpec job;
  std::vector<CleanRow> rows;  // sorted by logical_key
  std::vector<AgentId> verified_agent_ids;
  std::vector<AgentId> dropped_agent_ids;
  std::vector<std::string> integrity_flags;

  bool operator==(const CleanOutput&) const = default;
};

namespace detail {

inline std::uint64_t parse_count_value(const std::string& value) {
  auto v = parse_decimal(value);
  if (!v) throw FormatError("expected a decimal count, got '" + value + "'");
  return *v;
}

// Merges verified rows of one logical key across agents. Distinct real agents see
// disjoint traffic, so every field is additive.
inline std::string merge_values(const JobSpec& job, const std::vector<const std::string*>& values) {
  if (job.kind == JobKind::SessionStats) {
    SessionSummary total;
    for (const std::string* v : values) {
      auto s = SessionSummary::parse(*v);
      if (!s) throw FormatError("malformed session_stats value '" + *v + "'");
      total.sessions += s->sessions;
      total.total_duration += s->total_duration;
      total.requests += s->requests;
    }
    return total.str();
  }
  std::uint64_t total = 0;
  for (const std::string* v : values) total += parse_count_value(*v);
  return std::to_string(total);
}

}  // namespace detail

inline CleanOutput winnow_results(const SecretKey& shared_key, const JobOutput& output) {
  CleanOutput clean;
  clean.job = output.job;

  std::map<std::string, std::vector<const std::string*>> merged;
  for (std::size_t i = 0; i < output.rows.size();) {
    const AgentId& agent = output.rows[i].agent_id;
    Mac expected = compute_agent_token(shared_key, agent, output.epoch);
    std::size_t end = i;
    std::size_t matches = 0;
    std::set<std::string_view> keys;
    for (; end < output.rows.size() && output.rows[end].agent_id == agent; ++end) {
      if (!keys.insert(output.rows[end].logical_key).second) {
        throw FormatError("duplicate result row for agent " + agent.str());
      }
      if (constant_time_equal(expected, output.rows[end].token)) ++matches;
    }
    std::size_t rows = end - i;
    if (matches == rows) {
      clean.verified_agent_ids.push_back(agent);
      for (std::size_t r = i; r < end; ++r) merged[output.rows[r].logical_key].push_back(&output.rows[r].value);
    } else {
      clean.dropped_agent_ids.push_back(agent);
      if (matches != 0) {
        clean.integrity_flags.push_back("inconsistent-tokens:" + agent.str() + ":" + std::to_string(matches) + "/" +
                                        std::to_string(rows));
      }
    }
    i = end;
  }
  std::sort(clean.verified_agent_ids.begin(), clean.verified_agent_ids.end());
  std::sort(clean.dropped_agent_ids.begin(), clean.dropped_agent_ids.end());
  {
    // An agent showing up in two separate groups means the rows were not sorted.
    std::vector<AgentId> all = clean.verified_agent_ids;
    all.insert(all.end(), clean.dropped_agent_ids.begin(), clean.dropped_agent_ids.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
      throw FormatError("result rows are not grouped by agent id");
    }
  }

  for (auto& [key, values] : merged) clean.rows.push_back(CleanRow{key, detail::merge_values(output.job, values)});

  if (output.job.kind == JobKind::TrendingTerms && clean.rows.size() > output.job.top_k) {
    std::vector<std::pair<std::uint64_t, std::size_t>> ranked;
    for (std::size_t r = 0; r < clean.rows.size(); ++r) {
      ranked.emplace_back(detail::parse_count_value(clean.rows[r].value), r);
    }
    // rows are key-sorted, so index order is the bytewise tie-break
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    ranked.resize(output.job.top_k);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    std::vector<CleanRow> kept;
    for (const auto& [count, r] : ranked) kept.push_back(std::move(clean.rows[r]));
    clean.rows = std::move(kept);
  }
  return clean;
}

inline void serialize_clean(const CleanOutput& clean, std::ostream& sink) {
  std::string text = "#CWC1\t" + std::string(clean.job.name()) + '\t' + std::to_string(clean.rows.size()) + '\n';
  for (const CleanRow& r : clean.rows) text += "C\t" + base64_encode(r.logical_key) + '\t' + r.value + '\n';
  sink << text;
  sink.flush();
  if (!sink) throw IoError("clean output: write failed");
}

inline std::string serialize_clean(const CleanOutput& clean) {
  std::ostringstream s;
  serialize_clean(clean, s);
  return s.str();
}

// Restores the job and rows; agent lists and flags are not part of the file.
inline CleanOutput deserialize_clean(std::string_view body, const JobSpec& params = {}) {
  std::vector<std::string_view> lines = split_lines(body);
  if (lines.empty()) throw FormatError("clean output: empty file, expected #CWC1 header", 1);
  auto header = split(lines[0], '\t');
  if (header.size() != 3 || header[0] != "#CWC1") throw FormatError("clean output: bad magic or header field count", 1);
  auto kind = JobSpec::parse_name(header[1]);
  if (!kind) throw FormatError("clean output: unknown job", 1);
  auto count = parse_decimal(header[2]);
  if (!count) throw FormatError("clean output: row count must be decimal", 1);
  if (lines.size() - 1 != *count) {
    throw FormatError("clean output: header declares " + std::to_string(*count) + " rows, found " +
                          std::to_string(lines.size() - 1),
                      lines.size() + 1);
  }
  CleanOutput clean;
  clean.job = params;
  clean.job.kind = *kind;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = split(lines[i], '\t');
    if (f.size() != 3 || f[0] != "C") throw FormatError("clean output: row needs 3 fields starting with C", i + 1);
    auto key = base64_decode(f[1]);
    if (!key) throw FormatError("clean output: logical key is not valid base64", i + 1);
    if (!valid_value_field(f[2])) throw FormatError("clean output: empty or non-printable value", i + 1);
    if (!clean.rows.empty() && !(clean.rows.back().logical_key < *key)) {
      throw FormatError("clean output: rows must be strictly sorted by logical key", i + 1);
    }
    clean.rows.push_back(CleanRow{std::move(*key), std::string(f[2])});
  }
  return clean;
}

inline CleanOutput deserialize_clean(std::istream& source, const JobSpec& params = {}) {
  std::string body{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  if (source.bad()) throw IoError("clean output: read failed");
  return deserialize_clean(std::string_view(body), params);
}

// ---------------------------------------------------------------------------
// Metrics

// What the consumer knows about its own agents.
struct ManifestInfo {
  std::map<AgentId, AgentKind> kinds;
  std::map<AgentId, std::uint64_t> record_counts;

  static ManifestInfo from_stream(const Stream& stream, std::map<AgentId, AgentKind> kinds) {
    ManifestInfo info;
    info.kinds = std::move(kinds);
    for (const ManifestEntry& e : stream.manifest) info.record_counts[e.agent_id] = e.count;
    return info;
  }
};

struct MetricsReport {
  std::string job;
  std::uint64_t real_records = 0;
  std::uint64_t fake_records = 0;
  double chaff_ratio = 0.0;
  std::uint64_t records_processed = 0;
  std::uint64_t rows_in = 0;
  std::uint64_t rows_kept = 0;
  std::uint64_t rows_dropped = 0;
  std::vector<AgentId> verified_agent_ids;
  std::vector<AgentId> dropped_agent_ids;
  std::vector<AgentErrorCount> parse_errors;
  std::vector<std::string> integrity_flags;

  std::string to_text() const {
    auto join = [](const std::vector<AgentId>& ids) {
      std::string s;
      for (const AgentId& id : ids) s += (s.empty() ? "" : ",") + id.str();
      return s;
    };
    char ratio[64];
    auto res = std::to_chars(ratio, ratio + sizeof ratio, chaff_ratio);
    std::string text;
    text += "job=" + job + '\n';
    text += "real_records=" + std::to_string(real_records) + '\n';
    text += "fake_records=" + std::to_string(fake_records) + '\n';
    text += "chaff_ratio=" + std::string(ratio, res.ptr) + '\n';
    text += "records_processed=" + std::to_string(records_processed) + '\n';
    text += "rows_in=" + std::to_string(rows_in) + '\n';
    text += "rows_kept=" + std::to_string(rows_kept) + '\n';
    text += "rows_dropped=" + std::to_string(rows_dropped) + '\n';
    text += "verified_agents=" + join(verified_agent_ids) + '\n';
    text += "dropped_agents=" + join(dropped_agent_ids) + '\n';
    for (const AgentErrorCount& e : parse_errors) {
      text += "parse_errors." + e.agent_id.str() + '=' + std::to_string(e.parse_errors) + '\n';
    }
    text += "integrity_flag_count=" + std::to_string(integrity_flags.size()) + '\n';
    for (const std::string& f : integrity_flags) text += "integrity_flag=" + f + '\n';
    return text;
  }
};

inline MetricsReport report_metrics(const CleanOutput& clean, const JobOutput& output, const ManifestInfo& info) {
  MetricsReport m;
  m.job = std::string(clean.job.name());
  for (const auto& [id, count] : info.record_counts) {
    auto kind = info.kinds.find(id);
    if (kind == info.kinds.end()) {
      m.integrity_flags.push_back("unknown-agent:" + id.str());
      continue;
    }
    (kind->second == AgentKind::Real ? m.real_records : m.fake_records) += count;
  }
  m.records_processed = m.real_records + m.fake_records;
  m.chaff_ratio = m.real_records == 0 ? 0.0 : static_cast<double>(m.fake_records) / static_cast<double>(m.real_records);

  std::set<AgentId> verified(clean.verified_agent_ids.begin(), clean.verified_agent_ids.end());
  m.rows_in = output.rows.size();
  for (const OutputRow& r : output.rows) (verified.count(r.agent_id) ? m.rows_kept : m.rows_dropped) += 1;
  m.verified_agent_ids = clean.verified_agent_ids;
  m.dropped_agent_ids = clean.dropped_agent_ids;
  m.parse_errors = output.parse_errors;
  m.integrity_flags.insert(m.integrity_flags.end(), clean.integrity_flags.begin(), clean.integrity_flags.end());

  auto kind_of = [&](const AgentId& id) -> std::optional<AgentKind> {
    auto it = info.kinds.find(id);
    return it == info.kinds.end() ? std::nullopt : std::optional(it->second);
  };
  for (const AgentId& id : clean.dropped_agent_ids) {
    if (kind_of(id) == AgentKind::Real) m.integrity_flags.push_back("real-agent-dropped:" + id.str());
  }
  for (const AgentId& id : clean.verified_agent_ids) {
    if (kind_of(id) == AgentKind::Fake) m.integrity_flags.push_back("fake-agent-verified:" + id.str());
  }
  for (const AgentErrorCount& e : output.parse_errors) {
    if (e.parse_errors > 0 && verified.count(e.agent_id)) {
      m.integrity_flags.push_back("verified-agent-parse-errors:" + e.agent_id.str() + "=" +
                                  std::to_string(e.parse_errors));
    }
  }
  return m;
}

}  // namespace chaffwin
