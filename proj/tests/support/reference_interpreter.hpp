#pragma once

// Straight-line evaluator used as an oracle for the engine: one pass over the stream,
// std::map groups, no shards or threads. Shares only the CLF parser and data types
// with the library.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chaffwin/mapreduce.hpp"

namespace chaffwin::testing {

inline std::optional<std::string> oracle_unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (s.size() - i < 3) return std::nullopt;
    std::string hex = s.substr(i + 1, 2);
    if (hex.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) return std::nullopt;
    out += static_cast<char>(std::stoi(hex, nullptr, 16));
    i += 2;
  }
  return out;
}

// Returns the term, "" when the record contributes nothing, nullopt on a bad escape.
inline std::optional<std::string> oracle_search_term(const LogRecord& rec) {
  if (rec.path != "/search") return std::string();
  std::string query = rec.query;
  std::size_t pos = 0;
  while (true) {
    std::size_t amp = query.find('&', pos);
    std::string param = query.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
    if (param.rfind("q=", 0) == 0) {
      auto term = oracle_unescape(param.substr(2));
      if (!term) return std::nullopt;
      std::transform(term->begin(), term->end(), term->begin(),
                     [](char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c + 32) : c; });
      return term;
    }
    if (amp == std::string::npos) return std::string();
    pos = amp + 1;
  }
}

inline std::string oracle_sessions(std::vector<std::int64_t> ts, std::int64_t gap) {
  std::sort(ts.begin(), ts.end());
  std::uint64_t sessions = 0, duration = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= ts.size(); ++i) {
    if (i == ts.size() || (i > start && ts[i] - ts[i - 1] >= gap)) {
      if (i > start) {
        ++sessions;
        duration += static_cast<std::uint64_t>(ts[i - 1] - ts[start]);
      }
      start = i;
    }
  }
  return "sessions=" + std::to_string(sessions) + ";total_duration=" + std::to_string(duration) +
         ";requests=" + std::to_string(ts.size());
}

inline JobOutput reference_run(const JobSpec& job, const Stream& stream) {
  std::map<AgentId, std::uint64_t> errors;
  std::map<AgentId, Mac> tokens;
  for (const auto& e : stream.manifest) {
    errors[e.agent_id] = 0;
    tokens[e.agent_id] = e.token;
  }
  std::map<std::pair<AgentId, std::string>, std::uint64_t> counts;
  std::map<std::pair<AgentId, std::string>, std::vector<std::int64_t>> times;
  for (const TaggedRecord& r : stream.records) {
    const AgentId& agent = r.tag.agent_id;
    auto rec = try_parse_clf(r.payload);
    if (!rec) {
      ++errors.at(agent);
      continue;
    }
    switch (job.kind) {
      case JobKind::PageHits: ++counts[{agent, rec->path}]; break;
      case JobKind::SessionStats: times[{agent, rec->client_ip}].push_back(rec->timestamp); break;
      case JobKind::TrendingTerms: {
        auto term = oracle_search_term(*rec);
        if (!term) {
          ++errors.at(agent);
        } else if (!term->empty()) {
          ++counts[{agent, *term}];
        }
        break;
      }
    }
  }

  JobOutput out;
  out.job = job;
  out.epoch = stream.epoch;
  for (const auto& [agent, n] : errors) out.parse_errors.push_back(AgentErrorCount{agent, n});
  if (job.kind == JobKind::SessionStats) {
    for (const auto& [k, ts] : times) out.rows.push_back(OutputRow{k.first, tokens.at(k.first), k.second, oracle_sessions(ts, job.session_gap)});
    return out;
  }
  std::map<AgentId, std::vector<std::pair<std::string, std::uint64_t>>> per_agent;
  for (const auto& [k, n] : counts) per_agent[k.first].emplace_back(k.second, n);
  for (auto& [agent, rows] : per_agent) {
    if (job.kind == JobKind::TrendingTerms) {
      // Rank by count then key, keep the first top_k, emit in key order.
      std::vector<std::pair<std::string, std::uint64_t>> ranked = rows;
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return std::make_pair(-static_cast<long long>(a.second), a.first) <
               std::make_pair(-static_cast<long long>(b.second), b.first);
      });
      if (ranked.size() > job.top_k) ranked.resize(job.top_k);
      std::sort(ranked.begin(), ranked.end());
      rows = ranked;
    }
    for (const auto& [key, n] : rows) out.rows.push_back(OutputRow{agent, tokens.at(agent), key, std::to_string(n)});
  }
  return out;
}

}  // namespace chaffwin::testing
