#pragma once

// Pipeline configuration file: flat `key = value` lines, `[traffic]`,
// `[job.<name>]` and `[agent.<id>]` sections, `#` comments.
//
//   epoch = 1
//   shared_key = <64 hex digits>          (or shared_key_file = <path>)
//   shuffle_seed = 7
//   [traffic]
//   page = /index.html 18                 (repeatable: path weight)
//   term = running shoes 12               (repeatable: term weight)
//   status = 200 86                       (repeatable: code weight)
//   [job.trending_terms]
//   top_k = 10
//   [agent.ag-1c2d3e4f]
//   kind = fake
//   seed = 99
//   records = 400
//   key = <64 hex digits>                 (fake agents; derived from seed when omitted)

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chaffwin/errors.hpp"
#include "chaffwin/mapreduce.hpp"
#include "chaffwin/pipeline.hpp"
#include "chaffwin/tagging.hpp"
#include "chaffwin/traffic.hpp"
#include "chaffwin/workflow.hpp"

namespace chaffwin {

struct PipelineConfig {
  std::uint64_t epoch = 1;
  SecretKey shared_key;
  std::string shared_key_file;  // when set, shared_key was loaded from this path
  std::uint64_t shuffle_seed = 0;
  TrafficModel traffic = TrafficModel::default_model();
  std::vector<JobSpec> jobs;
  std::vector<AgentPlan> agents;

  bool operator==(const PipelineConfig&) const = default;

  void validate() const {
    traffic.validate();
    if (jobs.empty()) throw ConfigError("config: at least one [job.*] section is required");
    std::set<JobKind> seen_jobs;
    for (const JobSpec& j : jobs) {
      j.validate();
      if (!seen_jobs.insert(j.kind).second) throw ConfigError("config: duplicate [job." + std::string(j.name()) + "]");
    }
    std::set<AgentId> ids;
    bool has_real = false;
    for (const AgentPlan& p : agents) {
      const std::string section = "agent." + p.agent.agent_id.str();
      if (!ids.insert(p.agent.agent_id).second) throw ConfigError("config: duplicate agent id " + p.agent.agent_id.str());
      if (p.agent.kind == AgentKind::Real) {
        has_real = true;
        if (p.agent.key != shared_key) throw ConfigError(section + ".key: real agents must use the shared key");
      } else if (p.agent.key == shared_key) {
        throw ConfigError(section + ".key: a fake agent must not hold the shared key");
      }
    }
    if (!has_real) throw ConfigError("config: at least one real agent is required");
  }

  std::vector<AgentPlan> real_agents() const { return real_only(agents); }
};

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline SecretKey load_key_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open key file " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  try {
    return SecretKey::from_hex(text);
  } catch (const FormatError&) {
    throw ConfigError("key file " + path.string() + ": expected 64 hex digits");
  }
}

inline SecretKey derived_fake_key(std::uint64_t agent_seed) {
  return SecretKey::from_seed(derive_seed(agent_seed, "fake-key"));
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::uint64_t config_u64(std::string_view value, const std::string& field) {
  auto v = parse_decimal(value);
  if (!v) throw ConfigError(field + ": expected a non-negative integer, got '" + std::string(value) + "'");
  return *v;
}

inline double config_double(std::string_view value, const std::string& field) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(field + ": expected a number, got '" + std::string(value) + "'");
  }
  return v;
}

inline SecretKey config_key(std::string_view value, const std::string& field) {
  try {
    return SecretKey::from_hex(value);
  } catch (const FormatError&) {
    throw ConfigError(field + ": expected 64 hex digits");
  }
}

// "<text> <weight>" with the weight as the last space-separated token.
inline std::pair<std::string, double> weighted_entry(std::string_view value, const std::string& field) {
  std::size_t space = value.rfind(' ');
  if (space == std::string_view::npos) throw ConfigError(field + ": expected '<value> <weight>'");
  return {std::string(trim(value.substr(0, space))), config_double(trim(value.substr(space + 1)), field)};
}

}  // namespace detail

inline PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  PipelineConfig cfg;
  cfg.agents.clear();
  enum class Section { Top, Traffic, Job, Agent } section = Section::Top;
  std::string section_name;
  bool pages_set = false, terms_set = false, statuses_set = false, key_set = false;
  std::set<std::string> seen_sections;
  struct AgentDraft {
    std::optional<AgentKind> kind;
    std::optional<std::uint64_t> seed, records;
    std::optional<SecretKey> key;
  };
  std::vector<AgentDraft> drafts;

  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = "config line " + std::to_string(line_no);

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section_name = std::string(line.substr(1, line.size() - 2));
      if (!seen_sections.insert(section_name).second) {
        throw ConfigError(where + ": duplicate section [" + section_name + "]" +
                          (section_name.rfind("agent.", 0) == 0 ? " (duplicate agent id)" : ""));
      }
      if (section_name == "traffic") {
        section = Section::Traffic;
      } else if (section_name.rfind("job.", 0) == 0) {
        auto kind = JobSpec::parse_name(section_name.substr(4));
        if (!kind) throw ConfigError(where + ": unknown job '" + section_name.substr(4) + "'");
        section = Section::Job;
        cfg.jobs.push_back(JobSpec{*kind});
      } else if (section_name.rfind("agent.", 0) == 0) {
        std::string id = section_name.substr(6);
        if (!AgentId::is_valid(id)) throw ConfigError(where + ": invalid agent id '" + id + "'");
        section = Section::Agent;
        cfg.agents.push_back(AgentPlan{AgentConfig{AgentId(id), {}, AgentKind::Real, 0}, 0});
        drafts.emplace_back();
      } else {
        throw ConfigError(where + ": unknown section [" + section_name + "]");
      }
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key(detail::trim(line.substr(0, eq)));
    std::string_view value = detail::trim(line.substr(eq + 1));
    const std::string field = (section == Section::Top ? std::string() : section_name + ".") + key;

    switch (section) {
      case Section::Top:
        if (key == "epoch") {
          cfg.epoch = detail::config_u64(value, field);
        } else if (key == "shuffle_seed") {
          cfg.shuffle_seed = detail::config_u64(value, field);
        } else if (key == "shared_key") {
          cfg.shared_key = detail::config_key(value, field);
          key_set = true;
        } else if (key == "shared_key_file") {
          cfg.shared_key_file = std::string(value);
          std::filesystem::path p(cfg.shared_key_file);
          cfg.shared_key = load_key_file(p.is_absolute() ? p : base_dir / p);
          key_set = true;
        } else {
          throw ConfigError(where + ": unknown field '" + field + "'");
        }
        break;
      case Section::Traffic: {
        TrafficModel& t = cfg.traffic;
        if (key == "page") {
          if (!pages_set) t.page_catalog.clear();
          pages_set = true;
          auto [path, w] = detail::weighted_entry(value, field);
          t.page_catalog.push_back({path, w});
        } else if (key == "term") {
          if (!terms_set) t.search_terms.clear();
          terms_set = true;
          auto [term, w] = detail::weighted_entry(value, field);
          t.search_terms.push_back({term, w});
        } else if (key == "status") {
          if (!statuses_set) t.status_mix.clear();
          statuses_set = true;
          auto [code, w] = detail::weighted_entry(value, field);
          t.status_mix.push_back({static_cast<int>(detail::config_u64(code, field)), w});
        } else if (key == "ip_pool_size") {
          t.ip_pool_size = static_cast<std::uint32_t>(detail::config_u64(value, field));
        } else if (key == "session_gap_seconds") {
          t.session_gap_seconds = static_cast<std::int64_t>(detail::config_u64(value, field));
        } else if (key == "mean_requests_per_session") {
          t.mean_requests_per_session = detail::config_double(value, field);
        } else if (key == "search_fraction") {
          t.search_fraction = detail::config_double(value, field);
        } else if (key == "start_epoch") {
          t.start_epoch = static_cast<std::int64_t>(detail::config_u64(value, field));
        } else if (key == "end_epoch") {
          t.end_epoch = static_cast<std::int64_t>(detail::config_u64(value, field));
        } else {
          throw ConfigError(where + ": unknown field '" + field + "'");
        }
        break;
      }
      case Section::Job: {
        JobSpec& j = cfg.jobs.back();
        if (key == "gap" && j.kind == JobKind::SessionStats) {
          j.session_gap = static_cast<std::int64_t>(detail::config_u64(value, field));
        } else if (key == "top_k" && j.kind == JobKind::TrendingTerms) {
          j.top_k = static_cast<std::uint32_t>(detail::config_u64(value, field));
        } else {
          throw ConfigError(where + ": unknown field '" + field + "'");
        }
        break;
      }
      case Section::Agent: {
        AgentDraft& d = drafts.back();
        if (key == "kind") {
          if (value == "real") {
            d.kind = AgentKind::Real;
          } else if (value == "fake") {
            d.kind = AgentKind::Fake;
          } else {
            throw ConfigError(field + ": expected 'real' or 'fake'");
          }
        } else if (key == "seed") {
          d.seed = detail::config_u64(value, field);
        } else if (key == "records") {
          d.records = detail::config_u64(value, field);
        } else if (key == "key") {
          d.key = detail::config_key(value, field);
        } else {
          throw ConfigError(where + ": unknown field '" + field + "'");
        }
        break;
      }
    }
  }

  if (!key_set) throw ConfigError("shared_key: missing (set shared_key or shared_key_file)");
  if (cfg.jobs.empty()) {
    cfg.jobs = {JobSpec{JobKind::PageHits}, JobSpec{JobKind::SessionStats}, JobSpec{JobKind::TrendingTerms}};
  }
  for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
    AgentPlan& p = cfg.agents[i];
    const AgentDraft& d = drafts[i];
    const std::string section = "agent." + p.agent.agent_id.str();
    if (!d.kind) throw ConfigError(section + ".kind: missing");
    if (!d.seed) throw ConfigError(section + ".seed: missing");
    if (!d.records) throw ConfigError(section + ".records: missing");
    p.agent.kind = *d.kind;
    p.agent.content_seed = *d.seed;
    p.records = *d.records;
    if (p.agent.kind == AgentKind::Real) {
      p.agent.key = d.key.value_or(cfg.shared_key);
    } else {
      p.agent.key = d.key.value_or(derived_fake_key(*d.seed));
    }
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config(text, path.parent_path());
}

inline std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  out += "epoch = " + std::to_string(cfg.epoch) + '\n';
  if (!cfg.shared_key_file.empty()) {
    out += "shared_key_file = " + cfg.shared_key_file + '\n';
  } else {
    out += "shared_key = " + cfg.shared_key.hex() + '\n';
  }
  out += "shuffle_seed = " + std::to_string(cfg.shuffle_seed) + '\n';

  const TrafficModel& t = cfg.traffic;
  out += "\n[traffic]\n";
  out += "start_epoch = " + std::to_string(t.start_epoch) + '\n';
  out += "end_epoch = " + std::to_string(t.end_epoch) + '\n';
  out += "ip_pool_size = " + std::to_string(t.ip_pool_size) + '\n';
  out += "session_gap_seconds = " + std::to_string(t.session_gap_seconds) + '\n';
  out += "mean_requests_per_session = " + format_double(t.mean_requests_per_session) + '\n';
  out += "search_fraction = " + format_double(t.search_fraction) + '\n';
  for (const auto& p : t.page_catalog) out += "page = " + p.path + ' ' + format_double(p.weight) + '\n';
  for (const auto& s : t.search_terms) out += "term = " + s.term + ' ' + format_double(s.weight) + '\n';
  for (const auto& s : t.status_mix) out += "status = " + std::to_string(s.status) + ' ' + format_double(s.weight) + '\n';

  for (const JobSpec& j : cfg.jobs) {
    out += "\n[job." + std::string(j.name()) + "]\n";
    if (j.kind == JobKind::SessionStats) out += "gap = " + std::to_string(j.session_gap) + '\n';
    if (j.kind == JobKind::TrendingTerms) out += "top_k = " + std::to_string(j.top_k) + '\n';
  }
  for (const AgentPlan& p : cfg.agents) {
    out += "\n[agent." + p.agent.agent_id.str() + "]\n";
    out += "kind = " + std::string(kind_name(p.agent.kind)) + '\n';
    out += "seed = " + std::to_string(p.agent.content_seed) + '\n';
    out += "records = " + std::to_string(p.records) + '\n';
    if (p.agent.kind == AgentKind::Fake) out += "key = " + p.agent.key.hex() + '\n';
  }
  return out;
}

// Three real and three fake agents of 400 records each, all three jobs.
inline PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.epoch = 1;
  cfg.shared_key = SecretKey::from_seed(derive_seed(2024, "shared-key"));
  cfg.shuffle_seed = 7;
  cfg.jobs = {JobSpec{JobKind::PageHits}, JobSpec{JobKind::SessionStats}, JobSpec{JobKind::TrendingTerms}};
  cfg.agents = make_roster(3, 3, 400, cfg.shared_key, 2024);
  return cfg;
}

inline Stream build_stream(const PipelineConfig& cfg) {
  return build_stream(cfg.agents, cfg.traffic, cfg.epoch, cfg.shuffle_seed);
}

inline Stream build_wheat_only_stream(const PipelineConfig& cfg) {
  return build_stream(cfg.real_agents(), cfg.traffic, cfg.epoch, cfg.shuffle_seed);
}

}  // namespace chaffwin
