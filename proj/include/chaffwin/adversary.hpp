#pragma once

// Keyless adversary harness and chaff overhead experiment.
//
// Every distinguisher sees only the Stream, exactly what the provider sees, and
// returns one bit per record. Ground-truth kinds are consumed by score() alone.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "chaffwin/analyzer.hpp"
#include "chaffwin/clf.hpp"
#include "chaffwin/errors.hpp"
#include "chaffwin/mapreduce.hpp"
#include "chaffwin/pipeline.hpp"
#include "chaffwin/stats.hpp"
#include "chaffwin/workflow.hpp"

namespace chaffwin {

enum class DistinguisherFamily { MacBytes, Payload, AgentVolume, SeqPattern };

struct Distinguisher {
  std::string name;
  DistinguisherFamily family;
  std::function<std::vector<std::uint8_t>(const Stream&)> classify;
  // Optional scoring unit per record. Records sharing a unit must share a guess and
  // count as one trial; left empty, every record is its own trial.
  std::function<std::vector<std::size_t>(const Stream&)> units = {};
};

struct DistinguisherResult {
  std::string name;
  DistinguisherFamily family = DistinguisherFamily::Payload;
  double accuracy = 0.5;
  double advantage = 0.0;
  std::uint64_t samples = 0;
  double p_value = 1.0;
};

struct DistinguisherReport {
  std::vector<DistinguisherResult> results;

  double max_advantage() const {
    double m = 0;
    for (const auto& r : results) m = std::max(m, r.advantage);
    return m;
  }
  double max_advantage(DistinguisherFamily family) const {
    double m = 0;
    for (const auto& r : results) {
      if (r.family == family) m = std::max(m, r.advantage);
    }
    return m;
  }
  double min_p_value() const {
    double m = 1;
    for (const auto& r : results) m = std::min(m, r.p_value);
    return m;
  }

  // Tab-separated table with a header row.
  std::string to_table() const {
    std::string text = "distinguisher\taccuracy\tadvantage\tsamples\tp_value\n";
    char buf[160];
    for (const auto& r : results) {
      std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%llu\t%.6g\n", r.accuracy, r.advantage,
                    static_cast<unsigned long long>(r.samples), r.p_value);
      text += r.name + buf;
    }
    return text;
  }
};

namespace detail {

// Guess side A for every record whose feature is at or below the lower median.
inline std::vector<std::uint8_t> split_at_median(const std::vector<double>& features) {
  std::vector<std::uint8_t> guesses(features.size(), 0);
  if (features.empty()) return guesses;
  std::vector<double> sorted = features;
  auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  double median = *mid;
  for (std::size_t i = 0; i < features.size(); ++i) guesses[i] = features[i] <= median ? 1 : 0;
  return guesses;
}

inline std::vector<std::optional<LogRecord>> parse_all(const Stream& stream) {
  std::vector<std::optional<LogRecord>> out;
  out.reserve(stream.records.size());
  for (const auto& r : stream.records) out.push_back(try_parse_clf(r.payload));
  return out;
}

inline Distinguisher payload_threshold(std::string name, std::function<double(const LogRecord&)> feature) {
  return Distinguisher{std::move(name), DistinguisherFamily::Payload, [feature](const Stream& s) {
                         std::vector<double> f;
                         for (const auto& rec : parse_all(s)) f.push_back(rec ? feature(*rec) : -1.0);
                         return split_at_median(f);
                       }};
}

// Keyless sessions: records grouped by (agent_id, client_ip) and split where successive
// timestamps are at least `gap` apart. Unparsable records stand alone.
inline std::vector<std::size_t> keyless_sessions(const Stream& s, std::int64_t gap = 1800) {
  auto parsed = parse_all(s);
  std::vector<std::size_t> idx(s.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto key = [&](std::size_t i) {
    return std::make_tuple(!parsed[i].has_value(), std::string_view(s.records[i].tag.agent_id.str()),
                           parsed[i] ? std::string_view(parsed[i]->client_ip) : std::string_view(),
                           parsed[i] ? parsed[i]->timestamp : std::int64_t{0}, i);
  };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<std::size_t> unit(s.records.size());
  std::size_t next = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::size_t i = idx[k];
    bool same = false;
    if (k > 0 && parsed[i]) {
      std::size_t p = idx[k - 1];
      same = parsed[p] && s.records[p].tag.agent_id == s.records[i].tag.agent_id &&
             parsed[p]->client_ip == parsed[i]->client_ip && parsed[i]->timestamp - parsed[p]->timestamp < gap;
    }
    unit[i] = same ? unit[idx[k - 1]] : next++;
  }
  return unit;
}

}  // namespace detail

// The fixed public battery. `seed` picks which MAC byte position the single-byte
// distinguisher looks at.
inline std::vector<Distinguisher> default_battery(std::uint64_t seed) {
  std::vector<Distinguisher> battery;
  const std::size_t mac_byte = Rng(derive_seed(seed, "mac-byte")).below(kMacSize);

  battery.push_back({"mac-byte-" + std::to_string(mac_byte), DistinguisherFamily::MacBytes, [mac_byte](const Stream& s) {
                       std::vector<double> f;
                       for (const auto& r : s.records) f.push_back(r.tag.mac.bytes()[mac_byte]);
                       return detail::split_at_median(f);
                     }});
  battery.push_back({"mac-mean", DistinguisherFamily::MacBytes, [](const Stream& s) {
                       std::vector<double> f;
                       for (const auto& r : s.records) {
                         double sum = 0;
                         for (auto b : r.tag.mac.bytes()) sum += b;
                         f.push_back(sum / kMacSize);
                       }
                       return detail::split_at_median(f);
                     }});
  battery.push_back(detail::payload_threshold("payload-status", [](const LogRecord& r) { return double(r.status); }));
  battery.push_back(detail::payload_threshold(
      "payload-bytes", [](const LogRecord& r) { return r.bytes ? static_cast<double>(*r.bytes) : -1.0; }));
  // Hour of day is shared by every request of a session, so this one guesses per keyless
  // session (hour of its first request) and is scored per session.
  battery.push_back({"payload-hour", DistinguisherFamily::Payload,
                     [](const Stream& s) {
                       auto parsed = detail::parse_all(s);
                       auto unit = detail::keyless_sessions(s);
                       auto hour = [](std::int64_t ts) {
                         std::int64_t secs = ts % 86400;
                         return static_cast<double>((secs < 0 ? secs + 86400 : secs) / 3600);
                       };
                       std::vector<double> first_hour;
                       std::vector<std::int64_t> first_ts;
                       for (std::size_t i = 0; i < s.records.size(); ++i) {
                         if (unit[i] >= first_hour.size()) {
                           first_hour.resize(unit[i] + 1, -1.0);
                           first_ts.resize(unit[i] + 1, std::numeric_limits<std::int64_t>::max());
                         }
                         if (parsed[i] && parsed[i]->timestamp < first_ts[unit[i]]) {
                           first_ts[unit[i]] = parsed[i]->timestamp;
                           first_hour[unit[i]] = hour(parsed[i]->timestamp);
                         }
                       }
                       auto per_session = detail::split_at_median(first_hour);
                       std::vector<std::uint8_t> guesses;
                       for (std::size_t i = 0; i < s.records.size(); ++i) guesses.push_back(per_session[unit[i]]);
                       return guesses;
                     },
                     [](const Stream& s) { return detail::keyless_sessions(s); }});
  battery.push_back({"payload-path-rank", DistinguisherFamily::Payload, [](const Stream& s) {
                       auto parsed = detail::parse_all(s);
                       std::map<std::string, std::uint64_t> freq;
                       for (const auto& rec : parsed) {
                         if (rec) ++freq[rec->path];
                       }
                       std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
                       std::stable_sort(ranked.begin(), ranked.end(),
                                        [](const auto& a, const auto& b) { return a.second > b.second; });
                       std::map<std::string, double> rank;
                       for (std::size_t i = 0; i < ranked.size(); ++i) rank[ranked[i].first] = static_cast<double>(i);
                       std::vector<double> f;
                       for (const auto& rec : parsed) f.push_back(rec ? rank[rec->path] : -1.0);
                       return detail::split_at_median(f);
                     }});
  battery.push_back({"agent-volume", DistinguisherFamily::AgentVolume, [](const Stream& s) {
                       std::vector<double> per_agent;
                       for (const auto& e : s.manifest) per_agent.push_back(static_cast<double>(e.count));
                       auto agent_guess = detail::split_at_median(per_agent);
                       std::vector<std::uint8_t> guesses;
                       for (const auto& r : s.records) {
                         const ManifestEntry* e = s.find_agent(r.tag.agent_id);
                         guesses.push_back(e ? agent_guess[static_cast<std::size_t>(e - s.manifest.data())] : 0);
                       }
                       return guesses;
                     }});
  battery.push_back({"seq-pattern", DistinguisherFamily::SeqPattern, [](const Stream& s) {
                       std::vector<double> f;
                       for (const auto& r : s.records) f.push_back(static_cast<double>(r.tag.seq));
                       return detail::split_at_median(f);
                     }});
  return battery;
}

namespace detail {

// The only place ground truth is read. A guess of side A counts as "wheat".
inline DistinguisherResult score(const Distinguisher& d, const Stream& stream, const std::vector<std::uint8_t>& is_wheat) {
  std::vector<std::uint8_t> guesses = d.classify(stream);
  if (guesses.size() != is_wheat.size()) throw Error("distinguisher " + d.name + " returned the wrong number of guesses");
  std::vector<std::size_t> units = d.units ? d.units(stream) : std::vector<std::size_t>{};
  std::uint64_t correct = 0, trials = 0;
  if (units.empty()) {
    for (std::size_t i = 0; i < guesses.size(); ++i) correct += (guesses[i] != 0) == (is_wheat[i] != 0);
    trials = guesses.size();
  } else {
    if (units.size() != guesses.size()) throw Error("distinguisher " + d.name + " returned the wrong number of units");
    std::vector<int> seen(*std::max_element(units.begin(), units.end()) + 1, -1);
    for (std::size_t i = 0; i < guesses.size(); ++i) {
      int outcome = (guesses[i] != 0) == (is_wheat[i] != 0);
      if (seen[units[i]] < 0) {
        seen[units[i]] = outcome;
        correct += static_cast<std::uint64_t>(outcome);
        ++trials;
      } else if (seen[units[i]] != outcome) {
        throw Error("distinguisher " + d.name + " is not constant within a unit");
      }
    }
  }
  DistinguisherResult r;
  r.name = d.name;
  r.family = d.family;
  r.samples = trials;
  r.accuracy = trials == 0 ? 0.5 : static_cast<double>(correct) / static_cast<double>(trials);
  r.advantage = std::fabs(r.accuracy - 0.5);
  r.p_value = stats::binomial_two_sided_p(correct, trials);
  return r;
}

}  // namespace detail

inline DistinguisherReport run_distinguishers(const Stream& stream, const std::map<AgentId, AgentKind>& labels,
                                              std::uint64_t seed) {
  std::vector<std::uint8_t> is_wheat;
  is_wheat.reserve(stream.records.size());
  std::uint64_t wheat = 0, chaff = 0;
  for (const auto& r : stream.records) {
    auto it = labels.find(r.tag.agent_id);
    if (it == labels.end()) throw ConfigError("no ground-truth kind for agent " + r.tag.agent_id.str());
    bool real = it->second == AgentKind::Real;
    is_wheat.push_back(real ? 1 : 0);
    (real ? wheat : chaff) += 1;
  }
  if (wheat == 0 || chaff == 0) throw ConfigError("distinguishers need both wheat and chaff records");
  if (wheat != chaff) {
    throw ConfigError("distinguishers need balanced input, got " + std::to_string(wheat) + " wheat and " +
                      std::to_string(chaff) + " chaff records");
  }
  DistinguisherReport report;
  for (const Distinguisher& d : default_battery(seed)) {
    report.results.push_back(detail::score(d, stream, is_wheat));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Privacy experiment: mimicked chaff, a wheat-vs-wheat null run, and deliberately
// broken chaff as a positive control.

struct PrivacyThresholds {
  double max_advantage = 0.05;
  double min_p_value = 0.01;
  double control_min_advantage = 0.3;
};

struct PrivacyExperiment {
  DistinguisherReport mimicked;
  DistinguisherReport null_run;
  DistinguisherReport broken_control;
  PrivacyThresholds thresholds;

  bool mimicry_holds() const {
    return mimicked.max_advantage() <= thresholds.max_advantage && mimicked.min_p_value() >= thresholds.min_p_value;
  }
  bool null_calibrated() const { return null_run.min_p_value() >= thresholds.min_p_value; }
  bool control_fires() const {
    return broken_control.max_advantage(DistinguisherFamily::Payload) >= thresholds.control_min_advantage;
  }
  bool passed() const { return mimicry_holds() && null_calibrated() && control_fires(); }
};

// Chaff that ignores the traffic model: one path, status always 200, no searches.
inline TrafficModel broken_chaff_model(const TrafficModel& base) {
  TrafficModel m = base;
  m.page_catalog = {{"/index.html", 1.0}};
  m.status_mix = {{200, 1.0}};
  m.search_fraction = 0.0;
  return m;
}

inline PrivacyExperiment run_privacy_experiment(std::uint64_t records_per_side, std::size_t agents_per_side,
                                                std::uint64_t seed, const TrafficModel& model = TrafficModel::default_model()) {
  if (agents_per_side == 0 || records_per_side % agents_per_side != 0) {
    throw ConfigError("records per side must split evenly over the agents");
  }
  const std::uint64_t per_agent = records_per_side / agents_per_side;
  const SecretKey shared = SecretKey::from_seed(derive_seed(seed, "shared-key"));
  PrivacyExperiment exp;

  auto mimic_plans = make_roster(agents_per_side, agents_per_side, per_agent, shared, derive_seed(seed, "mimic"));
  Stream mimic = build_stream(mimic_plans, model, 1, derive_seed(seed, "mimic-shuffle"));
  exp.mimicked = run_distinguishers(mimic, kinds_of(mimic_plans), seed);

  auto null_plans = make_roster(2 * agents_per_side, 0, per_agent, shared, derive_seed(seed, "null"));
  Stream null_stream = build_stream(null_plans, model, 1, derive_seed(seed, "null-shuffle"));
  std::vector<AgentKind> relabel(agents_per_side, AgentKind::Real);
  relabel.resize(2 * agents_per_side, AgentKind::Fake);
  Rng relabel_rng(derive_seed(seed, "null-labels"));
  relabel_rng.shuffle(std::span(relabel));
  std::map<AgentId, AgentKind> null_labels;
  for (std::size_t i = 0; i < null_plans.size(); ++i) null_labels[null_plans[i].agent.agent_id] = relabel[i];
  exp.null_run = run_distinguishers(null_stream, null_labels, seed);

  auto broken_plans = make_roster(agents_per_side, agents_per_side, per_agent, shared, derive_seed(seed, "broken"));
  const TrafficModel broken_model = broken_chaff_model(model);
  std::vector<Batch> batches;
  for (const AgentPlan& p : broken_plans) {
    const TrafficModel& m = p.agent.kind == AgentKind::Real ? model : broken_model;
    batches.push_back(agent_emit(p.agent, agent_content(p, m), 1, 0));
  }
  Stream broken = collect(batches, derive_seed(seed, "broken-shuffle"));
  exp.broken_control = run_distinguishers(broken, kinds_of(broken_plans), seed);
  return exp;
}

// ---------------------------------------------------------------------------
// Overhead experiment

struct OverheadRow {
  double ratio = 0.0;
  std::uint64_t wheat_records = 0;
  std::uint64_t chaff_records = 0;
  std::uint64_t total_records = 0;
  std::uint64_t records_processed = 0;  // mapped + parse errors, as counted by the engine
  double generation_seconds = 0.0;
  double tagging_seconds = 0.0;
  double csp_seconds = 0.0;  // median run_job wall time
  double winnow_seconds = 0.0;
};

struct OverheadReport {
  JobSpec job;
  std::size_t workers = 1;
  std::vector<OverheadRow> rows;

  const OverheadRow* baseline() const {
    for (const auto& r : rows) {
      if (r.ratio == 0.0) return &r;
    }
    return nullptr;
  }

  std::string to_table() const {
    std::string text =
        "ratio\twheat\tchaff\ttotal\tprocessed\tgeneration_s\ttagging_s\tcsp_s\twinnow_s\tcsp_vs_baseline\n";
    const OverheadRow* base = baseline();
    char buf[256];
    for (const auto& r : rows) {
      double rel = base && base->csp_seconds > 0 ? r.csp_seconds / base->csp_seconds : 0.0;
      std::snprintf(buf, sizeof buf, "%g\t%llu\t%llu\t%llu\t%llu\t%.6f\t%.6f\t%.6f\t%.6f\t%.4f\n", r.ratio,
                    static_cast<unsigned long long>(r.wheat_records), static_cast<unsigned long long>(r.chaff_records),
                    static_cast<unsigned long long>(r.total_records),
                    static_cast<unsigned long long>(r.records_processed), r.generation_seconds, r.tagging_seconds,
                    r.csp_seconds, r.winnow_seconds, rel);
      text += buf;
    }
    return text;
  }
};

namespace detail {

template <class Fn>
double seconds(Fn&& fn) {
  auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? 0.0 : v[v.size() / 2];
}

// Spreads `total` over agents holding at most `per_agent` records each.
inline std::vector<std::uint64_t> volumes(std::uint64_t total, std::uint64_t per_agent) {
  std::vector<std::uint64_t> out;
  if (total == 0) return out;
  std::uint64_t agents = (total + per_agent - 1) / per_agent;
  for (std::uint64_t a = 0; a < agents; ++a) out.push_back(total / agents + (a < total % agents ? 1 : 0));
  return out;
}

}  // namespace detail

inline constexpr int kTimingRepetitions = 5;

inline OverheadReport run_overhead(const JobSpec& job, std::uint64_t wheat_size, const std::vector<double>& ratios,
                                   std::size_t workers, std::uint64_t seed,
                                   const TrafficModel& model = TrafficModel::default_model()) {
  if (wheat_size == 0) throw ConfigError("overhead: wheat size must be positive");
  constexpr std::uint64_t kRealAgents = 4;
  const std::uint64_t per_agent = (wheat_size + kRealAgents - 1) / kRealAgents;
  const SecretKey shared = SecretKey::from_seed(derive_seed(seed, "shared-key"));

  OverheadReport report;
  report.job = job;
  report.workers = workers;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("overhead: ratios must be non-negative");
    OverheadRow row;
    row.ratio = r;
    row.wheat_records = wheat_size;
    row.chaff_records = static_cast<std::uint64_t>(std::llround(r * static_cast<double>(wheat_size)));
    row.total_records = row.wheat_records + row.chaff_records;

    auto real_volumes = detail::volumes(wheat_size, per_agent);
    auto fake_volumes = detail::volumes(row.chaff_records, per_agent);
    auto plans = make_roster(real_volumes.size(), fake_volumes.size(), 0, shared,
                             derive_seed(seed, "overhead-" + std::to_string(r)));
    std::size_t next_real = 0, next_fake = 0;
    for (AgentPlan& p : plans) {
      p.records = p.agent.kind == AgentKind::Real ? real_volumes[next_real++] : fake_volumes[next_fake++];
    }

    std::vector<std::vector<LogRecord>> content;
    row.generation_seconds = detail::seconds([&] {
      for (const AgentPlan& p : plans) content.push_back(agent_content(p, model));
    });
    std::vector<Batch> batches;
    row.tagging_seconds = detail::seconds([&] {
      for (std::size_t i = 0; i < plans.size(); ++i) batches.push_back(agent_emit(plans[i].agent, content[i], 1, 0));
    });
    Stream stream = collect(batches, derive_seed(seed, "overhead-shuffle"));

    RunStats stats;
    JobOutput output = run_job(job, stream, workers, &stats);  // warm-up
    for (const auto& a : stats.agents) row.records_processed += a.mapped + a.parse_errors;
    std::vector<double> csp, winnow;
    for (int rep = 0; rep < kTimingRepetitions; ++rep) {
      csp.push_back(detail::seconds([&] { output = run_job(job, stream, workers); }));
      winnow.push_back(detail::seconds([&] { (void)winnow_results(shared, output); }));
    }
    row.csp_seconds = detail::median(csp);
    row.winnow_seconds = detail::median(winnow);
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace chaffwin
