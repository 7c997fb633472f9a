#pragma once

// Synthetic clickstream generator. Real ("wheat") and fake ("chaff") content come
// from the same model and differ only in the seed sub-stream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chaffwin/clf.hpp"
#include "chaffwin/errors.hpp"
#include "chaffwin/random.hpp"

namespace chaffwin {

struct WeightedPage {
  std::string path;
  double weight = 1.0;
  bool operator==(const WeightedPage&) const = default;
};

struct WeightedTerm {
  std::string term;
  double weight = 1.0;
  bool operator==(const WeightedTerm&) const = default;
};

struct WeightedStatus {
  int status = 200;
  double weight = 1.0;
  bool operator==(const WeightedStatus&) const = default;
};

struct TrafficModel {
  std::vector<WeightedPage> page_catalog;
  std::vector<WeightedTerm> search_terms;
  std::vector<WeightedStatus> status_mix;
  std::uint32_t ip_pool_size = 256;
  std::int64_t session_gap_seconds = 1800;
  double mean_requests_per_session = 6.0;
  double search_fraction = 0.15;
  std::int64_t start_epoch = 1700000000;
  std::int64_t end_epoch = 1700000000 + 7 * 86400;

  bool operator==(const TrafficModel&) const = default;

  void validate() const {
    auto positive = [](double w) { return std::isfinite(w) && w > 0.0; };
    if (page_catalog.empty()) throw ConfigError("traffic.page: catalog must not be empty");
    for (const auto& p : page_catalog) {
      if (!positive(p.weight)) throw ConfigError("traffic.page: weight must be positive and finite");
      if (p.path.empty() || p.path[0] != '/' || p.path.find_first_of("? \"\t") != std::string::npos) {
        throw ConfigError("traffic.page: invalid path '" + p.path + "'");
      }
    }
    for (const auto& t : search_terms) {
      if (!positive(t.weight)) throw ConfigError("traffic.term: weight must be positive and finite");
      if (t.term.empty()) throw ConfigError("traffic.term: empty term");
    }
    for (const auto& s : status_mix) {
      if (!positive(s.weight)) throw ConfigError("traffic.status: weight must be positive and finite");
      if (s.status < 100 || s.status > 599) throw ConfigError("traffic.status: code out of range");
    }
    if (ip_pool_size == 0) throw ConfigError("traffic.ip_pool_size must be positive");
    if (session_gap_seconds <= 0) throw ConfigError("traffic.session_gap_seconds must be positive");
    if (!(mean_requests_per_session >= 1.0) || !std::isfinite(mean_requests_per_session)) {
      throw ConfigError("traffic.mean_requests_per_session must be >= 1");
    }
    if (!(search_fraction >= 0.0 && search_fraction <= 1.0)) {
      throw ConfigError("traffic.search_fraction must lie in [0, 1]");
    }
    if (search_fraction > 0.0 && search_terms.empty()) {
      throw ConfigError("traffic.term: search_fraction > 0 needs at least one term");
    }
    if (start_epoch < 0 || start_epoch >= end_epoch) {
      throw ConfigError("traffic: start_epoch must be non-negative and precede end_epoch");
    }
  }

  static TrafficModel default_model() {
    TrafficModel m;
    m.page_catalog = {{"/", 30},
                      {"/index.html", 18},
                      {"/products", 12},
                      {"/products/shoes", 9},
                      {"/products/hats", 6},
                      {"/products/bags", 5},
                      {"/cart", 5},
                      {"/checkout", 3},
                      {"/account", 3},
                      {"/login", 3},
                      {"/blog", 2},
                      {"/blog/spring-sale", 2},
                      {"/about", 1},
                      {"/contact", 1},
                      {"/static/app.js", 8},
                      {"/static/site.css", 8}};
    m.search_terms = {{"shoes", 20},  {"running shoes", 12}, {"hats", 9}, {"Sandals", 7}, {"bags", 6},
                      {"socks", 5},   {"winter coat", 4},    {"gift card", 3}, {"sale", 3},  {"t-shirt", 2},
                      {"sunglasses", 2}, {"umbrella", 1}};
    m.status_mix = {{200, 86}, {304, 6}, {301, 2}, {404, 4}, {500, 2}};
    return m;
  }
};

// One generated record together with the ground-truth session it belongs to.
struct SyntheticTrace {
  std::vector<LogRecord> records;
  std::vector<std::uint64_t> session_ids;
};

namespace detail {

inline constexpr std::string_view kSiteOrigin = "https://shop.example.com";

inline constexpr std::string_view kUserAgents[] = {
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/118.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_5) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/16.6 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:118.0) Gecko/20100101 Firefox/118.0",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 16_6 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Mobile/15E148",
    "Mozilla/5.0 (Linux; Android 13; Pixel 7) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/118.0 Mobile Safari/537.36",
    "curl/8.1.2",
};

inline std::string percent_encode(std::string_view text) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    bool unreserved = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' ||
                      c == '_' || c == '.' || c == '~';
    if (unreserved) {
      out.push_back(c);
    } else {
      out.push_back('%');
      out.push_back(kDigits[u >> 4]);
      out.push_back(kDigits[u & 0x0f]);
    }
  }
  return out;
}

// Visitor addresses are a pure function of the pool index, so wheat and chaff
// draw from the same population.
inline std::vector<std::string> visitor_pool(std::uint32_t size) {
  std::vector<std::string> pool;
  std::set<std::uint32_t> seen;
  std::uint64_t state = 0x5eed0f1b2c3d4e5fULL;
  while (pool.size() < size) {
    auto word = static_cast<std::uint32_t>(splitmix64(state) >> 32);
    std::uint32_t a = 11 + (word >> 24) % 212;  // 11..222
    if (a == 127) continue;
    word = (a << 24) | (word & 0x00ffffffU);
    if ((word & 0xff) == 0 || (word & 0xff) == 255 || !seen.insert(word).second) continue;
    pool.push_back(std::to_string(word >> 24) + '.' + std::to_string((word >> 16) & 0xff) + '.' +
                   std::to_string((word >> 8) & 0xff) + '.' + std::to_string(word & 0xff));
  }
  return pool;
}

inline std::uint64_t page_base_size(std::string_view path) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : path) h = (h ^ static_cast<std::uint8_t>(c)) * 1099511628211ULL;
  return 800 + h % 40000;
}

inline SyntheticTrace generate_trace(const TrafficModel& model, std::size_t n, std::uint64_t seed) {
  model.validate();
  SyntheticTrace trace;
  if (n == 0) return trace;

  Rng rng(seed);
  std::vector<double> page_weights, term_weights, status_weights;
  for (const auto& p : model.page_catalog) page_weights.push_back(p.weight);
  for (const auto& t : model.search_terms) term_weights.push_back(t.weight);
  for (const auto& s : model.status_mix) status_weights.push_back(s.weight);
  WeightedPicker pages(page_weights);
  WeightedPicker terms = term_weights.empty() ? WeightedPicker{} : WeightedPicker(term_weights);
  WeightedPicker statuses = status_weights.empty() ? WeightedPicker{} : WeightedPicker(status_weights);
  std::vector<std::string> pool = visitor_pool(model.ip_pool_size);

  // Session lengths first, so the number of sessions per visitor is known before layout.
  std::vector<std::size_t> lengths;
  for (std::size_t total = 0; total < n;) {
    std::size_t len = std::min<std::size_t>(rng.geometric(model.mean_requests_per_session), n - total);
    lengths.push_back(len);
    total += len;
  }

  // Sessions go round-robin over a shuffled visitor order. Think times are drawn up
  // front so every session's duration is known, then each visitor's sessions get
  // uniformly random start times with at least one gap of silence between them
  // (sorted uniform offsets over the slack, plus the preceding durations and gaps).
  // Consecutive sessions of one visitor therefore never merge as long as the slack is
  // non-negative; a visitor too busy for the span is clamped to its end instead.
  const std::int64_t span = model.end_epoch - model.start_epoch;
  const std::int64_t gap = model.session_gap_seconds;
  const std::int64_t max_think = std::max<std::int64_t>(1, std::min<std::int64_t>(gap - 1, 300));

  std::vector<std::uint32_t> order(pool.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> visitor_sessions(pool.size());
  for (std::size_t s = 0; s < lengths.size(); ++s) visitor_sessions[order[s % order.size()]].push_back(s);

  std::vector<std::vector<std::int64_t>> offsets(lengths.size());  // per request, from session start
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    offsets[s].push_back(0);
    for (std::size_t r = 1; r < lengths[s]; ++r) offsets[s].push_back(offsets[s].back() + rng.between(1, max_think));
  }

  std::vector<std::int64_t> session_start(lengths.size(), model.start_epoch);
  for (const auto& sessions : visitor_sessions) {
    if (sessions.empty()) continue;
    std::int64_t busy = 0;
    for (std::size_t s : sessions) busy += offsets[s].back() + gap;
    const std::int64_t slack = std::max<std::int64_t>(0, span - busy);
    std::vector<std::int64_t> u;
    for (std::size_t i = 0; i < sessions.size(); ++i) u.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(slack) + 1)));
    std::sort(u.begin(), u.end());
    std::int64_t used = 0;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      session_start[sessions[i]] = model.start_epoch + u[i] + used;
      used += offsets[sessions[i]].back() + gap;
    }
  }

  struct Pending {
    std::int64_t timestamp;
    std::size_t order;
  };
  std::vector<Pending> sort_keys;

  for (std::size_t s = 0; s < lengths.size(); ++s) {
    std::uint32_t visitor = order[s % order.size()];
    const std::string_view agent = kUserAgents[visitor % std::size(kUserAgents)];
    std::string previous_url;

    for (std::size_t r = 0; r < lengths[s]; ++r) {
      const std::int64_t t = std::min(model.end_epoch - 1, session_start[s] + offsets[s][r]);
      LogRecord rec;
      rec.client_ip = pool[visitor];
      rec.timestamp = t;
      rec.user_agent = std::string(agent);

      if (!model.search_terms.empty() && rng.bernoulli(model.search_fraction)) {
        rec.path = "/search";
        rec.query = "q=" + percent_encode(model.search_terms[terms.pick(rng)].term);
      } else {
        rec.path = model.page_catalog[pages.pick(rng)].path;
      }
      double method_draw = rng.uniform();
      rec.method = method_draw < 0.94 ? HttpMethod::Get : method_draw < 0.99 ? HttpMethod::Post : HttpMethod::Head;
      rec.status = model.status_mix.empty() ? 200 : model.status_mix[statuses.pick(rng)].status;

      if (rec.method == HttpMethod::Head) {
        rec.bytes = std::nullopt;
      } else if (rec.status >= 300 && rec.status < 400) {
        rec.bytes = 0;
      } else if (rec.status >= 400) {
        rec.bytes = static_cast<std::uint64_t>(rng.between(180, 1200));
      } else {
        double jitter = 0.5 + rng.uniform();
        rec.bytes = static_cast<std::uint64_t>(static_cast<double>(page_base_size(rec.path)) * jitter);
      }

      if (r == 0) {
        rec.referer = rng.bernoulli(0.3) ? "https://www.google.com/" : "-";
      } else {
        rec.referer = previous_url;
      }
      previous_url = std::string(kSiteOrigin) + rec.path + (rec.query.empty() ? "" : "?" + rec.query);

      sort_keys.push_back({rec.timestamp, trace.records.size()});
      trace.records.push_back(std::move(rec));
      trace.session_ids.push_back(s);
    }
  }

  std::stable_sort(sort_keys.begin(), sort_keys.end(),
                   [](const Pending& a, const Pending& b) { return a.timestamp < b.timestamp; });
  SyntheticTrace sorted;
  sorted.records.reserve(n);
  sorted.session_ids.reserve(n);
  for (const Pending& p : sort_keys) {
    sorted.records.push_back(std::move(trace.records[p.order]));
    sorted.session_ids.push_back(trace.session_ids[p.order]);
  }
  return sorted;
}

}  // namespace detail

// Wheat trace with ground-truth session ids.
inline SyntheticTrace generate_wheat_trace(const TrafficModel& model, std::size_t n, std::uint64_t seed) {
  return detail::generate_trace(model, n, derive_seed(seed, "wheat"));
}

inline std::vector<LogRecord> generate_wheat(const TrafficModel& model, std::size_t n, std::uint64_t seed) {
  return generate_wheat_trace(model, n, seed).records;
}

// Same distributions as generate_wheat, separate seed stream.
inline std::vector<LogRecord> generate_chaff_content(const TrafficModel& model, std::size_t n,
                                                     std::uint64_t seed) {
  return detail::generate_trace(model, n, derive_seed(seed, "chaff")).records;
}

}  // namespace chaffwin
