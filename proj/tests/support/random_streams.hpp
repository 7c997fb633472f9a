#pragma once

// Small adversarial streams for engine-versus-oracle checks: several agents, duplicate
// seqs, unparsable payloads, odd query strings and clustered timestamps.

#include <string>
#include <vector>

#include "chaffwin/pipeline.hpp"
#include "chaffwin/random.hpp"

namespace chaffwin::testing {

inline LogRecord random_small_record(Rng& rng) {
  static const std::vector<std::string> kPaths = {"/", "/a", "/b", "/search", "/search", "/a/b"};
  static const std::vector<std::string> kQueries = {"",          "q=shoes",      "q=Shoes",   "q=SHOES&p=1", "p=1&q=hats",
                                                    "q=",        "q=bad%zz",     "q=%41bc",   "q=a%2",       "q=x&q=y",
                                                    "page=2",    "q=red%20hats", "q=%e2%82%ac"};
  LogRecord r;
  r.client_ip = "10.0.0." + std::to_string(rng.below(4));
  r.timestamp = 1000 + static_cast<std::int64_t>(rng.below(6000));
  r.method = rng.bernoulli(0.8) ? HttpMethod::Get : HttpMethod::Post;
  r.path = kPaths[rng.below(kPaths.size())];
  r.query = kQueries[rng.below(kQueries.size())];
  r.status = rng.bernoulli(0.9) ? 200 : 404;
  if (rng.bernoulli(0.8)) r.bytes = rng.below(5000);
  return r;
}

inline Stream random_small_stream(std::uint64_t seed, std::size_t max_records = 50) {
  Rng rng(seed);
  Stream s;
  s.epoch = rng.below(100);
  std::size_t agents = 1 + rng.below(4);
  for (std::size_t a = 0; a < agents; ++a) {
    ManifestEntry e;
    e.agent_id = AgentId("agent-" + std::to_string(a));
    for (auto& b : e.token.mutable_bytes()) b = static_cast<std::uint8_t>(rng.below(256));
    s.manifest.push_back(e);
  }
  // One manifest agent sometimes has no records at all.
  std::size_t active = agents > 1 && rng.bernoulli(0.3) ? agents - 1 : agents;
  std::size_t n = rng.below(max_records + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t a = rng.below(active);
    TaggedRecord r;
    r.tag.agent_id = s.manifest[a].agent_id;
    r.tag.seq = rng.below(n + 1);
    for (auto& b : r.tag.mac.mutable_bytes()) b = static_cast<std::uint8_t>(rng.below(256));
    r.payload = rng.bernoulli(0.1) ? "garbage line " + std::to_string(i) : format_clf(random_small_record(rng));
    ++s.manifest[a].count;
    s.records.push_back(std::move(r));
  }
  return s;
}

}  // namespace chaffwin::testing
