#pragma once

// Glue that turns a set of agent plans into batches and a collected stream.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "chaffwin/pipeline.hpp"
#include "chaffwin/random.hpp"
#include "chaffwin/traffic.hpp"

namespace chaffwin {

struct AgentPlan {
  AgentConfig agent;
  std::uint64_t records = 0;

  bool operator==(const AgentPlan&) const = default;
};

inline std::string random_agent_id(Rng& rng) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string id = "ag-";
  std::uint64_t word = rng.next();
  for (int i = 0; i < 8; ++i) id.push_back(kDigits[(word >> (4 * i)) & 0xf]);
  return id;
}

// Draws every id from one namespace before any kind is known, then assigns kinds to
// shuffled positions. Fake agents get their own key each.
inline std::vector<AgentPlan> make_roster(std::size_t real_agents, std::size_t fake_agents,
                                          std::uint64_t records_per_agent, const SecretKey& shared_key,
                                          std::uint64_t seed) {
  Rng rng(derive_seed(seed, "roster"));
  const std::size_t total = real_agents + fake_agents;
  std::set<std::string> ids;
  std::vector<std::string> order;
  while (order.size() < total) {
    std::string id = random_agent_id(rng);
    if (ids.insert(id).second) order.push_back(std::move(id));
  }
  std::vector<AgentKind> kinds(real_agents, AgentKind::Real);
  kinds.resize(total, AgentKind::Fake);
  rng.shuffle(std::span(kinds));

  std::vector<AgentPlan> plans;
  for (std::size_t i = 0; i < total; ++i) {
    AgentPlan plan;
    plan.agent.agent_id = AgentId(order[i]);
    plan.agent.kind = kinds[i];
    plan.agent.content_seed = rng.next();
    plan.agent.key = kinds[i] == AgentKind::Real ? shared_key : SecretKey::from_seed(rng.next());
    if (plan.agent.kind == AgentKind::Fake && plan.agent.key == shared_key) plan.agent.key = SecretKey::from_seed(rng.next());
    plan.records = records_per_agent;
    plans.push_back(std::move(plan));
  }
  return plans;
}

inline std::vector<LogRecord> agent_content(const AgentPlan& plan, const TrafficModel& model) {
  return plan.agent.kind == AgentKind::Real ? generate_wheat(model, plan.records, plan.agent.content_seed)
                                            : generate_chaff_content(model, plan.records, plan.agent.content_seed);
}

inline std::vector<Batch> emit_batches(const std::vector<AgentPlan>& plans, const TrafficModel& model,
                                       std::uint64_t epoch) {
  std::vector<Batch> batches;
  batches.reserve(plans.size());
  for (const AgentPlan& plan : plans) batches.push_back(agent_emit(plan.agent, agent_content(plan, model), epoch, 0));
  return batches;
}

inline std::vector<AgentPlan> real_only(const std::vector<AgentPlan>& plans) {
  std::vector<AgentPlan> out;
  for (const AgentPlan& p : plans) {
    if (p.agent.kind == AgentKind::Real) out.push_back(p);
  }
  return out;
}

inline std::map<AgentId, AgentKind> kinds_of(const std::vector<AgentPlan>& plans) {
  std::map<AgentId, AgentKind> kinds;
  for (const AgentPlan& p : plans) kinds[p.agent.agent_id] = p.agent.kind;
  return kinds;
}

inline Stream build_stream(const std::vector<AgentPlan>& plans, const TrafficModel& model, std::uint64_t epoch,
                           std::uint64_t shuffle_seed) {
  std::vector<Batch> batches = emit_batches(plans, model, epoch);
  return collect(batches, shuffle_seed);
}

}  // namespace chaffwin
