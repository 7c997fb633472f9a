#include <gtest/gtest.h>

#include "chaffwin/analyzer.hpp"
#include "chaffwin/traffic.hpp"
#include "chaffwin/workflow.hpp"

namespace chaffwin {
namespace {

const std::vector<JobSpec> kJobs = {{JobKind::PageHits}, {JobKind::SessionStats, 1800}, {JobKind::TrendingTerms, 1800, 5}};

CleanOutput winnowed(const JobSpec& job, const std::vector<AgentPlan>& plans, const SecretKey& key, std::size_t workers = 2) {
  Stream s = build_stream(plans, TrafficModel::default_model(), 3, 17);
  // Every hop goes through its file format.
  Stream loaded = deserialize_stream(serialize_stream(s));
  JobOutput out = deserialize_output(serialize_output(run_job(job, loaded, workers)), job);
  return winnow_results(key, out);
}

TEST(Winnow, KeepsOnlyRealAgents) {
  SecretKey shared = SecretKey::from_seed(10);
  auto plans = make_roster(2, 1, 300, shared, 5);
  Stream s = build_stream(plans, TrafficModel::default_model(), 3, 1);
  JobOutput out = run_job({JobKind::PageHits}, s, 2);
  CleanOutput clean = winnow_results(shared, out);
  std::vector<AgentId> real, fake;
  for (const auto& p : plans) (p.agent.kind == AgentKind::Real ? real : fake).push_back(p.agent.agent_id);
  std::sort(real.begin(), real.end());
  EXPECT_EQ(clean.verified_agent_ids, real);
  EXPECT_EQ(clean.dropped_agent_ids, fake);
  EXPECT_TRUE(clean.integrity_flags.empty());
  std::uint64_t total = 0;
  for (const auto& r : clean.rows) total += std::stoull(r.value);
  EXPECT_EQ(total, 600u);
}

TEST(Winnow, AllFakeGivesEmptyResult) {
  SecretKey shared = SecretKey::from_seed(10);
  auto plans = make_roster(0, 3, 100, shared, 5);
  CleanOutput clean = winnowed({JobKind::PageHits}, plans, shared);
  EXPECT_TRUE(clean.rows.empty());
  EXPECT_TRUE(clean.verified_agent_ids.empty());
  EXPECT_EQ(clean.dropped_agent_ids.size(), 3u);
}

TEST(Winnow, WrongKeyDropsEverything) {
  SecretKey shared = SecretKey::from_seed(10);
  auto plans = make_roster(2, 0, 100, shared, 5);
  CleanOutput clean = winnowed({JobKind::PageHits}, plans, SecretKey::from_seed(11));
  EXPECT_TRUE(clean.rows.empty());
  EXPECT_EQ(clean.dropped_agent_ids.size(), 2u);
}

// Clean results with chaff present equal the wheat-only results byte for byte.
TEST(Winnow, ChaffDoesNotChangeTheResult) {
  SecretKey shared = SecretKey::from_seed(21);
  for (auto [real, fake] : {std::pair<std::size_t, std::size_t>{2, 1}, {2, 2}, {2, 4}}) {
    auto plans = make_roster(real, fake, 250, shared, 100 + fake);
    for (const auto& job : kJobs) {
      std::string with_chaff = serialize_clean(winnowed(job, plans, shared, 4));
      std::string wheat_only = serialize_clean(winnowed(job, real_only(plans), shared, 1));
      EXPECT_EQ(with_chaff, wheat_only) << job.name() << " r=" << fake << "/" << real;
    }
  }
}

OutputRow row(const std::string& agent, const Mac& token, const std::string& key, const std::string& value) {
  return OutputRow{AgentId(agent), token, key, value};
}

TEST(Winnow, MergesAcrossVerifiedAgents) {
  SecretKey k = SecretKey::from_seed(1);
  JobOutput out;
  out.job = {JobKind::SessionStats, 1800};
  out.epoch = 4;
  Mac ta = compute_agent_token(k, AgentId("a"), 4), tb = compute_agent_token(k, AgentId("b"), 4);
  out.rows = {row("a", ta, "1.1.1.1", "sessions=1;total_duration=5;requests=2"),
              row("b", tb, "1.1.1.1", "sessions=2;total_duration=7;requests=3"),
              row("b", tb, "2.2.2.2", "sessions=1;total_duration=0;requests=1")};
  CleanOutput clean = winnow_results(k, out);
  ASSERT_EQ(clean.rows.size(), 2u);
  EXPECT_EQ(clean.rows[0].value, "sessions=3;total_duration=12;requests=5");
  EXPECT_EQ(clean.rows[1].value, "sessions=1;total_duration=0;requests=1");
}

TEST(Winnow, TrendingTermsReappliesTopK) {
  SecretKey k = SecretKey::from_seed(1);
  JobOutput out;
  out.job = {JobKind::TrendingTerms, 1800, 2};
  out.epoch = 1;
  Mac ta = compute_agent_token(k, AgentId("a"), 1), tb = compute_agent_token(k, AgentId("b"), 1);
  out.rows = {row("a", ta, "boots", "3"), row("a", ta, "hats", "2"), row("b", tb, "hats", "2"), row("b", tb, "socks", "4")};
  CleanOutput clean = winnow_results(k, out);
  EXPECT_EQ(clean.rows, (std::vector<CleanRow>{{"hats", "4"}, {"socks", "4"}}));
}

TEST(Winnow, InconsistentTokensDropAgentAndFlag) {
  SecretKey k = SecretKey::from_seed(1);
  JobOutput out;
  out.epoch = 1;
  Mac ta = compute_agent_token(k, AgentId("a"), 1);
  out.rows = {row("a", ta, "/x", "1"), row("a", Mac{}, "/y", "1")};
  CleanOutput clean = winnow_results(k, out);
  EXPECT_TRUE(clean.rows.empty());
  EXPECT_EQ(clean.integrity_flags, std::vector<std::string>{"inconsistent-tokens:a:1/2"});
}

TEST(Winnow, RejectsUngroupedAndDuplicateRows) {
  SecretKey k = SecretKey::from_seed(1);
  JobOutput out;
  out.epoch = 1;
  out.rows = {row("a", Mac{}, "/x", "1"), row("b", Mac{}, "/x", "1"), row("a", Mac{}, "/y", "1")};
  EXPECT_THROW(winnow_results(k, out), FormatError);
  out.rows = {row("a", Mac{}, "/x", "1"), row("a", Mac{}, "/x", "1")};
  EXPECT_THROW(winnow_results(k, out), FormatError);
}

TEST(Metrics, ReportsExactRatioAndFlags) {
  SecretKey shared = SecretKey::from_seed(3);
  auto plans = make_roster(2, 3, 120, shared, 8);
  Stream s = build_stream(plans, TrafficModel::default_model(), 1, 1);
  JobOutput out = run_job({JobKind::PageHits}, s, 2);
  CleanOutput clean = winnow_results(shared, out);
  MetricsReport m = report_metrics(clean, out, ManifestInfo::from_stream(s, kinds_of(plans)));
  EXPECT_EQ(m.real_records, 240u);
  EXPECT_EQ(m.fake_records, 360u);
  EXPECT_DOUBLE_EQ(m.chaff_ratio, 1.5);
  EXPECT_EQ(m.records_processed, 600u);
  EXPECT_EQ(m.rows_in, m.rows_kept + m.rows_dropped);
  EXPECT_TRUE(m.integrity_flags.empty());
  EXPECT_NE(m.to_text().find("chaff_ratio=1.5\n"), std::string::npos);

  // A tampered token on a real agent surfaces as a flag.
  const AgentId victim = clean.verified_agent_ids.front();
  for (auto& r : out.rows) {
    if (r.agent_id == victim) r.token.mutable_bytes()[0] ^= 1;
  }
  CleanOutput tampered = winnow_results(shared, out);
  MetricsReport t = report_metrics(tampered, out, ManifestInfo::from_stream(s, kinds_of(plans)));
  EXPECT_NE(std::find(t.integrity_flags.begin(), t.integrity_flags.end(), "real-agent-dropped:" + victim.str()),
            t.integrity_flags.end());
}

TEST(Metrics, NoChaffMeansZeroRatioAndNothingDropped) {
  SecretKey shared = SecretKey::from_seed(3);
  auto plans = make_roster(3, 0, 50, shared, 8);
  Stream s = build_stream(plans, TrafficModel::default_model(), 1, 1);
  JobOutput out = run_job({JobKind::SessionStats, 1800}, s, 2);
  CleanOutput clean = winnow_results(shared, out);
  MetricsReport m = report_metrics(clean, out, ManifestInfo::from_stream(s, kinds_of(plans)));
  EXPECT_EQ(m.chaff_ratio, 0.0);
  EXPECT_TRUE(m.dropped_agent_ids.empty());
  EXPECT_EQ(m.verified_agent_ids.size(), 3u);
  EXPECT_NE(m.to_text().find("chaff_ratio=0\n"), std::string::npos);
}

TEST(CleanFormat, RoundTripsAndRejectsDisorder) {
  std::size_t rows = 0;
  SecretKey shared = SecretKey::from_seed(4);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto plans = make_roster(3, 1, 1200, shared, seed);
    for (const auto& job : kJobs) {
      CleanOutput c = winnowed(job, plans, shared);
      CleanOutput back = deserialize_clean(serialize_clean(c), job);
      EXPECT_EQ(back.rows, c.rows);
      EXPECT_EQ(back.job, c.job);
      rows += c.rows.size();
    }
  }
  EXPECT_GT(rows, 0u);
  EXPECT_THROW(deserialize_clean("#CWC1\tpage_hits\t2\nC\tL3k=\t1\nC\tL3g=\t1\n"), FormatError);
  EXPECT_THROW(deserialize_clean("#CWC1\tpage_hits\t1\nC\tL3g=\t\n"), FormatError);
  EXPECT_NO_THROW(deserialize_clean("#CWC1\tpage_hits\t2\nC\tL3g=\t1\nC\tL3k=\t1\n"));
}

}  // namespace
}  // namespace chaffwin
