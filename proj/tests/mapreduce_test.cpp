#include <gtest/gtest.h>

#include <numeric>

#include "chaffwin/mapreduce.hpp"
#include "chaffwin/traffic.hpp"
#include "chaffwin/workflow.hpp"
#include "support/golden.hpp"
#include "support/random_streams.hpp"
#include "support/reference_interpreter.hpp"

namespace chaffwin {
namespace {

using testing::random_small_stream;
using testing::reference_run;

const std::vector<JobSpec> kJobs = {{JobKind::PageHits}, {JobKind::SessionStats, 1800}, {JobKind::TrendingTerms, 1800, 3}};

// Builds a one-agent stream straight from records; the engine never looks at MACs.
Stream stream_of(const std::vector<LogRecord>& recs, const std::string& agent = "a") {
  Stream s;
  s.epoch = 1;
  s.manifest.push_back(ManifestEntry{AgentId(agent), recs.size(), Mac{}});
  for (std::size_t i = 0; i < recs.size(); ++i) s.records.push_back(TaggedRecord{Tag{AgentId(agent), i, Mac{}}, format_clf(recs[i])});
  return s;
}

LogRecord at(std::string ip, std::int64_t ts, std::string path = "/", std::string query = "") {
  LogRecord r;
  r.client_ip = std::move(ip);
  r.timestamp = ts;
  r.path = std::move(path);
  r.query = std::move(query);
  return r;
}

std::map<std::string, std::string> rows_by_key(const JobOutput& out) {
  std::map<std::string, std::string> m;
  for (const auto& r : out.rows) m[r.logical_key] = r.value;
  return m;
}

TEST(Jobs, SessionStatsSplitsOnGap) {
  Stream s = stream_of({at("10.0.0.1", 4000), at("10.0.0.1", 0), at("10.0.0.1", 10)});
  auto rows = rows_by_key(run_job({JobKind::SessionStats, 1800}, s, 2));
  EXPECT_EQ(rows.at("10.0.0.1"), "sessions=2;total_duration=10;requests=3");
}

TEST(Jobs, SessionGapIsExclusiveBoundary) {
  Stream s = stream_of({at("1.1.1.1", 100), at("1.1.1.1", 1899), at("1.1.1.1", 3699)});
  // 1799 stays in the session, 1800 starts a new one.
  EXPECT_EQ(rows_by_key(run_job({JobKind::SessionStats, 1800}, s, 1)).at("1.1.1.1"),
            "sessions=2;total_duration=1799;requests=3");
}

TEST(Jobs, TrendingTermsCountsAndFolds) {
  Stream s = stream_of({at("1.1.1.1", 0, "/search", "q=shoes"), at("1.1.1.1", 1, "/search", "q=Shoes"),
                        at("1.1.1.1", 2, "/search", "page=2&q=SHOES"), at("1.1.1.1", 3, "/search", "q=hats"),
                        at("1.1.1.1", 4, "/shop", "q=boots"), at("1.1.1.1", 5, "/search", "q=red%20hats")});
  auto out = run_job({JobKind::TrendingTerms, 1800, 10}, s, 1);
  auto rows = rows_by_key(out);
  EXPECT_EQ(rows, (std::map<std::string, std::string>{{"shoes", "3"}, {"hats", "1"}, {"red hats", "1"}}));
  EXPECT_EQ(out.parse_errors[0].parse_errors, 0u);
}

TEST(Jobs, TrendingTermsTopKBreaksTiesByKey) {
  Stream s = stream_of({at("1.1.1.1", 0, "/search", "q=b"), at("1.1.1.1", 1, "/search", "q=a"),
                        at("1.1.1.1", 2, "/search", "q=c"), at("1.1.1.1", 3, "/search", "q=c")});
  auto rows = rows_by_key(run_job({JobKind::TrendingTerms, 1800, 2}, s, 3));
  EXPECT_EQ(rows, (std::map<std::string, std::string>{{"a", "1"}, {"c", "2"}}));
}

TEST(Jobs, MalformedEscapeCountsAsParseError) {
  Stream s = stream_of({at("1.1.1.1", 0, "/search", "q=bad%zz"), at("1.1.1.1", 1, "/search", "q=ok")});
  s.records.push_back(TaggedRecord{Tag{AgentId("a"), 2, Mac{}}, "not a log line"});
  ++s.manifest[0].count;
  auto out = run_job({JobKind::TrendingTerms, 1800, 10}, s, 2);
  EXPECT_EQ(out.parse_errors[0].parse_errors, 2u);
  EXPECT_EQ(rows_by_key(out), (std::map<std::string, std::string>{{"ok", "1"}}));
  EXPECT_EQ(run_job({JobKind::PageHits}, s, 2).parse_errors[0].parse_errors, 1u);
}

TEST(Engine, EmptyStreamGivesNoRowsButListsAgents) {
  Stream s = stream_of({});
  for (const auto& job : kJobs) {
    auto out = run_job(job, s, 4);
    EXPECT_TRUE(out.rows.empty());
    ASSERT_EQ(out.parse_errors.size(), 1u);
    EXPECT_EQ(out.parse_errors[0].parse_errors, 0u);
  }
}

TEST(Engine, SameKeyUnderTwoAgentsStaysSeparate) {
  Stream s = stream_of({at("1.1.1.1", 0, "/x")}, "a");
  s.manifest.push_back(ManifestEntry{AgentId("b"), 2, Mac::from_hex(std::string(64, 'b'))});
  s.records.push_back(TaggedRecord{Tag{AgentId("b"), 0, Mac{}}, format_clf(at("1.1.1.1", 1, "/x"))});
  s.records.push_back(TaggedRecord{Tag{AgentId("b"), 1, Mac{}}, format_clf(at("1.1.1.1", 2, "/x"))});
  auto out = run_job({JobKind::PageHits}, s, 2);
  ASSERT_EQ(out.rows.size(), 2u);
  EXPECT_EQ(out.rows[0].agent_id, AgentId("a"));
  EXPECT_EQ(out.rows[0].value, "1");
  EXPECT_EQ(out.rows[1].agent_id, AgentId("b"));
  EXPECT_EQ(out.rows[1].value, "2");
  EXPECT_EQ(out.rows[1].token, s.manifest[1].token);
}

TEST(Engine, RejectsRecordOutsideManifest) {
  Stream s = stream_of({at("1.1.1.1", 0)});
  s.records[0].tag.agent_id = AgentId("ghost");
  EXPECT_THROW(run_job({JobKind::PageHits}, s, 1), FormatError);
  EXPECT_THROW(run_job({JobKind::PageHits}, stream_of({}), 0), ConfigError);
  EXPECT_THROW(run_job({JobKind::TrendingTerms, 1800, 0}, stream_of({}), 1), ConfigError);
  EXPECT_THROW(run_job({JobKind::SessionStats, 0}, stream_of({}), 1), ConfigError);
}

TEST(Engine, MatchesReferenceOnSmallRandomStreams) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Stream s = random_small_stream(seed);
    for (const auto& job : kJobs) {
      auto expected = reference_run(job, s);
      for (std::size_t workers : {1u, 3u, 8u}) {
        ASSERT_EQ(run_job(job, s, workers), expected) << "seed " << seed << " job " << job.name() << " workers " << workers;
      }
    }
  }
}

TEST(Engine, MatchesReferenceOnGeneratedTraffic) {
  SecretKey shared = SecretKey::from_seed(3);
  for (std::uint64_t total : {1000u, 5000u}) {
    auto plans = make_roster(3, 2, total / 5, shared, total);
    Stream s = build_stream(plans, TrafficModel::default_model(), 2, 9);
    for (const auto& job : kJobs) {
      auto expected = reference_run(job, s);
      EXPECT_EQ(run_job(job, s, 1), expected) << job.name();
      EXPECT_EQ(run_job(job, s, 8), expected) << job.name();
    }
  }
}

TEST(Engine, WorkIsConservedAndTokensEchoed) {
  Stream s = random_small_stream(42, 200);
  RunStats stats;
  auto out = run_job({JobKind::PageHits}, s, 4, &stats);
  std::uint64_t processed = 0;
  for (std::size_t a = 0; a < s.manifest.size(); ++a) {
    EXPECT_EQ(stats.agents[a].mapped + stats.agents[a].parse_errors, s.manifest[a].count);
    processed += stats.agents[a].mapped + stats.agents[a].parse_errors;
  }
  EXPECT_EQ(processed, s.records.size());
  std::uint64_t hits = 0;
  for (const auto& row : out.rows) {
    EXPECT_EQ(row.token, s.find_agent(row.agent_id)->token);
    hits += std::stoull(row.value);
  }
  std::uint64_t mapped = 0;
  for (const auto& a : stats.agents) mapped += a.mapped;
  EXPECT_EQ(hits, mapped);
}

JobOutput golden_output() {
  Stream s = stream_of({at("192.0.2.1", 10, "/search", "q=Shoes"), at("192.0.2.1", 20, "/index.html")}, "ag-1");
  s.manifest[0].token = Mac::from_hex("00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff");
  s.manifest.push_back(ManifestEntry{AgentId("ag-2"), 0, Mac{}});
  return run_job({JobKind::PageHits}, s, 2);
}

TEST(OutputFormat, Golden) {
  std::string bytes = serialize_output(golden_output());
  testing::maybe_update_golden("page_hits.out", bytes);
  EXPECT_EQ(bytes, testing::read_golden("page_hits.out"));
  EXPECT_EQ(deserialize_output(bytes), golden_output());
}

TEST(OutputFormat, RoundTripsGeneratedOutputs) {
  std::size_t rows = 0;
  for (std::uint64_t seed = 0; seed < 600; ++seed) {
    Stream s = random_small_stream(seed, 80);
    for (const auto& job : kJobs) {
      auto out = run_job(job, s, 2);
      ASSERT_EQ(deserialize_output(serialize_output(out), job), out);
      rows += out.rows.size();
    }
  }
  EXPECT_GE(rows, 10000u);
}

TEST(OutputFormat, RejectsReorderedAndMalformedRows) {
  std::string good = serialize_output(golden_output());
  std::vector<std::string> lines;
  for (auto l : split_lines(good)) lines.emplace_back(l);
  ASSERT_EQ(lines.size(), 5u);  // header, 2 E lines, 2 rows
  auto join = [](const std::vector<std::string>& ls) {
    std::string s;
    for (const auto& l : ls) s += l + "\n";
    return s;
  };
  auto swapped = lines;
  std::swap(swapped[3], swapped[4]);
  EXPECT_THROW(deserialize_output(join(swapped)), FormatError);
  auto dup = lines;
  dup[4] = dup[3];
  EXPECT_THROW(deserialize_output(join(dup)), FormatError);
  auto short_count = lines;
  short_count.pop_back();
  EXPECT_THROW(deserialize_output(join(short_count)), FormatError);
  auto no_error_line = lines;
  no_error_line.erase(no_error_line.begin() + 1);
  EXPECT_THROW(deserialize_output(join(no_error_line)), FormatError);
  auto bad_job = lines;
  bad_job[0] = "#CWO1\tword_count\t1\t2";
  EXPECT_THROW(deserialize_output(join(bad_job)), FormatError);
  auto upper = lines;
  for (char& c : upper[3]) c = c == 'a' ? 'A' : c;
  EXPECT_THROW(deserialize_output(join(upper)), FormatError);
}

}  // namespace
}  // namespace chaffwin
