#include <gtest/gtest.h>

#include "chaffwin/clf.hpp"
#include "chaffwin/traffic.hpp"

namespace chaffwin {
namespace {

constexpr std::string_view kApacheExample =
    "127.0.0.1 - frank [10/Oct/2000:13:55:36 +0000] \"GET /apache_pb.gif HTTP/1.0\" 200 2326 \"-\" \"Mozilla/4.08\"";

TEST(ParseClf, ApacheDocumentationExample) {
  LogRecord rec = parse_clf(kApacheExample);
  EXPECT_EQ(rec.client_ip, "127.0.0.1");
  EXPECT_EQ(rec.ident, "-");
  EXPECT_EQ(rec.user, "frank");
  EXPECT_EQ(rec.timestamp, 971186136);  // calendar.timegm((2000, 10, 10, 13, 55, 36))
  EXPECT_EQ(rec.method, HttpMethod::Get);
  EXPECT_EQ(rec.path, "/apache_pb.gif");
  EXPECT_EQ(rec.query, "");
  EXPECT_EQ(rec.protocol, "HTTP/1.0");
  EXPECT_EQ(rec.status, 200);
  EXPECT_EQ(rec.bytes, 2326u);
  EXPECT_EQ(rec.referer, "-");
  EXPECT_EQ(rec.user_agent, "Mozilla/4.08");
  EXPECT_EQ(format_clf(rec), kApacheExample);
}

TEST(ParseClf, TimestampBoundaries) {
  auto at = [](std::string_view date) {
    return parse_clf("1.2.3.4 - - [" + std::string(date) + "] \"GET / HTTP/1.1\" 200 0 \"-\" \"x\"").timestamp;
  };
  EXPECT_EQ(at("01/Jan/1970:00:00:00 +0000"), 0);
  EXPECT_EQ(at("29/Feb/2024:23:59:59 +0000"), 1709251199);  // calendar.timegm
  EXPECT_THROW(at("29/Feb/2023:00:00:00 +0000"), ClfParseError);
  EXPECT_THROW(at("10/Oct/2000:13:55:36 +0200"), ClfParseError);
  EXPECT_THROW(at("10/Foo/2000:13:55:36 +0000"), ClfParseError);
  EXPECT_THROW(at("10/Oct/2000:24:00:00 +0000"), ClfParseError);
}

TEST(ParseClf, QuerySplitsAtFirstQuestionMark) {
  LogRecord rec = parse_clf("1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET /a?q=shoes HTTP/1.1\" 200 5 \"-\" \"ua\"");
  EXPECT_EQ(rec.path, "/a");
  EXPECT_EQ(rec.query, "q=shoes");
  rec = parse_clf("1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET /a?x=1?y=2 HTTP/1.1\" 200 5 \"-\" \"ua\"");
  EXPECT_EQ(rec.path, "/a");
  EXPECT_EQ(rec.query, "x=1?y=2");
}

TEST(ParseClf, StatusErrorNamesTheField) {
  std::string line = "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" abc 5 \"-\" \"ua\"";
  try {
    parse_clf(line);
    FAIL() << "expected a parse error";
  } catch (const ClfParseError& e) {
    EXPECT_NE(e.reason().find("status"), std::string::npos) << e.reason();
    EXPECT_EQ(e.offset(), line.find("abc"));
  }
}

TEST(ParseClf, RejectsMalformedLines) {
  const char* bad[] = {
      "",
      "1.2.3 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 5 \"-\" \"ua\"",
      "1.2.3.256 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 5 \"-\" \"ua\"",
      "1.2.3.04 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 5 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"BREW / HTTP/1.1\" 200 5 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET nopath HTTP/1.1\" 200 5 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET /a? HTTP/1.1\" 200 5 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET / FTP\" 200 5 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 700 5 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 05 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 -5 \"-\" \"ua\"",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 5 \"-\" \"ua",
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 5 \"-\" \"ua\" extra",
      "1.2.3.4  - - [10/Oct/2000:13:55:36 +0000] \"GET / HTTP/1.1\" 200 5 \"-\" \"ua\"",
  };
  for (const char* line : bad) {
    ClfError err;
    EXPECT_FALSE(try_parse_clf(line, &err).has_value()) << line;
    EXPECT_FALSE(err.reason.empty()) << line;
  }
}

TEST(ParseClf, EscapedQuotesInQuotedFieldsSurviveVerbatim) {
  std::string line =
      "1.2.3.4 - - [10/Oct/2000:13:55:36 +0000] \"HEAD /x HTTP/1.1\" 200 - \"\" \"say \\\"hi\\\" \\\\ ok\"";
  LogRecord rec = parse_clf(line);
  EXPECT_EQ(rec.method, HttpMethod::Head);
  EXPECT_FALSE(rec.bytes.has_value());
  EXPECT_EQ(rec.referer, "");
  EXPECT_EQ(rec.user_agent, "say \\\"hi\\\" \\\\ ok");
  EXPECT_EQ(format_clf(rec), line);
}

TEST(FormatClf, Canonicalization) {
  LogRecord rec;
  rec.client_ip = "10.0.0.1";
  rec.timestamp = 0;
  rec.bytes = 0;
  rec.user_agent = "ua";
  std::string line = format_clf(rec);
  EXPECT_EQ(line, "10.0.0.1 - - [01/Jan/1970:00:00:00 +0000] \"GET / HTTP/1.1\" 200 0 \"-\" \"ua\"");
  EXPECT_EQ(line.find('?'), std::string::npos);
  rec.bytes.reset();
  EXPECT_NE(format_clf(rec).find(" 200 - "), std::string::npos);
}

TEST(ClfRoundTrip, ParseFormatIdentityOnGeneratedRecords) {
  TrafficModel model = TrafficModel::default_model();
  std::size_t checked = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const LogRecord& rec : generate_wheat(model, 4000, seed)) {
      std::string line = format_clf(rec);
      LogRecord back = parse_clf(line);
      ASSERT_EQ(back, rec) << line;
      ASSERT_EQ(format_clf(back), line);
      ++checked;
    }
  }
  EXPECT_GE(checked, 10000u);
}

}  // namespace
}  // namespace chaffwin
