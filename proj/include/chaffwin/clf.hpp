#pragma once

// Combined Log Format:
//   host ident authuser [dd/Mon/yyyy:HH:MM:SS +0000] "METHOD target PROTO" status bytes "referer" "user-agent"
//
// The parser accepts only the canonical form that format_clf emits, so
// format_clf(parse_clf(line)) == line holds for every accepted line.

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "chaffwin/encoding.hpp"
#include "chaffwin/errors.hpp"

namespace chaffwin {

enum class HttpMethod { Get, Post, Put, Delete, Head };

inline std::string_view method_name(HttpMethod method) {
  switch (method) {
    case HttpMethod::Get: return "GET";
    case HttpMethod::Post: return "POST";
    case HttpMethod::Put: return "PUT";
    case HttpMethod::Delete: return "DELETE";
    case HttpMethod::Head: return "HEAD";
  }
  return "GET";
}

inline std::optional<HttpMethod> parse_method(std::string_view name) {
  if (name == "GET") return HttpMethod::Get;
  if (name == "POST") return HttpMethod::Post;
  if (name == "PUT") return HttpMethod::Put;
  if (name == "DELETE") return HttpMethod::Delete;
  if (name == "HEAD") return HttpMethod::Head;
  return std::nullopt;
}

struct LogRecord {
  std::string client_ip;
  std::string ident = "-";
  std::string user = "-";
  std::int64_t timestamp = 0;  // seconds since the epoch, UTC
  HttpMethod method = HttpMethod::Get;
  std::string path = "/";
  std::string query;  // without the leading '?'
  std::string protocol = "HTTP/1.1";
  int status = 200;
  std::optional<std::uint64_t> bytes;  // nullopt renders as "-"
  std::string referer = "-";           // raw quoted content, escapes kept verbatim
  std::string user_agent;

  bool operator==(const LogRecord&) const = default;
};

class ClfParseError : public FormatError {
 public:
  ClfParseError(std::size_t offset, std::string reason)
      : FormatError("CLF parse error at byte " + std::to_string(offset) + ": " + reason),
        offset_(offset),
        reason_(std::move(reason)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

struct ClfError {
  std::size_t offset = 0;
  std::string reason;
};

namespace detail {

inline constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                             "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline bool valid_ipv4(std::string_view ip) {
  auto parts = split(ip, '.');
  if (parts.size() != 4) return false;
  for (std::string_view part : parts) {
    if (part.size() > 3) return false;
    auto octet = parse_decimal<unsigned>(part);
    if (!octet || *octet > 255) return false;
  }
  return true;
}

// Token fields (ident, authuser): non-empty, no space, quote or control byte.
inline bool valid_token(std::string_view token) {
  if (token.empty()) return false;
  for (char c : token) {
    auto u = static_cast<unsigned char>(c);
    if (u <= 0x20 || u == 0x7f || c == '"') return false;
  }
  return true;
}

inline bool valid_target_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return u > 0x20 && u != 0x7f && c != '"';
}

class ClfCursor {
 public:
  explicit ClfCursor(std::string_view line) : line_(line) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == line_.size(); }

  bool fail(std::string reason, ClfError* err) const { return fail_at(pos_, std::move(reason), err); }
  static bool fail_at(std::size_t offset, std::string reason, ClfError* err) {
    if (err) *err = ClfError{offset, std::move(reason)};
    return false;
  }

  bool expect(char c) {
    if (pos_ < line_.size() && line_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string_view until(char c) {
    std::size_t end = line_.find(c, pos_);
    if (end == std::string_view::npos) end = line_.size();
    std::string_view out = line_.substr(pos_, end - pos_);
    pos_ = end;
    return out;
  }

  std::string_view take(std::size_t n) {
    n = std::min(n, line_.size() - pos_);
    std::string_view out = line_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  // Content of a double-quoted field, cursor positioned on the opening quote.
  // Backslash escapes are kept verbatim.
  std::optional<std::string_view> quoted() {
    if (!expect('"')) return std::nullopt;
    std::size_t start = pos_;
    while (pos_ < line_.size()) {
      char c = line_[pos_];
      auto u = static_cast<unsigned char>(c);
      if (u < 0x20 || u == 0x7f) return std::nullopt;
      if (c == '\\') {
        if (pos_ + 1 >= line_.size()) return std::nullopt;
        auto next = static_cast<unsigned char>(line_[pos_ + 1]);
        if (next < 0x20 || next == 0x7f) return std::nullopt;
        pos_ += 2;
        continue;
      }
      if (c == '"') {
        std::string_view out = line_.substr(start, pos_ - start);
        ++pos_;
        return out;
      }
      ++pos_;
    }
    return std::nullopt;
  }

 private:
  std::string_view line_;
  std::size_t pos_ = 0;
};

// "dd/Mon/yyyy:HH:MM:SS +0000"
inline bool parse_timestamp(std::string_view text, std::int64_t& out) {
  if (text.size() != 26) return false;
  auto num = [&](std::size_t at, std::size_t len) -> int {
    int v = 0;
    for (std::size_t i = at; i < at + len; ++i) {
      if (!is_digit(text[i])) return -1;
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  if (text[2] != '/' || text[6] != '/' || text[11] != ':' || text[14] != ':' || text[17] != ':' ||
      text.substr(20) != " +0000") {
    return false;
  }
  int day = num(0, 2), year = num(7, 4), hour = num(12, 2), minute = num(15, 2), second = num(18, 2);
  unsigned month = 0;
  for (unsigned m = 0; m < 12; ++m) {
    if (text.substr(3, 3) == kMonths[m]) month = m + 1;
  }
  if (day < 0 || year < 1970 || hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 ||
      second > 59 || month == 0) {
    return false;
  }
  std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                  std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return false;
  std::int64_t days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  out = days * 86400 + hour * 3600 + minute * 60 + second;
  return true;
}

inline std::string format_timestamp(std::int64_t timestamp) {
  using namespace std::chrono;
  std::int64_t days = timestamp >= 0 ? timestamp / 86400 : (timestamp - 86399) / 86400;
  std::int64_t secs = timestamp - days * 86400;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02u/%s/%04d:%02d:%02d:%02d +0000", static_cast<unsigned>(ymd.day()),
                kMonths[static_cast<unsigned>(ymd.month()) - 1].data(), static_cast<int>(ymd.year()),
                static_cast<int>(secs / 3600), static_cast<int>(secs / 60 % 60), static_cast<int>(secs % 60));
  return buf;
}

inline bool valid_protocol(std::string_view proto) {
  if (proto.substr(0, 5) != "HTTP/") return false;
  std::string_view version = proto.substr(5);
  std::size_t dot = version.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == version.size()) return false;
  for (std::size_t i = 0; i < version.size(); ++i) {
    if (i != dot && !is_digit(version[i])) return false;
  }
  return true;
}

}  // namespace detail

// Non-throwing parse. On failure returns nullopt and, if err is set, fills it with
// the byte offset and a reason naming the offending field.
inline std::optional<LogRecord> try_parse_clf(std::string_view line, ClfError* err = nullptr) {
  using detail::ClfCursor;
  ClfCursor cur(line);
  LogRecord rec;

  std::size_t at = cur.pos();
  std::string_view ip = cur.until(' ');
  if (!detail::valid_ipv4(ip)) return ClfCursor::fail_at(at, "host: expected dotted-quad IPv4", err), std::nullopt;
  rec.client_ip = std::string(ip);
  if (!cur.expect(' ')) return cur.fail("expected space after host", err), std::nullopt;

  at = cur.pos();
  std::string_view ident = cur.until(' ');
  if (!detail::valid_token(ident)) return ClfCursor::fail_at(at, "ident: invalid token", err), std::nullopt;
  rec.ident = std::string(ident);
  if (!cur.expect(' ')) return cur.fail("expected space after ident", err), std::nullopt;

  at = cur.pos();
  std::string_view user = cur.until(' ');
  if (!detail::valid_token(user)) return ClfCursor::fail_at(at, "authuser: invalid token", err), std::nullopt;
  rec.user = std::string(user);
  if (!cur.expect(' ')) return cur.fail("expected space after authuser", err), std::nullopt;

  at = cur.pos();
  if (!cur.expect('[')) return cur.fail("date: expected '['", err), std::nullopt;
  std::string_view date = cur.until(']');
  if (!detail::parse_timestamp(date, rec.timestamp) || !cur.expect(']')) {
    return ClfCursor::fail_at(at, "date: expected [dd/Mon/yyyy:HH:MM:SS +0000]", err), std::nullopt;
  }
  if (!cur.expect(' ')) return cur.fail("expected space after date", err), std::nullopt;

  at = cur.pos();
  if (!cur.expect('"')) return cur.fail("request: expected '\"'", err), std::nullopt;
  std::size_t method_at = cur.pos();
  auto method = parse_method(cur.until(' '));
  if (!method) return ClfCursor::fail_at(method_at, "request: unsupported method", err), std::nullopt;
  rec.method = *method;
  if (!cur.expect(' ')) return cur.fail("request: expected space after method", err), std::nullopt;
  std::size_t target_at = cur.pos();
  std::string_view target = cur.until(' ');
  if (target.empty() || target[0] != '/') {
    return ClfCursor::fail_at(target_at, "request: target must start with '/'", err), std::nullopt;
  }
  for (char c : target) {
    if (!detail::valid_target_char(c)) {
      return ClfCursor::fail_at(target_at, "request: invalid character in target", err), std::nullopt;
    }
  }
  std::size_t qmark = target.find('?');
  if (qmark == std::string_view::npos) {
    rec.path = std::string(target);
  } else {
    rec.path = std::string(target.substr(0, qmark));
    rec.query = std::string(target.substr(qmark + 1));
    if (rec.query.empty()) {
      return ClfCursor::fail_at(target_at + qmark, "request: empty query after '?'", err), std::nullopt;
    }
  }
  if (!cur.expect(' ')) return cur.fail("request: expected space after target", err), std::nullopt;
  std::size_t proto_at = cur.pos();
  std::string_view proto = cur.until('"');
  if (!detail::valid_protocol(proto)) {
    return ClfCursor::fail_at(proto_at, "request: expected HTTP/<major>.<minor>", err), std::nullopt;
  }
  rec.protocol = std::string(proto);
  if (!cur.expect('"')) return cur.fail("request: unterminated", err), std::nullopt;
  if (!cur.expect(' ')) return cur.fail("expected space after request", err), std::nullopt;

  at = cur.pos();
  std::string_view status = cur.take(3);
  auto status_value = status.size() == 3 ? parse_decimal<int>(status) : std::nullopt;
  if (!status_value || *status_value < 100 || *status_value > 599) {
    return ClfCursor::fail_at(at, "status: expected a code in 100-599", err), std::nullopt;
  }
  rec.status = *status_value;
  if (!cur.expect(' ')) return cur.fail("status: expected space after 3-digit code", err), std::nullopt;

  at = cur.pos();
  std::string_view bytes = cur.until(' ');
  if (bytes != "-") {
    auto value = parse_decimal<std::uint64_t>(bytes);
    if (!value) return ClfCursor::fail_at(at, "bytes: expected a decimal count or '-'", err), std::nullopt;
    rec.bytes = *value;
  }
  if (!cur.expect(' ')) return cur.fail("expected space after bytes", err), std::nullopt;

  at = cur.pos();
  auto referer = cur.quoted();
  if (!referer) return ClfCursor::fail_at(at, "referer: expected a quoted string", err), std::nullopt;
  rec.referer = std::string(*referer);
  if (!cur.expect(' ')) return cur.fail("expected space after referer", err), std::nullopt;

  at = cur.pos();
  auto agent = cur.quoted();
  if (!agent) return ClfCursor::fail_at(at, "user-agent: expected a quoted string", err), std::nullopt;
  rec.user_agent = std::string(*agent);

  if (!cur.done()) return cur.fail("trailing bytes after user-agent", err), std::nullopt;
  return rec;
}

inline LogRecord parse_clf(std::string_view line) {
  ClfError err;
  auto rec = try_parse_clf(line, &err);
  if (!rec) throw ClfParseError(err.offset, err.reason);
  return *rec;
}

inline std::string format_clf(const LogRecord& rec) {
  std::string out;
  out.reserve(160 + rec.path.size() + rec.query.size() + rec.referer.size() + rec.user_agent.size());
  out += rec.client_ip;
  out += ' ';
  out += rec.ident;
  out += ' ';
  out += rec.user;
  out += " [";
  out += detail::format_timestamp(rec.timestamp);
  out += "] \"";
  out += method_name(rec.method);
  out += ' ';
  out += rec.path;
  if (!rec.query.empty()) {
    out += '?';
    out += rec.query;
  }
  out += ' ';
  out += rec.protocol;
  out += "\" ";
  out += std::to_string(rec.status);
  out += ' ';
  out += rec.bytes ? std::to_string(*rec.bytes) : std::string("-");
  out += " \"";
  out += rec.referer;
  out += "\" \"";
  out += rec.user_agent;
  out += '"';
  return out;
}

}  // namespace chaffwin
