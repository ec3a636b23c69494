#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "bessom/error.hpp"

namespace bessom {

/// Calendar date (UTC), the key of the record dataset.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) {
      throw ParseError("invalid calendar date " + std::to_string(y) + "-" + std::to_string(m) + "-" + std::to_string(d));
    }
    days_ = std::chrono::sys_days{ymd};
  }

  /// Strict `YYYY-MM-DD`.
  static Date parse(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
      throw ParseError("expected YYYY-MM-DD, got '" + std::string(text) + "'");
    }
    int y = 0;
    unsigned m = 0, d = 0;
    auto field = [&](std::size_t pos, std::size_t len, auto& out) {
      const char* first = text.data() + pos;
      auto [ptr, ec] = std::from_chars(first, first + len, out);
      if (ec != std::errc{} || ptr != first + len) {
        throw ParseError("expected YYYY-MM-DD, got '" + std::string(text) + "'");
      }
    };
    field(0, 4, y);
    field(5, 2, m);
    field(8, 2, d);
    return Date(y, m, d);
  }

  std::string iso() const {
    const std::chrono::year_month_day ymd{days_};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
  }

  std::chrono::sys_days days() const { return days_; }
  Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }
  std::int64_t epoch_seconds() const {
    return std::chrono::duration_cast<std::chrono::seconds>(days_.time_since_epoch()).count();
  }

  friend auto operator<=>(const Date&, const Date&) = default;
  friend bool operator==(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

/// UTC calendar date containing `epoch_s`.
inline Date date_of(double epoch_s) {
  const auto secs = std::chrono::seconds{static_cast<std::int64_t>(std::floor(epoch_s))};
  return Date(std::chrono::floor<std::chrono::days>(std::chrono::sys_seconds{secs}));
}

/// `YYYY-MM-DDTHH:MM:SSZ`, truncated to whole seconds.
inline std::string format_iso_utc(std::int64_t epoch_s) {
  const std::chrono::sys_seconds tp{std::chrono::seconds{epoch_s}};
  const auto day = std::chrono::floor<std::chrono::days>(tp);
  const std::chrono::hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", Date(day).iso().c_str(), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return buf;
}

/// Epoch seconds (`1735689600`, `1735689600.5`) or ISO-8601
/// (`2025-01-01T00:00:00`, optional fraction, `Z` or `+hh:mm` offset; a space may replace `T`).
/// A timestamp without an offset is read as UTC.
inline double parse_timestamp(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) throw ParseError("empty timestamp");

  if (text.size() < 10 || text[4] != '-') {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
      throw ParseError("unparseable timestamp '" + std::string(text) + "'");
    }
    return value;
  }

  static const std::regex iso_re(
      R"(^(\d{4}-\d{2}-\d{2})[T ](\d{2}):(\d{2}):(\d{2})(\.\d+)?(Z|[+-]\d{2}:?\d{2})?$)");
  std::cmatch m;
  if (!std::regex_match(text.data(), text.data() + text.size(), m, iso_re)) {
    throw ParseError("unparseable timestamp '" + std::string(text) + "'");
  }
  const Date date = Date::parse(m[1].str());
  const int hh = std::stoi(m[2].str());
  const int mm = std::stoi(m[3].str());
  const int ss = std::stoi(m[4].str());
  if (hh > 23 || mm > 59 || ss > 60) throw ParseError("time of day out of range in '" + std::string(text) + "'");
  double value = static_cast<double>(date.epoch_seconds() + hh * 3600 + mm * 60 + ss);
  if (m[5].matched) value += std::stod("0" + m[5].str());
  if (m[6].matched && m[6].str() != "Z") {
    std::string off = m[6].str();
    const int sign = off[0] == '-' ? -1 : 1;
    off.erase(std::remove(off.begin(), off.end(), ':'), off.end());
    const int oh = std::stoi(off.substr(1, 2));
    const int om = std::stoi(off.substr(3, 2));
    value -= sign * (oh * 3600 + om * 60);
  }
  return value;
}

/// Every `YYYY-MM-DD` token in free text, in order of appearance.
/// A token shaped like a date but naming an impossible day (2025-02-30) is an error, not skipped.
inline std::vector<Date> extract_iso_dates(std::string_view text) {
  static const std::regex date_re(R"((^|[^0-9])(\d{4}-\d{2}-\d{2})(?![0-9]))");
  std::vector<Date> out;
  for (std::cregex_iterator it(text.data(), text.data() + text.size(), date_re), end; it != end; ++it) {
    out.push_back(Date::parse((*it)[2].str()));
  }
  return out;
}

}  // namespace bessom
