#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

namespace notegen {

inline constexpr const char* kDefaultDateFormat = "%Y-%m-%d %H:%M:%S";

// UTC-naive wall-clock time at second precision, stored as seconds since
// 1970-01-01 00:00:00.
struct Timestamp {
  std::int64_t seconds = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

  static Timestamp from_civil(int year, unsigned month, unsigned day, int hour = 0,
                              int minute = 0, int second = 0) {
    using namespace std::chrono;
    const sys_days days{std::chrono::year{year} / std::chrono::month{month} /
                        std::chrono::day{day}};
    return Timestamp{days.time_since_epoch().count() * 86400LL + hour * 3600LL +
                     minute * 60LL + second};
  }

  struct Civil {
    int year;
    unsigned month, day;
    int hour, minute, second;
  };

  Civil civil() const {
    using namespace std::chrono;
    std::int64_t day_count = seconds / 86400;
    std::int64_t rem = seconds % 86400;
    if (rem < 0) {
      rem += 86400;
      --day_count;
    }
    const year_month_day ymd{sys_days{days{day_count}}};
    return Civil{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                 static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                 static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60)};
  }

  // "YYYY-MM-DD HH:MM:SS"
  std::string iso() const {
    const Civil c = civil();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", c.year, c.month,
                  c.day, c.hour, c.minute, c.second);
    return buf;
  }

  // "YYYY-MM-DD HH:MM", with ":SS" appended only when seconds are non-zero so
  // that distinct timestamps never share a rendering.
  std::string minute_label() const {
    const Civil c = civil();
    char buf[32];
    if (c.second == 0) {
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d", c.year, c.month, c.day,
                    c.hour, c.minute);
    } else {
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", c.year, c.month,
                    c.day, c.hour, c.minute, c.second);
    }
    return buf;
  }
};

namespace detail {

inline std::optional<Timestamp> parse_exact(std::string_view text, const std::string& format) {
  std::tm tm{};
  tm.tm_mday = 1;
  std::istringstream in{std::string(text)};
  in.imbue(std::locale::classic());
  in >> std::get_time(&tm, format.c_str());
  if (in.fail()) return std::nullopt;

  // Fractional seconds are truncated; anything else trailing is an error.
  std::string rest;
  std::getline(in, rest, '\0');
  std::string_view tail = rest;
  if (!tail.empty() && tail.front() == '.') {
    std::size_t i = 1;
    while (i < tail.size() && tail[i] >= '0' && tail[i] <= '9') ++i;
    if (i == 1) return std::nullopt;
    tail.remove_prefix(i);
  }
  if (tail == "Z") tail = {};
  for (char ch : tail) {
    if (ch != ' ' && ch != '\t' && ch != '\r') return std::nullopt;
  }

  const std::chrono::year_month_day ymd{std::chrono::year{tm.tm_year + 1900},
                                        std::chrono::month{static_cast<unsigned>(tm.tm_mon + 1)},
                                        std::chrono::day{static_cast<unsigned>(tm.tm_mday)}};
  if (!ymd.ok() || tm.tm_hour > 23 || tm.tm_min > 59 || tm.tm_sec > 59) return std::nullopt;
  return Timestamp::from_civil(tm.tm_year + 1900, static_cast<unsigned>(tm.tm_mon + 1),
                               static_cast<unsigned>(tm.tm_mday), tm.tm_hour, tm.tm_min,
                               tm.tm_sec);
}

}  // namespace detail

// Parses `text` under a strftime-style `format`. An ISO-8601 'T' date/time
// separator is accepted wherever the format expects a space.
inline std::optional<Timestamp> parse_timestamp(std::string_view text,
                                                const std::string& format = kDefaultDateFormat) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  if (auto ts = detail::parse_exact(text, format)) return ts;
  if (const auto t = text.find('T'); t != std::string_view::npos) {
    std::string copy(text);
    copy[t] = ' ';
    return detail::parse_exact(copy, format);
  }
  return std::nullopt;
}

}  // namespace notegen
