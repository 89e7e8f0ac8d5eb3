#include "tartekit/embed/datetime.hpp"

#include <charconv>
#include <cstdio>

#include "tartekit/error.hpp"

namespace tartekit {

bool is_leap_year(int year) { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; }

int days_in_month(int year, int month) {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month < 1 || month > 12) throw ParseError("month out of range: " + std::to_string(month));
  if (month == 2 && is_leap_year(year)) return 29;
  return kDays[month - 1];
}

int days_in_year(int year) { return is_leap_year(year) ? 366 : 365; }

void validate(const DatetimeValue& d) {
  if (d.month < 1 || d.month > 12) throw ParseError("invalid month in date " + to_iso_string(d));
  if (d.day < 1 || d.day > days_in_month(d.year, d.month)) throw ParseError("invalid day in date " + to_iso_string(d));
  if (d.time) {
    const auto& t = *d.time;
    if (t.hour < 0 || t.hour > 23 || t.minute < 0 || t.minute > 59 || t.second < 0.0 || t.second >= 60.0) {
      throw ParseError("invalid time of day in " + to_iso_string(d));
    }
  }
}

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::optional<DatetimeValue> try_parse_iso_datetime(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  DatetimeValue d;
  if (!parse_int(text.substr(0, 4), d.year) || !parse_int(text.substr(5, 2), d.month) ||
      !parse_int(text.substr(8, 2), d.day)) {
    return std::nullopt;
  }
  std::string_view rest = text.substr(10);
  if (!rest.empty()) {
    if (rest.front() != 'T' && rest.front() != ' ') return std::nullopt;
    rest.remove_prefix(1);
    if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
    if (rest.size() < 5 || rest[2] != ':') return std::nullopt;
    TimeOfDay t;
    if (!parse_int(rest.substr(0, 2), t.hour) || !parse_int(rest.substr(3, 2), t.minute)) return std::nullopt;
    if (rest.size() > 5) {
      if (rest[5] != ':' || rest.size() < 8) return std::nullopt;
      const std::string sec(rest.substr(6));
      char* end = nullptr;
      t.second = std::strtod(sec.c_str(), &end);
      if (end != sec.c_str() + sec.size()) return std::nullopt;
    }
    d.time = t;
  }
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) return std::nullopt;
  if (d.time) {
    const auto& t = *d.time;
    if (t.hour > 23 || t.minute > 59 || t.second < 0.0 || t.second >= 60.0) return std::nullopt;
  }
  return d;
}

DatetimeValue parse_iso_datetime(std::string_view text) {
  auto d = try_parse_iso_datetime(text);
  if (!d) throw ParseError("not an ISO-8601 date: '" + std::string(text) + "'");
  return *d;
}

std::string to_iso_string(const DatetimeValue& d) {
  char buf[64];
  if (d.time) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%06.3f", d.year, d.month, d.day, d.time->hour,
                  d.time->minute, d.time->second);
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  }
  return buf;
}

double datetime_to_fractional_year(const DatetimeValue& d) {
  validate(d);
  int elapsed = d.day - 1;
  for (int m = 1; m < d.month; ++m) elapsed += days_in_month(d.year, m);
  double fraction_of_day = 0.0;
  if (d.time) fraction_of_day = (d.time->hour * 3600.0 + d.time->minute * 60.0 + d.time->second) / 86400.0;
  return d.year + (elapsed + fraction_of_day) / days_in_year(d.year);
}

}  // namespace tartekit
