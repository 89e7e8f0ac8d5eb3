#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace tartekit {

struct TimeOfDay {
  int hour = 0;
  int minute = 0;
  double second = 0.0;

  bool operator==(const TimeOfDay&) const = default;
};

struct DatetimeValue {
  int year = 1970;
  int month = 1;
  int day = 1;
  std::optional<TimeOfDay> time;

  bool operator==(const DatetimeValue&) const = default;
};

bool is_leap_year(int year);
int days_in_month(int year, int month);
int days_in_year(int year);

// Throws ParseError for impossible dates or times.
void validate(const DatetimeValue& d);

// Accepts YYYY-MM-DD with an optional "T" or space separated HH:MM[:SS[.fff]]
// and an optional trailing "Z". Returns nullopt when the text is not a date.
std::optional<DatetimeValue> try_parse_iso_datetime(std::string_view text);
DatetimeValue parse_iso_datetime(std::string_view text);

std::string to_iso_string(const DatetimeValue& d);

// year + (days elapsed since Jan 1, including the time of day) / days in year.
double datetime_to_fractional_year(const DatetimeValue& d);

}  // namespace tartekit
