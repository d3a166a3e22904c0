// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/table.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace tabqa {

/// Days since 1970-01-01 for a civil date (proleptic Gregorian).
std::int64_t days_from_civil(int year, int month, int day);
void civil_from_days(std::int64_t days, int& year, int& month, int& day);

bool valid_civil_date(int year, int month, int day);

enum class DateUnit { Year, Month, Day, Weekday };

/// Strict strptime-subset parser: %Y %m %d %H %M %S plus literal characters.
/// Rejects impossible dates and trailing garbage.
std::optional<Datetime> parse_datetime(const std::string& text, const std::string& format);

/// Tries a fixed ordered list of common formats, ISO-8601 first.
std::optional<Datetime> parse_datetime_auto(const std::string& text);

const std::vector<std::string>& default_datetime_formats();

/// ISO-8601 in the display offset; date only when the time of day is zero.
std::string format_datetime(const Datetime& value);

/// Calendar field in the display zone; weekday is Monday=0.
int extract_date_unit(const Datetime& value, DateUnit unit);

/// Accepts "UTC", "Z", and fixed offsets like "+05:30", "UTC-07:00", "-0330".
std::optional<int> parse_utc_offset(const std::string& zone);

} // namespace tabqa
