// SPDX-License-Identifier: Apache-2.0
#include "tabqa/datetime.hpp"

#include <array>
#include <cctype>
#include <cstdio>

namespace tabqa {

// Howard Hinnant's algorithm, public domain.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& year, int& month, int& day) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    year = static_cast<int>(y + (month <= 2));
}

bool valid_civil_date(int year, int month, int day) {
    if (month < 1 || month > 12 || day < 1) return false;
    static constexpr std::array<int, 12> lengths = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int max_day = lengths[static_cast<std::size_t>(month - 1)];
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    if (month == 2 && leap) max_day = 29;
    return day <= max_day;
}

namespace {

bool read_digits(const std::string& text, std::size_t& pos, int count, int& out) {
    if (pos + count > text.size()) return false;
    int value = 0;
    for (int i = 0; i < count; ++i) {
        const char c = text[pos + static_cast<std::size_t>(i)];
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        value = value * 10 + (c - '0');
    }
    pos += static_cast<std::size_t>(count);
    out = value;
    return true;
}

} // namespace

std::optional<Datetime> parse_datetime(const std::string& text, const std::string& format) {
    int year = 1970, month = 1, day = 1, hour = 0, minute = 0, second = 0;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < format.size(); ++f) {
        if (format[f] == '%' && f + 1 < format.size()) {
            ++f;
            bool ok = true;
            switch (format[f]) {
                case 'Y': ok = read_digits(text, pos, 4, year); break;
                case 'm': ok = read_digits(text, pos, 2, month); break;
                case 'd': ok = read_digits(text, pos, 2, day); break;
                case 'H': ok = read_digits(text, pos, 2, hour); break;
                case 'M': ok = read_digits(text, pos, 2, minute); break;
                case 'S': ok = read_digits(text, pos, 2, second); break;
                case '%': ok = pos < text.size() && text[pos++] == '%'; break;
                default: return std::nullopt;
            }
            if (!ok) return std::nullopt;
        } else {
            if (pos >= text.size() || text[pos] != format[f]) return std::nullopt;
            ++pos;
        }
    }
    if (pos != text.size()) return std::nullopt;
    if (!valid_civil_date(year, month, day)) return std::nullopt;
    if (hour > 23 || minute > 59 || second > 59) return std::nullopt;
    Datetime result;
    result.epoch_s = days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second;
    return result;
}

const std::vector<std::string>& default_datetime_formats() {
    static const std::vector<std::string> formats = {
        "%Y-%m-%d",
        "%Y-%m-%dT%H:%M:%SZ",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%d/%m/%Y",
        "%m/%d/%Y",
        "%Y/%m/%d",
    };
    return formats;
}

std::optional<Datetime> parse_datetime_auto(const std::string& text) {
    for (const auto& format : default_datetime_formats()) {
        if (auto parsed = parse_datetime(text, format)) return parsed;
    }
    return std::nullopt;
}

std::string format_datetime(const Datetime& value) {
    const int offset = value.offset_min.value_or(0);
    const std::int64_t shifted = value.epoch_s + static_cast<std::int64_t>(offset) * 60;
    std::int64_t days = shifted / 86400;
    std::int64_t rem = shifted % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    int year = 0, month = 0, day = 0;
    civil_from_days(days, year, month, day);
    char buffer[40];
    if (rem == 0 && !value.offset_min) {
        std::snprintf(buffer, sizeof(buffer), "%04d-%02d-%02d", year, month, day);
        return buffer;
    }
    const int hour = static_cast<int>(rem / 3600);
    const int minute = static_cast<int>((rem % 3600) / 60);
    const int second = static_cast<int>(rem % 60);
    std::snprintf(buffer, sizeof(buffer), "%04d-%02d-%02dT%02d:%02d:%02d", year, month, day, hour,
                  minute, second);
    std::string text = buffer;
    if (value.offset_min) {
        if (offset == 0) {
            text += "Z";
        } else {
            const int abs_offset = offset < 0 ? -offset : offset;
            std::snprintf(buffer, sizeof(buffer), "%c%02d:%02d", offset < 0 ? '-' : '+',
                          abs_offset / 60, abs_offset % 60);
            text += buffer;
        }
    }
    return text;
}

int extract_date_unit(const Datetime& value, DateUnit unit) {
    const int offset = value.offset_min.value_or(0);
    const std::int64_t shifted = value.epoch_s + static_cast<std::int64_t>(offset) * 60;
    std::int64_t days = shifted / 86400;
    if (shifted % 86400 < 0) --days;
    int year = 0, month = 0, day = 0;
    civil_from_days(days, year, month, day);
    switch (unit) {
        case DateUnit::Year: return year;
        case DateUnit::Month: return month;
        case DateUnit::Day: return day;
        case DateUnit::Weekday: {
            // 1970-01-01 was a Thursday; Monday=0.
            return static_cast<int>(((days % 7) + 7 + 3) % 7);
        }
    }
    return 0;
}

std::optional<int> parse_utc_offset(const std::string& zone) {
    std::string text = zone;
    if (text == "UTC" || text == "utc" || text == "Z" || text == "z") return 0;
    if (text.rfind("UTC", 0) == 0 || text.rfind("utc", 0) == 0) text = text.substr(3);
    if (text.empty()) return 0;
    if (text[0] != '+' && text[0] != '-') return std::nullopt;
    const int sign = text[0] == '-' ? -1 : 1;
    text = text.substr(1);
    int hours = 0, minutes = 0;
    std::size_t pos = 0;
    if (!read_digits(text, pos, 2, hours)) return std::nullopt;
    if (pos < text.size() && text[pos] == ':') ++pos;
    if (pos < text.size()) {
        if (!read_digits(text, pos, 2, minutes)) return std::nullopt;
    }
    if (pos != text.size() || hours > 14 || minutes > 59) return std::nullopt;
    return sign * (hours * 60 + minutes);
}

} // namespace tabqa
