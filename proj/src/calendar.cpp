#include "exmort/calendar.hpp"

#include "exmort/errors.hpp"

#include <charconv>
#include <cstdio>

namespace exmort {

namespace {

using namespace std::chrono;

// Monday = 1 ... Sunday = 7
unsigned iso_weekday(sys_days day) { return weekday{day}.iso_encoding(); }

} // namespace

IsoWeek iso_week_of(year_month_day date) {
    const sys_days day{date};
    const sys_days thursday = day + days{4 - static_cast<int>(iso_weekday(day))};
    const year_month_day thu{thursday};
    const sys_days jan1{thu.year() / January / 1};
    const int week = static_cast<int>((thursday - jan1).count() / 7) + 1;
    return {static_cast<int>(thu.year()), week};
}

int iso_weeks_in_year(int y) { return iso_week_of(year{y} / December / 28).week; }

sys_days iso_week_monday(IsoWeek w) {
    const sys_days jan4{year{w.year} / January / 4};
    const sys_days week1 = jan4 - days{static_cast<int>(iso_weekday(jan4)) - 1};
    return week1 + days{7 * (w.week - 1)};
}

std::vector<IsoWeek> weeks_of_year(int y) {
    const int n = iso_weeks_in_year(y);
    std::vector<IsoWeek> out;
    out.reserve(n);
    for (int w = 1; w <= n; ++w) {
        out.push_back({y, w});
    }
    return out;
}

std::string euro_label(IsoWeek week) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-W%02d", week.year, week.week);
    return buf;
}

year_month_day parse_iso_date(std::string_view text) {
    auto fail = [&] { return DataError("invalid ISO date '" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw fail();
    }
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    auto parse = [&](std::string_view part, auto &value) {
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
        if (ec != std::errc{} || ptr != part.data() + part.size()) {
            throw fail();
        }
    };
    parse(text.substr(0, 4), y);
    parse(text.substr(5, 2), m);
    parse(text.substr(8, 2), d);
    const year_month_day date{year{y}, month{m}, day{d}};
    if (!date.ok()) {
        throw fail();
    }
    return date;
}

void validate_iso_week(IsoWeek week) {
    if (week.week < 1 || week.week > iso_weeks_in_year(week.year)) {
        throw DataError("invalid ISO week " + std::to_string(week.year) + "-W" +
                        std::to_string(week.week));
    }
}

} // namespace exmort
