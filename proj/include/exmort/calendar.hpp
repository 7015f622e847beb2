#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace exmort {

/// ISO-8601 week: weeks start on Monday and belong to the year of their Thursday.
struct IsoWeek {
    int year = 0;
    int week = 0;

    auto operator<=>(const IsoWeek &) const = default;
};

/// 52 or 53.
int iso_weeks_in_year(int year);

IsoWeek iso_week_of(std::chrono::year_month_day date);

/// Monday that opens the given ISO week.
std::chrono::sys_days iso_week_monday(IsoWeek week);

/// All ISO weeks of `year` in order.
std::vector<IsoWeek> weeks_of_year(int year);

/// Index of the cyclic seasonal effect, 1..52; week 53 folds onto 52.
inline int seasonal_index(IsoWeek week) { return week.week < 52 ? week.week : 52; }

/// "2020-W01".
std::string euro_label(IsoWeek week);

/// Parses "YYYY-MM-DD"; throws DataError on malformed or invalid dates.
std::chrono::year_month_day parse_iso_date(std::string_view text);

/// Throws DataError unless 1 <= week <= iso_weeks_in_year(year).
void validate_iso_week(IsoWeek week);

} // namespace exmort
