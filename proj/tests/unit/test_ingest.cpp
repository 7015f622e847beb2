#include "exmort/calendar.hpp"
#include "exmort/errors.hpp"
#include "exmort/ingest.hpp"
#include "exmort/simulate.hpp"

#include "../support/scratch.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace exmort;
using namespace std::chrono;

namespace {

// Independent ISO calendar: Thursday of the date's week decides the year.
IsoWeek naive_iso_week(year_month_day d) {
    const sys_days day{d};
    const int dow = (weekday{day}.c_encoding() + 6) % 7; // Monday = 0
    const year_month_day thursday{day - days{dow} + days{3}};
    const sys_days jan1{thursday.year() / January / 1};
    const int ordinal = static_cast<int>((sys_days{thursday} - jan1).count());
    return {static_cast<int>(thursday.year()), ordinal / 7 + 1};
}

// Closed-form OLS through (x, y) at x0.
double ols_at(const std::vector<double> &x, const std::vector<double> &y, double x0) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return (sy - slope * sx) / n + slope * x0;
}

Region square(const std::string &id, double x0, double y0, double side) {
    Region r;
    r.area_id = id;
    r.parts.push_back({{{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}}, {}});
    return r;
}

GridCell cell_at(const std::string &id, double lon, double lat, std::map<IsoWeek, double> weekly) {
    return {id, {lon, lat}, std::move(weekly)};
}

} // namespace

TEST_SUITE("ingest") {

TEST_CASE("ISO week count and labels") {
    CHECK(iso_weeks_in_year(2015) == 53);
    CHECK(iso_weeks_in_year(2020) == 53);
    CHECK(iso_weeks_in_year(2019) == 52);
    CHECK(euro_label({2020, 1}) == "2020-W01");
    CHECK(seasonal_index({2020, 53}) == 52);
    CHECK(seasonal_index({2020, 12}) == 12);
    CHECK_THROWS_AS(validate_iso_week({2019, 53}), DataError);
}

TEST_CASE("ISO week of a date matches the Thursday rule for every day 2014-2022") {
    for (sys_days d = sys_days{2014y / January / 1}; d <= sys_days{2022y / December / 31}; d += days{1}) {
        const year_month_day ymd{d};
        const IsoWeek got = iso_week_of(ymd);
        const IsoWeek want = naive_iso_week(ymd);
        REQUIRE(got == want);
        CHECK(iso_week_monday(got) <= d);
        CHECK(d < iso_week_monday(got) + days{7});
    }
}

TEST_CASE("population extrapolation") {
    const std::vector<int> years{2015, 2016, 2017, 2018, 2019, 2020};
    SUBCASE("flat line") {
        const std::vector<double> c(6, 500.0);
        CHECK(extrapolate_population(years, c, 2021) == doctest::Approx(500));
    }
    SUBCASE("exact line") {
        const std::vector<double> c{100, 90, 80, 70, 60, 50};
        CHECK(extrapolate_population(years, c, 2021) == doctest::Approx(40).epsilon(1e-12));
    }
    SUBCASE("Torino females under 40 against the normal equations") {
        const std::vector<double> c{435758, 427702, 420498, 413141, 406937, 402768};
        const std::vector<double> x(years.begin(), years.end());
        CHECK(extrapolate_population(years, c, 2021) == doctest::Approx(ols_at(x, c, 2021)).epsilon(1e-12));
    }
    SUBCASE("clamped at zero") {
        const std::vector<double> c{50, 40, 30, 20, 10, 5};
        CHECK(extrapolate_population(years, c, 2030) == 0.0);
    }
    SUBCASE("insufficient history") {
        const std::vector<int> one{2015};
        const std::vector<double> c{10};
        CHECK_THROWS_WITH_AS(extrapolate_population(one, c, 2021), doctest::Contains("insufficient history"),
                             DataError);
    }
}

TEST_CASE("weekly population interpolation") {
    SUBCASE("equal endpoints") {
        for (double v : weekly_population(200, 200, 52)) {
            CHECK(v == 200);
        }
    }
    SUBCASE("52-week year") {
        const auto w = weekly_population(100, 152, 52);
        CHECK(w[0] == doctest::Approx(101));
        CHECK(w[25] == doctest::Approx(126));
        CHECK(w[51] == doctest::Approx(152));
    }
    SUBCASE("53-week year against a direct interpolation") {
        const auto w = weekly_population(100, 153, 53);
        REQUIRE(w.size() == 53);
        for (int j = 1; j <= 53; ++j) {
            const double t = static_cast<double>(j) / 53.0;
            CHECK(w[static_cast<std::size_t>(j - 1)] == doctest::Approx((1 - t) * 100 + t * 153).epsilon(1e-12));
            CHECK(w[static_cast<std::size_t>(j - 1)] == doctest::Approx(100 + j));
        }
    }
}

TEST_CASE("weekly population is continuous and reproduces every anchor") {
    PopulationTable t;
    const StratumKey k{AgeGroup::from60to69, Sex::male};
    const double anchors[] = {1000, 1040, 1010, 1100, 1080};
    for (int i = 0; i < 5; ++i) {
        t[{"A", k, 2016 + i}] = anchors[i];
    }
    const std::vector<int> years{2016, 2017, 2018, 2019};
    const auto weekly = build_weekly_population(t, years, 2030);
    for (int y : years) {
        const int n = iso_weeks_in_year(y);
        // Last week of a year lands on the next Jan-1 anchor.
        CHECK(weekly.at({k, "A", {y, n}}) == doctest::Approx(anchors[y - 2016 + 1]));
        // First week steps off the current anchor by one increment.
        const double step = (anchors[y - 2016 + 1] - anchors[y - 2016]) / n;
        CHECK(weekly.at({k, "A", {y, 1}}) == doctest::Approx(anchors[y - 2016] + step));
    }
    SUBCASE("missing next-year anchor") {
        const std::vector<int> late{2020};
        CHECK_THROWS_AS(build_weekly_population(t, late, 2030), DataError);
    }
    SUBCASE("extrapolated year replaces the anchor") {
        const std::vector<int> y2020{2020};
        const auto w = build_weekly_population(t, y2020, 2021);
        const std::vector<double> x{2016, 2017, 2018, 2019, 2020};
        const std::vector<double> c(std::begin(anchors), std::end(anchors));
        CHECK(w.at({k, "A", {2020, 53}}) == doctest::Approx(ols_at(x, c, 2021)));
    }
}

TEST_CASE("temperature aggregation") {
    const std::map<IsoWeek, double> eight{{{2019, 1}, 8.0}, {{2019, 2}, 8.0}};
    SUBCASE("constant field") {
        const std::vector<Region> regions{square("A", 0, 0, 1), square("B", 1, 0, 1)};
        const std::vector<GridCell> grid{cell_at("c1", 0.5, 0.5, eight), cell_at("c2", 1.5, 0.5, eight),
                                         cell_at("c3", 1.2, 0.2, eight)};
        const auto agg = aggregate_temperature(grid, regions, false);
        for (const auto &[key, v] : agg.values) {
            CHECK(v == 8.0);
        }
        CHECK(agg.values.size() == 4);
    }
    SUBCASE("two-point mean") {
        const std::vector<Region> regions{square("A", 0, 0, 1)};
        const std::vector<GridCell> grid{cell_at("c1", 0.25, 0.5, {{{2019, 1}, 10.0}}),
                                         cell_at("c2", 0.75, 0.5, {{{2019, 1}, 14.0}})};
        CHECK(aggregate_temperature(grid, regions, false).values.at({"A", {2019, 1}}) == 12.0);
    }
    SUBCASE("empty region: error names it, fallback uses the nearest centroid") {
        const std::vector<Region> regions{square("A", 0, 0, 1), square("TINY", 5, 5, 0.1)};
        const std::vector<GridCell> grid{cell_at("c1", 0.5, 0.5, {{{2019, 1}, 3.0}}),
                                         cell_at("c2", 4.0, 4.0, {{{2019, 1}, 7.0}})};
        CHECK_THROWS_WITH_AS(aggregate_temperature(grid, regions, false), doctest::Contains("TINY"), DataError);
        const auto agg = aggregate_temperature(grid, regions, true);
        CHECK(agg.values.at({"TINY", {2019, 1}}) == 7.0);
        CHECK(agg.fallback_areas == std::vector<std::string>{"TINY"});
    }
    SUBCASE("brute-force containment oracle, invariant to input order") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(0.0, 3.0);
        std::vector<Region> regions{square("A", 0, 0, 1), square("B", 1, 0, 2), square("C", 0, 1, 1)};
        regions[2].parts.front().outer = {{0, 1}, {1, 1}, {1, 3}, {0, 3}};
        std::vector<GridCell> grid;
        for (int i = 0; i < 40; ++i) {
            grid.push_back(cell_at("c" + std::to_string(i), u(rng), u(rng), {{{2019, 1}, u(rng) * 10}}));
        }
        // Inside tests on axis-aligned boxes, strict to avoid boundary ambiguity.
        auto inside = [](const Region &r, Point p) {
            double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
            for (const auto &q : r.parts.front().outer) {
                x0 = std::min(x0, q.lon);
                x1 = std::max(x1, q.lon);
                y0 = std::min(y0, q.lat);
                y1 = std::max(y1, q.lat);
            }
            return p.lon > x0 && p.lon < x1 && p.lat > y0 && p.lat < y1;
        };
        const auto agg = aggregate_temperature(grid, regions, false);
        for (const auto &r : regions) {
            double s = 0;
            int n = 0;
            for (const auto &c : grid) {
                if (inside(r, c.centroid)) {
                    s += c.weekly.begin()->second;
                    ++n;
                }
            }
            REQUIRE(n > 0);
            CHECK(agg.values.at({r.area_id, {2019, 1}}) == doctest::Approx(s / n).epsilon(1e-12));
        }
        std::reverse(grid.begin(), grid.end());
        std::reverse(regions.begin(), regions.end());
        const auto again = aggregate_temperature(grid, regions, false);
        for (const auto &[key, v] : agg.values) {
            CHECK(again.values.at(key) == doctest::Approx(v).epsilon(1e-14));
        }
    }
}

TEST_CASE("holiday indicator") {
    const auto weeks = weeks_of_year(2015);
    SUBCASE("no holidays") {
        const auto h = build_holiday_indicator(weeks, {});
        CHECK(std::count(h.begin(), h.end(), 1) == 0);
    }
    SUBCASE("New Year 2015 falls in 2015-W01") {
        const std::vector<year_month_day> d{2015y / January / 1};
        CHECK(build_holiday_indicator(weeks, d)[0] == 1);
    }
    SUBCASE("Sunday and the following Monday land in consecutive weeks") {
        const year_month_day sunday = 2015y / May / 3;
        const year_month_day monday = 2015y / May / 4;
        REQUIRE(weekday{sys_days{sunday}} == Sunday);
        const auto ws = naive_iso_week(sunday);
        const auto wm = naive_iso_week(monday);
        CHECK(wm.week == ws.week + 1);
        const std::vector<year_month_day> ds{sunday};
        const std::vector<year_month_day> dm{monday};
        const auto hs = build_holiday_indicator(weeks, ds);
        const auto hm = build_holiday_indicator(weeks, dm);
        CHECK(hs[static_cast<std::size_t>(ws.week - 1)] == 1);
        CHECK(hs[static_cast<std::size_t>(wm.week - 1)] == 0);
        CHECK(hm[static_cast<std::size_t>(wm.week - 1)] == 1);
    }
    SUBCASE("order of the holiday list is irrelevant") {
        const std::vector<int> y{2015};
        auto dates = fixed_holidays(y);
        const auto a = build_holiday_indicator(weeks, dates);
        std::reverse(dates.begin(), dates.end());
        CHECK(build_holiday_indicator(weeks, dates) == a);
    }
}

TEST_CASE("model frame assembly") {
    FrameSources src;
    src.areas = {"A", "B"};
    const StratumKey k{AgeGroup::over80, Sex::female};
    for (int y : {2019, 2020}) {
        for (auto w : weeks_of_year(y)) {
            for (const auto &a : src.areas) {
                src.population[{k, a, w}] = 1000;
                src.temperature[{a, w}] = 10 + w.week * 0.1;
                src.deaths[{k, a, w}] = w.week % 7;
            }
        }
    }
    const std::vector<int> fit{2019};
    SUBCASE("2 areas x (52 + 53) weeks") {
        const auto f = assemble_model_frame(src, k, fit, 2020);
        CHECK(f.rows.size() == 2 * 105);
        CHECK(f.fit_row_count() == 2 * 52);
        CHECK(f.prediction_row_count() == 2 * 53);
        for (const auto &r : f.rows) {
            CHECK(r.deaths.has_value() == !r.is_prediction);
            CHECK(r.population > 0);
            CHECK(r.year_index == r.week.year - 2019);
        }
    }
    SUBCASE("nested-loop join oracle") {
        const auto f = assemble_model_frame(src, k, fit, 2020);
        std::size_t i = 0;
        for (int y : {2019, 2020}) {
            for (auto w : weeks_of_year(y)) {
                for (int a = 0; a < 2; ++a, ++i) {
                    const auto &r = f.rows.at(i);
                    CHECK(r.week == w);
                    CHECK(r.area == a);
                    CHECK(r.temp_c == src.temperature.at({src.areas[static_cast<std::size_t>(a)], w}));
                    const int d = src.deaths.at({k, src.areas[static_cast<std::size_t>(a)], w});
                    CHECK((y == 2019 ? *r.deaths : *r.observed) == d);
                }
            }
        }
        CHECK(i == f.rows.size());
    }
    SUBCASE("missing deaths cell is listed") {
        src.deaths.erase({k, "B", {2019, 17}});
        CHECK_THROWS_WITH_AS(assemble_model_frame(src, k, fit, 2020), doctest::Contains("deaths (B, 2019-W17)"),
                             DataError);
    }
    SUBCASE("json round trip") {
        const auto f = assemble_model_frame(src, k, fit, 2020);
        const auto g = frame_from_json(frame_to_json(f));
        CHECK(frame_to_json(g) == frame_to_json(f));
    }
}

TEST_CASE("csv readers") {
    testing::ScratchDir dir("ingest");
    const auto pop = dir.write("population.csv", "area_id,age_group,sex,year,jan1_count\n"
                                                 "A,less40,F,2019,100\nA,80+,M,2019,50\n");
    const auto t = read_population_csv(pop);
    CHECK(t.at({"A", {AgeGroup::under40, Sex::female}, 2019}) == 100);
    CHECK(t.at({"A", {AgeGroup::over80, Sex::male}, 2019}) == 50);

    const auto deaths = dir.write("deaths.csv", "area_id,iso_year,iso_week,age_group,sex,deaths\n"
                                                "A,2019,3,40_59,M,7\n");
    CHECK(read_deaths_csv(deaths).at({{AgeGroup::from40to59, Sex::male}, "A", {2019, 3}}) == 7);
    const auto bad = dir.write("bad.csv", "area_id,iso_year,iso_week,age_group,sex,deaths\nA,2019,3,40_59,M,-1\n");
    CHECK_THROWS_AS(read_deaths_csv(bad), DataError);

    const auto hol = dir.write("holidays.csv", "date\n# comment\n2019-12-25\n2020-01-01\n");
    CHECK(read_holidays(hol).size() == 2);

    const auto grid = dir.write("grid.csv", "cell_id,lon,lat,iso_year,iso_week,temp_c\n"
                                            "c1,10.125,44.125,2019,1,3.5\nc1,10.125,44.125,2019,2,4.5\n");
    const auto cells = read_temperature_grid(grid);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].weekly.at({2019, 2}) == 4.5);
}

} // TEST_SUITE
