#include "exmort/ingest.hpp"

#include "exmort/csv.hpp"
#include "exmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace exmort {

std::array<StratumKey, 10> all_strata() {
    std::array<StratumKey, 10> out{};
    std::size_t i = 0;
    for (Sex sex : kSexes) {
        for (AgeGroup age : kAgeGroups) {
            out[i++] = {age, sex};
        }
    }
    return out;
}

int stratum_index(StratumKey key) {
    return static_cast<int>(key.sex) * 5 + static_cast<int>(key.age);
}

std::string age_label(AgeGroup age) {
    switch (age) {
    case AgeGroup::under40: return "40<";
    case AgeGroup::from40to59: return "40-59";
    case AgeGroup::from60to69: return "60-69";
    case AgeGroup::from70to79: return "70-79";
    case AgeGroup::over80: return "80+";
    }
    return {};
}

std::string sex_label(Sex sex) { return sex == Sex::female ? "F" : "M"; }

std::string stratum_label(StratumKey key) { return sex_label(key.sex) + age_label(key.age); }

namespace {

const char *age_token(AgeGroup age) {
    switch (age) {
    case AgeGroup::under40: return "less40";
    case AgeGroup::from40to59: return "40_59";
    case AgeGroup::from60to69: return "60_69";
    case AgeGroup::from70to79: return "70_79";
    case AgeGroup::over80: return "80plus";
    }
    return "";
}

} // namespace

std::string stratum_file_label(StratumKey key) {
    return sex_label(key.sex) + "_" + age_token(key.age);
}

std::string stratum_cv_label(StratumKey key) {
    std::string age = age_token(key.age);
    std::replace(age.begin(), age.end(), '_', '-');
    return age + sex_label(key.sex);
}

AgeGroup parse_age_group(std::string_view text) {
    if (text == "<40" || text == "40<" || text == "less40") return AgeGroup::under40;
    if (text == "40-59" || text == "40_59") return AgeGroup::from40to59;
    if (text == "60-69" || text == "60_69") return AgeGroup::from60to69;
    if (text == "70-79" || text == "70_79") return AgeGroup::from70to79;
    if (text == "80+" || text == "80plus") return AgeGroup::over80;
    throw DataError("unknown age group '" + std::string(text) + "'");
}

Sex parse_sex(std::string_view text) {
    if (text == "F" || text == "female") return Sex::female;
    if (text == "M" || text == "male") return Sex::male;
    throw DataError("unknown sex '" + std::string(text) + "'");
}

StratumKey parse_stratum_file_label(std::string_view text) {
    for (auto key : all_strata()) {
        if (stratum_file_label(key) == text) {
            return key;
        }
    }
    throw DataError("unknown stratum '" + std::string(text) + "'");
}

std::size_t ModelFrame::fit_row_count() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const FrameRow &r) { return !r.is_prediction; }));
}

std::size_t ModelFrame::prediction_row_count() const { return rows.size() - fit_row_count(); }

// --- population --------------------------------------------------------------

PopulationTable read_population_csv(const std::filesystem::path &path) {
    const auto table = csv::read(path);
    const auto c_area = table.column("area_id");
    const auto c_age = table.column("age_group");
    const auto c_sex = table.column("sex");
    const auto c_year = table.column("year");
    const auto c_count = table.column("jan1_count");
    PopulationTable out;
    for (std::size_t i = 0; i < table.size(); ++i) {
        PopulationKey key{table.at(i, c_area),
                          {parse_age_group(table.at(i, c_age)), parse_sex(table.at(i, c_sex))},
                          table.as_int(i, c_year)};
        const double count = table.as_double(i, c_count);
        if (count < 0) {
            throw DataError(path.string() + ": negative population for area '" + key.area + "'");
        }
        if (!out.emplace(key, count).second) {
            throw DataError(path.string() + ": duplicate population row for area '" + key.area +
                            "', " + stratum_label(key.stratum) + ", " + std::to_string(key.year));
        }
    }
    return out;
}

double extrapolate_population(std::span<const int> years, std::span<const double> counts,
                              int target_year) {
    if (years.size() != counts.size()) {
        throw DataError("extrapolate_population: years and counts differ in length");
    }
    std::set<int> distinct(years.begin(), years.end());
    if (distinct.size() < 2) {
        throw DataError("insufficient history: population extrapolation needs at least two years");
    }
    const double n = static_cast<double>(years.size());
    double mean_x = 0;
    double mean_y = 0;
    for (std::size_t i = 0; i < years.size(); ++i) {
        mean_x += years[i];
        mean_y += counts[i];
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0;
    double sxy = 0;
    for (std::size_t i = 0; i < years.size(); ++i) {
        const double dx = years[i] - mean_x;
        sxx += dx * dx;
        sxy += dx * (counts[i] - mean_y);
    }
    const double slope = sxy / sxx;
    const double value = mean_y + slope * (target_year - mean_x);
    return std::max(0.0, value);
}

std::vector<double> weekly_population(double jan1_start, double jan1_next, int n_weeks) {
    if (n_weeks < 1) {
        throw DataError("weekly_population: year must have at least one week");
    }
    std::vector<double> out(static_cast<std::size_t>(n_weeks));
    for (int j = 1; j <= n_weeks; ++j) {
        out[j - 1] = jan1_start + (static_cast<double>(j) / n_weeks) * (jan1_next - jan1_start);
    }
    return out;
}

std::map<StratumAreaWeek, double> build_weekly_population(const PopulationTable &table,
                                                          std::span<const int> years,
                                                          int extrapolated_year) {
    std::map<std::pair<std::string, StratumKey>, std::map<int, double>> anchors;
    for (const auto &[key, count] : table) {
        anchors[{key.area, key.stratum}][key.year] = count;
    }
    std::map<StratumAreaWeek, double> out;
    for (auto &[group, by_year] : anchors) {
        const auto &[area, stratum] = group;
        std::vector<int> hist_years;
        std::vector<double> hist_counts;
        for (const auto &[y, c] : by_year) {
            if (y < extrapolated_year) {
                hist_years.push_back(y);
                hist_counts.push_back(c);
            }
        }
        auto anchor = [&](int y) -> double {
            if (y == extrapolated_year) {
                return extrapolate_population(hist_years, hist_counts, y);
            }
            auto it = by_year.find(y);
            if (it == by_year.end()) {
                throw DataError("missing population anchor for area '" + area + "', " +
                                stratum_label(stratum) + ", Jan 1 " + std::to_string(y));
            }
            return it->second;
        };
        for (int y : years) {
            const auto weeks = weeks_of_year(y);
            const auto values = weekly_population(anchor(y), anchor(y + 1),
                                                  static_cast<int>(weeks.size()));
            for (std::size_t j = 0; j < weeks.size(); ++j) {
                out[{stratum, area, weeks[j]}] = values[j];
            }
        }
    }
    return out;
}

// --- temperature -------------------------------------------------------------

std::vector<GridCell> read_temperature_grid(const std::filesystem::path &path) {
    const auto table = csv::read(path);
    const auto c_id = table.column("cell_id");
    const auto c_lon = table.column("lon");
    const auto c_lat = table.column("lat");
    const auto c_year = table.column("iso_year");
    const auto c_week = table.column("iso_week");
    const auto c_temp = table.column("temp_c");
    std::map<std::string, GridCell> cells;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto &id = table.at(i, c_id);
        const Point p{table.as_double(i, c_lon), table.as_double(i, c_lat)};
        auto [it, inserted] = cells.try_emplace(id, GridCell{id, p, {}});
        if (!inserted && (it->second.centroid.lon != p.lon || it->second.centroid.lat != p.lat)) {
            throw DataError(path.string() + ": cell '" + id + "' changes centroid");
        }
        const IsoWeek week{table.as_int(i, c_year), table.as_int(i, c_week)};
        validate_iso_week(week);
        if (!it->second.weekly.emplace(week, table.as_double(i, c_temp)).second) {
            throw DataError(path.string() + ": duplicate value for cell '" + id + "' in " +
                            euro_label(week));
        }
    }
    std::vector<GridCell> out;
    out.reserve(cells.size());
    for (auto &[id, cell] : cells) {
        out.push_back(std::move(cell));
    }
    return out;
}

TemperatureAggregation aggregate_temperature(std::span<const GridCell> grid,
                                             std::span<const Region> regions,
                                             bool nearest_fallback) {
    // Sum in cell-id order so that results do not depend on input order.
    std::vector<const GridCell *> cells;
    cells.reserve(grid.size());
    for (const auto &cell : grid) {
        cells.push_back(&cell);
    }
    std::sort(cells.begin(), cells.end(),
              [](const GridCell *a, const GridCell *b) { return a->cell_id < b->cell_id; });

    TemperatureAggregation out;
    for (const auto &region : regions) {
        std::vector<const GridCell *> members;
        for (const auto *cell : cells) {
            if (contains(region, cell->centroid)) {
                members.push_back(cell);
            }
        }
        if (members.empty()) {
            if (!nearest_fallback || cells.empty()) {
                throw DataError("region '" + region.area_id + "' contains no grid centroid");
            }
            const Point c = centroid(region);
            const GridCell *best = cells.front();
            for (const auto *cell : cells) {
                if (squared_distance(cell->centroid, c) < squared_distance(best->centroid, c)) {
                    best = cell;
                }
            }
            members.push_back(best);
            out.fallback_areas.push_back(region.area_id);
        }
        std::map<IsoWeek, std::pair<double, int>> acc;
        for (const auto *cell : members) {
            for (const auto &[week, value] : cell->weekly) {
                auto &slot = acc[week];
                slot.first += value;
                slot.second += 1;
            }
        }
        for (const auto &[week, slot] : acc) {
            out.values[{region.area_id, week}] = slot.first / slot.second;
        }
    }
    return out;
}

// --- holidays ----------------------------------------------------------------

std::vector<std::chrono::year_month_day> read_holidays(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    std::vector<std::chrono::year_month_day> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#' || line == "date") {
            continue;
        }
        out.push_back(parse_iso_date(line));
    }
    return out;
}

std::vector<int> build_holiday_indicator(std::span<const IsoWeek> weeks,
                                         std::span<const std::chrono::year_month_day> dates) {
    std::set<IsoWeek> holiday_weeks;
    for (const auto &d : dates) {
        holiday_weeks.insert(iso_week_of(d));
    }
    std::vector<int> out(weeks.size());
    for (std::size_t i = 0; i < weeks.size(); ++i) {
        out[i] = holiday_weeks.contains(weeks[i]) ? 1 : 0;
    }
    return out;
}

// --- deaths and frames -------------------------------------------------------

DeathsTable read_deaths_csv(const std::filesystem::path &path) {
    const auto table = csv::read(path);
    const auto c_area = table.column("area_id");
    const auto c_year = table.column("iso_year");
    const auto c_week = table.column("iso_week");
    const auto c_age = table.column("age_group");
    const auto c_sex = table.column("sex");
    const auto c_deaths = table.column("deaths");
    DeathsTable out;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const IsoWeek week{table.as_int(i, c_year), table.as_int(i, c_week)};
        validate_iso_week(week);
        StratumAreaWeek key{{parse_age_group(table.at(i, c_age)), parse_sex(table.at(i, c_sex))},
                            table.at(i, c_area),
                            week};
        const int deaths = table.as_int(i, c_deaths);
        if (deaths < 0) {
            throw DataError(path.string() + ": negative deaths at row " + std::to_string(i + 2));
        }
        if (!out.emplace(key, deaths).second) {
            throw DataError(path.string() + ": duplicate deaths row for area '" + key.area +
                            "', " + stratum_label(key.stratum) + ", " + euro_label(week));
        }
    }
    return out;
}

ModelFrame assemble_model_frame(const FrameSources &sources, StratumKey stratum,
                                std::span<const int> fit_years, int predict_year) {
    if (fit_years.empty()) {
        throw ConfigError("fit_years: at least one fit year is required");
    }
    if (std::find(fit_years.begin(), fit_years.end(), predict_year) != fit_years.end()) {
        throw ConfigError("predict_year: must not be one of fit_years");
    }
    ModelFrame frame;
    frame.stratum = stratum;
    frame.areas = sources.areas;
    frame.fit_years.assign(fit_years.begin(), fit_years.end());
    std::sort(frame.fit_years.begin(), frame.fit_years.end());
    frame.predict_year = predict_year;

    std::vector<int> years = frame.fit_years;
    years.push_back(predict_year);
    std::sort(years.begin(), years.end());
    const int first_fit = frame.fit_years.front();

    std::vector<IsoWeek> weeks;
    for (int y : years) {
        for (auto w : weeks_of_year(y)) {
            weeks.push_back(w);
        }
    }
    const auto holiday = build_holiday_indicator(weeks, sources.holidays);

    std::vector<std::string> gaps;
    std::size_t gap_count = 0;
    auto report_gap = [&](const std::string &what, const std::string &area, IsoWeek week) {
        ++gap_count;
        if (gaps.size() < 25) {
            gaps.push_back(what + " (" + area + ", " + euro_label(week) + ")");
        }
    };

    frame.rows.reserve(weeks.size() * sources.areas.size());
    for (std::size_t wi = 0; wi < weeks.size(); ++wi) {
        const IsoWeek week = weeks[wi];
        const bool is_prediction = week.year == predict_year;
        for (std::size_t a = 0; a < sources.areas.size(); ++a) {
            const auto &area = sources.areas[a];
            FrameRow row;
            row.week = week;
            row.area = static_cast<int>(a);
            row.holiday = holiday[wi];
            row.year_index = week.year - first_fit;
            row.is_prediction = is_prediction;

            const StratumAreaWeek key{stratum, area, week};
            if (auto it = sources.deaths.find(key); it != sources.deaths.end()) {
                if (is_prediction) {
                    row.observed = it->second;
                } else {
                    row.deaths = it->second;
                }
            } else if (!is_prediction) {
                report_gap("deaths", area, week);
            }
            if (auto it = sources.population.find(key); it != sources.population.end()) {
                row.population = it->second;
                if (!(row.population > 0)) {
                    report_gap("population not positive", area, week);
                }
            } else {
                report_gap("population", area, week);
            }
            if (auto it = sources.temperature.find({area, week}); it != sources.temperature.end()) {
                row.temp_c = it->second;
            } else {
                report_gap("temperature", area, week);
            }
            frame.rows.push_back(row);
        }
    }
    if (gap_count > 0) {
        std::string msg = "model frame for " + stratum_label(stratum) + " has " +
                          std::to_string(gap_count) + " missing cells: ";
        for (std::size_t i = 0; i < gaps.size(); ++i) {
            msg += (i ? "; " : "") + gaps[i];
        }
        if (gap_count > gaps.size()) {
            msg += "; ...";
        }
        throw DataError(msg);
    }
    return frame;
}

nlohmann::json frame_to_json(const ModelFrame &frame) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &r : frame.rows) {
        rows.push_back({r.week.year,
                        r.week.week,
                        r.area,
                        r.deaths ? nlohmann::json(*r.deaths) : nlohmann::json(nullptr),
                        r.population,
                        r.holiday,
                        r.year_index,
                        r.temp_c,
                        r.is_prediction,
                        r.observed ? nlohmann::json(*r.observed) : nlohmann::json(nullptr)});
    }
    return {{"stratum", stratum_file_label(frame.stratum)},
            {"areas", frame.areas},
            {"fit_years", frame.fit_years},
            {"predict_year", frame.predict_year},
            {"columns",
             {"iso_year", "iso_week", "area", "deaths", "population", "holiday", "year_index",
              "temp_c", "is_prediction", "observed"}},
            {"rows", std::move(rows)}};
}

ModelFrame frame_from_json(const nlohmann::json &doc) {
    ModelFrame frame;
    try {
        frame.stratum = parse_stratum_file_label(doc.at("stratum").get<std::string>());
        frame.areas = doc.at("areas").get<std::vector<std::string>>();
        frame.fit_years = doc.at("fit_years").get<std::vector<int>>();
        frame.predict_year = doc.at("predict_year").get<int>();
        for (const auto &r : doc.at("rows")) {
            FrameRow row;
            row.week = {r.at(0).get<int>(), r.at(1).get<int>()};
            row.area = r.at(2).get<int>();
            if (!r.at(3).is_null()) row.deaths = r.at(3).get<int>();
            row.population = r.at(4).get<double>();
            row.holiday = r.at(5).get<int>();
            row.year_index = r.at(6).get<int>();
            row.temp_c = r.at(7).get<double>();
            row.is_prediction = r.at(8).get<bool>();
            if (!r.at(9).is_null()) row.observed = r.at(9).get<int>();
            frame.rows.push_back(row);
        }
    } catch (const nlohmann::json::exception &e) {
        throw DataError(std::string("malformed model frame: ") + e.what());
    }
    return frame;
}

} // namespace exmort
