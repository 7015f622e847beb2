#include "exmort/simulate.hpp"

#include "exmort/csv.hpp"
#include "exmort/errors.hpp"
#include "exmort/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace exmort {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kLon0 = 10.0;
constexpr double kLat0 = 44.0;

double weekly_rate(AgeGroup age, Sex sex) {
    static constexpr double base[5] = {1.5e-5, 7e-5, 2.5e-4, 7e-4, 2.5e-3};
    return base[static_cast<int>(age)] * (sex == Sex::male ? 1.3 : 1.0);
}

double age_share(AgeGroup age) {
    static constexpr double share[5] = {0.45, 0.29, 0.12, 0.09, 0.05};
    return share[static_cast<int>(age)];
}

std::string fixed(double x, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

} // namespace

std::vector<Region> rectangle_regions(int rows, int cols) {
    if (rows < 1 || cols < 1) {
        throw ConfigError("rectangle_regions: rows and cols must be positive");
    }
    std::vector<Region> out;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int k = r * cols + c + 1;
            char id[16];
            std::snprintf(id, sizeof id, "A%02d", k);
            Region reg;
            reg.area_id = id;
            reg.region_id = 2 * c < cols ? "R1" : "R2";
            reg.name = "Area " + std::to_string(k);
            const double x0 = kLon0 + c;
            const double y0 = kLat0 + r;
            reg.parts.push_back({{{x0, y0}, {x0 + 1, y0}, {x0 + 1, y0 + 1}, {x0, y0 + 1}}, {}});
            out.push_back(std::move(reg));
        }
    }
    return out;
}

std::vector<std::chrono::year_month_day> fixed_holidays(std::span<const int> years) {
    using namespace std::chrono;
    static constexpr unsigned md[][2] = {{1, 1}, {1, 6}, {4, 25}, {5, 1}, {6, 2}, {8, 15}, {11, 1}, {12, 8}, {12, 25}, {12, 26}};
    std::vector<year_month_day> out;
    for (int y : years) {
        for (const auto &d : md) {
            out.emplace_back(year{y}, month{d[0]}, day{d[1]});
        }
    }
    return out;
}

SimulatedStudy simulate_study(const SimulationSpec &spec) {
    if (spec.death_years.empty() || spec.population_years.empty()) {
        throw ConfigError("simulation needs death and population years");
    }
    SimulatedStudy st;
    st.regions = rectangle_regions(spec.grid_rows, spec.grid_cols);
    st.graph = queen_contiguity(st.regions);
    std::vector<StratumKey> strata = spec.strata;
    if (strata.empty()) {
        const auto all = all_strata();
        strata.assign(all.begin(), all.end());
    }
    const int n_areas = static_cast<int>(st.regions.size());

    std::vector<IsoWeek> weeks;
    for (int y : spec.death_years) {
        for (auto w : weeks_of_year(y)) {
            weeks.push_back(w);
        }
    }

    // Temperature: smooth annual cycle plus area-week anomalies, 0.25-degree cells.
    Rng trng(substream_seed(spec.seed, 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> area_anomaly(static_cast<std::size_t>(n_areas),
                                                  std::vector<double>(weeks.size()));
    for (auto &row : area_anomaly) {
        for (double &v : row) {
            v = 1.5 * normal(trng);
        }
    }
    const int cells_x = spec.grid_cols * 4;
    const int cells_y = spec.grid_rows * 4;
    for (int iy = 0; iy < cells_y; ++iy) {
        for (int ix = 0; ix < cells_x; ++ix) {
            GridCell cell;
            char id[24];
            std::snprintf(id, sizeof id, "C%03d_%03d", iy, ix);
            cell.cell_id = id;
            cell.centroid = {kLon0 + 0.125 + 0.25 * ix, kLat0 + 0.125 + 0.25 * iy};
            const int area = (iy / 4) * spec.grid_cols + ix / 4;
            for (std::size_t w = 0; w < weeks.size(); ++w) {
                const double phase = kTwoPi * (weeks[w].week - 0.5) / 52.0;
                const double t = 14.0 - 0.8 * (cell.centroid.lat - kLat0) - 9.0 * std::cos(phase) +
                                 area_anomaly[static_cast<std::size_t>(area)][w] + 0.3 * normal(trng);
                cell.weekly[weeks[w]] = std::round(t * 100) / 100;
            }
            st.temperature_grid.push_back(std::move(cell));
        }
    }
    const auto temps = aggregate_temperature(st.temperature_grid, st.regions, false);

    // Population anchors with a small linear drift per area and stratum.
    Rng prng(substream_seed(spec.seed, 2));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> area_pop(static_cast<std::size_t>(n_areas));
    for (double &p : area_pop) {
        p = (80000 + 220000 * unif(prng)) * spec.population_scale;
    }
    for (int a = 0; a < n_areas; ++a) {
        for (StratumKey k : strata) {
            const double base = area_pop[static_cast<std::size_t>(a)] * age_share(k.age) * 0.5;
            const double drift = 0.02 * (unif(prng) - 0.5);
            for (int y : spec.population_years) {
                const double count = std::round(base * (1 + drift * (y - spec.population_years.front())));
                st.population[{st.regions[static_cast<std::size_t>(a)].area_id, k, y}] = std::max(count, 1.0);
            }
        }
    }

    st.holidays = fixed_holidays(spec.death_years);
    st.sources.areas.reserve(static_cast<std::size_t>(n_areas));
    for (const auto &r : st.regions) {
        st.sources.areas.push_back(r.area_id);
    }
    st.sources.temperature = temps.values;
    st.sources.holidays = st.holidays;
    st.sources.population = build_weekly_population(st.population, spec.death_years, spec.death_years.back() + 1);

    // Spatial field: a west-east gradient plus area noise, centered.
    Rng srng(substream_seed(spec.seed, 3));
    std::vector<double> spatial(static_cast<std::size_t>(n_areas));
    double mean = 0;
    for (int a = 0; a < n_areas; ++a) {
        const int c = a % spec.grid_cols;
        spatial[static_cast<std::size_t>(a)] =
            spec.spatial_sd * (0.8 * std::sin(kTwoPi * c / std::max(spec.grid_cols, 2)) + 0.6 * normal(srng));
        mean += spatial[static_cast<std::size_t>(a)];
    }
    for (double &s : spatial) {
        s -= mean / n_areas;
    }

    const auto holiday = build_holiday_indicator(weeks, st.holidays);
    const int first_year = spec.death_years.front();
    for (StratumKey k : strata) {
        Rng drng(substream_seed(spec.seed, 4, static_cast<std::uint64_t>(stratum_index(k))));
        std::vector<double> eps(weeks.size());
        for (double &e : eps) {
            e = spec.eps_sd * normal(drng);
        }
        const double log_rate = std::log(weekly_rate(k.age, k.sex));
        for (std::size_t w = 0; w < weeks.size(); ++w) {
            const IsoWeek week = weeks[w];
            const double season = spec.season_amplitude * std::cos(kTwoPi * (seasonal_index(week) - 1) / 52.0);
            for (int a = 0; a < n_areas; ++a) {
                const auto &area = st.regions[static_cast<std::size_t>(a)];
                const double pop = st.sources.population.at({k, area.area_id, week});
                const double t = temps.values.at({area.area_id, week});
                double eta = std::log(pop) + log_rate + spec.holiday_effect * holiday[w] +
                             spec.trend * (week.year - first_year) + eps[w] +
                             spec.temp_quadratic * (t - 18) * (t - 18) + season + spatial[static_cast<std::size_t>(a)];
                double mu = std::exp(eta);
                if (spec.excess_year != 0 && week.year == spec.excess_year && spec.excess_peak > 0) {
                    const double bump = std::exp(-0.5 * std::pow((week.week - 13) / 3.0, 2));
                    const double where = area.region_id == "R1" ? 1.0 : 0.4;
                    const double who = k.age >= AgeGroup::from60to69 ? 1.0 : 0.3;
                    mu *= 1 + spec.excess_peak * bump * where * who;
                }
                std::poisson_distribution<int> pois(mu);
                st.sources.deaths[{k, area.area_id, week}] = pois(drng);
            }
        }
    }
    return st;
}

void write_demo_dataset(const std::filesystem::path &dir, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    SimulationSpec spec;
    spec.seed = seed;
    spec.excess_year = 2020;
    spec.excess_peak = 0.8;
    const SimulatedStudy st = simulate_study(spec);

    auto open = [&](const char *name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) {
            throw DataError("cannot write " + (dir / name).string());
        }
        return out;
    };
    {
        nlohmann::json fc{{"type", "FeatureCollection"}, {"features", nlohmann::json::array()}};
        for (const auto &r : st.regions) {
            fc["features"].push_back({{"type", "Feature"},
                                      {"properties", {{"area_id", r.area_id}, {"region_id", r.region_id}, {"name", r.name}}},
                                      {"geometry", polygon_to_geojson(r.parts)}});
        }
        auto out = open("regions.geojson");
        out << fc.dump(1) << '\n';
    }
    {
        auto out = open("temperature_grid.csv");
        out << "cell_id,lon,lat,iso_year,iso_week,temp_c\n";
        for (const auto &cell : st.temperature_grid) {
            for (const auto &[week, t] : cell.weekly) {
                out << cell.cell_id << ',' << fixed(cell.centroid.lon, 3) << ',' << fixed(cell.centroid.lat, 3) << ','
                    << week.year << ',' << week.week << ',' << fixed(t, 2) << '\n';
            }
        }
    }
    auto age_field = [](AgeGroup a) {
        std::string s = stratum_file_label({a, Sex::female});
        return s.substr(2);
    };
    {
        auto out = open("population.csv");
        out << "area_id,age_group,sex,year,jan1_count\n";
        for (const auto &[key, count] : st.population) {
            out << key.area << ',' << age_field(key.stratum.age) << ',' << sex_label(key.stratum.sex) << ','
                << key.year << ',' << static_cast<long long>(count) << '\n';
        }
    }
    {
        auto out = open("deaths.csv");
        out << "area_id,iso_year,iso_week,age_group,sex,deaths\n";
        for (const auto &[key, d] : st.sources.deaths) {
            out << key.area << ',' << key.week.year << ',' << key.week.week << ',' << age_field(key.stratum.age)
                << ',' << sex_label(key.stratum.sex) << ',' << d << '\n';
        }
    }
    {
        auto out = open("holidays.csv");
        out << "date\n";
        for (const auto &d : st.holidays) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                          static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
            out << buf << '\n';
        }
    }
    {
        nlohmann::json cfg;
        cfg["inputs"] = {{"regions", "regions.geojson"},
                         {"temperature_grid", "temperature_grid.csv"},
                         {"population", "population.csv"},
                         {"deaths", "deaths.csv"},
                         {"holidays", "holidays.csv"}};
        cfg["fit_years"] = {2017, 2018, 2019};
        cfg["predict_year"] = 2020;
        cfg["seed"] = seed;
        cfg["output_dir"] = "out";
        auto out = open("config.json");
        out << cfg.dump(2) << '\n';
    }
}

} // namespace exmort
