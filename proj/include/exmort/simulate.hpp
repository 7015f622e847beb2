#pragma once

#include "exmort/geometry.hpp"
#include "exmort/ingest.hpp"
#include "exmort/spatial_graph.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace exmort {

/// Synthetic study on a lattice of 1-degree rectangles. Counts follow the
/// model's Poisson log-linear form: population offset, stratum rate,
/// holiday and year effects, iid week effects, a smooth temperature
/// response, a seasonal cycle and a spatial field.
struct SimulationSpec {
    int grid_rows = 2;
    int grid_cols = 5;
    std::vector<int> population_years{2015, 2016, 2017, 2018, 2019, 2020};
    std::vector<int> death_years{2017, 2018, 2019, 2020};
    std::vector<StratumKey> strata; // empty: all ten
    double population_scale = 1.0;
    double holiday_effect = 0.05;
    double trend = -0.01;
    double eps_sd = 0.04;
    double temp_quadratic = 0.0012;
    double season_amplitude = 0.08;
    double spatial_sd = 0.1;
    /// Multiplicative excess in `excess_year` peaking at week 13; zero disables.
    int excess_year = 0;
    double excess_peak = 0;
    std::uint64_t seed = 1;
};

struct SimulatedStudy {
    std::vector<Region> regions;
    Graph graph;
    std::vector<GridCell> temperature_grid;
    PopulationTable population;
    std::vector<std::chrono::year_month_day> holidays;
    FrameSources sources; // weekly population built for death_years
};

/// Areas "A01".. in row-major order; the western half of the columns forms
/// region "R1", the rest "R2".
std::vector<Region> rectangle_regions(int rows, int cols);

/// Fixed public-holiday dates (Jan 1, Jan 6, Apr 25, May 1, Jun 2, Aug 15,
/// Nov 1, Dec 8, Dec 25, Dec 26) of the given years.
std::vector<std::chrono::year_month_day> fixed_holidays(std::span<const int> years);

SimulatedStudy simulate_study(const SimulationSpec &spec);

/// Writes regions.geojson, temperature_grid.csv, population.csv, deaths.csv,
/// holidays.csv and config.json (fit 2017-2019, predict 2020) into `dir`.
void write_demo_dataset(const std::filesystem::path &dir, std::uint64_t seed);

} // namespace exmort
