#pragma once

#include "exmort/calendar.hpp"
#include "exmort/geometry.hpp"
#include "exmort/ingest.hpp"
#include "exmort/predictive.hpp"
#include "exmort/stats.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace exmort {

enum class SpatialLevel { province, region, country };
enum class StrataMode { none, age, sex, agesex };
enum class Temporal { annual, weekly };

std::string level_name(SpatialLevel level);
std::string mode_name(StrataMode mode);
std::string temporal_name(Temporal temporal);

inline constexpr std::array<SpatialLevel, 3> kLevels{SpatialLevel::province, SpatialLevel::region,
                                                     SpatialLevel::country};
inline constexpr std::array<StrataMode, 4> kModes{StrataMode::none, StrataMode::age, StrataMode::sex,
                                                  StrataMode::agesex};
inline constexpr std::array<Temporal, 2> kTemporals{Temporal::annual, Temporal::weekly};

struct AggregationSpec {
    SpatialLevel level = SpatialLevel::province;
    StrataMode mode = StrataMode::none;
    Temporal temporal = Temporal::annual;
    std::map<std::string, std::string> region_map; // province -> region
    std::string country_id = "country";
};

/// Label of the stratum group a stratum belongs to under a mode
/// ("all", "40<", "F", "F40<").
std::string stratum_group(StratumKey key, StrataMode mode);
/// Groups of a mode in output order.
std::vector<std::string> stratum_groups(StrataMode mode);

/// Category bins for medians and exceedance probabilities.
struct CategoryScheme {
    std::vector<double> ned_breaks{0, 500, 1000};
    double rem_width = 5;
    double rem_cap = 20;

    void validate() const;
    std::string ned_label(double median) const;
    std::string rem_label(double median) const;
    static std::string exceedance_label(double p);

    std::vector<std::string> ned_labels() const;
    std::vector<std::string> rem_labels() const;
    static std::vector<std::string> exceedance_labels();
};

/// Per-sample NED = observed - predicted and REM = 100 NED / predicted; REM is
/// NaN where predicted is zero.
struct ExcessSamples {
    std::vector<double> predicted;
    std::vector<double> ned;
    std::vector<double> rem;
};

ExcessSamples excess_samples(double observed, std::span<const double> predicted);

struct CellKey {
    std::string space_id;
    std::string stratum; // group label under the mode
    std::optional<IsoWeek> week;
    auto operator<=>(const CellKey &) const = default;
};

struct CellSamples {
    CellKey key;
    long long observed = 0;
    double population = 0;
    ExcessSamples samples;
};

/// Aggregates predictive samples into cells, summing counts per sample before
/// forming NED and REM. Cells come out ordered by space, stratum group, week.
std::vector<CellSamples> aggregate_samples(std::span<const PredictiveSamples> strata, const AggregationSpec &spec);

struct ExcessSummary {
    CellKey key;
    long long observed = 0;
    double population = 0;
    SampleSummary pred;
    SampleSummary ned;
    SampleSummary rem; // NaN fields when fewer than two REM samples remain
    double exceedance_ned = 0;
    double exceedance_rem = 0;
    int rem_excluded = 0;
    std::string median_ned_cat;
    std::string exceedance_ned_cat;
    std::string median_rem_cat;
    std::string exceedance_rem_cat;
};

ExcessSummary summarize_cell(const CellSamples &cell, const CategoryScheme &categories);

struct ExcessTable {
    AggregationSpec spec;
    std::vector<ExcessSummary> cells;
};

/// Every level x mode x temporal table. Throws DataError when any of the ten
/// strata is missing or observed counts are absent.
std::vector<ExcessTable> aggregate_all(std::span<const PredictiveSamples> strata,
                                       const std::map<std::string, std::string> &region_map,
                                       const CategoryScheme &categories, const std::string &country_id = "country");

/// Column names of a summaries table.
std::vector<std::string> summary_columns(StrataMode mode, Temporal temporal);

/// `provenance_line` is written first, prefixed with "# ".
void write_summary_csv(const ExcessTable &table, std::ostream &out, const std::string &provenance_line);

std::string summary_file_stem(const AggregationSpec &spec);

/// FeatureCollection of the annual, all-strata cells of a level with polygon geometry.
nlohmann::json summaries_geojson(const ExcessTable &table, std::span<const Region> regions);

/// Dashboard bundle: level -> mode -> stratum -> {cells, weekly}.
nlohmann::json make_bundle(std::span<const ExcessTable> tables, const CategoryScheme &categories,
                           const nlohmann::json &provenance);

/// Boundaries with area_id, region_id and name properties.
nlohmann::json regions_geojson(std::span<const Region> regions);

} // namespace exmort
