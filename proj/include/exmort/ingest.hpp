#pragma once

#include "exmort/calendar.hpp"
#include "exmort/geometry.hpp"

#include <array>
#include <chrono>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace exmort {

enum class AgeGroup { under40, from40to59, from60to69, from70to79, over80 };
enum class Sex { female, male };

inline constexpr std::array<AgeGroup, 5> kAgeGroups{AgeGroup::under40, AgeGroup::from40to59,
                                                     AgeGroup::from60to69, AgeGroup::from70to79,
                                                     AgeGroup::over80};
inline constexpr std::array<Sex, 2> kSexes{Sex::female, Sex::male};

struct StratumKey {
    AgeGroup age = AgeGroup::under40;
    Sex sex = Sex::female;

    auto operator<=>(const StratumKey &) const = default;
};

/// The ten age-sex strata, females first, ages ascending.
std::array<StratumKey, 10> all_strata();
int stratum_index(StratumKey key);

std::string age_label(AgeGroup age);          // "40<", "40-59", ..., "80+"
std::string sex_label(Sex sex);               // "F", "M"
std::string stratum_label(StratumKey key);    // "F40<"
std::string stratum_file_label(StratumKey key); // "F_less40"
std::string stratum_cv_label(StratumKey key);   // "less40F"

/// Accepts "<40", "40<", "less40", "40-59", ..., "80+", "80plus".
AgeGroup parse_age_group(std::string_view text);
/// Accepts "F"/"M", "female"/"male".
Sex parse_sex(std::string_view text);
StratumKey parse_stratum_file_label(std::string_view text);

struct AreaWeek {
    std::string area;
    IsoWeek week;

    auto operator<=>(const AreaWeek &) const = default;
};

struct StratumAreaWeek {
    StratumKey stratum;
    std::string area;
    IsoWeek week;

    auto operator<=>(const StratumAreaWeek &) const = default;
};

// --- population --------------------------------------------------------------

struct PopulationKey {
    std::string area;
    StratumKey stratum;
    int year = 0;

    auto operator<=>(const PopulationKey &) const = default;
};

using PopulationTable = std::map<PopulationKey, double>;

PopulationTable read_population_csv(const std::filesystem::path &path);

/// Ordinary least squares line through (year, count) evaluated at
/// `target_year`, clamped at zero. Needs at least two distinct years.
double extrapolate_population(std::span<const int> years, std::span<const double> counts,
                              int target_year);

/// Linear interpolation between two Jan-1 anchors: week j of n gets
/// start + (j/n)(next - start), so week n equals the next anchor.
std::vector<double> weekly_population(double jan1_start, double jan1_next, int n_weeks);

/// Weekly population for every (area, stratum) of `table` and every ISO week
/// of `years`. The anchor of `extrapolated_year` is replaced by the OLS
/// prediction from all earlier anchors.
std::map<StratumAreaWeek, double> build_weekly_population(const PopulationTable &table,
                                                          std::span<const int> years,
                                                          int extrapolated_year);

// --- temperature -------------------------------------------------------------

struct GridCell {
    std::string cell_id;
    Point centroid;
    std::map<IsoWeek, double> weekly;
};

std::vector<GridCell> read_temperature_grid(const std::filesystem::path &path);

struct TemperatureAggregation {
    std::map<AreaWeek, double> values;
    std::vector<std::string> fallback_areas; // regions served by the nearest centroid
};

/// Unweighted mean of the weekly values of all centroids inside each region.
/// Regions without centroids use the nearest centroid when `nearest_fallback`
/// is set, and are an error otherwise.
TemperatureAggregation aggregate_temperature(std::span<const GridCell> grid,
                                             std::span<const Region> regions,
                                             bool nearest_fallback = true);

// --- holidays ----------------------------------------------------------------

std::vector<std::chrono::year_month_day> read_holidays(const std::filesystem::path &path);

/// 1 iff at least one date falls within the Monday..Sunday span of the week.
std::vector<int> build_holiday_indicator(std::span<const IsoWeek> weeks,
                                         std::span<const std::chrono::year_month_day> dates);

// --- deaths and model frames -------------------------------------------------

using DeathsTable = std::map<StratumAreaWeek, int>;

DeathsTable read_deaths_csv(const std::filesystem::path &path);

struct FrameRow {
    IsoWeek week;
    int area = 0; // index into ModelFrame::areas
    std::optional<int> deaths; // missing on prediction rows
    double population = 0;
    int holiday = 0;
    int year_index = 0;
    double temp_c = 0;
    bool is_prediction = false;
    std::optional<int> observed; // known count on prediction rows, if any
};

struct ModelFrame {
    StratumKey stratum;
    std::vector<std::string> areas;
    std::vector<int> fit_years;
    int predict_year = 0;
    std::vector<FrameRow> rows;

    std::size_t fit_row_count() const;
    std::size_t prediction_row_count() const;
};

struct FrameSources {
    std::vector<std::string> areas;
    DeathsTable deaths;
    std::map<StratumAreaWeek, double> population;
    std::map<AreaWeek, double> temperature;
    std::vector<std::chrono::year_month_day> holidays;
};

/// Complete week x area lattice over fit_years and predict_year, rows ordered
/// by week then area. Fit rows carry deaths; prediction rows carry them as
/// `observed` when the source has them. Throws DataError listing every gap.
ModelFrame assemble_model_frame(const FrameSources &sources, StratumKey stratum,
                                std::span<const int> fit_years, int predict_year);

nlohmann::json frame_to_json(const ModelFrame &frame);
ModelFrame frame_from_json(const nlohmann::json &doc);

} // namespace exmort
