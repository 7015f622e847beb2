#include "exmort/excess.hpp"

#include "exmort/csv.hpp"
#include "exmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

namespace exmort {

std::string level_name(SpatialLevel level) {
    switch (level) {
    case SpatialLevel::province: return "province";
    case SpatialLevel::region: return "region";
    case SpatialLevel::country: return "country";
    }
    return "";
}

std::string mode_name(StrataMode mode) {
    switch (mode) {
    case StrataMode::none: return "none";
    case StrataMode::age: return "age";
    case StrataMode::sex: return "sex";
    case StrataMode::agesex: return "agesex";
    }
    return "";
}

std::string temporal_name(Temporal temporal) { return temporal == Temporal::annual ? "annual" : "weekly"; }

std::string stratum_group(StratumKey key, StrataMode mode) {
    switch (mode) {
    case StrataMode::none: return "all";
    case StrataMode::age: return age_label(key.age);
    case StrataMode::sex: return sex_label(key.sex);
    case StrataMode::agesex: return stratum_label(key);
    }
    return "";
}

std::vector<std::string> stratum_groups(StrataMode mode) {
    std::vector<std::string> out;
    switch (mode) {
    case StrataMode::none: out.emplace_back("all"); break;
    case StrataMode::age:
        for (AgeGroup a : kAgeGroups) out.push_back(age_label(a));
        break;
    case StrataMode::sex:
        for (Sex s : kSexes) out.push_back(sex_label(s));
        break;
    case StrataMode::agesex:
        for (StratumKey k : all_strata()) out.push_back(stratum_label(k));
        break;
    }
    return out;
}

namespace {

std::string number_label(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

} // namespace

void CategoryScheme::validate() const {
    if (ned_breaks.empty() || !std::is_sorted(ned_breaks.begin(), ned_breaks.end()) ||
        std::adjacent_find(ned_breaks.begin(), ned_breaks.end()) != ned_breaks.end()) {
        throw ConfigError("categories.ned_breaks must be nonempty and strictly increasing");
    }
    if (!(rem_width > 0) || !(rem_cap >= 0)) {
        throw ConfigError("categories.rem_width must be positive and categories.rem_cap nonnegative");
    }
}

std::string CategoryScheme::ned_label(double median) const {
    if (std::isnan(median)) return "NA";
    if (median < ned_breaks.front()) return "<" + number_label(ned_breaks.front());
    for (std::size_t i = 0; i + 1 < ned_breaks.size(); ++i) {
        if (median < ned_breaks[i + 1]) {
            return "[" + number_label(ned_breaks[i]) + ", " + number_label(ned_breaks[i + 1]) + ")";
        }
    }
    return number_label(ned_breaks.back()) + ">";
}

std::string CategoryScheme::rem_label(double median) const {
    if (std::isnan(median)) return "NA";
    if (median < 0) return "<0";
    if (median >= rem_cap) return number_label(rem_cap);
    return number_label(std::floor(median / rem_width) * rem_width);
}

std::string CategoryScheme::exceedance_label(double p) {
    if (std::isnan(p)) return "NA";
    if (p < 0.05) return "[0, 0.05)";
    if (p <= 0.95) return "[0.05, 0.95]";
    return "(0.95, 1]";
}

std::vector<std::string> CategoryScheme::ned_labels() const {
    std::vector<std::string> out{"<" + number_label(ned_breaks.front())};
    for (std::size_t i = 0; i + 1 < ned_breaks.size(); ++i) {
        out.push_back("[" + number_label(ned_breaks[i]) + ", " + number_label(ned_breaks[i + 1]) + ")");
    }
    out.push_back(number_label(ned_breaks.back()) + ">");
    return out;
}

std::vector<std::string> CategoryScheme::rem_labels() const {
    std::vector<std::string> out{"<0"};
    for (double x = 0; x < rem_cap; x += rem_width) {
        out.push_back(number_label(x));
    }
    out.push_back(number_label(rem_cap));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> CategoryScheme::exceedance_labels() {
    return {"[0, 0.05)", "[0.05, 0.95]", "(0.95, 1]"};
}

ExcessSamples excess_samples(double observed, std::span<const double> predicted) {
    ExcessSamples s;
    s.predicted.assign(predicted.begin(), predicted.end());
    s.ned.resize(predicted.size());
    s.rem.resize(predicted.size());
    for (std::size_t m = 0; m < predicted.size(); ++m) {
        s.ned[m] = observed - predicted[m];
        s.rem[m] = predicted[m] > 0 ? 100 * s.ned[m] / predicted[m] : std::nan("");
    }
    return s;
}

std::vector<CellSamples> aggregate_samples(std::span<const PredictiveSamples> strata, const AggregationSpec &spec) {
    if (strata.empty()) {
        throw DataError("excess: no predictive samples");
    }
    const int n = strata.front().n_samples();
    if (n < 2) {
        throw DataError("excess: at least two predictive samples are needed");
    }
    std::map<std::string, int> space_rank;
    const auto groups = stratum_groups(spec.mode);
    auto space_of = [&](const std::string &area) -> std::string {
        switch (spec.level) {
        case SpatialLevel::province: return area;
        case SpatialLevel::region: {
            auto it = spec.region_map.find(area);
            if (it == spec.region_map.end() || it->second.empty()) {
                throw DataError("excess: province " + area + " has no region");
            }
            return it->second;
        }
        case SpatialLevel::country: return spec.country_id;
        }
        return area;
    };

    std::map<CellKey, std::size_t> index;
    std::vector<CellSamples> cells;
    std::vector<std::vector<double>> sums;
    std::vector<std::set<IsoWeek>> weeks;
    for (const auto &s : strata) {
        if (s.n_samples() != n) {
            throw DataError("excess: strata carry different sample counts");
        }
        for (std::size_t i = 0; i < s.rows.size(); ++i) {
            const auto &row = s.rows[i];
            if (!row.observed) {
                throw DataError("excess: observed deaths missing for area " + row.area_id + ", week " +
                                euro_label(row.week) + ", stratum " + stratum_label(row.stratum));
            }
            CellKey key{space_of(row.area_id), stratum_group(row.stratum, spec.mode),
                        spec.temporal == Temporal::weekly ? std::optional<IsoWeek>(row.week) : std::nullopt};
            space_rank.emplace(key.space_id, static_cast<int>(space_rank.size()));
            auto [it, fresh] = index.emplace(key, cells.size());
            if (fresh) {
                cells.push_back({key, 0, 0, {}});
                sums.emplace_back(static_cast<std::size_t>(n), 0.0);
                weeks.emplace_back();
            }
            const std::size_t c = it->second;
            cells[c].observed += *row.observed;
            cells[c].population += row.population;
            weeks[c].insert(row.week);
            auto &acc = sums[c];
            const auto r = static_cast<Eigen::Index>(i);
            for (int m = 0; m < n; ++m) {
                acc[static_cast<std::size_t>(m)] += s.counts(r, m);
            }
        }
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
        cells[c].population /= static_cast<double>(weeks[c].size());
        cells[c].samples = excess_samples(static_cast<double>(cells[c].observed), sums[c]);
    }
    auto group_rank = [&](const std::string &g) {
        return std::find(groups.begin(), groups.end(), g) - groups.begin();
    };
    std::stable_sort(cells.begin(), cells.end(), [&](const CellSamples &a, const CellSamples &b) {
        const auto ka = std::make_tuple(space_rank.at(a.key.space_id), group_rank(a.key.stratum), a.key.week);
        const auto kb = std::make_tuple(space_rank.at(b.key.space_id), group_rank(b.key.stratum), b.key.week);
        return ka < kb;
    });
    return cells;
}

ExcessSummary summarize_cell(const CellSamples &cell, const CategoryScheme &categories) {
    ExcessSummary s;
    s.key = cell.key;
    s.observed = cell.observed;
    s.population = cell.population;
    s.pred = summarize(cell.samples.predicted);
    s.ned = summarize(cell.samples.ned);
    s.exceedance_ned = exceedance(cell.samples.ned);
    std::vector<double> rem;
    rem.reserve(cell.samples.rem.size());
    for (double r : cell.samples.rem) {
        if (std::isnan(r)) {
            ++s.rem_excluded;
        } else {
            rem.push_back(r);
        }
    }
    if (rem.size() >= 2) {
        s.rem = summarize(rem);
        s.exceedance_rem = exceedance(rem);
    } else {
        const double na = std::nan("");
        s.rem = {na, na, na, na, na};
        s.exceedance_rem = na;
    }
    s.median_ned_cat = categories.ned_label(s.ned.median);
    s.exceedance_ned_cat = CategoryScheme::exceedance_label(s.exceedance_ned);
    s.median_rem_cat = categories.rem_label(s.rem.median);
    s.exceedance_rem_cat = CategoryScheme::exceedance_label(s.exceedance_rem);
    return s;
}

std::vector<ExcessTable> aggregate_all(std::span<const PredictiveSamples> strata,
                                       const std::map<std::string, std::string> &region_map,
                                       const CategoryScheme &categories, const std::string &country_id) {
    categories.validate();
    std::set<StratumKey> present;
    for (const auto &s : strata) {
        if (s.rows.empty()) {
            throw DataError("excess: a stratum has no prediction rows");
        }
        present.insert(s.rows.front().stratum);
    }
    for (StratumKey k : all_strata()) {
        if (!present.contains(k)) {
            throw DataError("excess: missing stratum " + stratum_label(k));
        }
    }
    std::vector<ExcessTable> out;
    for (SpatialLevel level : kLevels) {
        for (StrataMode mode : kModes) {
            for (Temporal temporal : kTemporals) {
                ExcessTable table;
                table.spec = {level, mode, temporal, region_map, country_id};
                for (const auto &cell : aggregate_samples(strata, table.spec)) {
                    table.cells.push_back(summarize_cell(cell, categories));
                }
                out.push_back(std::move(table));
            }
        }
    }
    return out;
}

std::vector<std::string> summary_columns(StrataMode mode, Temporal temporal) {
    std::vector<std::string> cols{"ID_space"};
    switch (mode) {
    case StrataMode::none: break;
    case StrataMode::age: cols.emplace_back("age"); break;
    case StrataMode::sex: cols.emplace_back("sex"); break;
    case StrataMode::agesex:
        cols.emplace_back("sex");
        cols.emplace_back("age");
        break;
    }
    if (temporal == Temporal::weekly) {
        cols.emplace_back("EURO_LABEL");
    }
    for (const char *c : {"observed", "population", "mean.REM", "median.REM", "sd.REM", "LL.REM", "UL.REM",
                          "exceedance.REM", "median.REM.cat", "exceedance.REM.cat", "median.pred", "LL.pred",
                          "UL.pred", "mean.NED", "median.NED", "sd.NED", "LL.NED", "UL.NED", "exceedance.NED",
                          "median.NED.cat", "exceedance.NED.cat"}) {
        cols.emplace_back(c);
    }
    return cols;
}

namespace {

// "F40<" -> ("F", "40<")
std::pair<std::string, std::string> split_agesex(const std::string &label) {
    return {label.substr(0, 1), label.substr(1)};
}

} // namespace

void write_summary_csv(const ExcessTable &table, std::ostream &out, const std::string &provenance_line) {
    out << "# " << provenance_line << '\n';
    const auto cols = summary_columns(table.spec.mode, table.spec.temporal);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out << (i ? "," : "") << cols[i];
    }
    out << '\n';
    using csv::escape;
    using csv::format_double;
    for (const auto &c : table.cells) {
        out << escape(c.key.space_id);
        if (table.spec.mode == StrataMode::agesex) {
            const auto [sex, age] = split_agesex(c.key.stratum);
            out << ',' << escape(sex) << ',' << escape(age);
        } else if (table.spec.mode != StrataMode::none) {
            out << ',' << escape(c.key.stratum);
        }
        if (c.key.week) {
            out << ',' << euro_label(*c.key.week);
        }
        out << ',' << c.observed << ',' << format_double(c.population) << ',' << format_double(c.rem.mean) << ','
            << format_double(c.rem.median) << ',' << format_double(c.rem.sd) << ',' << format_double(c.rem.ll) << ','
            << format_double(c.rem.ul) << ',' << format_double(c.exceedance_rem) << ',' << escape(c.median_rem_cat)
            << ',' << escape(c.exceedance_rem_cat) << ',' << format_double(c.pred.median) << ','
            << format_double(c.pred.ll) << ',' << format_double(c.pred.ul) << ',' << format_double(c.ned.mean) << ','
            << format_double(c.ned.median) << ',' << format_double(c.ned.sd) << ',' << format_double(c.ned.ll) << ','
            << format_double(c.ned.ul) << ',' << format_double(c.exceedance_ned) << ',' << escape(c.median_ned_cat)
            << ',' << escape(c.exceedance_ned_cat) << '\n';
    }
}

std::string summary_file_stem(const AggregationSpec &spec) {
    return "summaries_" + level_name(spec.level) + "_" + mode_name(spec.mode) + "_" + temporal_name(spec.temporal);
}

namespace {

nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

nlohmann::json cell_json(const ExcessSummary &c) {
    nlohmann::json j;
    j["ID_space"] = c.key.space_id;
    if (c.key.week) {
        j["EURO_LABEL"] = euro_label(*c.key.week);
    }
    j["observed"] = c.observed;
    j["population"] = num(c.population);
    j["NED"] = {{"mean", num(c.ned.mean)},
                {"median", num(c.ned.median)},
                {"sd", num(c.ned.sd)},
                {"LL", num(c.ned.ll)},
                {"UL", num(c.ned.ul)},
                {"exceedance", num(c.exceedance_ned)},
                {"median_cat", c.median_ned_cat},
                {"exceedance_cat", c.exceedance_ned_cat}};
    j["REM"] = {{"mean", num(c.rem.mean)},
                {"median", num(c.rem.median)},
                {"sd", num(c.rem.sd)},
                {"LL", num(c.rem.ll)},
                {"UL", num(c.rem.ul)},
                {"exceedance", num(c.exceedance_rem)},
                {"median_cat", c.median_rem_cat},
                {"exceedance_cat", c.exceedance_rem_cat},
                {"excluded", c.rem_excluded}};
    j["pred"] = {{"median", num(c.pred.median)}, {"LL", num(c.pred.ll)}, {"UL", num(c.pred.ul)}};
    return j;
}

std::vector<Polygon> parts_of(const std::string &space_id, const AggregationSpec &spec,
                              std::span<const Region> regions) {
    std::vector<Polygon> parts;
    for (const auto &r : regions) {
        bool member = false;
        switch (spec.level) {
        case SpatialLevel::province: member = r.area_id == space_id; break;
        case SpatialLevel::region: {
            auto it = spec.region_map.find(r.area_id);
            member = it != spec.region_map.end() && it->second == space_id;
            break;
        }
        case SpatialLevel::country: member = true; break;
        }
        if (member) {
            parts.insert(parts.end(), r.parts.begin(), r.parts.end());
        }
    }
    return parts;
}

} // namespace

nlohmann::json summaries_geojson(const ExcessTable &table, std::span<const Region> regions) {
    nlohmann::json fc{{"type", "FeatureCollection"}, {"features", nlohmann::json::array()}};
    for (const auto &c : table.cells) {
        if (c.key.week || c.key.stratum != "all") {
            continue;
        }
        nlohmann::json props{{"ID_space", c.key.space_id},
                             {"observed", c.observed},
                             {"population", num(c.population)},
                             {"mean.REM", num(c.rem.mean)},
                             {"median.REM", num(c.rem.median)},
                             {"sd.REM", num(c.rem.sd)},
                             {"LL.REM", num(c.rem.ll)},
                             {"UL.REM", num(c.rem.ul)},
                             {"exceedance.REM", num(c.exceedance_rem)},
                             {"median.REM.cat", c.median_rem_cat},
                             {"exceedance.REM.cat", c.exceedance_rem_cat},
                             {"median.pred", num(c.pred.median)},
                             {"LL.pred", num(c.pred.ll)},
                             {"UL.pred", num(c.pred.ul)},
                             {"mean.NED", num(c.ned.mean)},
                             {"median.NED", num(c.ned.median)},
                             {"sd.NED", num(c.ned.sd)},
                             {"LL.NED", num(c.ned.ll)},
                             {"UL.NED", num(c.ned.ul)},
                             {"exceedance.NED", num(c.exceedance_ned)},
                             {"median.NED.cat", c.median_ned_cat},
                             {"exceedance.NED.cat", c.exceedance_ned_cat}};
        fc["features"].push_back({{"type", "Feature"},
                                  {"properties", std::move(props)},
                                  {"geometry", polygon_to_geojson(parts_of(c.key.space_id, table.spec, regions))}});
    }
    return fc;
}

nlohmann::json make_bundle(std::span<const ExcessTable> tables, const CategoryScheme &categories,
                           const nlohmann::json &provenance) {
    nlohmann::json bundle;
    bundle["provenance"] = provenance;
    bundle["categories"] = {{"NED", categories.ned_labels()},
                            {"REM", categories.rem_labels()},
                            {"exceedance", CategoryScheme::exceedance_labels()}};
    nlohmann::json levels = nlohmann::json::object();
    for (const auto &t : tables) {
        auto &mode_node = levels[level_name(t.spec.level)][mode_name(t.spec.mode)];
        for (const auto &g : stratum_groups(t.spec.mode)) {
            auto &node = mode_node[g];
            if (!node.contains("cells")) {
                node["cells"] = nlohmann::json::array();
                node["weekly"] = nlohmann::json::object();
            }
        }
        for (const auto &c : t.cells) {
            auto &node = mode_node[c.key.stratum];
            if (t.spec.temporal == Temporal::annual) {
                node["cells"].push_back(cell_json(c));
            } else {
                auto &series = node["weekly"][c.key.space_id];
                if (series.is_null()) {
                    series = nlohmann::json::array();
                }
                series.push_back(cell_json(c));
            }
        }
    }
    bundle["levels"] = std::move(levels);
    return bundle;
}

nlohmann::json regions_geojson(std::span<const Region> regions) {
    nlohmann::json fc{{"type", "FeatureCollection"}, {"features", nlohmann::json::array()}};
    for (const auto &r : regions) {
        fc["features"].push_back({{"type", "Feature"},
                                  {"properties", {{"area_id", r.area_id}, {"region_id", r.region_id}, {"name", r.name}}},
                                  {"geometry", polygon_to_geojson(r.parts)}});
    }
    return fc;
}

} // namespace exmort
