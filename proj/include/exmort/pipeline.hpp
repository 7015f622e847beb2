#pragma once

#include "exmort/excess.hpp"
#include "exmort/mortality_model.hpp"
#include "exmort/validation.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace exmort {

std::string library_version();

struct InputPaths {
    std::filesystem::path regions;
    std::filesystem::path adjacency; // empty: queen contiguity from the polygons
    std::filesystem::path temperature_grid;
    std::filesystem::path population;
    std::filesystem::path deaths;
    std::filesystem::path holidays;
};

struct RunConfig {
    InputPaths inputs;
    std::vector<int> fit_years;
    int predict_year = 0;
    int n_samples = 1000;
    int n_bins = 100;
    std::uint64_t seed = 1;
    PriorSettings priors;
    HyperOptions hyper;
    bool scale_random_walks = true;
    bool temperature_nearest_fallback = true;
    CategoryScheme categories;
    std::string country_id = "country";
    std::vector<int> validation_years; // empty: fit_years
    CorrelationMethod correlation = CorrelationMethod::pearson;
    int validation_samples = 1000;
    std::filesystem::path output_dir = "out";
    int jobs = 1;

    /// Field-level checks; throws ConfigError listing every problem.
    void validate() const;

    /// Canonical JSON (paths as given). Also the `--print-config` output.
    nlohmann::json to_json() const;

    /// FNV-1a of the canonical JSON without output_dir, seed and jobs, as 16 hex
    /// digits. Inputs enter by content, so moving a project keeps its artifacts valid.
    std::string hash() const;

    ModelSettings model_settings() const;
};

/// Parses a JSON config; relative input paths resolve against `base_dir`.
/// Unknown keys and type errors raise ConfigError naming the field.
RunConfig config_from_json(const nlohmann::json &doc, const std::filesystem::path &base_dir = {});
RunConfig load_config(const std::filesystem::path &path);

/// {config_hash, seed, version} of a run.
nlohmann::json provenance(const RunConfig &config);
std::string provenance_line(const RunConfig &config);

/// Throws DataError when an artifact's provenance differs from the run.
void check_provenance(const nlohmann::json &found, const RunConfig &config, const std::filesystem::path &artifact);

void cmd_prepare(const RunConfig &config);
void cmd_fit(const RunConfig &config);
void cmd_predict(const RunConfig &config);
void cmd_excess(const RunConfig &config);
void cmd_validate(const RunConfig &config);
void cmd_export_bundle(const RunConfig &config);

/// Dispatches one of prepare | fit | predict | excess | validate | export-bundle.
void run_command(const std::string &command, const RunConfig &config);

/// prepare, fit, predict, excess, validate and export-bundle in order.
void run_all(const RunConfig &config);

/// Runs `task(i)` for i in [0, n) on up to `jobs` threads; rethrows the first
/// failure in index order.
void parallel_for(int n, int jobs, const std::function<void(int)> &task);

} // namespace exmort
