#include "exmort/pipeline.hpp"

#include "exmort/errors.hpp"
#include "exmort/predictive.hpp"
#include "exmort/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <string_view>
#include <thread>

namespace exmort {

namespace fs = std::filesystem;
using nlohmann::json;

std::string library_version() { return EXMORT_VERSION; }

// --- configuration -----------------------------------------------------------

namespace {

const char *strategy_name(IntegrationStrategy s) {
    switch (s) {
    case IntegrationStrategy::automatic: return "auto";
    case IntegrationStrategy::grid: return "grid";
    case IntegrationStrategy::ccd: return "ccd";
    }
    return "auto";
}

json prec_json(const PCPrecSpec &s) { return {{"u", s.u}, {"alpha", s.alpha}}; }

/// Reads typed fields and collects every problem before failing.
class FieldReader {
  public:
    template <class T>
    void get(const json &obj, const std::string &path, const char *key, T &out) {
        if (!obj.contains(key)) {
            return;
        }
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception &) {
            errors_.push_back(path + key + ": wrong type (" + std::string(obj.at(key).type_name()) + ")");
        }
    }

    void path(const json &obj, const std::string &prefix, const char *key, fs::path &out, const fs::path &base) {
        std::string s;
        get(obj, prefix, key, s);
        if (!s.empty()) {
            const fs::path p(s);
            out = p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
        }
    }

    const json &object(const json &obj, const std::string &path, const char *key,
                       std::initializer_list<const char *> allowed) {
        static const json empty = json::object();
        if (!obj.contains(key)) {
            return empty;
        }
        const json &child = obj.at(key);
        if (!child.is_object()) {
            errors_.push_back(path + key + ": expected an object");
            return empty;
        }
        unknown(child, path + key + ".", allowed);
        return child;
    }

    void unknown(const json &obj, const std::string &path, std::initializer_list<const char *> allowed) {
        for (const auto &[k, v] : obj.items()) {
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return k == a; })) {
                errors_.push_back(path + k + ": unknown key");
            }
        }
    }

    void error(std::string msg) { errors_.push_back(std::move(msg)); }

    void finish() const {
        if (errors_.empty()) {
            return;
        }
        std::string msg = "invalid config:";
        for (const auto &e : errors_) {
            msg += "\n  " + e;
        }
        throw ConfigError(msg);
    }

  private:
    std::vector<std::string> errors_;
};

void read_prec(FieldReader &r, const json &priors, const char *key, PCPrecSpec &spec) {
    const json &o = r.object(priors, "priors.", key, {"u", "alpha"});
    r.get(o, std::string("priors.") + key + ".", "u", spec.u);
    r.get(o, std::string("priors.") + key + ".", "alpha", spec.alpha);
}

} // namespace

void RunConfig::validate() const {
    std::vector<std::string> errs;
    if (fit_years.empty()) errs.emplace_back("fit_years: at least one year is required");
    if (std::set<int>(fit_years.begin(), fit_years.end()).size() != fit_years.size())
        errs.emplace_back("fit_years: duplicate years");
    if (std::find(fit_years.begin(), fit_years.end(), predict_year) != fit_years.end())
        errs.emplace_back("predict_year: must not be one of fit_years");
    if (predict_year == 0) errs.emplace_back("predict_year: required");
    if (n_samples < 100) errs.emplace_back("n_samples: must be at least 100");
    if (validation_samples < 100) errs.emplace_back("validation.n_samples: must be at least 100");
    if (n_bins < 5) errs.emplace_back("n_bins: must be at least 5");
    if (jobs < 1) errs.emplace_back("jobs: must be at least 1");
    for (const auto *p : {&priors.eps, &priors.temperature, &priors.season, &priors.spatial}) {
        if (!(p->u > 0) || !(p->alpha > 0 && p->alpha < 1)) {
            errs.emplace_back("priors: precision priors need u > 0 and 0 < alpha < 1");
            break;
        }
    }
    if (!(priors.phi_u > 0 && priors.phi_u < 1) || !(priors.phi_alpha > 0 && priors.phi_alpha < 1))
        errs.emplace_back("priors.phi: needs 0 < u < 1 and 0 < alpha < 1");
    if (hyper.max_evaluations < 10) errs.emplace_back("inference.max_evaluations: must be at least 10");
    if (!(hyper.ccd_f0 > 1)) errs.emplace_back("inference.ccd_f0: must exceed 1");
    try {
        categories.validate();
    } catch (const ConfigError &e) {
        errs.emplace_back(e.what());
    }
    const auto &vy = validation_years.empty() ? fit_years : validation_years;
    if (!validation_years.empty() && validation_years.size() < 3)
        errs.emplace_back("validation.years: at least three years are required");
    for (int y : vy) {
        if (y == predict_year) errs.emplace_back("validation.years: must not include predict_year");
    }
    struct Named {
        const char *name;
        const fs::path *path;
    };
    for (const auto &[name, path] : {Named{"inputs.regions", &inputs.regions},
                                     Named{"inputs.temperature_grid", &inputs.temperature_grid},
                                     Named{"inputs.population", &inputs.population},
                                     Named{"inputs.deaths", &inputs.deaths},
                                     Named{"inputs.holidays", &inputs.holidays}}) {
        if (path->empty()) errs.emplace_back(std::string(name) + ": required");
    }
    if (!errs.empty()) {
        std::string msg = "invalid config:";
        for (const auto &e : errs) {
            msg += "\n  " + e;
        }
        throw ConfigError(msg);
    }
}

json RunConfig::to_json() const {
    json j;
    j["inputs"] = {{"regions", inputs.regions.generic_string()},
                   {"adjacency", inputs.adjacency.generic_string()},
                   {"temperature_grid", inputs.temperature_grid.generic_string()},
                   {"population", inputs.population.generic_string()},
                   {"deaths", inputs.deaths.generic_string()},
                   {"holidays", inputs.holidays.generic_string()}};
    j["fit_years"] = fit_years;
    j["predict_year"] = predict_year;
    j["n_samples"] = n_samples;
    j["n_bins"] = n_bins;
    j["seed"] = seed;
    j["priors"] = {{"eps", prec_json(priors.eps)},
                   {"temperature", prec_json(priors.temperature)},
                   {"season", prec_json(priors.season)},
                   {"spatial", prec_json(priors.spatial)},
                   {"phi", {{"u", priors.phi_u}, {"alpha", priors.phi_alpha}}}};
    j["inference"] = {{"max_evaluations", hyper.max_evaluations},
                      {"mode_tolerance", hyper.mode_tolerance},
                      {"initial_step", hyper.initial_step},
                      {"hessian_step", hyper.hessian_step},
                      {"grid_step", hyper.grid_step},
                      {"grid_log_drop", hyper.grid_log_drop},
                      {"ccd_f0", hyper.ccd_f0},
                      {"strategy", strategy_name(hyper.strategy)},
                      {"scale_random_walks", scale_random_walks}};
    j["temperature"] = {{"nearest_fallback", temperature_nearest_fallback}};
    j["aggregation"] = {{"country_id", country_id},
                        {"ned_breaks", categories.ned_breaks},
                        {"rem_width", categories.rem_width},
                        {"rem_cap", categories.rem_cap}};
    j["validation"] = {{"years", validation_years},
                       {"correlation", correlation == CorrelationMethod::pearson ? "pearson" : "spearman"},
                       {"n_samples", validation_samples}};
    j["output_dir"] = output_dir.generic_string();
    j["jobs"] = jobs;
    return j;
}

namespace {

std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex16(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Content digest of an input file; the path itself when it cannot be read.
std::string input_identity(const fs::path &path) {
    if (path.empty()) return "";
    std::ifstream in(path, std::ios::binary);
    if (!in) return path.generic_string();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::string chunk(1 << 16, '\0');
    while (in.read(chunk.data(), static_cast<std::streamsize>(chunk.size())) || in.gcount() > 0) {
        h = fnv1a(std::string_view(chunk.data(), static_cast<std::size_t>(in.gcount())), h);
    }
    return "content:" + hex16(h);
}

} // namespace

std::string RunConfig::hash() const {
    json j = to_json();
    j.erase("output_dir");
    j.erase("seed");
    j.erase("jobs");
    for (auto &[key, value] : j["inputs"].items()) {
        value = input_identity(value.get<std::string>());
    }
    return hex16(fnv1a(j.dump()));
}

ModelSettings RunConfig::model_settings() const {
    ModelSettings s;
    s.n_bins = n_bins;
    s.scale_random_walks = scale_random_walks;
    s.priors = priors;
    s.hyper = hyper;
    return s;
}

RunConfig config_from_json(const json &doc, const fs::path &base_dir) {
    if (!doc.is_object()) {
        throw ConfigError("invalid config: top level must be an object");
    }
    RunConfig c;
    FieldReader r;
    r.unknown(doc, "", {"inputs", "fit_years", "predict_year", "n_samples", "n_bins", "seed", "priors", "inference",
                        "temperature", "aggregation", "validation", "output_dir", "jobs"});
    const json &in = r.object(doc, "", "inputs",
                              {"regions", "adjacency", "temperature_grid", "population", "deaths", "holidays"});
    r.path(in, "inputs.", "regions", c.inputs.regions, base_dir);
    r.path(in, "inputs.", "adjacency", c.inputs.adjacency, base_dir);
    r.path(in, "inputs.", "temperature_grid", c.inputs.temperature_grid, base_dir);
    r.path(in, "inputs.", "population", c.inputs.population, base_dir);
    r.path(in, "inputs.", "deaths", c.inputs.deaths, base_dir);
    r.path(in, "inputs.", "holidays", c.inputs.holidays, base_dir);
    r.get(doc, "", "fit_years", c.fit_years);
    r.get(doc, "", "predict_year", c.predict_year);
    r.get(doc, "", "n_samples", c.n_samples);
    r.get(doc, "", "n_bins", c.n_bins);
    r.get(doc, "", "seed", c.seed);
    r.get(doc, "", "jobs", c.jobs);
    std::string out_dir;
    r.get(doc, "", "output_dir", out_dir);
    if (!out_dir.empty()) {
        c.output_dir = fs::path(out_dir).is_absolute() || base_dir.empty() ? fs::path(out_dir) : base_dir / out_dir;
    }

    const json &pri = r.object(doc, "", "priors", {"eps", "temperature", "season", "spatial", "phi"});
    read_prec(r, pri, "eps", c.priors.eps);
    read_prec(r, pri, "temperature", c.priors.temperature);
    read_prec(r, pri, "season", c.priors.season);
    read_prec(r, pri, "spatial", c.priors.spatial);
    const json &phi = r.object(pri, "priors.", "phi", {"u", "alpha"});
    r.get(phi, "priors.phi.", "u", c.priors.phi_u);
    r.get(phi, "priors.phi.", "alpha", c.priors.phi_alpha);

    const json &inf = r.object(doc, "", "inference",
                               {"max_evaluations", "mode_tolerance", "initial_step", "hessian_step", "grid_step",
                                "grid_log_drop", "ccd_f0", "strategy", "scale_random_walks"});
    r.get(inf, "inference.", "max_evaluations", c.hyper.max_evaluations);
    r.get(inf, "inference.", "mode_tolerance", c.hyper.mode_tolerance);
    r.get(inf, "inference.", "initial_step", c.hyper.initial_step);
    r.get(inf, "inference.", "hessian_step", c.hyper.hessian_step);
    r.get(inf, "inference.", "grid_step", c.hyper.grid_step);
    r.get(inf, "inference.", "grid_log_drop", c.hyper.grid_log_drop);
    r.get(inf, "inference.", "ccd_f0", c.hyper.ccd_f0);
    r.get(inf, "inference.", "scale_random_walks", c.scale_random_walks);
    std::string strategy = "auto";
    r.get(inf, "inference.", "strategy", strategy);
    if (strategy == "auto") c.hyper.strategy = IntegrationStrategy::automatic;
    else if (strategy == "grid") c.hyper.strategy = IntegrationStrategy::grid;
    else if (strategy == "ccd") c.hyper.strategy = IntegrationStrategy::ccd;
    else r.error("inference.strategy: expected auto, grid or ccd");

    const json &tmp = r.object(doc, "", "temperature", {"nearest_fallback"});
    r.get(tmp, "temperature.", "nearest_fallback", c.temperature_nearest_fallback);

    const json &agg = r.object(doc, "", "aggregation", {"country_id", "ned_breaks", "rem_width", "rem_cap"});
    r.get(agg, "aggregation.", "country_id", c.country_id);
    r.get(agg, "aggregation.", "ned_breaks", c.categories.ned_breaks);
    r.get(agg, "aggregation.", "rem_width", c.categories.rem_width);
    r.get(agg, "aggregation.", "rem_cap", c.categories.rem_cap);

    const json &val = r.object(doc, "", "validation", {"years", "correlation", "n_samples"});
    r.get(val, "validation.", "years", c.validation_years);
    r.get(val, "validation.", "n_samples", c.validation_samples);
    std::string corr = "pearson";
    r.get(val, "validation.", "correlation", corr);
    if (corr == "pearson") c.correlation = CorrelationMethod::pearson;
    else if (corr == "spearman") c.correlation = CorrelationMethod::spearman;
    else r.error("validation.correlation: expected pearson or spearman");

    r.finish();
    c.validate();
    return c;
}

RunConfig load_config(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(doc, path.parent_path());
}

json provenance(const RunConfig &config) {
    return {{"config_hash", config.hash()}, {"seed", config.seed}, {"version", library_version()}};
}

std::string provenance_line(const RunConfig &config) {
    return "config_hash=" + config.hash() + " seed=" + std::to_string(config.seed) + " version=" + library_version();
}

void check_provenance(const json &found, const RunConfig &config, const fs::path &artifact) {
    const json want = provenance(config);
    if (!found.is_object() || found.value("config_hash", "") != want["config_hash"] ||
        found.value("seed", std::uint64_t{0}) != config.seed || found.value("version", "") != want["version"]) {
        throw DataError("stale artifact " + artifact.string() + ": written by config_hash=" +
                        found.value("config_hash", std::string("?")) +
                        " seed=" + std::to_string(found.value("seed", std::uint64_t{0})) + " version=" +
                        found.value("version", std::string("?")) + ", expected " + provenance_line(config) +
                        "; rerun the upstream command");
    }
}

// --- artifact helpers --------------------------------------------------------

namespace {

fs::path stage_dir(const RunConfig &c, const char *stage) { return c.output_dir / stage; }

void write_text(const fs::path &path, const std::string &text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

std::string read_text(const fs::path &path, const char *producer) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("missing artifact " + path.string() + "; run `exmort " + producer + "` first");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_artifact(const fs::path &path, const RunConfig &config, const char *producer) {
    json doc;
    try {
        doc = json::parse(read_text(path, producer));
    } catch (const json::parse_error &e) {
        throw DataError("corrupt artifact " + path.string() + ": " + e.what());
    }
    check_provenance(doc.value("provenance", json()), config, path);
    return doc;
}

/// Checks the "# config_hash=..." first line of a text artifact.
void check_text_provenance(const fs::path &path, const RunConfig &config, const char *producer) {
    const std::string text = read_text(path, producer);
    const std::string want = "# " + provenance_line(config);
    if (text.compare(0, want.size(), want) != 0 || text.size() <= want.size() || text[want.size()] != '\n') {
        throw DataError("stale artifact " + path.string() + "; expected first line '" + want + "'");
    }
}

struct LoadedInputs {
    std::vector<Region> regions;
    Graph graph;
    FrameSources sources;
    std::vector<std::string> fallback_areas;
};

std::vector<int> all_years(const RunConfig &c) {
    std::set<int> ys(c.fit_years.begin(), c.fit_years.end());
    ys.insert(c.predict_year);
    ys.insert(c.validation_years.begin(), c.validation_years.end());
    return {ys.begin(), ys.end()};
}

LoadedInputs load_inputs(const RunConfig &c) {
    LoadedInputs li;
    li.regions = read_regions_geojson(c.inputs.regions);
    std::vector<std::string> labels;
    for (const auto &r : li.regions) {
        labels.push_back(r.area_id);
    }
    li.graph = c.inputs.adjacency.empty() ? queen_contiguity(li.regions) : read_adjacency(c.inputs.adjacency, labels);
    if (li.graph.labels() != labels) {
        throw DataError("adjacency labels do not match the region order");
    }
    const auto grid = read_temperature_grid(c.inputs.temperature_grid);
    auto temps = aggregate_temperature(grid, li.regions, c.temperature_nearest_fallback);
    li.fallback_areas = temps.fallback_areas;
    li.sources.areas = labels;
    li.sources.temperature = std::move(temps.values);
    const auto years = all_years(c);
    li.sources.population = build_weekly_population(read_population_csv(c.inputs.population), years, c.predict_year + 1);
    li.sources.deaths = read_deaths_csv(c.inputs.deaths);
    li.sources.holidays = read_holidays(c.inputs.holidays);
    return li;
}

fs::path frame_path(const RunConfig &c, StratumKey k) {
    return stage_dir(c, "prepare") / ("frame_" + stratum_file_label(k) + ".json");
}
fs::path fit_path(const RunConfig &c, StratumKey k) { return stage_dir(c, "fit") / (stratum_file_label(k) + ".json"); }
fs::path predict_path(const RunConfig &c, StratumKey k) {
    return stage_dir(c, "predict") / (stratum_file_label(k) + ".bin");
}

struct Prepared {
    std::vector<std::string> areas;
    Graph graph;
    std::vector<Region> regions;
};

Prepared load_prepared(const RunConfig &c) {
    const json meta = read_artifact(stage_dir(c, "prepare") / "meta.json", c, "prepare");
    Prepared p;
    p.areas = meta.at("areas").get<std::vector<std::string>>();
    const fs::path adj = stage_dir(c, "prepare") / "graph.adj";
    check_text_provenance(adj, c, "prepare");
    p.graph = read_adjacency(adj, p.areas);
    const json regions = read_artifact(stage_dir(c, "prepare") / "regions.geojson", c, "prepare");
    p.regions = parse_regions_geojson(regions, (stage_dir(c, "prepare") / "regions.geojson").string());
    return p;
}

ModelFrame load_frame(const RunConfig &c, StratumKey k) {
    const json doc = read_artifact(frame_path(c, k), c, "prepare");
    return frame_from_json(doc.at("frame"));
}

} // namespace

void parallel_for(int n, int jobs, const std::function<void(int)> &task) {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
    const int workers = std::max(1, std::min(jobs, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) {
            try {
                task(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int i = next++; i < n; i = next++) {
                    try {
                        task(i);
                    } catch (...) {
                        errors[static_cast<std::size_t>(i)] = std::current_exception();
                    }
                }
            });
        }
        for (auto &t : pool) {
            t.join();
        }
    }
    for (auto &e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

// --- commands ----------------------------------------------------------------

void cmd_prepare(const RunConfig &c) {
    c.validate();
    const LoadedInputs li = load_inputs(c);
    const json prov = provenance(c);
    const fs::path dir = stage_dir(c, "prepare");
    fs::create_directories(dir);

    const auto strata = all_strata();
    std::vector<ModelFrame> frames(strata.size());
    parallel_for(static_cast<int>(strata.size()), c.jobs, [&](int i) {
        frames[static_cast<std::size_t>(i)] =
            assemble_model_frame(li.sources, strata[static_cast<std::size_t>(i)], c.fit_years, c.predict_year);
    });
    for (std::size_t i = 0; i < strata.size(); ++i) {
        json doc{{"provenance", prov}, {"frame", frame_to_json(frames[i])}};
        write_text(frame_path(c, strata[i]), doc.dump() + "\n");
    }

    std::ostringstream adj;
    adj << "# " << provenance_line(c) << '\n';
    write_adjacency(li.graph, adj);
    write_text(dir / "graph.adj", adj.str());

    const ModelStructures structures = make_structures(li.graph, c.n_bins, c.scale_random_walks);
    const LatentLayout layout = make_layout(frames.front(), c.n_bins, structures.spatial);
    json lj{{"provenance", prov},
            {"n_latent", layout.size()},
            {"n_constraints", layout.constraints().rows()},
            {"blocks",
             {{"fixed", {0, LatentLayout::kFixed}},
              {"eps", {layout.eps_offset(), layout.n_eps()}},
              {"temperature", {layout.temp_offset(), layout.n_bins}},
              {"season", {layout.season_offset(), LatentLayout::kSeason}},
              {"b", {layout.b_offset(), layout.n_areas}},
              {"u", {layout.u_offset(), layout.n_areas}}}},
            {"spatial_scaling_factors", structures.spatial.scaling_factors}};
    write_text(dir / "layout.json", lj.dump(2) + "\n");

    json rg = regions_geojson(li.regions);
    rg["provenance"] = prov;
    write_text(dir / "regions.geojson", rg.dump() + "\n");

    json meta{{"provenance", prov},
              {"areas", li.sources.areas},
              {"fit_years", c.fit_years},
              {"predict_year", c.predict_year},
              {"temperature_fallback_areas", li.fallback_areas},
              {"strata", json::array()}};
    for (std::size_t i = 0; i < strata.size(); ++i) {
        meta["strata"].push_back({{"stratum", stratum_file_label(strata[i])},
                                  {"fit_rows", frames[i].fit_row_count()},
                                  {"prediction_rows", frames[i].prediction_row_count()}});
    }
    write_text(dir / "meta.json", meta.dump(2) + "\n");
}

void cmd_fit(const RunConfig &c) {
    c.validate();
    const Prepared p = load_prepared(c);
    const json prov = provenance(c);
    const auto strata = all_strata();
    for (StratumKey k : strata) {
        read_text(frame_path(c, k), "prepare");
    }
    parallel_for(static_cast<int>(strata.size()), c.jobs, [&](int i) {
        const StratumKey k = strata[static_cast<std::size_t>(i)];
        const MortalityModel model(load_frame(c, k), p.graph, c.model_settings());
        const HyperGrid grid = model.fit();
        json doc{{"provenance", prov}, {"stratum", stratum_file_label(k)}, {"grid", grid_to_json(grid)}};
        write_text(fit_path(c, k), doc.dump() + "\n");
        write_text(stage_dir(c, "fit") / (stratum_file_label(k) + "_diagnostics.csv"),
                   "# " + provenance_line(c) + "\n" + grid_diagnostics_csv(grid));
    });
}

void cmd_predict(const RunConfig &c) {
    c.validate();
    const Prepared p = load_prepared(c);
    const json prov = provenance(c);
    const auto strata = all_strata();
    for (StratumKey k : strata) {
        read_text(fit_path(c, k), "fit");
    }
    parallel_for(static_cast<int>(strata.size()), c.jobs, [&](int i) {
        const StratumKey k = strata[static_cast<std::size_t>(i)];
        const ModelFrame frame = load_frame(c, k);
        const MortalityModel model(frame, p.graph, c.model_settings());
        const json fit = read_artifact(fit_path(c, k), c, "fit");
        const HyperGrid grid = grid_from_json(fit.at("grid"), model.engine());
        const std::uint64_t stratum_seed = substream_seed(c.seed, static_cast<std::uint64_t>(stratum_index(k)));
        const Eigen::MatrixXd eta = model.sample_prediction_eta(grid, c.n_samples, substream_seed(stratum_seed, 0));
        PredictiveSamples s = posterior_predictive(eta, prediction_rows(frame), substream_seed(stratum_seed, 1));
        s.provenance = prov;
        fs::create_directories(stage_dir(c, "predict"));
        write_samples(s, predict_path(c, k));
    });
}

namespace {

std::vector<PredictiveSamples> load_predictions(const RunConfig &c) {
    std::vector<PredictiveSamples> out;
    for (StratumKey k : all_strata()) {
        const fs::path path = predict_path(c, k);
        if (!fs::exists(path)) {
            throw DataError("missing artifact " + path.string() + "; run `exmort predict` first");
        }
        PredictiveSamples s = read_samples(path);
        check_provenance(s.provenance, c, path);
        out.push_back(std::move(s));
    }
    return out;
}

std::map<std::string, std::string> region_map_of(std::span<const Region> regions) {
    std::map<std::string, std::string> m;
    for (const auto &r : regions) {
        m[r.area_id] = r.region_id;
    }
    return m;
}

} // namespace

void cmd_excess(const RunConfig &c) {
    c.validate();
    const Prepared p = load_prepared(c);
    const auto preds = load_predictions(c);
    const auto tables = aggregate_all(preds, region_map_of(p.regions), c.categories, c.country_id);
    const fs::path dir = stage_dir(c, "excess");
    fs::create_directories(dir);
    const std::string line = provenance_line(c);
    for (const auto &t : tables) {
        std::ostringstream out;
        write_summary_csv(t, out, line);
        write_text(dir / (summary_file_stem(t.spec) + ".csv"), out.str());
        if (t.spec.level == SpatialLevel::province && t.spec.mode == StrataMode::none &&
            t.spec.temporal == Temporal::annual) {
            write_text(dir / "summaries.csv", out.str());
        }
        if (t.spec.mode == StrataMode::none && t.spec.temporal == Temporal::annual) {
            json g = summaries_geojson(t, p.regions);
            g["provenance"] = provenance(c);
            write_text(dir / ("summaries_" + level_name(t.spec.level) + ".geojson"), g.dump() + "\n");
        }
    }
    write_text(dir / "bundle.json", make_bundle(tables, c.categories, provenance(c)).dump() + "\n");
}

void cmd_validate(const RunConfig &c) {
    c.validate();
    read_artifact(stage_dir(c, "prepare") / "meta.json", c, "prepare");
    const LoadedInputs li = load_inputs(c);
    const std::vector<int> years = c.validation_years.empty() ? c.fit_years : c.validation_years;
    const auto runner =
        model_fold_runner(li.sources, li.graph, c.model_settings(), years, c.validation_samples, c.seed);
    const auto strata = all_strata();
    std::vector<StratumCV> report(strata.size());
    parallel_for(static_cast<int>(strata.size()), c.jobs, [&](int i) {
        const StratumKey k = strata[static_cast<std::size_t>(i)];
        report[static_cast<std::size_t>(i)] = loyo_cv(std::span(&k, 1), years, runner, c.correlation).front();
    });
    const fs::path dir = stage_dir(c, "validate");
    const std::string line = provenance_line(c);
    std::ostringstream a, b, t;
    write_cv_report(report, a, line);
    write_cv_report_by_year(report, b, line);
    t << "# " << line << '\n';
    write_cv_table(report, t);
    write_text(dir / "cv_report.csv", a.str());
    write_text(dir / "cv_report_by_year.csv", b.str());
    write_text(dir / "cv_table.txt", t.str());
}

void cmd_export_bundle(const RunConfig &c) {
    c.validate();
    const Prepared p = load_prepared(c);
    const fs::path bundle = stage_dir(c, "excess") / "bundle.json";
    const json doc = read_artifact(bundle, c, "excess");
    const fs::path dir = stage_dir(c, "export");
    write_text(dir / "bundle.json", read_text(bundle, "excess"));
    json rg = regions_geojson(p.regions);
    rg["provenance"] = provenance(c);
    write_text(dir / "regions.geojson", rg.dump() + "\n");
    for (const auto &s : load_predictions(c)) {
        std::ostringstream out;
        out << "# " << provenance_line(c) << '\n';
        write_samples_csv(s, out);
        write_text(dir / ("predictive_" + stratum_file_label(s.rows.front().stratum) + ".csv"), out.str());
    }
}

void run_command(const std::string &command, const RunConfig &config) {
    if (command == "prepare") cmd_prepare(config);
    else if (command == "fit") cmd_fit(config);
    else if (command == "predict") cmd_predict(config);
    else if (command == "excess") cmd_excess(config);
    else if (command == "validate") cmd_validate(config);
    else if (command == "export-bundle") cmd_export_bundle(config);
    else throw ConfigError("unknown command '" + command + "'");
}

void run_all(const RunConfig &config) {
    for (const char *cmd : {"prepare", "fit", "predict", "excess", "validate", "export-bundle"}) {
        run_command(cmd, config);
    }
}

} // namespace exmort
