#include "exmort/predictive.hpp"

#include "exmort/csv.hpp"
#include "exmort/errors.hpp"
#include "exmort/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace exmort {

namespace {

constexpr char kMagic[] = "EXMS1\n";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

} // namespace

PredictiveSamples posterior_predictive(const Eigen::MatrixXd &eta, std::vector<PredictiveRow> rows,
                                       std::uint64_t seed) {
    if (static_cast<std::size_t>(eta.rows()) != rows.size()) {
        throw DataError("predictive: " + std::to_string(eta.rows()) + " linear-predictor rows for " +
                        std::to_string(rows.size()) + " prediction cells");
    }
    PredictiveSamples out;
    out.counts.resize(eta.rows(), eta.cols());
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(i)));
        for (Eigen::Index m = 0; m < eta.cols(); ++m) {
            const double rate = std::exp(eta(i, m));
            if (!std::isfinite(rate) || rate > kMaxPoissonRate) {
                const auto &r = rows[static_cast<std::size_t>(i)];
                throw NumericalError("predictive rate overflow at row " + std::to_string(i) + " (area " +
                                     r.area_id + ", week " + euro_label(r.week) + ", stratum " +
                                     stratum_label(r.stratum) + "): the fit has diverged");
            }
            if (rate <= 0) {
                out.counts(i, m) = 0;
                continue;
            }
            std::poisson_distribution<std::int32_t> pois(rate);
            out.counts(i, m) = pois(rng);
        }
    }
    out.rows = std::move(rows);
    out.seed = seed;
    return out;
}

std::vector<PredictiveRow> prediction_rows(const ModelFrame &frame) {
    std::vector<PredictiveRow> out;
    for (const auto &row : frame.rows) {
        if (row.is_prediction) {
            out.push_back({frame.areas.at(row.area), row.week, frame.stratum, row.population, row.observed});
        }
    }
    return out;
}

void write_samples(const PredictiveSamples &samples, const std::filesystem::path &path) {
    nlohmann::json header;
    header["n_rows"] = samples.rows.size();
    header["n_samples"] = samples.n_samples();
    header["seed"] = samples.seed;
    header["provenance"] = samples.provenance;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &r : samples.rows) {
        rows.push_back({{"area_id", r.area_id},
                        {"week", euro_label(r.week)},
                        {"stratum", stratum_file_label(r.stratum)},
                        {"population", r.population},
                        {"observed", r.observed ? nlohmann::json(*r.observed) : nlohmann::json(nullptr)}});
    }
    header["rows"] = std::move(rows);
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(kMagic, kMagicSize);
    std::uint64_t len = text.size();
    unsigned char lenbuf[8];
    for (int b = 0; b < 8; ++b) {
        lenbuf[b] = static_cast<unsigned char>(len >> (8 * b));
    }
    out.write(reinterpret_cast<const char *>(lenbuf), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<unsigned char> buf(static_cast<std::size_t>(samples.counts.size()) * 4);
    for (Eigen::Index k = 0; k < samples.counts.size(); ++k) {
        const auto v = static_cast<std::uint32_t>(samples.counts.data()[k]);
        for (int b = 0; b < 4; ++b) {
            buf[static_cast<std::size_t>(k) * 4 + b] = static_cast<unsigned char>(v >> (8 * b));
        }
    }
    out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

PredictiveSamples read_samples(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("missing predictive samples " + path.string());
    }
    char magic[kMagicSize];
    in.read(magic, kMagicSize);
    if (!in || std::memcmp(magic, kMagic, kMagicSize) != 0) {
        throw DataError(path.string() + " is not a predictive-samples file");
    }
    unsigned char lenbuf[8];
    in.read(reinterpret_cast<char *>(lenbuf), 8);
    std::uint64_t len = 0;
    for (int b = 0; b < 8; ++b) {
        len |= static_cast<std::uint64_t>(lenbuf[b]) << (8 * b);
    }
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) {
        throw DataError(path.string() + " has a truncated header");
    }
    PredictiveSamples s;
    try {
        const auto header = nlohmann::json::parse(text);
        s.seed = header.at("seed").get<std::uint64_t>();
        s.provenance = header.at("provenance");
        const auto n_rows = header.at("n_rows").get<Eigen::Index>();
        const auto n_samples = header.at("n_samples").get<Eigen::Index>();
        for (const auto &r : header.at("rows")) {
            PredictiveRow row;
            row.area_id = r.at("area_id").get<std::string>();
            const auto wk = r.at("week").get<std::string>();
            int y = 0, w = 0;
            if (std::sscanf(wk.c_str(), "%d-W%d", &y, &w) != 2) {
                throw DataError("bad week label " + wk + " in " + path.string());
            }
            row.week = {y, w};
            row.stratum = parse_stratum_file_label(r.at("stratum").get<std::string>());
            row.population = r.at("population").get<double>();
            if (!r.at("observed").is_null()) {
                row.observed = r.at("observed").get<int>();
            }
            s.rows.push_back(std::move(row));
        }
        if (static_cast<Eigen::Index>(s.rows.size()) != n_rows) {
            throw DataError(path.string() + ": row metadata count differs from the header");
        }
        s.counts.resize(n_rows, n_samples);
    } catch (const nlohmann::json::exception &e) {
        throw DataError(path.string() + ": malformed header: " + e.what());
    }
    std::vector<unsigned char> buf(static_cast<std::size_t>(s.counts.size()) * 4);
    in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) {
        throw DataError(path.string() + " has truncated sample data");
    }
    for (Eigen::Index k = 0; k < s.counts.size(); ++k) {
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) {
            v |= static_cast<std::uint32_t>(buf[static_cast<std::size_t>(k) * 4 + b]) << (8 * b);
        }
        s.counts.data()[k] = static_cast<std::int32_t>(v);
    }
    return s;
}

void write_samples_csv(const PredictiveSamples &samples, std::ostream &out) {
    const auto n = samples.n_samples();
    for (int m = 0; m < n; ++m) {
        out << 'V' << (m + 1) << ',';
    }
    out << "EURO_LABEL,ID_space,year\n";
    for (std::size_t i = 0; i < samples.rows.size(); ++i) {
        const auto &r = samples.rows[i];
        for (int m = 0; m < n; ++m) {
            out << samples.counts(static_cast<Eigen::Index>(i), m) << ',';
        }
        out << euro_label(r.week) << ',' << csv::escape(r.area_id) << ',' << r.week.year << '\n';
    }
}

} // namespace exmort
