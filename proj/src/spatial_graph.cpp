#include "exmort/spatial_graph.hpp"

#include "exmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace exmort {

Graph::Graph(std::vector<std::string> labels, std::vector<std::vector<int>> neighbors)
    : labels_{std::move(labels)}, neighbors_{std::move(neighbors)} {
    const int n = static_cast<int>(neighbors_.size());
    if (labels_.empty()) {
        for (int i = 0; i < n; ++i) {
            labels_.push_back(std::to_string(i + 1));
        }
    }
    std::vector<std::string> problems;
    if (static_cast<int>(labels_.size()) != n) {
        problems.push_back("label count " + std::to_string(labels_.size()) + " != node count " +
                           std::to_string(n));
    }
    std::set<std::string> unique(labels_.begin(), labels_.end());
    if (unique.size() != labels_.size()) {
        problems.push_back("node labels are not unique");
    }
    for (int i = 0; i < n; ++i) {
        auto &nb = neighbors_[i];
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        for (int j : nb) {
            if (j < 0 || j >= n) {
                problems.push_back("node " + std::to_string(i + 1) + " lists out-of-range id " +
                                   std::to_string(j + 1));
            } else if (j == i) {
                problems.push_back("self-loop at node " + std::to_string(i + 1));
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j : neighbors_[i]) {
            if (j < 0 || j >= n || j == i) {
                continue;
            }
            if (!std::binary_search(neighbors_[j].begin(), neighbors_[j].end(), i)) {
                problems.push_back("asymmetric pair (" + std::to_string(i + 1) + "," +
                                   std::to_string(j + 1) + ")");
            }
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid adjacency graph: ";
        for (std::size_t k = 0; k < problems.size(); ++k) {
            msg += (k ? "; " : "") + problems[k];
        }
        throw DataError(msg);
    }
}

int Graph::index_of(const std::string &label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

std::vector<std::vector<int>> Graph::connected_components() const {
    std::vector<int> comp(neighbors_.size(), -1);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < size(); ++start) {
        if (comp[start] >= 0) {
            continue;
        }
        const int id = static_cast<int>(out.size());
        out.emplace_back();
        std::vector<int> stack{start};
        comp[start] = id;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            out[id].push_back(v);
            for (int w : neighbors_[v]) {
                if (comp[w] < 0) {
                    comp[w] = id;
                    stack.push_back(w);
                }
            }
        }
        std::sort(out[id].begin(), out[id].end());
    }
    return out;
}

Graph parse_adjacency(std::istream &in, std::vector<std::string> labels) {
    std::string line;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            const auto first = line.find_first_not_of(" \t\r");
            if (first != std::string::npos && line[first] != '#') {
                return true;
            }
        }
        return false;
    };
    if (!next_line()) {
        throw DataError("adjacency file is empty");
    }
    int n = 0;
    {
        std::istringstream ls(line);
        if (!(ls >> n) || n <= 0) {
            throw DataError("adjacency file: first line must hold the node count");
        }
    }
    std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (int k = 0; k < n; ++k) {
        if (!next_line()) {
            throw DataError("adjacency file: expected " + std::to_string(n) + " node lines, got " +
                            std::to_string(k));
        }
        std::istringstream ls(line);
        int id = 0;
        int m = 0;
        if (!(ls >> id >> m) || m < 0) {
            throw DataError("adjacency file: malformed node line '" + line + "'");
        }
        if (id < 1 || id > n) {
            throw DataError("adjacency file: out-of-range node id " + std::to_string(id));
        }
        if (seen[id - 1]) {
            throw DataError("adjacency file: node " + std::to_string(id) + " listed twice");
        }
        seen[id - 1] = true;
        for (int j = 0; j < m; ++j) {
            int nb = 0;
            if (!(ls >> nb)) {
                throw DataError("adjacency file: node " + std::to_string(id) + " declares " +
                                std::to_string(m) + " neighbours but lists fewer");
            }
            nbrs[id - 1].push_back(nb - 1);
        }
    }
    return Graph{std::move(labels), std::move(nbrs)};
}

Graph read_adjacency(const std::filesystem::path &path, std::vector<std::string> labels) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return parse_adjacency(in, std::move(labels));
}

void write_adjacency(const Graph &graph, std::ostream &out) {
    out << graph.size() << '\n';
    for (int i = 0; i < graph.size(); ++i) {
        const auto &nb = graph.neighbors(i);
        out << (i + 1) << ' ' << nb.size();
        for (int j : nb) {
            out << ' ' << (j + 1);
        }
        out << '\n';
    }
}

Graph queen_contiguity(std::span<const Region> regions) {
    // Vertices are matched after rounding to ~1e-9 degrees.
    auto key = [](Point p) {
        return std::pair<long long, long long>{std::llround(p.lon * 1e9), std::llround(p.lat * 1e9)};
    };
    std::map<std::pair<long long, long long>, std::set<int>> owners;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        for (const auto &part : regions[r].parts) {
            for (const auto &p : part.outer) {
                owners[key(p)].insert(static_cast<int>(r));
            }
            for (const auto &hole : part.holes) {
                for (const auto &p : hole) {
                    owners[key(p)].insert(static_cast<int>(r));
                }
            }
        }
    }
    std::vector<std::set<int>> nb(regions.size());
    for (const auto &[k, set] : owners) {
        for (int a : set) {
            for (int b : set) {
                if (a != b) {
                    nb[a].insert(b);
                }
            }
        }
    }
    std::vector<std::string> labels;
    std::vector<std::vector<int>> lists;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        labels.push_back(regions[r].area_id);
        lists.emplace_back(nb[r].begin(), nb[r].end());
    }
    return Graph{std::move(labels), std::move(lists)};
}

std::vector<std::vector<int>> StructureMatrix::constrained_components() const {
    std::vector<std::vector<int>> out;
    for (const auto &c : components) {
        if (c.size() > 1) {
            out.push_back(c);
        }
    }
    return out;
}

StructureMatrix icar_structure(const Graph &graph) {
    const int n = graph.size();
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < n; ++i) {
        const auto &nb = graph.neighbors(i);
        if (!nb.empty()) {
            trip.emplace_back(i, i, static_cast<double>(nb.size()));
        }
        for (int j : nb) {
            trip.emplace_back(i, j, -1.0);
        }
    }
    StructureMatrix out;
    out.R.resize(n, n);
    out.R.setFromTriplets(trip.begin(), trip.end());
    out.components = graph.connected_components();
    out.rank_deficiency = static_cast<int>(out.components.size());
    out.scaling_factors.assign(out.components.size(), 1.0);
    return out;
}

namespace {

Eigen::MatrixXd component_block(const SparseMatrix &R, const std::vector<int> &nodes) {
    const Eigen::MatrixXd dense = Eigen::MatrixXd(R);
    const auto m = static_cast<Eigen::Index>(nodes.size());
    Eigen::MatrixXd block(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
            block(a, b) = dense(nodes[a], nodes[b]);
        }
    }
    return block;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd &block) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
    const Eigen::VectorXd &values = eig.eigenvalues();
    const double tol = 1e-10 * std::max(1.0, values.cwiseAbs().maxCoeff());
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) > tol) {
            inv(i) = 1.0 / values(i);
        }
    }
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

} // namespace

Eigen::MatrixXd constrained_generalized_inverse(const StructureMatrix &structure) {
    const auto n = structure.R.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (const auto &nodes : structure.components) {
        const Eigen::MatrixXd inv = pseudo_inverse(component_block(structure.R, nodes));
        for (std::size_t a = 0; a < nodes.size(); ++a) {
            for (std::size_t b = 0; b < nodes.size(); ++b) {
                out(nodes[a], nodes[b]) = inv(a, b);
            }
        }
    }
    return out;
}

StructureMatrix scale_structure(const StructureMatrix &structure) {
    StructureMatrix out = structure;
    const auto n = structure.R.rows();
    Eigen::VectorXd factor = Eigen::VectorXd::Ones(n);
    std::vector<int> singletons;
    int rank_deficiency = 0;
    for (std::size_t c = 0; c < structure.components.size(); ++c) {
        const auto &nodes = structure.components[c];
        if (nodes.size() == 1) {
            singletons.push_back(nodes.front());
            out.scaling_factors[c] = 1.0;
            continue;
        }
        const Eigen::MatrixXd inv = pseudo_inverse(component_block(structure.R, nodes));
        const double log_gm = inv.diagonal().array().log().mean();
        const double scale = std::exp(log_gm);
        out.scaling_factors[c] = structure.scaling_factors[c] * scale;
        for (int v : nodes) {
            factor(v) = scale;
        }
        ++rank_deficiency;
    }
    // R_ij belongs to a single component, so scaling by the row factor is exact.
    for (int k = 0; k < out.R.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(out.R, k); it; ++it) {
            it.valueRef() *= factor(it.row());
        }
    }
    if (!singletons.empty()) {
        std::vector<Eigen::Triplet<double>> trip;
        for (int k = 0; k < out.R.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(out.R, k); it; ++it) {
                trip.emplace_back(it.row(), it.col(), it.value());
            }
        }
        for (int v : singletons) {
            bool present = false;
            for (auto &t : trip) {
                if (t.row() == v && t.col() == v) {
                    present = true;
                }
            }
            if (!present) {
                trip.emplace_back(v, v, 1.0);
            }
        }
        out.R.setFromTriplets(trip.begin(), trip.end());
    }
    out.rank_deficiency = rank_deficiency;
    return out;
}

} // namespace exmort
