#pragma once

#include "exmort/geometry.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace exmort {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Undirected areal adjacency graph with sorted neighbour lists.
class Graph {
  public:
    Graph() = default;

    /// Validates symmetry, self-loops and id ranges; throws DataError listing
    /// every problem found.
    Graph(std::vector<std::string> labels, std::vector<std::vector<int>> neighbors);

    int size() const { return static_cast<int>(neighbors_.size()); }
    const std::vector<int> &neighbors(int node) const { return neighbors_[node]; }
    const std::string &label(int node) const { return labels_[node]; }
    const std::vector<std::string> &labels() const { return labels_; }
    int index_of(const std::string &label) const; // -1 when absent

    std::vector<std::vector<int>> connected_components() const;

    bool operator==(const Graph &) const = default;

  private:
    std::vector<std::string> labels_;
    std::vector<std::vector<int>> neighbors_;
};

/// Adjacency file: line 1 holds N, then one line per node
/// "<id> <m> <nbr1> ... <nbrm>" with 1-based ids. Lines starting with # are skipped.
Graph parse_adjacency(std::istream &in, std::vector<std::string> labels = {});
Graph read_adjacency(const std::filesystem::path &path, std::vector<std::string> labels = {});
void write_adjacency(const Graph &graph, std::ostream &out);

/// Queen contiguity: regions sharing at least one boundary vertex are neighbours.
Graph queen_contiguity(std::span<const Region> regions);

/// Structure (scaled or unscaled) of an intrinsic GMRF.
struct StructureMatrix {
    SparseMatrix R;
    int rank_deficiency = 0;
    std::vector<std::vector<int>> components;
    std::vector<double> scaling_factors; // one per component; 1 when unscaled

    /// Components that carry a sum-to-zero constraint (size > 1).
    std::vector<std::vector<int>> constrained_components() const;
};

/// ICAR structure: R[i,i] = number of neighbours, R[i,j] = -1 for neighbours.
StructureMatrix icar_structure(const Graph &graph);

/// Generalized inverse of R under per-component sum-to-zero constraints
/// (Moore-Penrose inverse of each component block). Dense.
Eigen::MatrixXd constrained_generalized_inverse(const StructureMatrix &structure);

/// Rescales each component so that the geometric mean of the marginal
/// variances of its constrained generalized inverse is 1. Singleton
/// components become unit-precision iid nodes.
StructureMatrix scale_structure(const StructureMatrix &structure);

} // namespace exmort
