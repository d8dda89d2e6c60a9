#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "knnlab/pointset.hpp"

namespace knnlab {

/// Per-vertex ordered nearest-neighbour lists up to some k_max. The list of
/// vertex i is sorted by (distance, index), so the k-nearest set for any
/// k <= k_max is a prefix. One table therefore serves a whole k sweep.
class NeighbourTable {
public:
    NeighbourTable() = default;
    NeighbourTable(std::size_t point_count, std::size_t k_max);

    std::size_t point_count() const { return point_count_; }
    std::size_t k_max() const { return k_max_; }
    /// Entries stored per row: min(k_max, point_count - 1).
    std::size_t row_length() const { return row_; }

    std::span<const std::uint32_t> row(std::size_t i) const {
        return {index_.data() + i * row_, row_};
    }
    std::span<std::uint32_t> row(std::size_t i) { return {index_.data() + i * row_, row_}; }

    friend bool operator==(const NeighbourTable&, const NeighbourTable&) = default;

private:
    std::size_t point_count_ = 0;
    std::size_t k_max_ = 0;
    std::size_t row_ = 0;
    std::vector<std::uint32_t> index_;
};

/// Undirected k-nearest-neighbour graph in compressed adjacency form.
/// Adjacency lists are sorted and symmetric, without self-loops.
class KnnGraph {
public:
    KnnGraph() = default;
    KnnGraph(std::size_t k, std::size_t point_count, std::vector<std::uint32_t> offsets,
             std::vector<std::uint32_t> adjacency);

    std::size_t k() const { return k_; }
    std::size_t point_count() const { return point_count_; }
    std::size_t edge_count() const { return adjacency_.size() / 2; }
    std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }

    std::span<const std::uint32_t> neighbours(std::size_t i) const {
        return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }

    /// Edges as (i, j) with i < j, lexicographically ordered.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges() const;

    friend bool operator==(const KnnGraph&, const KnnGraph&) = default;

private:
    std::size_t k_ = 0;
    std::size_t point_count_ = 0;
    std::vector<std::uint32_t> offsets_{0};
    std::vector<std::uint32_t> adjacency_;
};

/// Indexed construction of the neighbour table (bucket grid, OpenMP over
/// query points).
NeighbourTable build_neighbour_table(const PointSet& pointset, std::size_t k_max);

/// Serial O(n^2 log n) reference: full distance sort per vertex.
NeighbourTable brute_force_neighbour_table(const PointSet& pointset, std::size_t k_max);

/// Symmetrised graph using the first min(k, row_length) entries of each row.
KnnGraph graph_from_table(const NeighbourTable& table, std::size_t k);

/// Exact undirected k-NN graph: {i, j} is an edge iff j is among the k
/// nearest of i or i among the k nearest of j (ties: lower index first).
KnnGraph build_knn_graph(const PointSet& pointset, std::size_t k);

/// Oracle for build_knn_graph. Refuses inputs above kBruteForceLimit points.
KnnGraph brute_force_knn_graph(const PointSet& pointset, std::size_t k);

inline constexpr std::size_t kBruteForceLimit = 10'000;

/// Largest Euclidean edge length; 0 for an edgeless graph.
double longest_edge_length(const KnnGraph& graph, const PointSet& pointset);

}  // namespace knnlab
