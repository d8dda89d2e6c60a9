#include "knnlab/knn_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "knnlab/spatial_index.hpp"

namespace knnlab {

NeighbourTable::NeighbourTable(std::size_t point_count, std::size_t k_max)
    : point_count_(point_count),
      k_max_(k_max),
      row_(point_count == 0 ? 0 : std::min(k_max, point_count - 1)),
      index_(point_count * row_) {}

KnnGraph::KnnGraph(std::size_t k, std::size_t point_count, std::vector<std::uint32_t> offsets,
                   std::vector<std::uint32_t> adjacency)
    : k_(k), point_count_(point_count), offsets_(std::move(offsets)), adjacency_(std::move(adjacency)) {
    if (offsets_.size() != point_count_ + 1 || offsets_.back() != adjacency_.size()) {
        throw std::invalid_argument("KnnGraph: inconsistent adjacency arrays");
    }
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> KnnGraph::edges() const {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    out.reserve(edge_count());
    for (std::size_t i = 0; i < point_count_; ++i) {
        for (auto j : neighbours(i)) {
            if (i < j) out.emplace_back(static_cast<std::uint32_t>(i), j);
        }
    }
    return out;
}

NeighbourTable build_neighbour_table(const PointSet& pointset, std::size_t k_max) {
    NeighbourTable table(pointset.size(), k_max);
    const std::size_t row = table.row_length();
    if (row == 0) return table;

    const BucketGrid grid(pointset.points, pointset.region);
    const auto n = static_cast<std::int64_t>(pointset.size());
#pragma omp parallel
    {
        std::vector<Neighbour> best;
        best.reserve(row + 1);
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            grid.nearest(pointset[i], row, static_cast<std::uint32_t>(i), best);
            auto dst = table.row(static_cast<std::size_t>(i));
            for (std::size_t r = 0; r < row; ++r) dst[r] = best[r].index;
        }
    }
    return table;
}

NeighbourTable brute_force_neighbour_table(const PointSet& pointset, std::size_t k_max) {
    if (pointset.size() > kBruteForceLimit) {
        throw std::length_error("brute_force_neighbour_table: " + std::to_string(pointset.size()) +
                                " points exceeds the oracle limit of " +
                                std::to_string(kBruteForceLimit));
    }
    NeighbourTable table(pointset.size(), k_max);
    const std::size_t row = table.row_length();
    std::vector<Neighbour> all;
    for (std::size_t i = 0; i < pointset.size(); ++i) {
        all.clear();
        for (std::size_t j = 0; j < pointset.size(); ++j) {
            if (j == i) continue;
            all.push_back({squared_distance(pointset[i], pointset[j]), static_cast<std::uint32_t>(j)});
        }
        std::sort(all.begin(), all.end());
        auto dst = table.row(i);
        for (std::size_t r = 0; r < row; ++r) dst[r] = all[r].index;
    }
    return table;
}

KnnGraph graph_from_table(const NeighbourTable& table, std::size_t k) {
    const std::size_t n = table.point_count();
    const std::size_t take = std::min(k, table.row_length());
    const std::size_t needed = n == 0 ? 0 : std::min(k, n - 1);
    if (needed > take) {
        throw std::invalid_argument("graph_from_table: k exceeds the table's k_max");
    }
    // Bucket arcs by source, then sort and dedupe each short list.
    std::vector<std::uint32_t> start(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = table.row(i);
        start[i + 1] += static_cast<std::uint32_t>(take);
        for (std::size_t r = 0; r < take; ++r) ++start[row[r] + 1];
    }
    for (std::size_t i = 0; i < n; ++i) start[i + 1] += start[i];
    std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
    std::vector<std::uint32_t> arcs(start.back());
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = table.row(i);
        for (std::size_t r = 0; r < take; ++r) {
            arcs[fill[i]++] = row[r];
            arcs[fill[row[r]]++] = static_cast<std::uint32_t>(i);
        }
    }

    std::vector<std::uint32_t> offsets(n + 1, 0);
    std::vector<std::uint32_t> adjacency;
    adjacency.reserve(arcs.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto first = arcs.begin() + start[i];
        const auto last = arcs.begin() + start[i + 1];
        std::sort(first, last);
        adjacency.insert(adjacency.end(), first, std::unique(first, last));
        offsets[i + 1] = static_cast<std::uint32_t>(adjacency.size());
    }
    return KnnGraph(k, n, std::move(offsets), std::move(adjacency));
}

KnnGraph build_knn_graph(const PointSet& pointset, std::size_t k) {
    return graph_from_table(build_neighbour_table(pointset, k), k);
}

KnnGraph brute_force_knn_graph(const PointSet& pointset, std::size_t k) {
    return graph_from_table(brute_force_neighbour_table(pointset, k), k);
}

double longest_edge_length(const KnnGraph& graph, const PointSet& pointset) {
    if (graph.point_count() != pointset.size()) {
        throw std::invalid_argument("longest_edge_length: graph and pointset sizes differ");
    }
    double best = 0.0;
    for (std::size_t i = 0; i < graph.point_count(); ++i) {
        for (auto j : graph.neighbours(i)) {
            if (i < j) best = std::max(best, squared_distance(pointset[i], pointset[j]));
        }
    }
    return std::sqrt(best);
}

}  // namespace knnlab
