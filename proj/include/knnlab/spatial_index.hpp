#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "knnlab/geometry.hpp"

namespace knnlab {

/// Candidate neighbour ordered by (squared distance, index). The index term
/// is the deterministic tie-break: lower vertex index wins.
struct Neighbour {
    double d2 = 0.0;
    std::uint32_t index = 0;

    friend bool operator<(const Neighbour& a, const Neighbour& b) {
        return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
    }
    friend bool operator==(const Neighbour&, const Neighbour&) = default;
};

/// Uniform bucket grid over a bounding region. Immutable after construction
/// and safe to query concurrently.
class BucketGrid {
public:
    static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();

    /// `target_per_cell` sets the cell size so each cell holds roughly that
    /// many points on average.
    BucketGrid(std::span<const Point> points, const Region& bounds, double target_per_cell = 2.0);

    /// The k nearest points to `query`, excluding index `exclude`, sorted by
    /// (d2, index). Fewer than k when the set is smaller.
    void nearest(const Point& query, std::size_t k, std::uint32_t exclude,
                 std::vector<Neighbour>& out) const;

    /// Number of points with squared distance <= r2 from `query`, excluding
    /// `exclude`; stops counting once `cap` is reached.
    std::size_t count_within(const Point& query, double r2, std::uint32_t exclude,
                             std::size_t cap = std::numeric_limits<std::size_t>::max()) const;

    std::size_t size() const { return points_.size(); }

private:
    int cell_x(double x) const;
    int cell_y(double y) const;

    std::span<const Point> points_;
    double x0_ = 0.0;
    double y0_ = 0.0;
    double cell_ = 1.0;
    int nx_ = 1;
    int ny_ = 1;
    std::vector<std::uint32_t> cell_start_;
    std::vector<std::uint32_t> order_;
    std::vector<Point> sorted_;
};

}  // namespace knnlab
