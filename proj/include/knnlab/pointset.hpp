#pragma once

#include <cstdint>
#include <vector>

#include "knnlab/geometry.hpp"

namespace knnlab {

/// Sampled planar points. The order of `points` is the generation order and
/// doubles as the vertex indexing of every graph built on the set.
struct PointSet {
    std::vector<Point> points;
    Region region;
    std::uint64_t seed = 0;
    double intensity = 0.0;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    const Point& operator[](std::size_t i) const { return points[i]; }
};

/// Homogeneous Poisson process of the given intensity on `region`: draws
/// N ~ Poisson(intensity * area) and then N independent uniform points.
/// Bit-identical for identical (region, intensity, seed).
PointSet sample_poisson_pointset(const Region& region, double intensity, std::uint64_t seed);

/// Wraps explicit coordinates (fixtures, tests, replayed inputs).
PointSet make_pointset(std::vector<Point> points, const Region& region);

}  // namespace knnlab
