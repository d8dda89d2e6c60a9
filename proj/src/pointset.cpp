#include "knnlab/pointset.hpp"

#include <random>
#include <stdexcept>

#include "knnlab/rng.hpp"

namespace knnlab {

PointSet sample_poisson_pointset(const Region& region, double intensity, std::uint64_t seed) {
    if (!(intensity >= 0.0)) {
        throw std::invalid_argument("sample_poisson_pointset: intensity must be >= 0");
    }
    PointSet out;
    out.region = region;
    out.seed = seed;
    out.intensity = intensity;

    const double mean = intensity * region.area();
    if (mean == 0.0) return out;

    Rng rng(seed);
    std::poisson_distribution<std::uint64_t> count_dist(mean);
    const std::uint64_t count = count_dist(rng);

    out.points.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const double x = rng.uniform(region.x_min(), region.x_max());
        const double y = rng.uniform(region.y_min(), region.y_max());
        out.points.push_back({x, y});
    }
    return out;
}

PointSet make_pointset(std::vector<Point> points, const Region& region) {
    for (const auto& p : points) {
        if (!region.contains(p)) {
            throw std::invalid_argument("make_pointset: point outside region");
        }
    }
    PointSet out;
    out.points = std::move(points);
    out.region = region;
    return out;
}

}  // namespace knnlab
