#pragma once

// Hand-built local configurations with B_k and without the bad set.

#include <cmath>
#include <vector>

#include "knnlab/local_model.hpp"
#include "knnlab/rng.hpp"

namespace fixture {

struct ClusterSpec {
    knnlab::Point centre;
    double radius = 0.4;
};

/// A jittered unit lattice over U_n with a hole of radius 2.5 around each
/// cluster centre, and k+1 points on a small circle inside each hole. The
/// clusters become isolated components; the lattice keeps every ball of
/// radius lambda2 sqrt(log n) populated. With `aligned_below`, the lattice
/// point nearest to 2.6 below the lowest cluster vertex is moved onto that
/// vertex's vertical, so the empty-tile scan meets a nonempty tile (the
/// interior case).
inline knnlab::PointSet two_cluster_fixture(const knnlab::ConstantsBundle& c, std::size_t k,
                                            const std::vector<ClusterSpec>& clusters, bool aligned_below,
                                            std::uint64_t seed) {
    using knnlab::Point;
    const knnlab::Region box = knnlab::local_box(c);
    knnlab::Rng rng(seed);
    std::vector<Point> pts;
    for (double x = std::ceil(box.x_min()) - 0.5; x < box.x_max(); x += 1.0) {
        for (double y = std::ceil(box.y_min()) - 0.5; y < box.y_max(); y += 1.0) {
            const Point p{x + rng.uniform(-0.1, 0.1), y + rng.uniform(-0.1, 0.1)};
            if (!box.contains(p)) continue;
            bool in_hole = false;
            for (const auto& cl : clusters) in_hole = in_hole || knnlab::distance(p, cl.centre) < 2.5;
            if (!in_hole) pts.push_back(p);
        }
    }
    Point lowest{0.0, box.y_max()};
    for (const auto& cl : clusters) {
        const auto m = static_cast<double>(k + 1);
        for (std::size_t i = 0; i <= k; ++i) {
            const double a = 2.0 * M_PI * static_cast<double>(i) / m + 0.3;
            const Point p{cl.centre.x + cl.radius * std::cos(a), cl.centre.y + cl.radius * std::sin(a)};
            pts.push_back(p);
            if (p.y < lowest.y) lowest = p;
        }
    }
    if (aligned_below) {
        const Point target{lowest.x, lowest.y - 2.6};
        std::size_t best = 0;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            if (knnlab::distance(pts[i], target) < knnlab::distance(pts[best], target)) best = i;
        }
        pts[best] = target;
    }
    return knnlab::make_pointset(std::move(pts), box);
}

/// The standard pair of central clusters.
inline std::vector<ClusterSpec> central_pair(double dx = 3.5, double dy = 1.5) {
    return {{{-dx, dy}}, {{dx, -dy}}};
}

}  // namespace fixture
