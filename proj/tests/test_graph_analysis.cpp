#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "knnlab/constants.hpp"
#include "knnlab/graph_analysis.hpp"
#include "knnlab/knn_graph.hpp"
#include "knnlab/rng.hpp"
#include "oracles.hpp"

using namespace knnlab;

namespace {

std::vector<Point> cluster(Point centre, int count, double radius) {
    std::vector<Point> pts;
    for (int i = 0; i < count; ++i) {
        const double a = 2.0 * M_PI * i / count + 0.1;
        pts.push_back({centre.x + radius * std::cos(a), centre.y + radius * std::sin(a)});
    }
    return pts;
}

// Unit lattice on [lo, hi]^2, slightly jittered so no distance ties occur.
std::vector<Point> lattice(double lo, double hi, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point> pts;
    for (double x = lo; x <= hi; x += 1.0) {
        for (double y = lo; y <= hi; y += 1.0) {
            pts.push_back({x + rng.uniform(-0.05, 0.05), y + rng.uniform(-0.05, 0.05)});
        }
    }
    return pts;
}

}  // namespace

TEST_SUITE("components") {
    TEST_CASE("chain forms one component of diameter 3") {
        const auto ps = make_pointset({{0, 0}, {1, 0}, {3, 0}}, Region(-1, -1, 4, 1));
        const auto comps = connected_components(build_knn_graph(ps, 1), ps, 10.0);
        REQUIRE(comps.size() == 1);
        CHECK(comps[0].diameter == doctest::Approx(3.0));
        CHECK(comps[0].size == 3);
        CHECK(comps[0].is_small);
        CHECK(is_connected(build_knn_graph(ps, 1)));
    }

    TEST_CASE("two far clusters give two components") {
        auto pts = cluster({0, 0}, 3, 1.0);
        const auto far = cluster({100, 0}, 3, 1.0);
        pts.insert(pts.end(), far.begin(), far.end());
        const auto ps = make_pointset(pts, Region(-5, -5, 105, 5));
        const auto g = build_knn_graph(ps, 2);
        CHECK(connected_components(g, ps, 10.0).size() == 2);
        CHECK_FALSE(is_connected(g));
    }

    TEST_CASE("empty graph counts as connected") {
        const auto ps = make_pointset({}, Region(0, 0, 1, 1));
        CHECK(is_connected(build_knn_graph(ps, 1)));
        CHECK(connected_components(build_knn_graph(ps, 1), ps, 1.0).empty());
    }

    TEST_CASE("partition, diameters and bottom-most vertex match the BFS oracle") {
        Rng rng(31);
        for (int inst = 0; inst < 40; ++inst) {
            const auto ps = oracle::uniform_points(10 + rng.below(400), 20.0, rng());
            const std::size_t k = 1 + rng.below(6);
            const double threshold = rng.uniform(0.5, 8.0);
            const auto g = build_knn_graph(ps, k);
            const auto comps = connected_components(g, ps, threshold);
            const auto expected = oracle::bfs_components(ps.size(), oracle::knn_edges(ps.points, k));
            REQUIRE(comps.size() == expected.size());
            std::vector<int> seen(ps.size(), 0);
            for (std::size_t c = 0; c < comps.size(); ++c) {
                const auto& comp = comps[c];
                REQUIRE(comp.vertex_indices == expected[c]);
                CHECK(comp.size == comp.vertex_indices.size());
                for (auto v : comp.vertex_indices) seen[v]++;
                const double d = oracle::diameter(ps.points, expected[c]);
                CHECK(comp.is_small == (d < threshold));
                if (comp.is_small) {
                    CHECK(comp.diameter == d);
                } else {
                    CHECK((comp.diameter == d || comp.diameter == kDiameterSentinel));
                }
                CHECK((comp.diameter == 0.0) == (comp.size <= 1));
                auto lowest = comp.vertex_indices.front();
                for (auto v : comp.vertex_indices) {
                    if (ps[v].y < ps[lowest].y) lowest = v;
                    CHECK(comp.bbox.contains(ps[v]));
                }
                CHECK(comp.bottom_most_vertex == lowest);
            }
            for (int s : seen) REQUIRE(s == 1);
        }
    }

    TEST_CASE("400 random points, k = 5, partition equals BFS") {
        const auto ps = oracle::uniform_points(400, 20.0, 400);
        const auto comps = connected_components(build_knn_graph(ps, 5), ps, 3.0);
        const auto expected = oracle::bfs_components(400, oracle::knn_edges(ps.points, 5));
        REQUIRE(comps.size() == expected.size());
        for (std::size_t c = 0; c < comps.size(); ++c) CHECK(comps[c].vertex_indices == expected[c]);
    }

    TEST_CASE("bottom-most ties are flagged") {
        const auto ps = make_pointset({{0, 0}, {1, 0}, {0.5, 1}}, Region(-1, -1, 2, 2));
        const auto comps = connected_components(build_knn_graph(ps, 2), ps, 10.0);
        REQUIRE(comps.size() == 1);
        CHECK(comps[0].bottom_most_tied);
        CHECK(comps[0].bottom_most_vertex == 0);
    }
}

TEST_SUITE("close pairs") {
    TEST_CASE("a single small component has no close partner") {
        const auto ps = make_pointset(cluster({5, 5}, 4, 0.5), Region(0, 0, 10, 10));
        const auto comps = connected_components(build_knn_graph(ps, 3), ps, 5.0);
        CHECK(find_close_small_pairs(comps, ps, 100.0).empty());
    }

    TEST_CASE("two singletons at distance 5 with threshold 6") {
        const auto ps = make_pointset({{0, 0}, {5, 0}}, Region(-1, -1, 6, 1));
        const auto comps = connected_components(build_knn_graph(ps, 0), ps, 1.0);
        const auto pairs = find_close_small_pairs(comps, ps, 6.0);
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0] == std::pair<std::size_t, std::size_t>{0, 1});
        CHECK(find_close_small_pairs(comps, ps, 5.0).empty());
    }

    TEST_CASE("matches the all-pairs oracle and is irreflexive") {
        Rng rng(8);
        for (int inst = 0; inst < 30; ++inst) {
            const auto ps = oracle::uniform_points(50 + rng.below(300), 30.0, rng());
            const auto comps = connected_components(build_knn_graph(ps, 1 + rng.below(3)), ps, 2.5);
            const double threshold = rng.uniform(0.5, 6.0);
            std::set<std::pair<std::size_t, std::size_t>> expected;
            for (const auto& a : comps) {
                for (const auto& b : comps) {
                    if (!a.is_small || !b.is_small || a.component_id >= b.component_id) continue;
                    bool close = false;
                    for (auto u : a.vertex_indices) {
                        for (auto v : b.vertex_indices) close = close || distance(ps[u], ps[v]) < threshold;
                    }
                    if (close) expected.insert({a.component_id, b.component_id});
                }
            }
            const auto got = find_close_small_pairs(comps, ps, threshold);
            CHECK(std::set<std::pair<std::size_t, std::size_t>>(got.begin(), got.end()) == expected);
            for (auto [a, b] : got) CHECK(a < b);
        }
    }
}

TEST_SUITE("grid") {
    TEST_CASE("nearest grid point") {
        const auto a = nearest_grid_point({2.3, 4.6});
        CHECK(a.point == GridPoint{2, 5});
        CHECK(a.unique);
        CHECK_FALSE(nearest_grid_point({2.5, 0.0}).unique);
        CHECK_FALSE(nearest_grid_point({1.0, -3.5}).unique);
        const auto c = nearest_grid_point({-0.4, 0.4});
        CHECK(c.point == GridPoint{0, 0});
        CHECK(c.unique);
    }

    TEST_CASE("Gamma is exactly the grid points whose cell fits in S_n") {
        for (double n : {2000.0, 10'000.0, 50'000.0}) {
            for (double lambda : {0.5, 1.0, kEulerSquared}) {
                const CountingGeometry g(n, lambda);
                const auto side = g.side();
                for (std::int64_t v = -2; v <= static_cast<std::int64_t>(side) + 2; ++v) {
                    const GridPoint x{v, v};
                    const double h = g.cell_side() / 2.0;
                    const bool fits = v - h >= 0.0 && v + h <= side;
                    CHECK(g.in_gamma(x) == fits);
                }
            }
        }
    }

    TEST_CASE("thresholds") {
        const CountingGeometry g(10'000.0, kEulerSquared);
        const double s = kEulerSquared * std::sqrt(std::log(10'000.0));
        CHECK(g.small_threshold() == doctest::Approx(s));
        CHECK(g.close_threshold() == doctest::Approx(8 * s));
        CHECK(g.cell_side() == doctest::Approx(4 * s));
        CHECK(g.gamma_size() == 121);
    }
}

TEST_SUITE("counting and bad events") {
    // n = 10^4, lambda = 1: small threshold ~3.03, Gamma = [7, 93]^2.
    const CountingGeometry geom(10'000.0, 1.0);

    TEST_CASE("no small components gives an all-zero map") {
        const auto ps = make_pointset(lattice(20, 60, 1), geom.square());
        const auto g = build_knn_graph(ps, 4);
        CHECK(global_counting_function(g, ps, geom).empty());
    }

    TEST_CASE("one small component marks its grid point") {
        auto pts = lattice(50, 90, 2);
        const std::vector<Point> small{{10.2, 20.7}, {10.5, 21.0}, {10.0, 21.2}, {10.6, 21.4}, {10.3, 21.6}};
        pts.insert(pts.end(), small.begin(), small.end());
        const auto ps = make_pointset(pts, geom.square());
        const auto g = build_knn_graph(ps, 4);
        const auto x = global_counting_function(g, ps, geom);
        REQUIRE(x.size() == 1);
        CHECK(x.begin()->first == GridPoint{10, 21});
        CHECK(x.begin()->second == 1);
        const auto flags = detect_bad_events(g, ps, geom, std::vector<GridPoint>{{10, 21}});
        CHECK_FALSE(flags.any());
        CHECK(local_counting_function(ps, {10, 21}, 4, geom));
        CHECK_FALSE(local_counting_function(ps, {11, 21}, 4, geom));
    }

    TEST_CASE("empty pointset raises no flag") {
        const auto ps = make_pointset({}, geom.square());
        CHECK_FALSE(detect_bad_events(build_knn_graph(ps, 3), ps, geom, std::nullopt).any());
    }

    TEST_CASE("an edge of length 1 is not long") {
        const auto ps = make_pointset({{40, 40}, {41, 40}}, geom.square());
        const auto flags = detect_bad_events(build_knn_graph(ps, 1), ps, geom, std::vector<GridPoint>{{40, 40}});
        CHECK_FALSE(flags.d1);
        CHECK_FALSE(flags.d2);
    }

    TEST_CASE("two small clusters 2 lambda sqrt(log n) apart are close") {
        const double gap = 2.0 * geom.small_threshold();
        auto pts = cluster({30.3, 30.3}, 5, 0.4);
        const auto other = cluster({30.3 + gap, 30.3}, 5, 0.4);
        pts.insert(pts.end(), other.begin(), other.end());
        const auto ps = make_pointset(pts, geom.square());
        const auto flags = detect_bad_events(build_knn_graph(ps, 4), ps, geom, std::nullopt);
        CHECK(flags.d5);
        CHECK(flags.any());
    }

    TEST_CASE("long edge, two large components, boundary and tie events") {
        // With a tiny lambda two far 2-point components are both large (d3);
        // joining them needs long edges (d1).
        const CountingGeometry tiny(10'000.0, 0.1);
        const auto ps = make_pointset({{10, 10}, {11, 10}, {80, 80}, {81, 80}}, tiny.square());
        const auto flags = detect_bad_events(build_knn_graph(ps, 1), ps, tiny, std::vector<GridPoint>{});
        CHECK(flags.d3);
        const auto joined = detect_bad_events(build_knn_graph(ps, 3), ps, tiny, std::vector<GridPoint>{});
        CHECK(joined.d1);

        // A small component next to the border: nearest grid point outside Gamma.
        const auto edge_ps = make_pointset(cluster({1.2, 50.2}, 3, 0.2), geom.square());
        CHECK(detect_bad_events(build_knn_graph(edge_ps, 2), edge_ps, geom, std::vector<GridPoint>{}).d4);

        // Bottom-most vertex at a half-integer: ambiguous.
        const auto tie_ps = make_pointset({{40.5, 40.0}, {40.9, 40.6}, {40.2, 40.7}}, geom.square());
        const auto tf = detect_bad_events(build_knn_graph(tie_ps, 2), tie_ps, geom,
                                          std::vector<GridPoint>{{40, 40}});
        CHECK(tf.d6);
        CHECK(tf.d7);
    }

    TEST_CASE("any() is the disjunction of the seven flags") {
        for (int mask = 0; mask < 128; ++mask) {
            BadEventFlags f{bool(mask & 1), bool(mask & 2), bool(mask & 4), bool(mask & 8),
                            bool(mask & 16), bool(mask & 32), bool(mask & 64)};
            CHECK(f.any() == (mask != 0));
        }
    }

    TEST_CASE("without bad events, X counts the small components exactly") {
        Rng rng(123);
        int clean = 0;
        for (int trial = 0; trial < 40; ++trial) {
            const auto ps = sample_poisson_pointset(geom.square(), 1.0, rng());
            const auto k = 2 + rng.below(3);
            const auto g = build_knn_graph(ps, k);
            const auto ga = analyse_global(g, ps, geom);
            const auto flags = detect_bad_events(g, ps, geom, std::vector<GridPoint>{});
            CHECK(flags.d1 == ga.flags.d1);
            CHECK(flags.d3 == ga.flags.d3);
            CHECK(flags.d4 == ga.flags.d4);
            CHECK(flags.d5 == ga.flags.d5);
            CHECK(flags.d6 == ga.flags.d6);
            if (flags.any()) continue;
            ++clean;
            CHECK(ga.counting.size() == ga.small_count);
        }
        CHECK(clean > 0);
    }

    TEST_CASE("without long edges, X and Y agree at examined cells") {
        // lambda = 2 at n = 10^4: cells of side ~24 inside a square of side 100.
        const CountingGeometry g2(10'000.0, 2.0);
        Rng rng(321);
        int compared = 0;
        for (int trial = 0; trial < 25; ++trial) {
            const auto ps = sample_poisson_pointset(g2.square(), 1.0, rng());
            const std::size_t k = 3 + rng.below(2);
            const auto g = build_knn_graph(ps, k);
            const auto ga = analyse_global(g, ps, g2);
            std::vector<GridPoint> cells;
            for (const auto& [x, v] : ga.counting) cells.push_back(x);
            for (int extra = 0; extra < 4; ++extra) {
                cells.push_back({g2.gamma_lo() + static_cast<std::int64_t>(rng.below(g2.gamma_axis_count())),
                                 g2.gamma_lo() + static_cast<std::int64_t>(rng.below(g2.gamma_axis_count()))});
            }
            if (ga.flags.d1) continue;
            for (const auto& x : cells) {
                const auto local = analyse_local_cell(ps, x, g2, {k}).front();
                if (local.long_edge) continue;
                const bool xv = ga.counting.contains(x);
                CHECK(xv == local.y);
                ++compared;
            }
        }
        CHECK(compared > 0);
    }

    TEST_CASE("a k sweep on one cell equals separate evaluations") {
        const CountingGeometry g2(10'000.0, 2.0);
        const auto ps = sample_poisson_pointset(g2.square(), 1.0, 9);
        const GridPoint x{50, 50};
        const auto sweep = analyse_local_cell(ps, x, g2, {2, 3, 4, 5});
        for (const auto& r : sweep) {
            const auto single = analyse_local_cell(ps, x, g2, {r.k}).front();
            CHECK(single.y == r.y);
            CHECK(single.long_edge == r.long_edge);
            CHECK(single.ambiguous == r.ambiguous);
        }
    }

    TEST_CASE("connectivity is monotone in k on a fixed pointset") {
        Rng rng(5);
        for (int trial = 0; trial < 30; ++trial) {
            const auto ps = oracle::uniform_points(300, 17.0, rng());
            const auto table = build_neighbour_table(ps, 10);
            bool was = false;
            for (std::size_t k = 1; k <= 10; ++k) {
                const bool now = is_connected(graph_from_table(table, k));
                CHECK((!was || now));
                was = now;
            }
        }
    }
}
