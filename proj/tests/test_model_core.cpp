#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "knnlab/knn_graph.hpp"
#include "knnlab/pointset.hpp"
#include "knnlab/rng.hpp"
#include "knnlab/spatial_index.hpp"
#include "oracles.hpp"

using namespace knnlab;

namespace {

std::set<oracle::Edge> edge_set(const KnnGraph& g) {
    const auto e = g.edges();
    return {e.begin(), e.end()};
}

PointSet line_points(std::vector<Point> pts) {
    double hi = 1.0;
    for (const auto& p : pts) hi = std::max({hi, p.x + 1.0, p.y + 1.0});
    return make_pointset(std::move(pts), Region(-1.0, -1.0, hi, hi));
}

}  // namespace

TEST_SUITE("sampling") {
    TEST_CASE("zero intensity gives an empty set") {
        const auto ps = sample_poisson_pointset(Region(0, 0, 10, 10), 0.0, 42);
        CHECK(ps.empty());
    }

    TEST_CASE("negative intensity is rejected") {
        CHECK_THROWS_AS(sample_poisson_pointset(Region(0, 0, 1, 1), -1.0, 1), std::invalid_argument);
    }

    TEST_CASE("same seed gives identical points, different seeds differ") {
        const Region r(0, 0, 30, 30);
        const auto a = sample_poisson_pointset(r, 1.0, 7);
        const auto b = sample_poisson_pointset(r, 1.0, 7);
        const auto c = sample_poisson_pointset(r, 1.0, 8);
        CHECK(a.points == b.points);
        CHECK(a.points != c.points);
        CHECK(a.seed == 7);
    }

    TEST_CASE("points lie in the region") {
        const Region r(-5, 2, 15, 40);
        const auto ps = sample_poisson_pointset(r, 3.0, 11);
        for (const auto& p : ps.points) CHECK(r.contains(p));
    }

    TEST_CASE("count has Poisson mean and variance") {
        // Area 1000, 10000 seeds: the sample mean sits within 4 standard errors
        // (4 sqrt(1000/10000)) of 1000.
        const Region r(0, 0, std::sqrt(1000.0), std::sqrt(1000.0));
        const int seeds = 10'000;
        double sum = 0.0, sum2 = 0.0;
        for (int s = 0; s < seeds; ++s) {
            const auto c = static_cast<double>(sample_poisson_pointset(r, 1.0, derive_seed(99, s)).size());
            sum += c;
            sum2 += c * c;
        }
        const double mean = sum / seeds;
        const double var = sum2 / seeds - mean * mean;
        CHECK(std::abs(mean - 1000.0) <= 4.0 * std::sqrt(1000.0 / seeds));
        // Var of the sample variance for Poisson(1000) is about 2*1000^2/seeds.
        CHECK(std::abs(var - 1000.0) <= 4.0 * std::sqrt(2.0 * 1000.0 * 1000.0 / seeds));
    }

    TEST_CASE("coordinates are uniform") {
        const Region r(0, 0, 100, 100);
        const auto ps = sample_poisson_pointset(r, 2.0, 5);
        std::vector<int> bins(100, 0);
        for (const auto& p : ps.points) {
            bins[std::min(9, int(p.x / 10)) * 10 + std::min(9, int(p.y / 10))]++;
        }
        const double expected = static_cast<double>(ps.size()) / 100.0;
        double chi2 = 0.0;
        for (int b : bins) chi2 += (b - expected) * (b - expected) / expected;
        // 99 degrees of freedom; the 0.999 quantile is about 148.
        CHECK(chi2 < 148.0);
    }

    TEST_CASE("make_pointset rejects points outside the region") {
        CHECK_THROWS_AS(make_pointset({{2.0, 0.5}}, Region(0, 0, 1, 1)), std::invalid_argument);
    }
}

TEST_SUITE("rng") {
    TEST_CASE("derived seeds are distinct across indices") {
        std::set<std::uint64_t> seen;
        for (std::uint64_t i = 0; i < 10'000; ++i) seen.insert(derive_seed(1, i));
        CHECK(seen.size() == 10'000);
    }

    TEST_CASE("below stays in range and covers it") {
        Rng rng(3);
        std::vector<int> hits(7, 0);
        for (int i = 0; i < 7000; ++i) {
            const auto v = rng.below(7);
            REQUIRE(v < 7);
            hits[v]++;
        }
        for (int h : hits) CHECK(h > 800);
    }

    TEST_CASE("uniform01 lies in [0, 1)") {
        Rng rng(4);
        for (int i = 0; i < 10'000; ++i) {
            const double u = rng.uniform01();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
        }
    }
}

TEST_SUITE("knn graph") {
    TEST_CASE("two points, k = 1") {
        const auto ps = line_points({{0, 0}, {1, 0}});
        CHECK(edge_set(build_knn_graph(ps, 1)) == std::set<oracle::Edge>{{0, 1}});
        CHECK(edge_set(brute_force_knn_graph(ps, 1)) == std::set<oracle::Edge>{{0, 1}});
    }

    TEST_CASE("chain: edges are undirected") {
        const auto ps = line_points({{0, 0}, {1, 0}, {3, 0}});
        const auto g = build_knn_graph(ps, 1);
        CHECK(edge_set(g) == std::set<oracle::Edge>{{0, 1}, {1, 2}});
        CHECK(longest_edge_length(g, ps) == doctest::Approx(2.0));
    }

    TEST_CASE("k at least point_count - 1 gives the complete graph") {
        const auto ps = oracle::uniform_points(9, 5.0, 1);
        for (std::size_t k : {8u, 9u, 20u}) {
            const auto g = build_knn_graph(ps, k);
            CHECK(g.edge_count() == 36);
            CHECK(brute_force_knn_graph(ps, k) == g);
        }
    }

    TEST_CASE("k = 0 gives no edges") {
        const auto ps = oracle::uniform_points(20, 5.0, 2);
        CHECK(build_knn_graph(ps, 0).edge_count() == 0);
        CHECK(longest_edge_length(build_knn_graph(ps, 0), ps) == 0.0);
    }

    TEST_CASE("empty and single-point sets") {
        const auto empty = make_pointset({}, Region(0, 0, 1, 1));
        CHECK(build_knn_graph(empty, 3).point_count() == 0);
        const auto one = make_pointset({{0.5, 0.5}}, Region(0, 0, 1, 1));
        CHECK(build_knn_graph(one, 3).edge_count() == 0);
        CHECK(longest_edge_length(build_knn_graph(one, 3), one) == 0.0);
    }

    TEST_CASE("500 points in area 500, k = 7, match the brute-force graph") {
        const auto ps = oracle::uniform_points(500, std::sqrt(500.0), 17);
        CHECK(build_knn_graph(ps, 7) == brute_force_knn_graph(ps, 7));
    }

    TEST_CASE("indexed graph matches the independent oracle on random instances") {
        Rng rng(2024);
        for (int inst = 0; inst < 60; ++inst) {
            const auto count = 1 + rng.below(600);
            const auto k = 1 + rng.below(20);
            const double side = 1.0 + rng.uniform(0.0, 40.0);
            const auto ps = oracle::uniform_points(count, side, rng());
            const auto g = build_knn_graph(ps, k);
            REQUIRE(edge_set(g) == oracle::knn_edges(ps.points, k));
        }
    }

    TEST_CASE("ties break towards the lower index") {
        // Integer lattice: many equal distances.
        std::vector<Point> pts;
        for (int x = 0; x < 12; ++x) {
            for (int y = 0; y < 12; ++y) pts.push_back({double(x), double(y)});
        }
        const auto ps = make_pointset(pts, Region(-1, -1, 13, 13));
        for (std::size_t k : {1u, 2u, 3u, 5u, 8u}) {
            CHECK(edge_set(build_knn_graph(ps, k)) == oracle::knn_edges(pts, k));
        }
        // The origin's single nearest neighbour is (0,1), index 1, not (1,0), index 12.
        const auto table = build_neighbour_table(ps, 1);
        CHECK(table.row(0)[0] == 1);
    }

    TEST_CASE("duplicate points are distinct vertices at distance zero") {
        const auto ps = make_pointset({{1, 1}, {1, 1}, {1, 1}, {4, 1}}, Region(0, 0, 5, 5));
        const auto g = build_knn_graph(ps, 1);
        CHECK(edge_set(g) == oracle::knn_edges(ps.points, 1));
        CHECK(g == brute_force_knn_graph(ps, 1));
    }

    TEST_CASE("symmetry, degree bound and monotone coupling") {
        Rng rng(77);
        for (int inst = 0; inst < 20; ++inst) {
            const auto ps = oracle::uniform_points(50 + rng.below(800), 30.0, rng());
            std::set<oracle::Edge> previous;
            for (std::size_t k = 1; k <= 12; ++k) {
                const auto g = build_knn_graph(ps, k);
                for (std::size_t i = 0; i < g.point_count(); ++i) {
                    if (ps.size() > k) REQUIRE(g.degree(i) >= k);
                    for (auto j : g.neighbours(i)) {
                        const auto back = g.neighbours(j);
                        REQUIRE(std::binary_search(back.begin(), back.end(), static_cast<std::uint32_t>(i)));
                        REQUIRE(j != i);
                    }
                }
                const auto now = edge_set(g);
                REQUIRE(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
                previous = now;
            }
        }
    }

    TEST_CASE("one table serves every k of a sweep") {
        const auto ps = oracle::uniform_points(700, 25.0, 8);
        const auto table = build_neighbour_table(ps, 15);
        CHECK(table == brute_force_neighbour_table(ps, 15));
        for (std::size_t k = 1; k <= 15; ++k) CHECK(graph_from_table(table, k) == build_knn_graph(ps, k));
        CHECK_THROWS_AS(graph_from_table(table, 16), std::invalid_argument);
    }

    TEST_CASE("brute force refuses large inputs") {
        const auto ps = oracle::uniform_points(kBruteForceLimit + 1, 200.0, 3);
        CHECK_THROWS_AS(brute_force_knn_graph(ps, 2), std::length_error);
    }

    TEST_CASE("longest edge matches the oracle edge set") {
        const auto ps = oracle::uniform_points(300, std::sqrt(300.0), 12);
        double best = 0.0;
        for (auto [a, b] : oracle::knn_edges(ps.points, 4)) best = std::max(best, distance(ps[a], ps[b]));
        CHECK(longest_edge_length(build_knn_graph(ps, 4), ps) == best);
    }

    TEST_CASE("longest edge rejects a mismatched pointset") {
        const auto ps = oracle::uniform_points(30, 5.0, 1);
        const auto other = oracle::uniform_points(31, 5.0, 1);
        CHECK_THROWS_AS(longest_edge_length(build_knn_graph(ps, 2), other), std::invalid_argument);
    }
}

TEST_SUITE("spatial index") {
    TEST_CASE("nearest and count_within agree with a linear scan") {
        const auto ps = oracle::uniform_points(2000, 40.0, 21);
        const BucketGrid grid(ps.points, ps.region);
        Rng rng(5);
        std::vector<Neighbour> out;
        for (int q = 0; q < 200; ++q) {
            const Point query{rng.uniform(-5.0, 45.0), rng.uniform(-5.0, 45.0)};
            const auto exclude = q % 2 ? static_cast<std::uint32_t>(rng.below(2000)) : BucketGrid::npos;
            std::vector<Neighbour> all;
            for (std::uint32_t i = 0; i < ps.size(); ++i) {
                if (i != exclude) all.push_back({squared_distance(query, ps[i]), i});
            }
            std::sort(all.begin(), all.end());
            const std::size_t k = 1 + rng.below(30);
            grid.nearest(query, k, exclude, out);
            REQUIRE(out.size() == k);
            for (std::size_t t = 0; t < k; ++t) REQUIRE(out[t] == all[t]);

            const double r2 = rng.uniform(0.0, 30.0);
            const auto expected = static_cast<std::size_t>(
                std::count_if(all.begin(), all.end(), [&](const Neighbour& nb) { return nb.d2 <= r2; }));
            CHECK(grid.count_within(query, r2, exclude) == expected);
            CHECK(grid.count_within(query, r2, exclude, 3) == std::min<std::size_t>(3, expected));
        }
    }
}
