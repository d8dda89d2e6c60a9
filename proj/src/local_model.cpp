#include "knnlab/local_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "knnlab/rng.hpp"
#include "knnlab/spatial_index.hpp"

namespace knnlab {

Region local_box(const ConstantsBundle& c) {
    return Region::centred_square({0.0, 0.0}, c.box_side());
}

Region half_box(const ConstantsBundle& c) {
    return Region::centred_square({0.0, 0.0}, c.box_side() / 2.0);
}

Tiling::Tiling(const Region& box, std::int64_t per_side) : box_(box), per_side_(per_side) {
    if (per_side < 1) throw std::invalid_argument("Tiling: per_side must be >= 1");
    if (box.width() != box.height()) throw std::invalid_argument("Tiling: box must be square");
    side_ = box.width() / static_cast<double>(per_side);
}

Tiling Tiling::for_constants(const ConstantsBundle& c) {
    const auto per_side = static_cast<std::int64_t>(std::llround(c.M * static_cast<double>(c.N)));
    return Tiling(local_box(c), std::max<std::int64_t>(per_side, 1));
}

Region Tiling::tile(const TileIndex& t) const {
    if (t.ix < 0 || t.iy < 0 || t.ix >= per_side_ || t.iy >= per_side_) {
        throw std::out_of_range("Tiling::tile: index outside the box");
    }
    const double x0 = box_.x_min() + static_cast<double>(t.ix) * side_;
    const double y0 = box_.y_min() + static_cast<double>(t.iy) * side_;
    // The last row/column ends exactly on the box edge.
    const double x1 = t.ix + 1 == per_side_ ? box_.x_max() : x0 + side_;
    const double y1 = t.iy + 1 == per_side_ ? box_.y_max() : y0 + side_;
    return Region(x0, y0, x1, y1);
}

TileIndex Tiling::tile_of(const Point& p) const {
    const auto axis = [&](double v, double lo) {
        const double f = std::floor((v - lo) / side_);
        return static_cast<std::int64_t>(std::clamp(f, 0.0, static_cast<double>(per_side_ - 1)));
    };
    return {axis(p.x, box_.x_min()), axis(p.y, box_.y_min())};
}

std::vector<Region> Tiling::tiles() const {
    if (tile_count() > kMaxListedTiles) {
        throw std::length_error("Tiling::tiles: too many tiles to list");
    }
    std::vector<Region> out;
    out.reserve(static_cast<std::size_t>(tile_count()));
    for (std::int64_t iy = 0; iy < per_side_; ++iy) {
        for (std::int64_t ix = 0; ix < per_side_; ++ix) out.push_back(tile({ix, iy}));
    }
    return out;
}

namespace {

void require_local_region(const PointSet& pointset, const ConstantsBundle& c) {
    if (!(pointset.region == local_box(c))) {
        throw std::invalid_argument("local events: pointset region must equal U_n");
    }
}

double small_threshold_of(const ConstantsBundle& c) {
    return c.lambda > 0.0 ? c.lambda * c.sqrt_log_n() : c.box_side();
}

}  // namespace

LocalAnalysis analyse_local_graph(const PointSet& pointset, KnnGraph graph, const ConstantsBundle& c) {
    LocalAnalysis la;
    la.graph = std::move(graph);
    la.components = connected_components(la.graph, pointset, small_threshold_of(c));
    const Region half = half_box(c);
    for (std::size_t i = 0; i < la.components.size(); ++i) {
        const auto& members = la.components[i].vertex_indices;
        const bool inside = std::all_of(members.begin(), members.end(),
                                        [&](std::uint32_t v) { return half.contains(pointset[v]); });
        if (inside) la.inside.push_back(i);
    }
    la.outcome.components_in_half_box = la.inside.size();
    la.outcome.a_k = !la.inside.empty();
    la.outcome.b_k = la.inside.size() >= 2;
    return la;
}

namespace {

bool a_k_holds(const PointSet& pointset, std::size_t k, const ConstantsBundle& c) {
    return analyse_local_graph(pointset, build_knn_graph(pointset, k), c).outcome.a_k;
}

}  // namespace

LocalAnalysis analyse_local_box(const PointSet& pointset, std::size_t k, const ConstantsBundle& c) {
    require_local_region(pointset, c);
    LocalAnalysis la = analyse_local_graph(pointset, build_knn_graph(pointset, k), c);
    la.outcome.bad_C = detect_bad_set_C(pointset, k, c);
    return la;
}

LocalEventOutcome evaluate_local_events(const PointSet& pointset, std::size_t k,
                                        const ConstantsBundle& c) {
    return analyse_local_box(pointset, k, c).outcome;
}

std::vector<LocalEventOutcome> evaluate_local_events_sweep(const PointSet& pointset,
                                                           const std::vector<std::size_t>& ks,
                                                           const ConstantsBundle& c) {
    require_local_region(pointset, c);
    std::size_t k_max = 0;
    for (auto k : ks) k_max = std::max(k_max, k);
    const NeighbourTable table = build_neighbour_table(pointset, k_max);
    std::vector<LocalEventOutcome> out;
    out.reserve(ks.size());
    for (auto k : ks) {
        auto outcome = analyse_local_graph(pointset, graph_from_table(table, k), c).outcome;
        outcome.bad_C = detect_bad_set_C(pointset, k, c);
        out.push_back(outcome);
    }
    return out;
}

bool detect_bad_set_C(const PointSet& pointset, std::size_t k, const ConstantsBundle& c) {
    const double r1 = c.lambda1 * c.sqrt_log_n();
    const double r2 = c.lambda2 * c.sqrt_log_n();
    const double r1_2 = r1 * r1;
    const double r2_2 = r2 * r2;
    const Region& box = pointset.region;
    const BucketGrid grid(pointset.points, box);
    constexpr auto none = BucketGrid::npos;

    const auto gx0 = static_cast<std::int64_t>(std::ceil(box.x_min()));
    const auto gx1 = static_cast<std::int64_t>(std::floor(box.x_max()));
    const auto gy0 = static_cast<std::int64_t>(std::ceil(box.y_min()));
    const auto gy1 = static_cast<std::int64_t>(std::floor(box.y_max()));
    for (auto gy = gy0; gy <= gy1; ++gy) {
        for (auto gx = gx0; gx <= gx1; ++gx) {
            const Point x{static_cast<double>(gx), static_cast<double>(gy)};
            if (grid.count_within(x, r1_2, none, k) >= k) return true;
            if (grid.count_within(x, r2_2, none, k) < k) return true;
        }
    }
    for (std::size_t i = 0; i < pointset.size(); ++i) {
        const auto self = static_cast<std::uint32_t>(i);
        if (k == 0 || 1 + grid.count_within(pointset[i], r1_2, self, k - 1) >= k) return true;
        if (grid.count_within(pointset[i], r2_2, self, k) < k) return true;
    }
    return false;
}

CertificateReport empty_tile_certificate(const PointSet& pointset, std::size_t k,
                                         const ConstantsBundle& c, std::size_t trial_count,
                                         std::uint64_t rng_seed) {
    const LocalAnalysis la = analyse_local_box(pointset, k, c);
    if (!la.outcome.b_k || la.outcome.bad_C) {
        throw std::invalid_argument("empty_tile_certificate: requires B_k and no bad set");
    }

    // Witnesses: the two inside components whose bottom-most vertices are lowest.
    std::vector<std::uint32_t> bottoms;
    for (auto i : la.inside) bottoms.push_back(la.components[i].bottom_most_vertex);
    const auto lower = [&](std::uint32_t u, std::uint32_t v) {
        return pointset[u].y < pointset[v].y || (pointset[u].y == pointset[v].y && u < v);
    };
    std::sort(bottoms.begin(), bottoms.end(), lower);

    CertificateReport report;
    report.a = pointset[bottoms.front()];
    const Tiling tiling = Tiling::for_constants(c);
    report.tile_a = tiling.tile_of(report.a);

    std::int64_t top_nonempty = -1;
    for (const auto& p : pointset.points) {
        const TileIndex t = tiling.tile_of(p);
        if (t.ix == report.tile_a.ix && t.iy < report.tile_a.iy) top_nonempty = std::max(top_nonempty, t.iy);
    }
    report.boundary_case = top_nonempty < 0;
    report.tile_q = {report.tile_a.ix, top_nonempty + 1};
    if (report.tile_q.iy >= report.tile_a.iy) {
        report.counterexample = true;
        report.counterexample_reason = "the tile directly below Q_a holds a point";
        return report;
    }
    report.region_q = tiling.tile(report.tile_q);
    for (const auto& p : pointset.points) {
        if (report.region_q.contains(p)) {
            report.counterexample = true;
            report.counterexample_reason = "the designated tile Q is not empty";
            return report;
        }
    }

    const Region& q = report.region_q;
    std::vector<std::vector<Point>> batches = {{{q.x_min(), q.y_min()}},
                                               {{q.x_max(), q.y_min()}},
                                               {{q.x_min(), q.y_max()}},
                                               {{q.x_max(), q.y_max()}},
                                               {q.centre()}};
    Rng rng(rng_seed);
    for (std::size_t t = 0; t < trial_count; ++t) {
        const std::size_t size = 1 + rng.below(kMaxBatchSize);
        std::vector<Point> batch(size);
        for (auto& p : batch) p = {rng.uniform(q.x_min(), q.x_max()), rng.uniform(q.y_min(), q.y_max())};
        batches.push_back(std::move(batch));
    }

    PointSet augmented = pointset;
    for (const auto& batch : batches) {
        augmented.points.resize(pointset.size());
        augmented.points.insert(augmented.points.end(), batch.begin(), batch.end());
        ++report.batches_tested;
        if (a_k_holds(augmented, k, c)) {
            ++report.batches_passed;
        } else {
            report.failed_batch_sizes.push_back(batch.size());
        }
    }
    return report;
}

namespace {

constexpr double kSqrt5 = 2.2360679774997896964;

// Uniform direction on the arc of the circle of radius r about b lying on or
// above the horizontal line y = floor_y. Requires b.y + r >= floor_y.
Point on_upper_arc(Rng& rng, const Point& b, double r, double floor_y) {
    const double s0 = std::clamp((floor_y - b.y) / r, -1.0, 1.0);
    const double lo = std::asin(s0);
    const double theta = rng.uniform(lo, std::numbers::pi - lo);
    Point d{b.x + r * std::cos(theta), b.y + r * std::sin(theta)};
    d.y = std::max(d.y, floor_y);
    return d;
}

std::string describe(const char* claim, const Point& a, const Point& b, const Point& c,
                     const Point& d, double R) {
    std::ostringstream s;
    s.precision(17);
    s << claim << " a=(" << a.x << "," << a.y << ") b=(" << b.x << "," << b.y << ") c=(" << c.x
      << "," << c.y << ") d=(" << d.x << "," << d.y << ") R=" << R;
    return s.str();
}

// Relative slack for rounding in the final comparisons.
constexpr double kClaimSlack = 1e-12;
constexpr std::size_t kMaxRecorded = 8;

}  // namespace

ClaimReport check_claim_inequalities(std::size_t sample_count, std::uint64_t rng_seed,
                                     const ConstantsBundle& c) {
    // Everything is measured in units of sqrt(log n); both claims are
    // invariant under that scaling.
    const double t = 1.0 / static_cast<double>(c.N);
    const double l1 = c.lambda1;
    const double l2 = c.lambda2;
    ClaimReport report;
    Rng rng(rng_seed);
    const std::size_t max_attempts = 1000 * std::max<std::size_t>(sample_count, 1);

    const auto place = [&](std::int64_t j, Point& a, Point& b, Point& cc) {
        a = {rng.uniform(0.0, t), rng.uniform(0.0, t)};
        const double top_b = -static_cast<double>(j - 1) * t;
        b = {rng.uniform(0.0, t), rng.uniform(top_b - t, top_b)};
        cc = {rng.uniform(0.0, t), rng.uniform(top_b - 2.0 * t, top_b - t)};
    };

    // Claim 1: d is within R + sqrt5 t of b and on or above the line through a.
    const auto j1 = static_cast<std::int64_t>(std::ceil((l2 + kSqrt5 * t) / t)) + 1;
    for (std::size_t attempt = 0; report.claim1_samples < sample_count && attempt < max_attempts;
         ++attempt) {
        Point a, b, cc;
        place(1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(j1))), a, b, cc);
        const double r_max = std::min(l2, distance(a, cc));
        const double R = rng.below(2) == 0 ? r_max : rng.uniform(0.0, r_max);
        const double reach = R + kSqrt5 * t;
        if (b.y + reach < a.y) {
            ++report.rejected;
            continue;
        }
        const double r = rng.below(2) == 0 ? reach : rng.uniform(std::max(0.0, a.y - b.y), reach);
        const Point d = on_upper_arc(rng, b, std::max(r, 1e-300), a.y);
        if (distance(b, d) > reach * (1.0 + kClaimSlack)) {
            ++report.rejected;
            continue;
        }
        ++report.claim1_samples;
        const double ratio = distance(a, d) / l1;
        report.claim1_worst_ratio = std::max(report.claim1_worst_ratio, ratio);
        if (ratio > 1.0 + kClaimSlack) {
            ++report.claim1_counterexamples;
            if (report.counterexamples.size() < kMaxRecorded) {
                report.counterexamples.push_back(describe("claim1", a, b, cc, d, R));
            }
        }
    }

    // Claim 2: |a-c| >= lambda1, d on or above the line with |b-d| <= lambda2.
    const auto j_lo = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(l1 / t)) - 2);
    const auto j_hi = static_cast<std::int64_t>(std::ceil(l2 / t)) + 2;
    for (std::size_t attempt = 0; report.claim2_samples < sample_count && attempt < max_attempts;
         ++attempt) {
        Point a, b, cc;
        place(j_lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(j_hi - j_lo + 1))),
              a, b, cc);
        if (distance(a, cc) < l1 || b.y + l2 < a.y) {
            ++report.rejected;
            continue;
        }
        const double r = rng.below(2) == 0 ? l2 : rng.uniform(a.y - b.y, l2);
        const Point d = on_upper_arc(rng, b, r, a.y);
        if (distance(b, d) > l2) {
            ++report.rejected;
            continue;
        }
        ++report.claim2_samples;
        const double ratio = distance(a, d) / distance(b, d);
        report.claim2_worst_ratio = std::max(report.claim2_worst_ratio, ratio);
        if (!(ratio < 1.0)) {
            ++report.claim2_counterexamples;
            if (report.counterexamples.size() < kMaxRecorded) {
                report.counterexamples.push_back(describe("claim2", a, b, cc, d, 0.0));
            }
        }
    }
    return report;
}

bool BoundChain::all() const {
    return std::all_of(holds.begin(), holds.end(), [](bool b) { return b; });
}

namespace {

long double log_pmf(long double j, long double mean) {
    return -mean + j * std::log(mean) - std::lgamma(j + 1.0L);
}

BoundChain finish_chain(std::vector<BoundStep> steps, bool first_weak) {
    BoundChain chain;
    chain.steps = std::move(steps);
    for (std::size_t i = 0; i + 1 < chain.steps.size(); ++i) {
        const long double lhs = chain.steps[i].value;
        const long double rhs = chain.steps[i + 1].value;
        chain.holds.push_back(i == 0 && first_weak ? lhs <= rhs : lhs < rhs);
    }
    return chain;
}

}  // namespace

BoundChain lower_tail_chain(double n) {
    if (!(n > 1.0)) throw std::invalid_argument("lower_tail_chain: n must exceed 1");
    const long double L = std::log(static_cast<long double>(n));
    const long double e3 = std::exp(3.0L);
    const long double m = e3 * L;  // pi lambda2'^2 / 4 * log n
    const long double j_cut = 0.6L * L;

    long double exact = 0.0L;
    for (long double j = 0.0L; j < j_cut; j += 1.0L) exact += std::exp(log_pmf(j, m));

    std::vector<BoundStep> steps;
    steps.push_back({"P(Po(e^3 L) < 0.6 L)", exact});
    steps.push_back({"0.6L e^{-m} m^{0.6L} / (0.6L)!", j_cut * std::exp(log_pmf(j_cut, m))});
    steps.push_back({"0.6L exp(-m + 0.6L log(e^4/0.6))",
                     j_cut * std::exp(-m + j_cut * std::log(std::exp(4.0L) / 0.6L))});
    steps.push_back({"0.6L exp(-(e^3-3) L)", j_cut * std::exp(-(e3 - 3.0L) * L)});
    steps.push_back({"0.6L n^-4", j_cut * std::exp(-4.0L * L)});
    return finish_chain(std::move(steps), true);
}

BoundChain upper_tail_chain(double n) {
    if (!(n > 1.0)) throw std::invalid_argument("upper_tail_chain: n must exceed 1");
    const long double L = std::log(static_cast<long double>(n));
    const long double rho = std::exp(-49.0L / 3.0L);  // pi lambda1'^2
    const long double D = rho * L;
    const long double K = std::ceil(0.3L * L);
    const long double geometric = 1.0L / (1.0L - rho / 0.3L);

    long double exact = 0.0L;
    for (long double j = K;; j += 1.0L) {
        const long double term = std::exp(log_pmf(j, D));
        exact += term;
        if (term < exact * 1e-30L) break;
    }

    std::vector<BoundStep> steps;
    steps.push_back({"P(Po(rho L) >= ceil(0.3 L))", exact});
    steps.push_back({"D^{0.3L} e^{-D} / ceil(0.3L)! / (1 - rho/0.3)",
                     std::exp(0.3L * L * std::log(D) - D - std::lgamma(K + 1.0L)) * geometric});
    steps.push_back({"exp(0.3L (log(rho L) - log(0.3L/e) - rho/0.3)) / (1 - rho/0.3)",
                     std::exp(0.3L * L * (std::log(D) - std::log(0.3L * L / std::exp(1.0L)) - rho / 0.3L)) *
                         geometric});
    steps.push_back({"exp(0.3L (-49/3 + log(e/0.3))) / (1 - rho/0.3)",
                     std::exp(0.3L * L * (-49.0L / 3.0L + std::log(std::exp(1.0L) / 0.3L))) * geometric});
    steps.push_back({"exp(-4L) / (1 - rho/0.3)", std::exp(-4.0L * L) * geometric});
    steps.push_back({"n^-3", std::exp(-3.0L * L)});
    return finish_chain(std::move(steps), true);
}

double minimal_cover_n(double M) {
    if (!(M > 0.0)) throw std::invalid_argument("minimal_cover_n: M must be positive");
    const auto feasible = [&](double n) { return std::sqrt(n) >= 3.0 * M * std::sqrt(std::log(n)); };
    double hi = 16.0;
    while (!feasible(hi)) hi *= 2.0;
    // sqrt(n)/sqrt(log n) increases for n > e, so bisection on [e, hi] works.
    double lo = std::exp(1.0);
    while (hi - lo > 1.0) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? hi : lo) = mid;
    }
    return std::ceil(hi);
}

Covers build_covers(double n, const ConstantsBundle& c) {
    if (!(n > 1.0)) throw std::invalid_argument("build_covers: n must exceed 1");
    Covers covers;
    covers.box_side = c.M * std::sqrt(std::log(n));
    covers.q = static_cast<std::int64_t>(std::floor(std::sqrt(n) / covers.box_side));
    if (covers.q < 3) {
        const double minimal = minimal_cover_n(c.M);
        std::ostringstream msg;
        msg.precision(17);
        msg << "build_covers: T_n is empty at n=" << n << "; the smallest feasible n for M=" << c.M
            << " is " << minimal;
        throw CoverSizeError(msg.str(), minimal);
    }
    const double s = covers.box_side;
    covers.t_n = Region(s, s, static_cast<double>(covers.q - 1) * s, static_cast<double>(covers.q - 1) * s);
    for (std::int64_t iy = 1; iy + 1 < covers.q; ++iy) {
        for (std::int64_t ix = 1; ix + 1 < covers.q; ++ix) {
            covers.independent.emplace_back(static_cast<double>(ix) * s, static_cast<double>(iy) * s,
                                            static_cast<double>(ix + 1) * s, static_cast<double>(iy + 1) * s);
        }
    }
    for (const auto& v : covers.independent) {
        for (int j = -2; j <= 2; ++j) {
            for (int i = -2; i <= 2; ++i) covers.dominating.push_back(v.translated(i * s / 4.0, j * s / 4.0));
        }
    }
    return covers;
}

CoverCheck verify_covers(const Covers& covers, double n, double raster_step) {
    if (!(raster_step > 0.0)) throw std::invalid_argument("verify_covers: raster_step must be positive");
    CoverCheck check;
    const double s = covers.box_side;

    check.independent_in_dominating = std::all_of(
        covers.independent.begin(), covers.independent.end(), [&](const Region& v) {
            return std::find(covers.dominating.begin(), covers.dominating.end(), v) != covers.dominating.end();
        });
    const double M2_log_n = s * s;
    check.size_bound = static_cast<double>(covers.dominating.size()) < 25.0 * n / M2_log_n;

    // Quarter boxes bucketed by the quarter-side lattice around their centres.
    const double cell = s / 4.0;
    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<Region>> buckets;
    for (const auto& v : covers.dominating) {
        const Point ctr = v.centre();
        const Region quarter = Region::centred_square(ctr, cell);
        buckets[{static_cast<std::int64_t>(std::floor(ctr.x / cell)),
                 static_cast<std::int64_t>(std::floor(ctr.y / cell))}]
            .push_back(quarter);
    }
    const Region& t = covers.t_n;
    const auto steps_x = static_cast<std::int64_t>(std::floor(t.width() / raster_step));
    const auto steps_y = static_cast<std::int64_t>(std::floor(t.height() / raster_step));
    for (std::int64_t iy = 0; iy <= steps_y; ++iy) {
        for (std::int64_t ix = 0; ix <= steps_x; ++ix) {
            const Point p{std::min(t.x_min() + static_cast<double>(ix) * raster_step, t.x_max()),
                          std::min(t.y_min() + static_cast<double>(iy) * raster_step, t.y_max())};
            ++check.raster_points;
            const auto bx = static_cast<std::int64_t>(std::floor(p.x / cell));
            const auto by = static_cast<std::int64_t>(std::floor(p.y / cell));
            bool covered = false;
            for (std::int64_t dy = -1; dy <= 1 && !covered; ++dy) {
                for (std::int64_t dx = -1; dx <= 1 && !covered; ++dx) {
                    const auto it = buckets.find({bx + dx, by + dy});
                    if (it == buckets.end()) continue;
                    covered = std::any_of(it->second.begin(), it->second.end(),
                                          [&](const Region& r) { return r.contains(p); });
                }
            }
            if (!covered) ++check.uncovered;
        }
    }
    return check;
}

}  // namespace knnlab
