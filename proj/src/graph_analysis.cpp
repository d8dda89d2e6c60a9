#include "knnlab/graph_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace knnlab {

namespace {

// Exact diameter, or the sentinel once some pair reaches `threshold`.
double diameter_or_sentinel(const std::vector<std::uint32_t>& members, const PointSet& ps,
                            const Region& bbox, double threshold) {
    if (members.size() <= 1) return 0.0;
    if (std::max(bbox.width(), bbox.height()) >= threshold) return kDiameterSentinel;
    const double t2 = threshold * threshold;
    double best = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
        const Point& pa = ps[members[a]];
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            const double d2 = squared_distance(pa, ps[members[b]]);
            if (d2 >= t2) return kDiameterSentinel;
            best = std::max(best, d2);
        }
    }
    return std::sqrt(best);
}

double bbox_gap2(const Region& a, const Region& b) {
    const double dx = std::max({0.0, a.x_min() - b.x_max(), b.x_min() - a.x_max()});
    const double dy = std::max({0.0, a.y_min() - b.y_max(), b.y_min() - a.y_max()});
    return dx * dx + dy * dy;
}

}  // namespace

std::vector<ComponentSummary> connected_components(const KnnGraph& graph, const PointSet& pointset,
                                                   double small_threshold) {
    if (graph.point_count() != pointset.size()) {
        throw std::invalid_argument("connected_components: graph and pointset sizes differ");
    }
    const std::size_t n = graph.point_count();
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<ComponentSummary> out;
    std::vector<std::uint32_t> stack;

    for (std::size_t start = 0; start < n; ++start) {
        if (seen[start]) continue;
        ComponentSummary c;
        c.component_id = out.size();
        seen[start] = 1;
        stack.assign(1, static_cast<std::uint32_t>(start));
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            c.vertex_indices.push_back(v);
            for (auto w : graph.neighbours(v)) {
                if (!seen[w]) {
                    seen[w] = 1;
                    stack.push_back(w);
                }
            }
        }
        std::sort(c.vertex_indices.begin(), c.vertex_indices.end());
        c.size = c.vertex_indices.size();

        double xmin = pointset[start].x, xmax = xmin, ymin = pointset[start].y, ymax = ymin;
        for (auto v : c.vertex_indices) {
            const Point& p = pointset[v];
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        // Ascending index scan: the first member at the minimum is the lowest index.
        std::size_t at_min = 0;
        for (auto v : c.vertex_indices) {
            if (pointset[v].y != ymin) continue;
            if (at_min++ == 0) c.bottom_most_vertex = v;
        }
        c.bottom_most_tied = at_min > 1;

        // Degenerate extents are widened by one ulp to keep the Region invariant.
        const double inf = std::numeric_limits<double>::infinity();
        c.bbox = Region(xmin, ymin, xmax > xmin ? xmax : std::nextafter(xmax, inf),
                        ymax > ymin ? ymax : std::nextafter(ymax, inf));
        c.diameter = diameter_or_sentinel(c.vertex_indices, pointset, c.bbox, small_threshold);
        c.is_small = c.diameter < small_threshold;
        out.push_back(std::move(c));
    }
    return out;
}

bool is_connected(const KnnGraph& graph) {
    const std::size_t n = graph.point_count();
    if (n <= 1) return true;
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::uint32_t> stack{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (auto w : graph.neighbours(v)) {
            if (!seen[w]) {
                seen[w] = 1;
                ++reached;
                stack.push_back(w);
            }
        }
    }
    return reached == n;
}

std::vector<std::pair<std::size_t, std::size_t>> find_close_small_pairs(
    const std::vector<ComponentSummary>& components, const PointSet& pointset,
    double close_threshold) {
    const double t2 = close_threshold * close_threshold;
    std::vector<const ComponentSummary*> small;
    for (const auto& c : components) {
        if (c.is_small) small.push_back(&c);
    }
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < small.size(); ++a) {
        for (std::size_t b = a + 1; b < small.size(); ++b) {
            const auto& ca = *small[a];
            const auto& cb = *small[b];
            if (bbox_gap2(ca.bbox, cb.bbox) >= t2) continue;
            bool close = false;
            for (auto u : ca.vertex_indices) {
                for (auto v : cb.vertex_indices) {
                    if (squared_distance(pointset[u], pointset[v]) < t2) {
                        close = true;
                        break;
                    }
                }
                if (close) break;
            }
            if (close) {
                out.emplace_back(std::min(ca.component_id, cb.component_id),
                                 std::max(ca.component_id, cb.component_id));
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

NearestGrid nearest_grid_point(const Point& p) {
    const auto half = [](double v) { return v - std::floor(v) == 0.5; };
    return {{static_cast<std::int64_t>(std::llround(p.x)), static_cast<std::int64_t>(std::llround(p.y))},
            !(half(p.x) || half(p.y))};
}

CountingGeometry::CountingGeometry(double n, double lambda) : n_(n), lambda_(lambda) {
    if (!(n > 1.0)) throw std::invalid_argument("CountingGeometry: n must exceed 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("CountingGeometry: lambda must be positive");
    side_ = std::sqrt(n);
    small_ = lambda * std::sqrt(std::log(n));
    const double h = 2.0 * small_;
    lo_ = static_cast<std::int64_t>(std::ceil(h));
    hi_ = static_cast<std::int64_t>(std::floor(side_ - h));
}

Region CountingGeometry::cell(const GridPoint& x) const {
    return Region::centred_square({static_cast<double>(x.gx), static_cast<double>(x.gy)},
                                  cell_side());
}

namespace {

struct SmallComponentKey {
    bool ambiguous = false;
    NearestGrid nearest;
};

SmallComponentKey key_of(const ComponentSummary& c, const PointSet& ps) {
    SmallComponentKey key;
    key.nearest = nearest_grid_point(ps[c.bottom_most_vertex]);
    key.ambiguous = c.bottom_most_tied || !key.nearest.unique;
    return key;
}

}  // namespace

GlobalAnalysis analyse_global(const KnnGraph& graph, const PointSet& pointset,
                              const CountingGeometry& geometry) {
    GlobalAnalysis g;
    g.components = connected_components(graph, pointset, geometry.small_threshold());
    g.connected = g.components.size() <= 1;
    g.longest_edge = longest_edge_length(graph, pointset);
    g.flags.d1 = g.longest_edge >= geometry.small_threshold();

    std::size_t large = 0;
    for (const auto& c : g.components) {
        if (!c.is_small) {
            ++large;
            continue;
        }
        ++g.small_count;
        const auto key = key_of(c, pointset);
        if (key.ambiguous) {
            g.flags.d6 = true;
        } else if (!geometry.in_gamma(key.nearest.point)) {
            g.flags.d4 = true;
        } else {
            g.counting[key.nearest.point] = 1;
        }
    }
    g.flags.d3 = large >= 2;
    g.close_pairs = find_close_small_pairs(g.components, pointset, geometry.close_threshold());
    g.flags.d5 = !g.close_pairs.empty();
    return g;
}

CountingMap global_counting_function(const KnnGraph& graph, const PointSet& pointset,
                                     const CountingGeometry& geometry) {
    return analyse_global(graph, pointset, geometry).counting;
}

std::vector<LocalCellResult> analyse_local_cell(const PointSet& pointset, const GridPoint& x,
                                                const CountingGeometry& geometry,
                                                const std::vector<std::size_t>& ks) {
    const Region cell = geometry.cell(x);
    PointSet local;
    local.region = cell;
    local.intensity = pointset.intensity;
    for (const auto& p : pointset.points) {
        if (cell.contains(p)) local.points.push_back(p);
    }
    std::size_t k_max = 0;
    for (auto k : ks) k_max = std::max(k_max, k);
    const NeighbourTable table = build_neighbour_table(local, k_max);

    std::vector<LocalCellResult> out;
    out.reserve(ks.size());
    for (auto k : ks) {
        LocalCellResult r;
        r.cell = x;
        r.k = k;
        const KnnGraph g = graph_from_table(table, k);
        r.long_edge = longest_edge_length(g, local) >= geometry.small_threshold();
        for (const auto& c : connected_components(g, local, geometry.small_threshold())) {
            if (!c.is_small) continue;
            const auto key = key_of(c, local);
            if (key.ambiguous) {
                r.ambiguous = true;
            } else if (key.nearest.point == x) {
                r.y = true;
            }
        }
        out.push_back(r);
    }
    return out;
}

bool local_counting_function(const PointSet& pointset, const GridPoint& x, std::size_t k,
                             const CountingGeometry& geometry) {
    return analyse_local_cell(pointset, x, geometry, {k}).front().y;
}

BadEventFlags detect_bad_events(const KnnGraph& graph, const PointSet& pointset,
                                const CountingGeometry& geometry,
                                const std::optional<std::vector<GridPoint>>& sampled_grid_points) {
    BadEventFlags flags = analyse_global(graph, pointset, geometry).flags;
    const auto examine = [&](const GridPoint& x) {
        const auto r = analyse_local_cell(pointset, x, geometry, {graph.k()}).front();
        flags.d2 = flags.d2 || r.long_edge;
        flags.d7 = flags.d7 || r.ambiguous;
    };
    if (sampled_grid_points) {
        for (const auto& x : *sampled_grid_points) examine(x);
    } else {
        for (auto gy = geometry.gamma_lo(); gy <= geometry.gamma_hi(); ++gy) {
            for (auto gx = geometry.gamma_lo(); gx <= geometry.gamma_hi(); ++gx) examine({gx, gy});
        }
    }
    return flags;
}

}  // namespace knnlab
