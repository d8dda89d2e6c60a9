#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "knnlab/knn_graph.hpp"

namespace knnlab {

inline constexpr double kDiameterSentinel = std::numeric_limits<double>::infinity();

/// Components above this size skip the exact pairwise diameter and only
/// resolve the comparison against the small threshold.
inline constexpr std::size_t kExactDiameterLimit = 5000;

struct ComponentSummary {
    std::size_t component_id = 0;
    std::vector<std::uint32_t> vertex_indices;  // ascending
    std::size_t size = 0;
    /// Geometric diameter (max pairwise point distance). kDiameterSentinel
    /// once it is known to be >= the small threshold.
    double diameter = 0.0;
    Region bbox;
    std::uint32_t bottom_most_vertex = 0;  // min y, ties to lower index
    /// Another member shares the minimal y coordinate.
    bool bottom_most_tied = false;
    bool is_small = false;
};

/// Components in order of their lowest vertex index.
std::vector<ComponentSummary> connected_components(const KnnGraph& graph, const PointSet& pointset,
                                                   double small_threshold);

/// Empty and single-vertex graphs count as connected.
bool is_connected(const KnnGraph& graph);

/// Unordered pairs (id_a < id_b) of distinct small components holding two
/// points at distance < close_threshold.
std::vector<std::pair<std::size_t, std::size_t>> find_close_small_pairs(
    const std::vector<ComponentSummary>& components, const PointSet& pointset,
    double close_threshold);

struct GridPoint {
    std::int64_t gx = 0;
    std::int64_t gy = 0;

    friend auto operator<=>(const GridPoint&, const GridPoint&) = default;
};

struct NearestGrid {
    GridPoint point;
    bool unique = true;  // false when a coordinate is exactly half-integral
};

NearestGrid nearest_grid_point(const Point& p);

/// The thresholds and grid attached to (n, lambda): S_n = [0, sqrt n]^2,
/// small threshold lambda*sqrt(log n), close threshold 8*lambda*sqrt(log n),
/// V_n(x) the square of side 4*lambda*sqrt(log n) centred at x and
/// Gamma = {x in Z^2 : V_n(x) inside S_n}.
class CountingGeometry {
public:
    CountingGeometry(double n, double lambda);

    double n() const { return n_; }
    double lambda() const { return lambda_; }
    double side() const { return side_; }
    Region square() const { return Region(0.0, 0.0, side_, side_); }
    double small_threshold() const { return small_; }
    double close_threshold() const { return 8.0 * small_; }
    double cell_side() const { return 4.0 * small_; }
    Region cell(const GridPoint& x) const;

    /// Gamma is the integer box [gamma_lo, gamma_hi]^2 (empty if lo > hi).
    std::int64_t gamma_lo() const { return lo_; }
    std::int64_t gamma_hi() const { return hi_; }
    std::int64_t gamma_axis_count() const { return hi_ >= lo_ ? hi_ - lo_ + 1 : 0; }
    std::int64_t gamma_size() const { return gamma_axis_count() * gamma_axis_count(); }
    bool in_gamma(const GridPoint& x) const {
        return x.gx >= lo_ && x.gx <= hi_ && x.gy >= lo_ && x.gy <= hi_;
    }

private:
    double n_;
    double lambda_;
    double side_;
    double small_;
    std::int64_t lo_;
    std::int64_t hi_;
};

/// D(i)..D(vii).
struct BadEventFlags {
    bool d1 = false;  // edge >= lambda sqrt(log n) in S_{n,k}
    bool d2 = false;  // such an edge in some examined V_{n,k}(x)
    bool d3 = false;  // >= 2 non-small components
    bool d4 = false;  // small component whose nearest grid point is outside Gamma
    bool d5 = false;  // two close small components
    bool d6 = false;  // ambiguous bottom-most vertex / nearest grid point in S_{n,k}
    bool d7 = false;  // the same ambiguity inside an examined V_{n,k}(x)

    bool any() const { return d1 || d2 || d3 || d4 || d5 || d6 || d7; }
    friend bool operator==(const BadEventFlags&, const BadEventFlags&) = default;
};

/// Sparse counting function: the grid points holding value 1. Every other
/// point of Gamma holds 0.
using CountingMap = std::map<GridPoint, int>;

/// Everything the global graph tells us in one pass.
struct GlobalAnalysis {
    std::vector<ComponentSummary> components;
    std::vector<std::pair<std::size_t, std::size_t>> close_pairs;
    std::size_t small_count = 0;
    double longest_edge = 0.0;
    bool connected = true;
    CountingMap counting;  // X(x)
    BadEventFlags flags;   // d1, d3..d6 only
};

GlobalAnalysis analyse_global(const KnnGraph& graph, const PointSet& pointset,
                              const CountingGeometry& geometry);

/// X(x) over Gamma; ambiguous cases are left out (they raise d4/d6).
CountingMap global_counting_function(const KnnGraph& graph, const PointSet& pointset,
                                     const CountingGeometry& geometry);

/// V_{n,k}(x) seen from one grid point, for several k at once.
struct LocalCellResult {
    GridPoint cell;
    std::size_t k = 0;
    bool y = false;            // Y(x)
    bool long_edge = false;    // feeds d2
    bool ambiguous = false;    // feeds d7
};

/// Builds the k-NN graphs of the points inside V_n(x) for each k in `ks`
/// (one neighbour table shared across k) and evaluates Y(x), the long-edge
/// test and the tie test.
std::vector<LocalCellResult> analyse_local_cell(const PointSet& pointset, const GridPoint& x,
                                                const CountingGeometry& geometry,
                                                const std::vector<std::size_t>& ks);

/// Y(x) for a single k.
bool local_counting_function(const PointSet& pointset, const GridPoint& x, std::size_t k,
                             const CountingGeometry& geometry);

/// Full bad-event detection. d2/d7 examine `sampled_grid_points` when given,
/// otherwise every point of Gamma.
BadEventFlags detect_bad_events(const KnnGraph& graph, const PointSet& pointset,
                                const CountingGeometry& geometry,
                                const std::optional<std::vector<GridPoint>>& sampled_grid_points);

}  // namespace knnlab
