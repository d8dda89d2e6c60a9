#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "knnlab/constants.hpp"
#include "knnlab/graph_analysis.hpp"
#include "knnlab/knn_graph.hpp"

namespace knnlab {

/// U_n = [-M sqrt(log n)/2, +M sqrt(log n)/2]^2.
Region local_box(const ConstantsBundle& c);

/// The concentric subsquare of half the side.
Region half_box(const ConstantsBundle& c);

struct TileIndex {
    std::int64_t ix = 0;
    std::int64_t iy = 0;

    friend auto operator<=>(const TileIndex&, const TileIndex&) = default;
};

/// Perfect tiling of a square box into per_side x per_side tiles. Tiles are
/// addressed lazily; the faithful constants give far too many to store.
class Tiling {
public:
    Tiling(const Region& box, std::int64_t per_side);

    /// Tiles of side sqrt(log n)/N over U_n, i.e. M*N per side (M*N is
    /// rounded to the nearest integer when M is fractional).
    static Tiling for_constants(const ConstantsBundle& c);

    const Region& box() const { return box_; }
    std::int64_t per_side() const { return per_side_; }
    double tile_side() const { return side_; }
    double tile_area() const { return side_ * side_; }
    std::int64_t tile_count() const { return per_side_ * per_side_; }

    Region tile(const TileIndex& t) const;
    /// Half-open assignment; points on the top/right edge of the box go to
    /// the last row/column.
    TileIndex tile_of(const Point& p) const;

    /// All tiles, row-major from the bottom-left. Refuses above kMaxListedTiles.
    std::vector<Region> tiles() const;

    static constexpr std::int64_t kMaxListedTiles = 1'000'000;

private:
    Region box_;
    std::int64_t per_side_;
    double side_;
};

struct LocalEventOutcome {
    bool a_k = false;
    bool b_k = false;
    std::size_t components_in_half_box = 0;
    bool bad_C = false;

    friend bool operator==(const LocalEventOutcome&, const LocalEventOutcome&) = default;
};

/// The local graph together with the components wholly inside the half box.
struct LocalAnalysis {
    KnnGraph graph;
    std::vector<ComponentSummary> components;
    std::vector<std::size_t> inside;  // positions in `components`
    LocalEventOutcome outcome;
};

/// Components of an already built local graph; leaves bad_C unset.
LocalAnalysis analyse_local_graph(const PointSet& pointset, KnnGraph graph, const ConstantsBundle& c);

/// Throws invalid_argument unless pointset.region equals U_n.
LocalAnalysis analyse_local_box(const PointSet& pointset, std::size_t k, const ConstantsBundle& c);

LocalEventOutcome evaluate_local_events(const PointSet& pointset, std::size_t k,
                                        const ConstantsBundle& c);

/// One outcome per entry of `ks`, sharing a single neighbour table.
std::vector<LocalEventOutcome> evaluate_local_events_sweep(const PointSet& pointset,
                                                           const std::vector<std::size_t>& ks,
                                                           const ConstantsBundle& c);

/// The concentration failure event. True iff some x in Z^2 inside U_n has
/// >= k points within lambda1 sqrt(log n) or < k points within
/// lambda2 sqrt(log n). The same two tests are also applied centred at every
/// point p of the set: >= k points (p included) within lambda1 sqrt(log n),
/// or fewer than k other points within lambda2 sqrt(log n).
bool detect_bad_set_C(const PointSet& pointset, std::size_t k, const ConstantsBundle& c);

struct CertificateReport {
    bool counterexample = false;
    std::string counterexample_reason;
    Point a;                    // lowest vertex over the two witnesses
    TileIndex tile_a;
    TileIndex tile_q;
    Region region_q;
    bool boundary_case = false;  // every tile below Q_a was empty
    std::size_t batches_tested = 0;
    std::size_t batches_passed = 0;
    std::vector<std::size_t> failed_batch_sizes;

    bool passed() const { return !counterexample && batches_passed == batches_tested; }
};

/// Replays the empty-tile construction on a set with B_k and without the
/// bad set, then adds point batches inside Q and rechecks A_k. The four
/// corners and the centre of Q are always tried as single-point batches;
/// `trial_count` further batches have uniform size 1..50 and uniform
/// positions. Throws invalid_argument if the precondition fails.
CertificateReport empty_tile_certificate(const PointSet& pointset, std::size_t k,
                                         const ConstantsBundle& c, std::size_t trial_count,
                                         std::uint64_t rng_seed);

inline constexpr std::size_t kMaxBatchSize = 50;

struct ClaimReport {
    std::size_t claim1_samples = 0;
    std::size_t claim1_counterexamples = 0;
    std::size_t claim2_samples = 0;
    std::size_t claim2_counterexamples = 0;
    std::size_t rejected = 0;  // draws discarded for violating a premise
    double claim1_worst_ratio = 0.0;  // max |a-d| / (lambda1 sqrt log n)
    double claim2_worst_ratio = 0.0;  // max |a-d| / |b-d|
    std::vector<std::string> counterexamples;  // first few, verbatim

    bool passed() const { return claim1_counterexamples == 0 && claim2_counterexamples == 0; }
};

/// Samples `sample_count` premise-satisfying configurations for each of the
/// two geometric claims behind the empty-tile construction and checks the
/// conclusions |a-d| <= lambda1 sqrt(log n) and |a-d| < |b-d|.
ClaimReport check_claim_inequalities(std::size_t sample_count, std::uint64_t rng_seed,
                                     const ConstantsBundle& c);

/// One displayed link of a probability-bound chain.
struct BoundStep {
    std::string label;
    long double value = 0.0L;
};

struct BoundChain {
    std::vector<BoundStep> steps;  // steps[0] is the exact probability
    std::vector<bool> holds;       // holds[i]: steps[i] vs steps[i+1]
    bool all() const;
};

/// Chain for the lower concentration bound at radius 2 sqrt(e^3/pi):
/// exact P(Po(e^3 L) < 0.6 L) and its four displayed upper bounds.
BoundChain lower_tail_chain(double n);

/// Chain for the upper concentration bound at radius sqrt(e^{-49/3}/pi):
/// exact P(Po(e^{-49/3} L) >= ceil(0.3 L)) and its displayed upper bounds,
/// ending at n^{-3}.
BoundChain upper_tail_chain(double n);

/// Pieces of the global argument: the trimmed square T_n and two covers by
/// copies of U_n.
struct Covers {
    Region t_n;
    std::int64_t q = 0;          // floor(sqrt n / (M sqrt log n))
    double box_side = 0.0;       // M sqrt(log n)
    std::vector<Region> independent;  // disjoint-interior copies tiling T_n
    std::vector<Region> dominating;   // 25 translates of each independent copy
};

class CoverSizeError : public std::length_error {
public:
    CoverSizeError(const std::string& what, double minimal_n)
        : std::length_error(what), minimal_n_(minimal_n) {}
    double minimal_n() const { return minimal_n_; }

private:
    double minimal_n_;
};

/// Smallest n with sqrt(n) >= 3 M sqrt(log n), to within one unit.
double minimal_cover_n(double M);

/// Throws CoverSizeError when T_n is empty.
Covers build_covers(double n, const ConstantsBundle& c);

struct CoverCheck {
    bool independent_in_dominating = false;
    bool size_bound = false;  // |dominating| < 25 n / (M^2 log n)
    std::size_t raster_points = 0;
    std::size_t uncovered = 0;

    bool passed() const { return independent_in_dominating && size_bound && uncovered == 0; }
};

/// Checks the cover properties, testing quarter-box coverage of T_n on a
/// raster of the given spacing.
CoverCheck verify_covers(const Covers& covers, double n, double raster_step);

}  // namespace knnlab
