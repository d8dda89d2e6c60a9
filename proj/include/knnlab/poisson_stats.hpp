#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "knnlab/graph_analysis.hpp"

namespace knnlab {

/// e^{-mean} mean^j / j!, evaluated in log space. Throws on negative input.
double poisson_pmf(std::int64_t j, double mean);

/// Smallest j with P(Po(mean) > j) below `tail` (Chernoff bound).
std::uint64_t poisson_cutoff(double mean, double tail = 1e-16);

/// Po_mean(A) for A given as a predicate or an explicit set.
double poisson_set_mass(const std::function<bool(std::uint64_t)>& in_set, double mean);
double poisson_set_mass(const std::vector<std::uint64_t>& set, double mean);

/// Law on the nonnegative integers with finite support.
class CountDistribution {
public:
    CountDistribution() = default;
    explicit CountDistribution(std::map<std::uint64_t, double> mass);

    static CountDistribution point_mass(std::uint64_t at);
    static CountDistribution poisson(double mean);
    /// Raw frequencies, no smoothing.
    static CountDistribution from_counts(const std::map<std::uint64_t, std::uint64_t>& counts);

    const std::map<std::uint64_t, double>& mass() const { return mass_; }
    double at(std::uint64_t j) const;
    double total_mass() const { return total_; }
    bool normalized() const;
    double mean() const;

private:
    std::map<std::uint64_t, double> mass_;
    double total_ = 0.0;
};

/// Half the L1 distance. Throws invalid_argument on unnormalized input.
double total_variation(const CountDistribution& a, const CountDistribution& b);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    double half_width() const { return (hi - lo) / 2.0; }
};

inline constexpr double kZ95 = 1.959963984540054;

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = kZ95);

/// Rectangular index set Gamma in Z^2 with dependency neighbourhoods
/// Gamma_x = {y in Gamma : |x - y|_inf <= reach}.
class GammaGeometry {
public:
    GammaGeometry(std::int64_t x_lo, std::int64_t x_hi, std::int64_t y_lo, std::int64_t y_hi,
                  double reach);

    std::int64_t x_lo() const { return x_lo_; }
    std::int64_t x_hi() const { return x_hi_; }
    std::int64_t y_lo() const { return y_lo_; }
    std::int64_t y_hi() const { return y_hi_; }
    double reach() const { return reach_; }

    std::int64_t size() const { return (x_hi_ - x_lo_ + 1) * (y_hi_ - y_lo_ + 1); }
    bool contains(const GridPoint& x) const {
        return x.gx >= x_lo_ && x.gx <= x_hi_ && x.gy >= y_lo_ && x.gy <= y_hi_;
    }
    GridPoint at(std::int64_t index) const;  // row-major
    std::vector<GridPoint> points() const;

    std::int64_t dependency_count(const GridPoint& x) const;
    /// Sum over x of |Gamma_x|, in closed form.
    std::int64_t total_dependencies() const;
    /// (2 floor(reach) + 1)^2, the untruncated neighbourhood size.
    std::int64_t interior_dependency_count() const;
    bool dependent(const GridPoint& x, const GridPoint& y) const;

    friend bool operator==(const GammaGeometry&, const GammaGeometry&) = default;

private:
    std::int64_t axis_sum(std::int64_t lo, std::int64_t hi) const;

    std::int64_t x_lo_, x_hi_, y_lo_, y_hi_;
    double reach_;
    std::int64_t r_;
};

/// Gamma = {x in Z^2 : V_n(x) inside S_n}; V_n(x) and V_n(y) meet iff
/// |x - y|_inf <= 4 lambda sqrt(log n). Throws length_error when Gamma is
/// empty.
GammaGeometry compute_gamma_and_dependencies(double n, double lambda);

/// 256 lambda^2 log n.
double gamma_x_bound(double n, double lambda);

/// The cells at which Y is evaluated in every trial, plus the pairs drawn
/// from them. Fixed per experiment.
struct CellPanel {
    std::vector<GridPoint> cells;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dependent_pairs;  // y in Gamma_x, x != y
    std::vector<std::pair<std::uint32_t, std::uint32_t>> separated_pairs;  // |x - y| > separation
};

/// Draws min(cell_count, |Gamma|) distinct cells, then up to `pair_count`
/// dependent pairs and up to `pair_count` pairs at Euclidean distance above
/// `separation`.
CellPanel make_cell_panel(const GammaGeometry& gamma, std::size_t cell_count, std::size_t pair_count,
                          double separation, std::uint64_t seed);

/// Mergeable fold over trials at one k: only integer counts, so merging is
/// exact, associative and commutative.
class ChenSteinAccumulator {
public:
    ChenSteinAccumulator() = default;
    explicit ChenSteinAccumulator(const CellPanel& panel);

    /// `y` holds Y at each panel cell, in panel order.
    void add_trial(bool connected, std::uint64_t small_components, const std::vector<std::uint8_t>& y);
    void merge(const ChenSteinAccumulator& other);

    std::uint64_t trials() const { return trials_; }
    std::uint64_t connected() const { return connected_; }
    const std::map<std::uint64_t, std::uint64_t>& histogram() const { return histogram_; }
    const std::vector<std::uint64_t>& cell_ones() const { return cell_ones_; }
    const std::vector<std::uint64_t>& dependent_both() const { return dependent_both_; }
    const std::vector<std::uint64_t>& separated_both() const { return separated_both_; }
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& dependent_pairs() const { return dependent_pairs_; }
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& separated_pairs() const { return separated_pairs_; }

    friend bool operator==(const ChenSteinAccumulator&, const ChenSteinAccumulator&) = default;

private:
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dependent_pairs_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> separated_pairs_;
    std::uint64_t trials_ = 0;
    std::uint64_t connected_ = 0;
    std::map<std::uint64_t, std::uint64_t> histogram_;
    std::vector<std::uint64_t> cell_ones_;
    std::vector<std::uint64_t> dependent_both_;
    std::vector<std::uint64_t> separated_both_;
};

struct ChenSteinReport {
    std::uint64_t trials = 0;
    std::uint64_t connected = 0;
    double p_connected = 0.0;
    double p_hat = 0.0;
    double q_hat = 0.0;  // joint frequency over dependent pairs
    std::optional<double> p_prime;
    double mu = 0.0;
    std::optional<double> nu;  // empty when no trial was connected
    double b1 = 0.0;
    double b2 = 0.0;
    std::int64_t gamma_x_size = 0;  // interior |Gamma_x|
    std::int64_t gamma_size = 0;
    std::optional<double> tv_X_vs_Po_nu;
    std::optional<double> tv_Po_mu_vs_Po_nu;
    // 95% half-widths.
    double p_connected_hw = 0.0;
    double p_hat_hw = 0.0;
    double q_hat_hw = 0.0;
    double mu_hw = 0.0;
    std::optional<double> nu_hw;
    double b1_hw = 0.0;
    double b2_hw = 0.0;
};

ChenSteinReport estimate_chen_stein(const ChenSteinAccumulator& acc, const GammaGeometry& gamma);

struct Reconciliation {
    double abs_diff = 0.0;
    double tv = 0.0;           // TV(Po_mu, Po_nu), by summation
    double split_bound = 0.0;  // 1 - e^{-|mu - nu|}
    bool bound_holds = false;
};

/// Throws invalid_argument when nu is undefined.
Reconciliation reconcile_mu_nu(const ChenSteinReport& report);
Reconciliation reconcile_mu_nu(double mu, double nu);

struct CellMarginal {
    GridPoint cell;
    double p_hat = 0.0;
    double tv_vs_poisson = 0.0;  // TV(law of Y(x), Po(p'))
};

struct PairMarginal {
    GridPoint x;
    GridPoint y;
    double joint = 0.0;    // P(Y(x) = Y(y) = 1)
    double product = 0.0;  // P(Y(x) = 1) P(Y(y) = 1)
    std::optional<double> correlation;
    std::optional<Interval> correlation_ci;  // Fisher z, 95%
};

struct MarginalReport {
    double p_prime = 0.0;
    std::vector<CellMarginal> cells;
    std::vector<PairMarginal> separated;
    std::vector<PairMarginal> dependent;
};

MarginalReport process_marginal_comparison(const ChenSteinAccumulator& acc, const CellPanel& panel,
                                           const GammaGeometry& gamma, double nu);

/// Synthetic check of the Chen-Stein bound: every cell of `gamma` carries an
/// independent Bernoulli(p) indicator.
struct SyntheticConfig {
    GammaGeometry gamma{0, 0, 0, 0, 1.0};
    double p = 0.01;
    std::size_t runs = 10'000;
    std::size_t pair_samples = 4096;
    std::uint64_t seed = 0;
};

struct SyntheticReport {
    double p_hat = 0.0;
    double q_hat = 0.0;
    double mu = 0.0;
    double b1 = 0.0;
    double b2 = 0.0;
    double tv = 0.0;        // TV(empirical law of sum Y, Po_mu)
    double ci_width = 0.0;  // 1/2 sum_j z sqrt(f_j (1 - f_j) / runs)
    bool holds() const { return tv <= b1 + b2 + 3.0 * ci_width; }
};

SyntheticReport run_synthetic_bound_check(const SyntheticConfig& config);

}  // namespace knnlab
