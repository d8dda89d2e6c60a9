#include "knnlab/poisson_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "knnlab/rng.hpp"

namespace knnlab {

double poisson_pmf(std::int64_t j, double mean) {
    if (j < 0 || !(mean >= 0.0)) throw std::invalid_argument("poisson_pmf: negative argument");
    if (mean == 0.0) return j == 0 ? 1.0 : 0.0;
    const double jd = static_cast<double>(j);
    return std::exp(-mean + jd * std::log(mean) - std::lgamma(jd + 1.0));
}

std::uint64_t poisson_cutoff(double mean, double tail) {
    if (!(mean >= 0.0)) throw std::invalid_argument("poisson_cutoff: negative mean");
    if (mean == 0.0) return 0;
    // P(X >= m) <= exp(-mean) (e mean / m)^m for m > mean.
    auto j = static_cast<std::uint64_t>(std::ceil(mean));
    for (;; ++j) {
        const double m = static_cast<double>(j + 1);
        const double log_bound = -mean + m * (1.0 + std::log(mean / m));
        if (log_bound < std::log(tail)) return j;
    }
}

double poisson_set_mass(const std::function<bool(std::uint64_t)>& in_set, double mean) {
    if (!(mean >= 0.0)) throw std::invalid_argument("poisson_set_mass: negative mean");
    const auto last = poisson_cutoff(mean);
    double total = 0.0;
    for (std::uint64_t j = 0; j <= last; ++j) {
        if (in_set(j)) total += poisson_pmf(static_cast<std::int64_t>(j), mean);
    }
    return total;
}

double poisson_set_mass(const std::vector<std::uint64_t>& set, double mean) {
    const std::set<std::uint64_t> members(set.begin(), set.end());
    return poisson_set_mass([&](std::uint64_t j) { return members.count(j) > 0; }, mean);
}

CountDistribution::CountDistribution(std::map<std::uint64_t, double> mass) : mass_(std::move(mass)) {
    for (const auto& [j, m] : mass_) {
        if (!(m >= 0.0)) throw std::invalid_argument("CountDistribution: negative mass");
        total_ += m;
    }
}

CountDistribution CountDistribution::point_mass(std::uint64_t at) { return CountDistribution({{at, 1.0}}); }

CountDistribution CountDistribution::poisson(double mean) {
    std::map<std::uint64_t, double> mass;
    const auto last = poisson_cutoff(mean);
    for (std::uint64_t j = 0; j <= last; ++j) {
        const double m = poisson_pmf(static_cast<std::int64_t>(j), mean);
        if (m > 0.0) mass[j] = m;
    }
    return CountDistribution(std::move(mass));
}

CountDistribution CountDistribution::from_counts(const std::map<std::uint64_t, std::uint64_t>& counts) {
    std::uint64_t total = 0;
    for (const auto& [j, c] : counts) total += c;
    if (total == 0) throw std::invalid_argument("CountDistribution::from_counts: no observations");
    std::map<std::uint64_t, double> mass;
    for (const auto& [j, c] : counts) {
        if (c > 0) mass[j] = static_cast<double>(c) / static_cast<double>(total);
    }
    return CountDistribution(std::move(mass));
}

double CountDistribution::at(std::uint64_t j) const {
    const auto it = mass_.find(j);
    return it == mass_.end() ? 0.0 : it->second;
}

bool CountDistribution::normalized() const { return std::abs(total_ - 1.0) <= 1e-12; }

double CountDistribution::mean() const {
    double m = 0.0;
    for (const auto& [j, p] : mass_) m += static_cast<double>(j) * p;
    return m;
}

double total_variation(const CountDistribution& a, const CountDistribution& b) {
    if (!a.normalized() || !b.normalized()) {
        throw std::invalid_argument("total_variation: distributions must be normalized");
    }
    double sum = 0.0;
    auto ia = a.mass().begin();
    auto ib = b.mass().begin();
    while (ia != a.mass().end() || ib != b.mass().end()) {
        if (ib == b.mass().end() || (ia != a.mass().end() && ia->first < ib->first)) {
            sum += ia->second;
            ++ia;
        } else if (ia == a.mass().end() || ib->first < ia->first) {
            sum += ib->second;
            ++ib;
        } else {
            sum += std::abs(ia->second - ib->second);
            ++ia;
            ++ib;
        }
    }
    return std::clamp(sum / 2.0, 0.0, 1.0);
}

Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z) {
    if (successes > trials) throw std::invalid_argument("wilson_interval: successes exceed trials");
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    const double spread = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
    // Pin the endpoints at the extremes; the formula leaves rounding residue.
    const double lo = successes == 0 ? 0.0 : std::max(0.0, centre - spread);
    const double hi = successes == trials ? 1.0 : std::min(1.0, centre + spread);
    return {lo, hi};
}

GammaGeometry::GammaGeometry(std::int64_t x_lo, std::int64_t x_hi, std::int64_t y_lo, std::int64_t y_hi,
                             double reach)
    : x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi), reach_(reach) {
    if (x_lo > x_hi || y_lo > y_hi) throw std::length_error("GammaGeometry: empty index set");
    if (!(reach >= 0.0)) throw std::invalid_argument("GammaGeometry: negative reach");
    r_ = static_cast<std::int64_t>(std::floor(reach));
}

GridPoint GammaGeometry::at(std::int64_t index) const {
    const std::int64_t w = x_hi_ - x_lo_ + 1;
    return {x_lo_ + index % w, y_lo_ + index / w};
}

std::vector<GridPoint> GammaGeometry::points() const {
    std::vector<GridPoint> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (std::int64_t i = 0; i < size(); ++i) out.push_back(at(i));
    return out;
}

std::int64_t GammaGeometry::dependency_count(const GridPoint& x) const {
    const auto axis = [&](std::int64_t v, std::int64_t lo, std::int64_t hi) {
        return std::max<std::int64_t>(0, std::min(hi, v + r_) - std::max(lo, v - r_) + 1);
    };
    return axis(x.gx, x_lo_, x_hi_) * axis(x.gy, y_lo_, y_hi_);
}

std::int64_t GammaGeometry::axis_sum(std::int64_t lo, std::int64_t hi) const {
    // Number of ordered pairs (u, v) in [lo, hi]^2 with |u - v| <= r.
    const std::int64_t m = hi - lo + 1;
    const std::int64_t r = std::min(r_, m - 1);
    return m + 2 * (r * m - r * (r + 1) / 2);
}

std::int64_t GammaGeometry::total_dependencies() const {
    return axis_sum(x_lo_, x_hi_) * axis_sum(y_lo_, y_hi_);
}

std::int64_t GammaGeometry::interior_dependency_count() const { return (2 * r_ + 1) * (2 * r_ + 1); }

bool GammaGeometry::dependent(const GridPoint& x, const GridPoint& y) const {
    return std::abs(x.gx - y.gx) <= r_ && std::abs(x.gy - y.gy) <= r_;
}

GammaGeometry compute_gamma_and_dependencies(double n, double lambda) {
    const CountingGeometry geometry(n, lambda);
    if (geometry.gamma_size() == 0) {
        throw std::length_error("compute_gamma_and_dependencies: Gamma is empty at this n");
    }
    return GammaGeometry(geometry.gamma_lo(), geometry.gamma_hi(), geometry.gamma_lo(), geometry.gamma_hi(),
                         geometry.cell_side());
}

double gamma_x_bound(double n, double lambda) { return 256.0 * lambda * lambda * std::log(n); }

namespace {

template <class T>
std::vector<T> choose(std::vector<T> items, std::size_t count, Rng& rng) {
    if (items.size() <= count) return items;
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(items.size() - i));
        std::swap(items[i], items[j]);
    }
    items.resize(count);
    std::sort(items.begin(), items.end());
    return items;
}

}  // namespace

CellPanel make_cell_panel(const GammaGeometry& gamma, std::size_t cell_count, std::size_t pair_count,
                          double separation, std::uint64_t seed) {
    Rng rng(seed);
    CellPanel panel;
    const auto size = static_cast<std::uint64_t>(gamma.size());
    if (cell_count >= size) {
        panel.cells = gamma.points();
    } else {
        std::set<std::int64_t> picked;
        while (picked.size() < cell_count) picked.insert(static_cast<std::int64_t>(rng.below(size)));
        for (auto i : picked) panel.cells.push_back(gamma.at(i));
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dependent, separated;
    const double sep2 = separation * separation;
    for (std::uint32_t i = 0; i < panel.cells.size(); ++i) {
        for (std::uint32_t j = i + 1; j < panel.cells.size(); ++j) {
            const auto& x = panel.cells[i];
            const auto& y = panel.cells[j];
            if (gamma.dependent(x, y)) dependent.emplace_back(i, j);
            const double dx = static_cast<double>(x.gx - y.gx);
            const double dy = static_cast<double>(x.gy - y.gy);
            if (dx * dx + dy * dy > sep2) separated.emplace_back(i, j);
        }
    }
    panel.dependent_pairs = choose(std::move(dependent), pair_count, rng);
    panel.separated_pairs = choose(std::move(separated), pair_count, rng);
    return panel;
}

ChenSteinAccumulator::ChenSteinAccumulator(const CellPanel& panel)
    : dependent_pairs_(panel.dependent_pairs),
      separated_pairs_(panel.separated_pairs),
      cell_ones_(panel.cells.size(), 0),
      dependent_both_(panel.dependent_pairs.size(), 0),
      separated_both_(panel.separated_pairs.size(), 0) {}

void ChenSteinAccumulator::add_trial(bool connected, std::uint64_t small_components,
                                     const std::vector<std::uint8_t>& y) {
    if (y.size() != cell_ones_.size()) {
        throw std::invalid_argument("ChenSteinAccumulator: cell vector does not match the panel");
    }
    ++trials_;
    if (connected) ++connected_;
    ++histogram_[small_components];
    for (std::size_t i = 0; i < y.size(); ++i) cell_ones_[i] += y[i] ? 1 : 0;
    for (std::size_t i = 0; i < dependent_pairs_.size(); ++i) {
        const auto [a, b] = dependent_pairs_[i];
        dependent_both_[i] += (y[a] && y[b]) ? 1 : 0;
    }
    for (std::size_t i = 0; i < separated_pairs_.size(); ++i) {
        const auto [a, b] = separated_pairs_[i];
        separated_both_[i] += (y[a] && y[b]) ? 1 : 0;
    }
}

void ChenSteinAccumulator::merge(const ChenSteinAccumulator& other) {
    if (other.dependent_pairs_ != dependent_pairs_ || other.separated_pairs_ != separated_pairs_ ||
        other.cell_ones_.size() != cell_ones_.size()) {
        throw std::invalid_argument("ChenSteinAccumulator::merge: panels differ");
    }
    trials_ += other.trials_;
    connected_ += other.connected_;
    for (const auto& [j, c] : other.histogram_) histogram_[j] += c;
    for (std::size_t i = 0; i < cell_ones_.size(); ++i) cell_ones_[i] += other.cell_ones_[i];
    for (std::size_t i = 0; i < dependent_both_.size(); ++i) dependent_both_[i] += other.dependent_both_[i];
    for (std::size_t i = 0; i < separated_both_.size(); ++i) separated_both_[i] += other.separated_both_[i];
}

ChenSteinReport estimate_chen_stein(const ChenSteinAccumulator& acc, const GammaGeometry& gamma) {
    if (acc.trials() == 0) throw std::invalid_argument("estimate_chen_stein: no trials");
    ChenSteinReport r;
    r.trials = acc.trials();
    r.connected = acc.connected();
    r.gamma_size = gamma.size();
    r.gamma_x_size = gamma.interior_dependency_count();

    const auto p_conn = wilson_interval(acc.connected(), acc.trials());
    r.p_connected = static_cast<double>(acc.connected()) / static_cast<double>(acc.trials());
    r.p_connected_hw = p_conn.half_width();

    const std::uint64_t y_obs = acc.trials() * acc.cell_ones().size();
    const std::uint64_t y_ones = std::accumulate(acc.cell_ones().begin(), acc.cell_ones().end(), std::uint64_t{0});
    const std::uint64_t q_obs = acc.trials() * acc.dependent_both().size();
    const std::uint64_t q_ones =
        std::accumulate(acc.dependent_both().begin(), acc.dependent_both().end(), std::uint64_t{0});
    const auto p_ci = wilson_interval(y_ones, y_obs);
    const auto q_ci = wilson_interval(q_ones, q_obs);
    r.p_hat = y_obs ? static_cast<double>(y_ones) / static_cast<double>(y_obs) : 0.0;
    r.q_hat = q_obs ? static_cast<double>(q_ones) / static_cast<double>(q_obs) : 0.0;
    r.p_hat_hw = y_obs ? p_ci.half_width() : 0.0;
    r.q_hat_hw = q_obs ? q_ci.half_width() : 0.0;

    const auto deps = static_cast<double>(gamma.total_dependencies());
    const auto size = static_cast<double>(gamma.size());
    r.mu = size * r.p_hat;
    r.mu_hw = size * r.p_hat_hw;
    r.b1 = deps * r.p_hat * r.p_hat;
    r.b1_hw = y_obs ? deps * (p_ci.hi * p_ci.hi - p_ci.lo * p_ci.lo) / 2.0 : 0.0;
    r.b2 = (deps - size) * r.q_hat;
    r.b2_hw = (deps - size) * r.q_hat_hw;

    if (acc.connected() > 0) {
        r.nu = -std::log(r.p_connected);
        r.p_prime = *r.nu / size;
        if (p_conn.lo > 0.0) r.nu_hw = (std::log(p_conn.hi) - std::log(p_conn.lo)) / 2.0;
        r.tv_X_vs_Po_nu = total_variation(CountDistribution::from_counts(acc.histogram()),
                                          CountDistribution::poisson(*r.nu));
        r.tv_Po_mu_vs_Po_nu =
            total_variation(CountDistribution::poisson(r.mu), CountDistribution::poisson(*r.nu));
    }
    return r;
}

Reconciliation reconcile_mu_nu(double mu, double nu) {
    if (!(mu >= 0.0) || !(nu >= 0.0)) throw std::invalid_argument("reconcile_mu_nu: negative mean");
    Reconciliation rec;
    rec.abs_diff = std::abs(mu - nu);
    rec.tv = total_variation(CountDistribution::poisson(mu), CountDistribution::poisson(nu));
    rec.split_bound = -std::expm1(-rec.abs_diff);
    rec.bound_holds = rec.tv <= rec.split_bound + 1e-12;
    return rec;
}

Reconciliation reconcile_mu_nu(const ChenSteinReport& report) {
    if (!report.nu) throw std::invalid_argument("reconcile_mu_nu: nu is undefined");
    return reconcile_mu_nu(report.mu, *report.nu);
}

namespace {

PairMarginal pair_marginal(const ChenSteinAccumulator& acc, const CellPanel& panel, std::uint32_t a,
                           std::uint32_t b, std::uint64_t both) {
    const double n = static_cast<double>(acc.trials());
    const double px = static_cast<double>(acc.cell_ones()[a]) / n;
    const double py = static_cast<double>(acc.cell_ones()[b]) / n;
    PairMarginal pm;
    pm.x = panel.cells[a];
    pm.y = panel.cells[b];
    pm.joint = static_cast<double>(both) / n;
    pm.product = px * py;
    const double var = px * (1.0 - px) * py * (1.0 - py);
    if (var > 0.0) {
        const double r = std::clamp((pm.joint - pm.product) / std::sqrt(var), -1.0, 1.0);
        pm.correlation = r;
        if (acc.trials() > 3 && std::abs(r) < 1.0) {
            const double z = std::atanh(r);
            const double se = 1.0 / std::sqrt(n - 3.0);
            pm.correlation_ci = Interval{std::tanh(z - kZ95 * se), std::tanh(z + kZ95 * se)};
        }
    }
    return pm;
}

}  // namespace

MarginalReport process_marginal_comparison(const ChenSteinAccumulator& acc, const CellPanel& panel,
                                           const GammaGeometry& gamma, double nu) {
    if (acc.trials() == 0) throw std::invalid_argument("process_marginal_comparison: no trials");
    if (!(nu >= 0.0)) throw std::invalid_argument("process_marginal_comparison: nu must be >= 0");
    if (panel.cells.size() != acc.cell_ones().size()) {
        throw std::invalid_argument("process_marginal_comparison: panel does not match");
    }
    MarginalReport report;
    report.p_prime = nu / static_cast<double>(gamma.size());
    const CountDistribution reference = CountDistribution::poisson(report.p_prime);
    for (std::size_t i = 0; i < panel.cells.size(); ++i) {
        const std::uint64_t ones = acc.cell_ones()[i];
        const CountDistribution law = CountDistribution::from_counts({{0, acc.trials() - ones}, {1, ones}});
        report.cells.push_back({panel.cells[i], static_cast<double>(ones) / static_cast<double>(acc.trials()),
                                total_variation(law, reference)});
    }
    for (std::size_t i = 0; i < acc.separated_pairs().size(); ++i) {
        const auto [a, b] = acc.separated_pairs()[i];
        report.separated.push_back(pair_marginal(acc, panel, a, b, acc.separated_both()[i]));
    }
    for (std::size_t i = 0; i < acc.dependent_pairs().size(); ++i) {
        const auto [a, b] = acc.dependent_pairs()[i];
        report.dependent.push_back(pair_marginal(acc, panel, a, b, acc.dependent_both()[i]));
    }
    return report;
}

SyntheticReport run_synthetic_bound_check(const SyntheticConfig& config) {
    if (!(config.p > 0.0 && config.p < 1.0)) throw std::invalid_argument("synthetic: p must lie in (0, 1)");
    if (config.runs == 0) throw std::invalid_argument("synthetic: runs must be positive");
    const GammaGeometry& gamma = config.gamma;
    const auto size = static_cast<std::uint64_t>(gamma.size());
    Rng rng(config.seed);

    // Fixed dependent pairs (x, y), y in Gamma_x \ {x}. Proposals come from
    // the full box around x, so accepted pairs are uniform over all of them.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
    if (gamma.total_dependencies() > gamma.size()) {
        while (pairs.size() < config.pair_samples) {
            const auto i = rng.below(size);
            const GridPoint x = gamma.at(static_cast<std::int64_t>(i));
            const auto r = static_cast<std::int64_t>(std::floor(gamma.reach()));
            const GridPoint y{x.gx + static_cast<std::int64_t>(rng.below(2 * r + 1)) - r,
                              x.gy + static_cast<std::int64_t>(rng.below(2 * r + 1)) - r};
            if (!gamma.contains(y) || y == x) continue;
            const auto w = gamma.x_hi() - gamma.x_lo() + 1;
            pairs.emplace_back(i, static_cast<std::uint64_t>((y.gy - gamma.y_lo()) * w + (y.gx - gamma.x_lo())));
        }
    }

    std::vector<std::uint8_t> field(size, 0);
    std::vector<std::uint64_t> ones;
    std::map<std::uint64_t, std::uint64_t> sums;
    std::uint64_t total_ones = 0, both = 0;
    const double log_q = std::log1p(-config.p);
    for (std::size_t run = 0; run < config.runs; ++run) {
        ones.clear();
        // Geometric gaps between successive ones.
        double pos = -1.0;
        while (true) {
            const double u = 1.0 - rng.uniform01();  // (0, 1]
            pos += 1.0 + std::floor(std::log(u) / log_q);
            if (pos >= static_cast<double>(size)) break;
            ones.push_back(static_cast<std::uint64_t>(pos));
        }
        for (auto i : ones) field[i] = 1;
        for (const auto& [a, b] : pairs) both += (field[a] && field[b]) ? 1 : 0;
        for (auto i : ones) field[i] = 0;
        ++sums[ones.size()];
        total_ones += ones.size();
    }

    SyntheticReport report;
    const double runs = static_cast<double>(config.runs);
    report.p_hat = static_cast<double>(total_ones) / (runs * static_cast<double>(size));
    report.q_hat = pairs.empty() ? 0.0 : static_cast<double>(both) / (runs * static_cast<double>(pairs.size()));
    report.mu = static_cast<double>(size) * report.p_hat;
    const auto deps = static_cast<double>(gamma.total_dependencies());
    report.b1 = deps * report.p_hat * report.p_hat;
    report.b2 = (deps - static_cast<double>(size)) * report.q_hat;
    const CountDistribution empirical = CountDistribution::from_counts(sums);
    report.tv = total_variation(empirical, CountDistribution::poisson(report.mu));
    double width = 0.0;
    for (const auto& [j, f] : empirical.mass()) width += kZ95 * std::sqrt(f * (1.0 - f) / runs);
    report.ci_width = width / 2.0;
    return report;
}

}  // namespace knnlab
