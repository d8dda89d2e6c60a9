#include "knnlab/constants.hpp"

#include <cmath>
#include <sstream>

namespace knnlab {

namespace {

constexpr long double kSqrt5 = 2.23606797749978969640917366873127624L;
constexpr long double kPi = 3.14159265358979323846264338327950288L;

std::int64_t ceil_i64(long double v) { return static_cast<std::int64_t>(std::ceil(v)); }

void finish(ConstantsBundle& c) {
    const long double N = static_cast<long double>(c.N);
    c.c3 = static_cast<double>((static_cast<long double>(c.M) * N) * (static_cast<long double>(c.M) * N));
    c.c4 = static_cast<double>(1.0L / (N * N));
}

}  // namespace

double ConstantsBundle::sqrt_log_n() const { return std::sqrt(std::log(n)); }

TileCounts tile_counts(double lambda1, double lambda2) {
    const long double l1 = lambda1;
    const long double l2 = lambda2;
    TileCounts t{};
    t.N1 = ceil_i64(kSqrt5 / l1) + 1;
    t.N2 = ceil_i64(2.0L / l1 + 4.0L * kSqrt5 * l2 / (l1 * l1));
    const long double s = (1.0L + kSqrt5) * l1 + l2;
    const long double disc = s * s - (5.0L + 2.0L * kSqrt5) * l1 * l1;
    t.N3 = ceil_i64((s + std::sqrt(disc)) / (l1 * l1)) + 1;
    return t;
}

GuardCheck check_guards(const ConstantsBundle& c) {
    const long double N = static_cast<long double>(c.N);
    const long double l1 = c.lambda1;
    const long double l2 = c.lambda2;
    GuardCheck g;
    g.n2_inequality = 1.0L / N + std::sqrt(4.0L * kSqrt5 * l2 / N + 1.0L / (N * N)) <= l1;
    const long double gap = l1 - (1.0L + kSqrt5) / N;
    g.n3_inequality = gap > 0 && 1.0L / (N * N) + 2.0L * l2 / N < gap * gap;
    g.lambda2_le_lambda = c.lambda2 <= c.lambda;
    g.lambda2_below_quarter_M = c.lambda2 < c.M / 4.0;
    return g;
}

ConstantsBundle compute_constants(double lambda, double n) {
    if (!(lambda >= kEulerSquared)) {
        throw std::invalid_argument("compute_constants: lambda must be at least e^2");
    }
    if (!(n > 1.0)) throw std::invalid_argument("compute_constants: n must exceed 1");

    ConstantsBundle c;
    c.lambda = lambda;
    c.n = n;
    c.M = std::max(160.0 * std::ceil(lambda), 50.0);
    c.lambda2 = static_cast<double>(2.0L * std::sqrt(std::exp(3.0L) / kPi) + 1.0L);
    c.lambda1 = static_cast<double>(std::sqrt(std::exp(-49.0L / 3.0L) / kPi) / 2.0L);
    const auto t = tile_counts(c.lambda1, c.lambda2);
    c.N1 = t.N1;
    c.N2 = t.N2;
    c.N3 = t.N3;
    c.N = std::max({t.N1, t.N2, t.N3});
    finish(c);

    const auto g = check_guards(c);
    if (!g.all()) {
        throw ConsistencyError("compute_constants: derived constants fail their guard inequalities");
    }
    return c;
}

ConstantsBundle compute_scaled_constants(double lambda, double n, const ScaledOptions& options) {
    if (!(n > 1.0)) throw std::invalid_argument("compute_scaled_constants: n must exceed 1");
    if (!(options.M > 0.0)) throw std::invalid_argument("compute_scaled_constants: M must be positive");
    if (!(options.lambda1 > 0.0) || !(options.lambda2 > options.lambda1)) {
        throw std::invalid_argument("compute_scaled_constants: need 0 < lambda1 < lambda2");
    }
    ConstantsBundle c;
    c.scaled = true;
    c.lambda = lambda;
    c.n = n;
    c.M = options.M;
    c.lambda1 = options.lambda1;
    c.lambda2 = options.lambda2;

    if (options.N) {
        if (*options.N < 1) throw std::invalid_argument("compute_scaled_constants: N must be >= 1");
        c.N = *options.N;
        finish(c);
        auto g = check_guards(c);
        if (!g.n2_inequality || !g.n3_inequality) {
            const long double N = static_cast<long double>(c.N);
            const long double l2 = c.lambda2;
            const long double need2 = 1.0L / N + std::sqrt(4.0L * kSqrt5 * l2 / N + 1.0L / (N * N));
            const long double need3 = (1.0L + kSqrt5) / N + std::sqrt(1.0L / (N * N) + 2.0L * l2 / N);
            double raised = static_cast<double>(std::max(need2, need3));
            while (true) {
                raised = std::nextafter(raised * (1.0 + 1e-12), HUGE_VAL);
                c.lambda1 = raised;
                g = check_guards(c);
                if (g.n2_inequality && g.n3_inequality) break;
            }
            std::ostringstream note;
            note.precision(17);
            note << "lambda1 raised from " << options.lambda1 << " to " << c.lambda1
                 << " so both tile guards hold at N=" << c.N;
            c.substitutions.push_back(note.str());
        }
    }
    const auto t = tile_counts(c.lambda1, c.lambda2);
    c.N1 = t.N1;
    c.N2 = t.N2;
    c.N3 = t.N3;
    if (!options.N) c.N = std::max({t.N1, t.N2, t.N3});
    finish(c);
    const auto g = check_guards(c);
    if (!g.n2_inequality || !g.n3_inequality) {
        throw ConsistencyError("compute_scaled_constants: tile guards fail after construction");
    }
    return c;
}

}  // namespace knnlab
