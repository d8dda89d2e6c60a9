#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace knnlab {

/// Derived constants of the local model for a given (lambda, n).
///
/// lambda2 = 2 sqrt(e^3/pi) + 1 and lambda1 = sqrt(e^{-49/3}/pi)/2 bound
/// the radii (in units of sqrt(log n)) at which balls hold at least / fewer
/// than k points. The tile count per sqrt(log n) is N = max(N1, N2, N3):
///
///   N1 = ceil(sqrt5 / lambda1) + 1
///   N2 = ceil(2/lambda1 + 4 sqrt5 lambda2 / lambda1^2)
///   N3 = ceil((s + sqrt(s^2 - (5 + 2 sqrt5) lambda1^2)) / lambda1^2) + 1,
///        s = (1 + sqrt5) lambda1 + lambda2
///
/// and the box side is M sqrt(log n) with M = max(160 ceil(lambda), 50).
struct ConstantsBundle {
    double lambda = 0.0;
    double M = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::int64_t N1 = 0;
    std::int64_t N2 = 0;
    std::int64_t N3 = 0;
    std::int64_t N = 0;
    double c3 = 0.0;  // (M N)^2
    double c4 = 0.0;  // 1 / N^2
    double n = 0.0;
    bool scaled = false;
    /// Human-readable notes on any scaled-mode substitution.
    std::vector<std::string> substitutions;

    double sqrt_log_n() const;
    double box_side() const { return M * sqrt_log_n(); }
    double tile_side() const { return sqrt_log_n() / static_cast<double>(N); }
};

struct GuardCheck {
    bool n2_inequality = false;  // 1/N + (4 sqrt5 lambda2/N + 1/N^2)^{1/2} <= lambda1
    bool n3_inequality = false;  // 1/N^2 + 2 lambda2/N < (lambda1 - (1+sqrt5)/N)^2
    bool lambda2_le_lambda = false;
    bool lambda2_below_quarter_M = false;

    bool all() const {
        return n2_inequality && n3_inequality && lambda2_le_lambda && lambda2_below_quarter_M;
    }
};

/// Thrown when a freshly computed bundle fails its own guards.
class ConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kEulerSquared = 7.38905609893064951876;

/// Faithful constants. Requires lambda >= e^2 and n > 1.
ConstantsBundle compute_constants(double lambda, double n);

GuardCheck check_guards(const ConstantsBundle& c);

/// The tile-count formulas for an arbitrary (lambda1, lambda2) pair.
struct TileCounts {
    std::int64_t N1, N2, N3;
};
TileCounts tile_counts(double lambda1, double lambda2);

/// Desk-scale configuration. The faithful box (M = 1280) is far too large to
/// simulate, and the faithful lambda1 makes N astronomically large, so the
/// local study runs on a smaller box with radii that actually concentrate at
/// desk-scale n.
struct ScaledOptions {
    double M = 10.0;
    std::optional<std::int64_t> N;  // derived from the radii when absent
    double lambda1 = 0.02;
    double lambda2 = 1.2;
};

/// Scaled constants. If an explicit N violates a guard, lambda1 is raised
/// to the smallest value satisfying both guards and a note is recorded.
ConstantsBundle compute_scaled_constants(double lambda, double n, const ScaledOptions& options);

}  // namespace knnlab
