// Timings of the indexed and parallel kernels next to their serial
// references. Every pair is checked for identical output before timing is
// reported.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "knnlab/harness.hpp"
#include "knnlab/knn_graph.hpp"
#include "knnlab/pointset.hpp"

using namespace knnlab;

namespace {

// Median wall time in milliseconds.
double time_ms(int repeats, const std::function<void()>& fn) {
    std::vector<double> t;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knnlab kernel benchmarks", "knnlab_bench"};
    std::vector<double> sizes{1e3, 4e3};
    std::size_t k = 6;
    std::size_t trials = 32;
    int repeats = 3;
    app.add_option("--sizes", sizes, "Areas n for the neighbour-table comparison");
    app.add_option("--k", k, "k_max of the neighbour table");
    app.add_option("--trials", trials, "Trials for the runner comparison");
    app.add_option("--repeats", repeats, "Timing repeats (median reported)")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    std::printf("threads available: %d\n\n", omp_get_max_threads());
    std::printf("neighbour table, k_max = %zu\n", k);
    std::printf("%10s %8s %12s %12s %9s %s\n", "n", "points", "indexed_ms", "brute_ms", "speedup", "check");
    for (double n : sizes) {
        const double side = std::sqrt(n);
        const auto ps = sample_poisson_pointset(Region(0.0, 0.0, side, side), 1.0, 42);
        const bool same = build_neighbour_table(ps, k) == brute_force_neighbour_table(ps, k);
        const double fast = time_ms(repeats, [&] { build_neighbour_table(ps, k); });
        const double slow = time_ms(repeats, [&] { brute_force_neighbour_table(ps, k); });
        std::printf("%10.0f %8zu %12.3f %12.3f %9.1f %s\n", n, ps.size(), fast, slow, slow / fast,
                    same ? "identical" : "MISMATCH");
    }

    ExperimentConfig c;
    c.n = 1e4;
    c.ks = {3, 4, 5};
    c.trial_count = trials;
    c.grid_sample_count = 0;
    std::printf("\nexperiment runner, n = 1e4, k = 3..5, %zu trials\n", trials);
    std::vector<TrialRecord> parallel_records, serial_records;
    const double par = time_ms(repeats, [&] { parallel_records = run_experiment(c).records; });
    const double ser = time_ms(repeats, [&] { serial_records = run_experiment_serial(c).records; });
    std::printf("%12s %12s %12s %9s %s\n", "parallel_ms", "serial_ms", "trials/s", "speedup", "check");
    std::printf("%12.1f %12.1f %12.1f %9.2f %s\n", par, ser, 1000.0 * double(trials) / par, ser / par,
                parallel_records == serial_records ? "identical" : "MISMATCH");
    return parallel_records == serial_records ? 0 : 1;
}
