#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "knnlab/constants.hpp"
#include "knnlab/graph_analysis.hpp"
#include "knnlab/local_model.hpp"
#include "knnlab/poisson_stats.hpp"

namespace knnlab {

enum class Mode { global, local };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct ExperimentConfig {
    double n = 10'000.0;
    std::vector<std::size_t> ks{4};
    std::size_t trial_count = 1;
    std::uint64_t base_seed = 0;
    double lambda = kEulerSquared;
    Mode mode = Mode::global;
    ScaledOptions scaled;
    std::size_t grid_sample_count = 64;
    std::size_t joint_sample_pairs = 4096;
    /// Random point batches per empty-tile certificate in local mode (0 disables).
    std::size_t certificate_batches = 20;
    /// Worker cap; KNN_LAB_THREADS and the machine limit apply otherwise.
    std::optional<int> threads;
    /// Fill runtime_ms. Off by default since timings break byte-identical output.
    bool record_timing = false;
    std::string output_path;
    /// Continue an interrupted file instead of overwriting it.
    bool resume = false;

    /// Throws invalid_argument on an invalid config; returns warnings.
    std::vector<std::string> validate() const;
};

struct SmallComponentDetail {
    std::size_t k = 0;
    Point bottom_most;
    double diameter = 0.0;
    std::size_t size = 0;

    friend bool operator==(const SmallComponentDetail&, const SmallComponentDetail&) = default;
};

/// Counting-function values for one k: the grid points with X = 1 and Y at
/// each panel cell.
struct CountingRecord {
    std::vector<GridPoint> x_ones;
    std::vector<std::uint8_t> y_cells;

    friend bool operator==(const CountingRecord&, const CountingRecord&) = default;
};

struct CertificateTally {
    std::size_t batches_tested = 0;
    std::size_t batches_passed = 0;
    bool counterexample = false;
    bool boundary_case = false;

    friend bool operator==(const CertificateTally&, const CertificateTally&) = default;
};

struct TrialRecord {
    std::uint64_t trial_id = 0;
    std::uint64_t seed = 0;
    std::uint64_t point_count = 0;
    std::map<std::size_t, bool> connected_by_k;
    std::map<std::size_t, std::uint64_t> small_component_count_by_k;
    std::vector<SmallComponentDetail> small_component_details;
    std::map<std::size_t, BadEventFlags> bad_event_flags_by_k;  // global mode
    std::optional<std::map<std::size_t, LocalEventOutcome>> local_outcome;  // local mode
    std::map<std::size_t, CertificateTally> certificate_by_k;  // local mode, when run
    double longest_edge = 0.0;  // at the largest k
    std::map<std::size_t, double> longest_edge_by_k;
    std::map<std::size_t, bool> close_small_pair_by_k;
    std::map<std::size_t, CountingRecord> counting_by_k;  // global mode
    std::int64_t runtime_ms = 0;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Throws logic_error if connectivity decreases as k grows.
void check_coupling(const TrialRecord& record);

/// Everything derived once per experiment.
struct ExperimentContext {
    ExperimentConfig config;
    std::vector<std::size_t> ks;  // sorted, distinct
    std::optional<CountingGeometry> geometry;  // global mode
    std::optional<GammaGeometry> gamma;        // global mode, when Gamma is nonempty
    CellPanel panel;
    std::optional<ConstantsBundle> constants;  // local mode
    std::vector<std::string> warnings;
};

ExperimentContext prepare_experiment(const ExperimentConfig& config);

/// One trial; a pure function of (context, trial index).
TrialRecord run_trial(const ExperimentContext& context, std::uint64_t trial_id);

struct KStats {
    std::size_t k = 0;
    std::uint64_t trials = 0;
    std::uint64_t connected = 0;
    double p_connected = 0.0;
    Interval connected_ci;
    std::map<std::uint64_t, std::uint64_t> small_histogram;
    double mean_small_components = 0.0;
    std::optional<double> nu;
    std::optional<double> tv_vs_poisson;  // TV(law of small count, Po_nu)
    std::array<std::uint64_t, 7> bad_counts{};
    std::uint64_t any_bad = 0;
    std::uint64_t close_pair_trials = 0;
    std::uint64_t two_small_trials = 0;
    Interval close_pair_ci;
    Interval two_small_ci;
    std::optional<ChenSteinReport> chen_stein;
    // Local mode.
    std::uint64_t a_k = 0;
    std::uint64_t b_k = 0;
    std::uint64_t bad_C = 0;
    std::uint64_t b_k_without_C = 0;
    std::uint64_t certificates = 0;
    std::uint64_t certificate_counterexamples = 0;
    std::uint64_t batches_tested = 0;
    std::uint64_t batches_passed = 0;
};

struct StatsReport {
    std::string mode;
    std::uint64_t trials = 0;
    std::vector<KStats> per_k;

    const KStats& at(std::size_t k) const;
};

/// Integer-count fold over trial records; merge is exact, associative and
/// commutative.
class Aggregator {
public:
    explicit Aggregator(const ExperimentContext& context);

    /// Throws invalid_argument for a record from a different config.
    void add(const TrialRecord& record);
    void merge(const Aggregator& other);
    StatsReport report() const;

    std::uint64_t trials() const { return trials_; }

    friend bool operator==(const Aggregator&, const Aggregator&) = default;

private:
    struct Counts {
        std::uint64_t connected = 0;
        std::map<std::uint64_t, std::uint64_t> histogram;
        std::array<std::uint64_t, 7> bad{};
        std::uint64_t any_bad = 0;
        std::uint64_t close = 0;
        std::uint64_t two_small = 0;
        std::uint64_t a_k = 0, b_k = 0, bad_C = 0, b_k_without_C = 0;
        std::uint64_t certificates = 0, counterexamples = 0, tested = 0, passed = 0;
        ChenSteinAccumulator chen_stein;

        friend bool operator==(const Counts&, const Counts&) = default;
    };

    Mode mode_;
    std::vector<std::size_t> ks_;
    std::size_t panel_size_ = 0;
    std::optional<GammaGeometry> gamma_;
    std::uint64_t trials_ = 0;
    std::map<std::size_t, Counts> counts_;
};

/// Convenience fold. Throws invalid_argument on mixed-config records.
StatsReport aggregate(const std::vector<TrialRecord>& records, const ExperimentContext& context);

// JSON Lines persistence. Floats carry 17 significant digits.
std::string serialize_config(const ExperimentConfig& config);
std::string serialize_record(const TrialRecord& record);
std::string serialize_summary(const StatsReport& report);

ExperimentConfig parse_config(const std::string& line);
TrialRecord parse_record(const std::string& line);

struct RecordFile {
    std::string config_line;
    ExperimentConfig config;
    std::vector<TrialRecord> records;
    bool complete = false;        // a summary line was found
    std::uint64_t valid_bytes = 0;  // prefix made of whole, parseable lines
};

/// Reads a JSON Lines results file, stopping at the first damaged line.
RecordFile read_record_file(const std::string& path);

struct ExperimentResult {
    std::vector<TrialRecord> records;
    StatsReport report;
    std::vector<std::string> warnings;
    std::uint64_t resumed_from = 0;  // trials replayed from an existing file
};

/// Parallel runner: trials in parallel, records emitted in trial order.
/// Output is identical for any worker count.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Serial reference runner with the same output.
ExperimentResult run_experiment_serial(const ExperimentConfig& config);

/// Worker count after applying the config, KNN_LAB_THREADS and the machine limit.
int resolve_threads(const ExperimentConfig& config);

}  // namespace knnlab
