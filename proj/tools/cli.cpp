#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "knnlab/constants.hpp"
#include "knnlab/harness.hpp"
#include "knnlab/local_model.hpp"
#include "knnlab/poisson_stats.hpp"

namespace knnlab::cli {

namespace {

std::string num(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

struct ExperimentFlags {
    double n = 10'000.0;
    std::optional<std::size_t> k;
    std::optional<std::size_t> k_min;
    std::optional<std::size_t> k_max;
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    double lambda = kEulerSquared;
    std::string mode = "global";
    std::optional<double> scaled_m;
    std::optional<std::int64_t> scaled_n_tiles;
    std::optional<double> lambda1;
    std::optional<double> lambda2;
    std::size_t grid_samples = 64;
    std::size_t joint_pairs = 4096;
    std::size_t certificate_batches = 20;
    std::optional<int> threads;
    std::string out;
    std::string format;
    bool resume = false;
    bool timing = false;
};

void add_scaled_flags(CLI::App* cmd, ExperimentFlags& f) {
    cmd->add_option("--scaled-m", f.scaled_m, "Local box side in units of sqrt(log n)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--scaled-n-tiles", f.scaled_n_tiles, "Tiles per sqrt(log n)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lambda1", f.lambda1, "Inner concentration radius / sqrt(log n)");
    cmd->add_option("--lambda2", f.lambda2, "Outer concentration radius / sqrt(log n)");
}

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f, bool with_mode, const std::string& format,
                          std::vector<std::string> formats = {"jsonl", "csv"}) {
    f.format = format;
    cmd->add_option("--n", f.n, "Area of the square S_n (mean point count)");
    auto* k = cmd->add_option("--k", f.k, "Single k");
    auto* k_min = cmd->add_option("--k-min", f.k_min, "Smallest k of a sweep");
    auto* k_max = cmd->add_option("--k-max", f.k_max, "Largest k of a sweep");
    k->excludes(k_min)->excludes(k_max);
    k_min->needs(k_max);
    k_max->needs(k_min);
    cmd->add_option("--trials", f.trials, "Number of trials")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "Base seed");
    cmd->add_option("--lambda", f.lambda, "Small-component threshold constant (default e^2)");
    if (with_mode) {
        cmd->add_option("--mode", f.mode, "global (S_n) or local (U_n)")
            ->check(CLI::IsMember({"global", "local"}));
    }
    add_scaled_flags(cmd, f);
    cmd->add_option("--grid-samples", f.grid_samples, "Grid cells examined per trial");
    cmd->add_option("--joint-pairs", f.joint_pairs, "Dependent cell pairs tracked for b2");
    cmd->add_option("--certificate-batches", f.certificate_batches,
                    "Random point batches per empty-tile certificate (local mode)");
    cmd->add_option("--threads", f.threads, "Worker cap")->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "JSON Lines record file");
    cmd->add_option("--format", f.format, "Output on stdout")->check(CLI::IsMember(formats));
    cmd->add_flag("--resume", f.resume, "Continue an interrupted record file");
    cmd->add_flag("--timing", f.timing, "Record per-trial runtimes");
}

std::vector<std::size_t> default_sweep(double n) {
    const double log_n = std::log(n);
    std::vector<std::size_t> ks;
    for (auto k = static_cast<std::size_t>(std::floor(0.3 * log_n)) + 1; static_cast<double>(k) < 0.6 * log_n; ++k) {
        ks.push_back(k);
    }
    if (ks.empty()) ks.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.45 * log_n))));
    return ks;
}

ScaledOptions scaled_options(const ExperimentFlags& f) {
    ScaledOptions s;
    if (f.scaled_m) s.M = *f.scaled_m;
    if (f.scaled_n_tiles) s.N = *f.scaled_n_tiles;
    if (f.lambda1) s.lambda1 = *f.lambda1;
    if (f.lambda2) s.lambda2 = *f.lambda2;
    return s;
}

ExperimentConfig make_config(const ExperimentFlags& f, Mode mode) {
    ExperimentConfig c;
    c.n = f.n;
    if (f.k) {
        c.ks = {*f.k};
    } else if (f.k_min) {
        if (*f.k_min > *f.k_max) throw std::invalid_argument("--k-min exceeds --k-max");
        c.ks.clear();
        for (auto k = *f.k_min; k <= *f.k_max; ++k) c.ks.push_back(k);
    } else {
        c.ks = default_sweep(f.n);
    }
    c.trial_count = f.trials;
    c.base_seed = f.seed;
    c.lambda = f.lambda;
    c.mode = mode;
    c.scaled = scaled_options(f);
    c.grid_sample_count = f.grid_samples;
    c.joint_sample_pairs = f.joint_pairs;
    c.certificate_batches = f.certificate_batches;
    c.threads = f.threads;
    c.output_path = f.out;
    c.resume = f.resume;
    c.record_timing = f.timing;
    return c;
}

ExperimentResult run_with_warnings(const ExperimentConfig& config, std::ostream& err) {
    auto result = run_experiment(config);
    for (const auto& w : result.warnings) err << "warning: " << w << '\n';
    if (result.resumed_from > 0) err << "resumed after " << result.resumed_from << " recorded trials\n";
    return result;
}

void write_report_csv(const StatsReport& report, std::ostream& out) {
    out << "k,p_connected,ci_lo,ci_hi,mean_small_components,tv_vs_poisson\n";
    for (const auto& s : report.per_k) {
        out << s.k << ',' << num(s.p_connected) << ',' << num(s.connected_ci.lo) << ','
            << num(s.connected_ci.hi) << ',' << num(s.mean_small_components) << ','
            << num(s.tv_vs_poisson) << '\n';
    }
}

void write_local_csv(const StatsReport& report, std::ostream& out) {
    out << "k,trials,a_k,b_k,bad_C,b_k_without_C,certificates,certificate_counterexamples,"
           "batches_tested,batches_passed\n";
    for (const auto& s : report.per_k) {
        out << s.k << ',' << s.trials << ',' << s.a_k << ',' << s.b_k << ',' << s.bad_C << ','
            << s.b_k_without_C << ',' << s.certificates << ',' << s.certificate_counterexamples << ','
            << s.batches_tested << ',' << s.batches_passed << '\n';
    }
}

void write_chen_stein(const StatsReport& report, std::ostream& out) {
    for (const auto& s : report.per_k) {
        out << "k = " << s.k << '\n';
        out << "  trials                " << s.trials << '\n';
        out << "  P(connected)          " << num(s.p_connected) << "  [" << num(s.connected_ci.lo) << ", "
            << num(s.connected_ci.hi) << "]\n";
        out << "  nu                    " << (s.nu ? num(*s.nu) : "undefined (no connected trial)") << '\n';
        out << "  TV(small count, Po_nu) " << (s.tv_vs_poisson ? num(*s.tv_vs_poisson) : "undefined") << '\n';
        if (!s.chen_stein) {
            out << "  counting functions    not evaluated (Gamma empty or no panel)\n";
            continue;
        }
        const auto& cs = *s.chen_stein;
        out << "  |Gamma|               " << cs.gamma_size << '\n';
        out << "  |Gamma_x| (interior)  " << cs.gamma_x_size << '\n';
        out << "  p_hat                 " << num(cs.p_hat) << " +- " << num(cs.p_hat_hw) << '\n';
        out << "  q_hat                 " << num(cs.q_hat) << " +- " << num(cs.q_hat_hw) << '\n';
        out << "  mu                    " << num(cs.mu) << " +- " << num(cs.mu_hw) << '\n';
        out << "  b1                    " << num(cs.b1) << " +- " << num(cs.b1_hw) << '\n';
        out << "  b2                    " << num(cs.b2) << " +- " << num(cs.b2_hw) << '\n';
        out << "  TV(X, Po_nu)          " << num(cs.tv_X_vs_Po_nu) << '\n';
        out << "  TV(Po_mu, Po_nu)      " << num(cs.tv_Po_mu_vs_Po_nu) << '\n';
        if (s.nu) {
            const auto rec = reconcile_mu_nu(cs.mu, *s.nu);
            out << "  |mu - nu|             " << num(rec.abs_diff) << '\n';
            out << "  1 - exp(-|mu - nu|)   " << num(rec.split_bound) << (rec.bound_holds ? "  (bounds TV)" : "  (VIOLATED)")
                << '\n';
        }
        out << "  any bad event         " << s.any_bad << " / " << s.trials << '\n';
    }
}

void write_bundle(const ConstantsBundle& c, std::ostream& out) {
    out << "lambda   " << num(c.lambda) << '\n';
    out << "n        " << num(c.n) << '\n';
    out << "M        " << num(c.M) << '\n';
    out << "lambda1  " << num(c.lambda1) << '\n';
    out << "lambda2  " << num(c.lambda2) << '\n';
    out << "N1       " << c.N1 << '\n';
    out << "N2       " << c.N2 << '\n';
    out << "N3       " << c.N3 << '\n';
    out << "N        " << c.N << '\n';
    out << "c3       " << num(c.c3) << '\n';
    out << "c4       " << num(c.c4) << '\n';
    out << "scaled   " << (c.scaled ? "yes" : "no") << '\n';
}

bool write_guards(const ConstantsBundle& c, std::ostream& out) {
    const auto g = check_guards(c);
    auto line = [&](const char* label, bool ok) { out << label << (ok ? "PASS" : "FAIL") << '\n'; };
    line("guard N2 inequality      ", g.n2_inequality);
    line("guard N3 inequality      ", g.n3_inequality);
    line("guard lambda2 <= lambda  ", g.lambda2_le_lambda);
    line("guard lambda2 < M/4      ", g.lambda2_below_quarter_M);
    line("guard check: ", g.all());
    return g.all();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"k-nearest-neighbour random geometric graph laboratory", "knnlab"};
    app.require_subcommand(1, 1);

    ExperimentFlags sim;
    auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
    add_experiment_flags(simulate, sim, true, "jsonl");

    ExperimentFlags sweep;
    auto* sweep_k = app.add_subcommand("sweep-k", "P(connected) across a range of k (global mode)");
    add_experiment_flags(sweep_k, sweep, false, "csv");

    ExperimentFlags local;
    auto* local_events = app.add_subcommand("local-events", "A_k, B_k and bad-set frequencies in U_n");
    add_experiment_flags(local_events, local, false, "csv");

    ExperimentFlags poisson;
    auto* verify = app.add_subcommand("verify-poisson", "Chen-Stein estimates and Poisson comparisons");
    add_experiment_flags(verify, poisson, false, "text", {"text", "jsonl"});

    ExperimentFlags cst;
    bool scaled_bundle = false;
    auto* constants = app.add_subcommand("constants", "Print the derived constants and check the guards");
    constants->add_option("--lambda", cst.lambda, "lambda (default e^2)");
    constants->add_option("--n", cst.n, "n");
    constants->add_flag("--scaled", scaled_bundle, "Desk-scale bundle instead of the faithful one");
    add_scaled_flags(constants, cst);

    ExperimentFlags claims_flags;
    std::size_t samples = 100'000;
    bool claims_scaled = false;
    auto* claims = app.add_subcommand("claims-check", "Random check of the two empty-tile claims");
    claims->add_option("--samples", samples, "Configurations per claim")->check(CLI::PositiveNumber);
    claims->add_option("--seed", claims_flags.seed, "Seed");
    claims->add_option("--lambda", claims_flags.lambda, "lambda (default e^2)");
    claims->add_option("--n", claims_flags.n, "n");
    claims->add_flag("--scaled", claims_scaled, "Use the desk-scale bundle");
    add_scaled_flags(claims, claims_flags);

    std::string report_in;
    std::string report_format = "csv";
    auto* report = app.add_subcommand("report", "Aggregate a JSON Lines record file");
    report->add_option("input,--in", report_in, "Record file")->required();
    report->add_option("--format", report_format, "csv or jsonl (summary line)")
        ->check(CLI::IsMember({"jsonl", "csv"}));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (simulate->parsed()) {
            const auto result = run_with_warnings(make_config(sim, mode_from_string(sim.mode)), err);
            if (sim.format == "csv") {
                write_report_csv(result.report, out);
            } else {
                out << serialize_summary(result.report) << '\n';
            }
        } else if (sweep_k->parsed()) {
            const auto result = run_with_warnings(make_config(sweep, Mode::global), err);
            if (sweep.format == "csv") {
                write_report_csv(result.report, out);
            } else {
                out << serialize_summary(result.report) << '\n';
            }
        } else if (local_events->parsed()) {
            const auto result = run_with_warnings(make_config(local, Mode::local), err);
            if (local.format == "csv") {
                write_local_csv(result.report, out);
            } else {
                out << serialize_summary(result.report) << '\n';
            }
            for (const auto& s : result.report.per_k) {
                if (s.certificate_counterexamples > 0 || s.batches_passed != s.batches_tested) {
                    err << "error: empty-tile certificate falsified at k = " << s.k << '\n';
                    return kExitFailure;
                }
            }
        } else if (verify->parsed()) {
            const auto result = run_with_warnings(make_config(poisson, Mode::global), err);
            if (poisson.format == "text") {
                write_chen_stein(result.report, out);
            } else {
                out << serialize_summary(result.report) << '\n';
            }
        } else if (constants->parsed()) {
            const auto bundle = scaled_bundle ? compute_scaled_constants(cst.lambda, cst.n, scaled_options(cst))
                                              : compute_constants(cst.lambda, cst.n);
            for (const auto& note : bundle.substitutions) err << "warning: " << note << '\n';
            write_bundle(bundle, out);
            if (!write_guards(bundle, out)) {
                err << "error: guard check failed\n";
                return kExitFailure;
            }
        } else if (claims->parsed()) {
            const auto bundle = claims_scaled
                                    ? compute_scaled_constants(claims_flags.lambda, claims_flags.n,
                                                               scaled_options(claims_flags))
                                    : compute_constants(claims_flags.lambda, claims_flags.n);
            for (const auto& note : bundle.substitutions) err << "warning: " << note << '\n';
            const auto r = check_claim_inequalities(samples, claims_flags.seed, bundle);
            out << "claim 1 samples          " << r.claim1_samples << '\n';
            out << "claim 1 counterexamples  " << r.claim1_counterexamples << '\n';
            out << "claim 1 worst ratio      " << num(r.claim1_worst_ratio) << '\n';
            out << "claim 2 samples          " << r.claim2_samples << '\n';
            out << "claim 2 counterexamples  " << r.claim2_counterexamples << '\n';
            out << "claim 2 worst ratio      " << num(r.claim2_worst_ratio) << '\n';
            out << "rejected draws           " << r.rejected << '\n';
            for (const auto& c : r.counterexamples) out << "counterexample: " << c << '\n';
            out << "claims check: " << (r.passed() ? "PASS" : "FAIL") << '\n';
            if (!r.passed()) return kExitFailure;
        } else if (report->parsed()) {
            const auto file = read_record_file(report_in);
            if (file.config_line.empty()) throw std::runtime_error("'" + report_in + "' has no config line");
            if (file.records.empty()) throw std::runtime_error("'" + report_in + "' holds no trial records");
            if (!file.complete) {
                err << "warning: '" << report_in << "' is incomplete; aggregating " << file.records.size()
                    << " trials\n";
            }
            const auto ctx = prepare_experiment(file.config);
            const auto stats = aggregate(file.records, ctx);
            if (report_format == "csv") {
                write_report_csv(stats, out);
            } else {
                out << serialize_summary(stats) << '\n';
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace knnlab::cli
