#include "knnlab/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "knnlab/rng.hpp"

namespace knnlab {

namespace {

using json = nlohmann::json;

// Panel cells and pairs are drawn from their own stream.
constexpr std::uint64_t kPanelStream = 0x70616e656cULL;

// Minimal streaming JSON writer. nlohmann's dump() prints shortest
// round-trip floats; the record format pins 17 significant digits instead.
class JsonWriter {
public:
    JsonWriter& begin_object() { comma(); out_ += '{'; first_ = true; return *this; }
    JsonWriter& end_object() { out_ += '}'; first_ = false; return *this; }
    JsonWriter& begin_array() { comma(); out_ += '['; first_ = true; return *this; }
    JsonWriter& end_array() { out_ += ']'; first_ = false; return *this; }

    JsonWriter& key(const std::string& k) {
        comma();
        string_literal(k);
        out_ += ':';
        first_ = true;
        return *this;
    }
    JsonWriter& value(double v) {
        comma();
        if (!std::isfinite(v)) {
            out_ += "null";
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out_ += buf;
        }
        return *this;
    }
    JsonWriter& value(std::uint64_t v) { comma(); out_ += std::to_string(v); return *this; }
    JsonWriter& value(std::int64_t v) { comma(); out_ += std::to_string(v); return *this; }
    JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
    JsonWriter& value(bool v) { comma(); out_ += v ? "true" : "false"; return *this; }
    JsonWriter& value(const std::string& s) { comma(); string_literal(s); return *this; }
    JsonWriter& value(const char* s) { return value(std::string(s)); }
    JsonWriter& null() { comma(); out_ += "null"; return *this; }

    template <class T>
    JsonWriter& field(const std::string& k, const T& v) {
        key(k);
        return value(v);
    }
    template <class T>
    JsonWriter& optional_field(const std::string& k, const std::optional<T>& v) {
        key(k);
        return v ? value(*v) : null();
    }

    std::string str() const { return out_; }

private:
    void comma() {
        if (!first_) out_ += ',';
        first_ = false;
    }
    void string_literal(const std::string& s) {
        out_ += '"';
        for (char ch : s) {
            switch (ch) {
                case '"': out_ += "\\\""; break;
                case '\\': out_ += "\\\\"; break;
                case '\n': out_ += "\\n"; break;
                case '\t': out_ += "\\t"; break;
                default:
                    if (static_cast<unsigned char>(ch) < 0x20) {
                        char buf[8];
                        std::snprintf(buf, sizeof buf, "\\u%04x", ch);
                        out_ += buf;
                    } else {
                        out_ += ch;
                    }
            }
        }
        out_ += '"';
    }

    std::string out_;
    bool first_ = true;
};

void write_interval(JsonWriter& w, const std::string& k, const Interval& iv) {
    w.key(k).begin_array().value(iv.lo).value(iv.hi).end_array();
}

double json_real(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

std::size_t key_to_k(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

std::vector<std::string> range_warnings(const ExperimentConfig& config) {
    std::vector<std::string> warnings;
    const double log_n = std::log(config.n);
    for (auto k : config.ks) {
        const double kd = static_cast<double>(k);
        if (!(kd > 0.3 * log_n && kd < 0.6 * log_n)) {
            std::ostringstream os;
            os << "k = " << k << " lies outside the range (0.3 log n, 0.6 log n) = (" << 0.3 * log_n
               << ", " << 0.6 * log_n << ")";
            warnings.push_back(os.str());
        }
    }
    return warnings;
}

std::vector<std::size_t> sorted_ks(std::vector<std::size_t> ks) {
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

TrialRecord run_global_trial(const ExperimentContext& ctx, TrialRecord rec) {
    const auto& g = *ctx.geometry;
    const auto ps = sample_poisson_pointset(g.square(), 1.0, rec.seed);
    rec.point_count = ps.size();
    const auto table = build_neighbour_table(ps, ctx.ks.back());

    std::vector<std::vector<LocalCellResult>> cells;
    cells.reserve(ctx.panel.cells.size());
    for (const auto& x : ctx.panel.cells) cells.push_back(analyse_local_cell(ps, x, g, ctx.ks));

    for (std::size_t ki = 0; ki < ctx.ks.size(); ++ki) {
        const auto k = ctx.ks[ki];
        const auto graph = graph_from_table(table, k);
        const auto ga = analyse_global(graph, ps, g);
        rec.connected_by_k[k] = ga.connected;
        rec.small_component_count_by_k[k] = ga.small_count;
        for (const auto& comp : ga.components) {
            if (!comp.is_small) continue;
            rec.small_component_details.push_back({k, ps[comp.bottom_most_vertex], comp.diameter, comp.size});
        }
        auto flags = ga.flags;
        CountingRecord counting;
        for (const auto& [x, v] : ga.counting) {
            if (v == 1) counting.x_ones.push_back(x);
        }
        counting.y_cells.reserve(cells.size());
        for (const auto& cell : cells) {
            flags.d2 = flags.d2 || cell[ki].long_edge;
            flags.d7 = flags.d7 || cell[ki].ambiguous;
            counting.y_cells.push_back(cell[ki].y ? 1 : 0);
        }
        rec.bad_event_flags_by_k[k] = flags;
        rec.counting_by_k[k] = std::move(counting);
        rec.longest_edge_by_k[k] = ga.longest_edge;
        rec.close_small_pair_by_k[k] = !ga.close_pairs.empty();
    }
    return rec;
}

TrialRecord run_local_trial(const ExperimentContext& ctx, TrialRecord rec) {
    const auto& c = *ctx.constants;
    const auto ps = sample_poisson_pointset(local_box(c), 1.0, rec.seed);
    rec.point_count = ps.size();
    const auto table = build_neighbour_table(ps, ctx.ks.back());
    const double close = 8.0 * c.lambda * c.sqrt_log_n();

    std::map<std::size_t, LocalEventOutcome> outcomes;
    for (const auto k : ctx.ks) {
        auto la = analyse_local_graph(ps, graph_from_table(table, k), c);
        la.outcome.bad_C = detect_bad_set_C(ps, k, c);
        outcomes[k] = la.outcome;

        std::uint64_t small = 0;
        for (const auto& comp : la.components) {
            if (!comp.is_small) continue;
            ++small;
            rec.small_component_details.push_back({k, ps[comp.bottom_most_vertex], comp.diameter, comp.size});
        }
        rec.connected_by_k[k] = la.components.size() <= 1;
        rec.small_component_count_by_k[k] = small;
        rec.longest_edge_by_k[k] = longest_edge_length(la.graph, ps);
        rec.close_small_pair_by_k[k] = !find_close_small_pairs(la.components, ps, close).empty();

        if (ctx.config.certificate_batches > 0 && la.outcome.b_k && !la.outcome.bad_C) {
            const auto cert = empty_tile_certificate(ps, k, c, ctx.config.certificate_batches,
                                                     derive_seed(rec.seed, k));
            rec.certificate_by_k[k] = {cert.batches_tested, cert.batches_passed, cert.counterexample,
                                       cert.boundary_case};
        }
    }
    rec.local_outcome = std::move(outcomes);
    return rec;
}

}  // namespace

const char* to_string(Mode mode) { return mode == Mode::global ? "global" : "local"; }

Mode mode_from_string(const std::string& s) {
    if (s == "global") return Mode::global;
    if (s == "local") return Mode::local;
    throw std::invalid_argument("mode must be global or local, got '" + s + "'");
}

std::vector<std::string> ExperimentConfig::validate() const {
    if (trial_count < 1) throw std::invalid_argument("trial_count must be at least 1");
    if (!(n > 1.0) || !std::isfinite(n)) throw std::invalid_argument("n must be a finite number above 1");
    if (ks.empty()) throw std::invalid_argument("at least one k is required");
    for (auto k : ks) {
        if (k < 1) throw std::invalid_argument("k must be at least 1");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
    if (threads && *threads < 1) throw std::invalid_argument("threads must be at least 1");
    return range_warnings(*this);
}

void check_coupling(const TrialRecord& record) {
    bool seen_connected = false;
    for (const auto& [k, connected] : record.connected_by_k) {
        if (seen_connected && !connected) {
            throw std::logic_error("trial " + std::to_string(record.trial_id) +
                                   ": connectivity lost when k grew to " + std::to_string(k));
        }
        seen_connected = seen_connected || connected;
    }
}

ExperimentContext prepare_experiment(const ExperimentConfig& config) {
    ExperimentContext ctx;
    ctx.warnings = config.validate();
    ctx.config = config;
    ctx.ks = sorted_ks(config.ks);
    if (config.mode == Mode::global) {
        ctx.geometry.emplace(config.n, config.lambda);
        if (ctx.geometry->gamma_size() > 0) {
            ctx.gamma = compute_gamma_and_dependencies(config.n, config.lambda);
            const double separation = std::sqrt(2.0) * ctx.geometry->cell_side();
            ctx.panel = make_cell_panel(*ctx.gamma, config.grid_sample_count, config.joint_sample_pairs,
                                        separation, derive_seed(config.base_seed, kPanelStream));
        } else {
            ctx.warnings.push_back("Gamma is empty at this n; counting functions are skipped");
        }
    } else {
        ctx.constants = compute_scaled_constants(config.lambda, config.n, config.scaled);
        for (const auto& note : ctx.constants->substitutions) ctx.warnings.push_back(note);
    }
    return ctx;
}

TrialRecord run_trial(const ExperimentContext& context, std::uint64_t trial_id) {
    const auto start = std::chrono::steady_clock::now();
    TrialRecord rec;
    rec.trial_id = trial_id;
    rec.seed = derive_seed(context.config.base_seed, trial_id);
    rec = context.config.mode == Mode::global ? run_global_trial(context, std::move(rec))
                                              : run_local_trial(context, std::move(rec));
    rec.longest_edge = rec.longest_edge_by_k.at(context.ks.back());
    if (context.config.record_timing) {
        rec.runtime_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    }
    return rec;
}

const KStats& StatsReport::at(std::size_t k) const {
    for (const auto& s : per_k) {
        if (s.k == k) return s;
    }
    throw std::out_of_range("StatsReport: no statistics for k = " + std::to_string(k));
}

Aggregator::Aggregator(const ExperimentContext& context)
    : mode_(context.config.mode), ks_(context.ks), panel_size_(context.panel.cells.size()),
      gamma_(context.gamma) {
    for (auto k : ks_) {
        Counts c;
        c.chen_stein = ChenSteinAccumulator(context.panel);
        counts_.emplace(k, std::move(c));
    }
}

void Aggregator::add(const TrialRecord& record) {
    if (record.connected_by_k.size() != ks_.size()) {
        throw std::invalid_argument("Aggregator: record k set does not match the config");
    }
    for (auto k : ks_) {
        if (!record.connected_by_k.contains(k) || !record.small_component_count_by_k.contains(k) ||
            !record.close_small_pair_by_k.contains(k)) {
            throw std::invalid_argument("Aggregator: record lacks k = " + std::to_string(k));
        }
    }
    if ((mode_ == Mode::local) != record.local_outcome.has_value()) {
        throw std::invalid_argument("Aggregator: record mode does not match the config");
    }
    for (auto k : ks_) {
        auto& c = counts_.at(k);
        const bool connected = record.connected_by_k.at(k);
        const auto small = record.small_component_count_by_k.at(k);
        if (connected) ++c.connected;
        ++c.histogram[small];
        if (small >= 2) ++c.two_small;
        if (record.close_small_pair_by_k.at(k)) ++c.close;
        if (mode_ == Mode::global) {
            const auto flags = record.bad_event_flags_by_k.at(k);
            const bool d[7] = {flags.d1, flags.d2, flags.d3, flags.d4, flags.d5, flags.d6, flags.d7};
            for (int i = 0; i < 7; ++i) c.bad[i] += d[i] ? 1 : 0;
            if (flags.any()) ++c.any_bad;
            const auto& y = record.counting_by_k.at(k).y_cells;
            if (y.size() != panel_size_) {
                throw std::invalid_argument("Aggregator: record panel does not match the config");
            }
            c.chen_stein.add_trial(connected, small, y);
        } else {
            const auto& o = record.local_outcome->at(k);
            c.a_k += o.a_k ? 1 : 0;
            c.b_k += o.b_k ? 1 : 0;
            c.bad_C += o.bad_C ? 1 : 0;
            c.b_k_without_C += (o.b_k && !o.bad_C) ? 1 : 0;
            if (auto it = record.certificate_by_k.find(k); it != record.certificate_by_k.end()) {
                ++c.certificates;
                c.counterexamples += it->second.counterexample ? 1 : 0;
                c.tested += it->second.batches_tested;
                c.passed += it->second.batches_passed;
            }
        }
    }
    ++trials_;
}

void Aggregator::merge(const Aggregator& other) {
    if (other.mode_ != mode_ || other.ks_ != ks_ || other.panel_size_ != panel_size_) {
        throw std::invalid_argument("Aggregator::merge: configs differ");
    }
    for (auto& [k, c] : counts_) {
        const auto& o = other.counts_.at(k);
        c.chen_stein.merge(o.chen_stein);
        c.connected += o.connected;
        for (const auto& [j, n] : o.histogram) c.histogram[j] += n;
        for (int i = 0; i < 7; ++i) c.bad[i] += o.bad[i];
        c.any_bad += o.any_bad;
        c.close += o.close;
        c.two_small += o.two_small;
        c.a_k += o.a_k;
        c.b_k += o.b_k;
        c.bad_C += o.bad_C;
        c.b_k_without_C += o.b_k_without_C;
        c.certificates += o.certificates;
        c.counterexamples += o.counterexamples;
        c.tested += o.tested;
        c.passed += o.passed;
    }
    trials_ += other.trials_;
}

StatsReport Aggregator::report() const {
    StatsReport r;
    r.mode = to_string(mode_);
    r.trials = trials_;
    for (auto k : ks_) {
        const auto& c = counts_.at(k);
        KStats s;
        s.k = k;
        s.trials = trials_;
        s.connected = c.connected;
        s.p_connected = trials_ ? static_cast<double>(c.connected) / static_cast<double>(trials_) : 0.0;
        s.connected_ci = wilson_interval(c.connected, trials_);
        s.small_histogram = c.histogram;
        double total = 0.0;
        for (const auto& [j, n] : c.histogram) total += static_cast<double>(j) * static_cast<double>(n);
        s.mean_small_components = trials_ ? total / static_cast<double>(trials_) : 0.0;
        if (c.connected > 0) {
            s.nu = -std::log(s.p_connected);
            s.tv_vs_poisson = total_variation(CountDistribution::from_counts(c.histogram),
                                              CountDistribution::poisson(*s.nu));
        }
        s.bad_counts = c.bad;
        s.any_bad = c.any_bad;
        s.close_pair_trials = c.close;
        s.two_small_trials = c.two_small;
        s.close_pair_ci = wilson_interval(c.close, trials_);
        s.two_small_ci = wilson_interval(c.two_small, trials_);
        if (mode_ == Mode::global && gamma_ && panel_size_ > 0 && trials_ > 0) {
            s.chen_stein = estimate_chen_stein(c.chen_stein, *gamma_);
        }
        s.a_k = c.a_k;
        s.b_k = c.b_k;
        s.bad_C = c.bad_C;
        s.b_k_without_C = c.b_k_without_C;
        s.certificates = c.certificates;
        s.certificate_counterexamples = c.counterexamples;
        s.batches_tested = c.tested;
        s.batches_passed = c.passed;
        r.per_k.push_back(std::move(s));
    }
    return r;
}

StatsReport aggregate(const std::vector<TrialRecord>& records, const ExperimentContext& context) {
    Aggregator agg(context);
    for (const auto& rec : records) agg.add(rec);
    return agg.report();
}

std::string serialize_config(const ExperimentConfig& config) {
    JsonWriter w;
    w.begin_object();
    w.field("type", "config");
    w.field("n", config.n);
    w.key("k_sweep").begin_array();
    for (auto k : config.ks) w.value(static_cast<std::uint64_t>(k));
    w.end_array();
    w.field("trial_count", static_cast<std::uint64_t>(config.trial_count));
    w.field("base_seed", config.base_seed);
    w.field("lambda", config.lambda);
    w.field("mode", to_string(config.mode));
    w.key("scaled_constants").begin_object();
    w.field("M", config.scaled.M);
    w.optional_field("N", config.scaled.N);
    w.field("lambda1", config.scaled.lambda1);
    w.field("lambda2", config.scaled.lambda2);
    w.end_object();
    w.field("grid_sample_count", static_cast<std::uint64_t>(config.grid_sample_count));
    w.field("joint_sample_pairs", static_cast<std::uint64_t>(config.joint_sample_pairs));
    w.field("certificate_batches", static_cast<std::uint64_t>(config.certificate_batches));
    w.field("record_timing", config.record_timing);
    w.end_object();
    return w.str();
}

ExperimentConfig parse_config(const std::string& line) {
    const auto j = json::parse(line);
    if (j.value("type", "") != "config") throw std::invalid_argument("not a config line");
    ExperimentConfig c;
    c.n = j.at("n").get<double>();
    c.ks = j.at("k_sweep").get<std::vector<std::size_t>>();
    c.trial_count = j.at("trial_count").get<std::size_t>();
    c.base_seed = j.at("base_seed").get<std::uint64_t>();
    c.lambda = j.at("lambda").get<double>();
    c.mode = mode_from_string(j.at("mode").get<std::string>());
    const auto& s = j.at("scaled_constants");
    c.scaled.M = s.at("M").get<double>();
    if (!s.at("N").is_null()) c.scaled.N = s.at("N").get<std::int64_t>();
    c.scaled.lambda1 = s.at("lambda1").get<double>();
    c.scaled.lambda2 = s.at("lambda2").get<double>();
    c.grid_sample_count = j.at("grid_sample_count").get<std::size_t>();
    c.joint_sample_pairs = j.at("joint_sample_pairs").get<std::size_t>();
    c.certificate_batches = j.at("certificate_batches").get<std::size_t>();
    c.record_timing = j.at("record_timing").get<bool>();
    return c;
}

std::string serialize_record(const TrialRecord& r) {
    JsonWriter w;
    w.begin_object();
    w.field("trial_id", r.trial_id);
    w.field("seed", r.seed);
    w.field("point_count", r.point_count);

    w.key("connected_by_k").begin_object();
    for (const auto& [k, v] : r.connected_by_k) w.field(std::to_string(k), v);
    w.end_object();

    w.key("small_component_count_by_k").begin_object();
    for (const auto& [k, v] : r.small_component_count_by_k) w.field(std::to_string(k), v);
    w.end_object();

    w.key("small_component_details").begin_array();
    for (const auto& d : r.small_component_details) {
        w.begin_object();
        w.field("k", static_cast<std::uint64_t>(d.k));
        w.key("bottom_most").begin_array().value(d.bottom_most.x).value(d.bottom_most.y).end_array();
        w.field("diameter", d.diameter);
        w.field("size", static_cast<std::uint64_t>(d.size));
        w.end_object();
    }
    w.end_array();

    w.key("bad_event_flags_by_k").begin_object();
    for (const auto& [k, f] : r.bad_event_flags_by_k) {
        w.key(std::to_string(k)).begin_object();
        w.field("d1", f.d1).field("d2", f.d2).field("d3", f.d3).field("d4", f.d4);
        w.field("d5", f.d5).field("d6", f.d6).field("d7", f.d7);
        w.end_object();
    }
    w.end_object();

    w.key("local_outcome");
    if (r.local_outcome) {
        w.begin_object();
        for (const auto& [k, o] : *r.local_outcome) {
            w.key(std::to_string(k)).begin_object();
            w.field("a_k", o.a_k).field("b_k", o.b_k);
            w.field("components_in_half_box", static_cast<std::uint64_t>(o.components_in_half_box));
            w.field("bad_C", o.bad_C);
            w.end_object();
        }
        w.end_object();
    } else {
        w.null();
    }

    w.key("certificate_by_k").begin_object();
    for (const auto& [k, t] : r.certificate_by_k) {
        w.key(std::to_string(k)).begin_object();
        w.field("batches_tested", static_cast<std::uint64_t>(t.batches_tested));
        w.field("batches_passed", static_cast<std::uint64_t>(t.batches_passed));
        w.field("counterexample", t.counterexample);
        w.field("boundary_case", t.boundary_case);
        w.end_object();
    }
    w.end_object();

    w.field("longest_edge", r.longest_edge);
    w.key("longest_edge_by_k").begin_object();
    for (const auto& [k, v] : r.longest_edge_by_k) w.field(std::to_string(k), v);
    w.end_object();

    w.key("close_small_pair_by_k").begin_object();
    for (const auto& [k, v] : r.close_small_pair_by_k) w.field(std::to_string(k), v);
    w.end_object();

    w.key("counting_by_k").begin_object();
    for (const auto& [k, c] : r.counting_by_k) {
        w.key(std::to_string(k)).begin_object();
        w.key("x_ones").begin_array();
        for (const auto& x : c.x_ones) w.begin_array().value(x.gx).value(x.gy).end_array();
        w.end_array();
        w.key("y_cells").begin_array();
        for (auto y : c.y_cells) w.value(static_cast<std::uint64_t>(y));
        w.end_array();
        w.end_object();
    }
    w.end_object();

    w.field("runtime_ms", r.runtime_ms);
    w.end_object();
    return w.str();
}

TrialRecord parse_record(const std::string& line) {
    const auto j = json::parse(line);
    if (j.contains("type")) throw std::invalid_argument("not a trial record");
    TrialRecord r;
    r.trial_id = j.at("trial_id").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.point_count = j.at("point_count").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("connected_by_k").items()) r.connected_by_k[key_to_k(k)] = v.get<bool>();
    for (const auto& [k, v] : j.at("small_component_count_by_k").items()) {
        r.small_component_count_by_k[key_to_k(k)] = v.get<std::uint64_t>();
    }
    for (const auto& d : j.at("small_component_details")) {
        const auto& b = d.at("bottom_most");
        r.small_component_details.push_back({d.at("k").get<std::size_t>(),
                                             {b.at(0).get<double>(), b.at(1).get<double>()},
                                             json_real(d.at("diameter")), d.at("size").get<std::size_t>()});
    }
    for (const auto& [k, f] : j.at("bad_event_flags_by_k").items()) {
        BadEventFlags b;
        b.d1 = f.at("d1").get<bool>();
        b.d2 = f.at("d2").get<bool>();
        b.d3 = f.at("d3").get<bool>();
        b.d4 = f.at("d4").get<bool>();
        b.d5 = f.at("d5").get<bool>();
        b.d6 = f.at("d6").get<bool>();
        b.d7 = f.at("d7").get<bool>();
        r.bad_event_flags_by_k[key_to_k(k)] = b;
    }
    if (!j.at("local_outcome").is_null()) {
        std::map<std::size_t, LocalEventOutcome> outcomes;
        for (const auto& [k, o] : j.at("local_outcome").items()) {
            outcomes[key_to_k(k)] = {o.at("a_k").get<bool>(), o.at("b_k").get<bool>(),
                                     o.at("components_in_half_box").get<std::size_t>(),
                                     o.at("bad_C").get<bool>()};
        }
        r.local_outcome = std::move(outcomes);
    }
    for (const auto& [k, t] : j.at("certificate_by_k").items()) {
        r.certificate_by_k[key_to_k(k)] = {t.at("batches_tested").get<std::size_t>(),
                                           t.at("batches_passed").get<std::size_t>(),
                                           t.at("counterexample").get<bool>(),
                                           t.at("boundary_case").get<bool>()};
    }
    r.longest_edge = json_real(j.at("longest_edge"));
    for (const auto& [k, v] : j.at("longest_edge_by_k").items()) r.longest_edge_by_k[key_to_k(k)] = json_real(v);
    for (const auto& [k, v] : j.at("close_small_pair_by_k").items()) {
        r.close_small_pair_by_k[key_to_k(k)] = v.get<bool>();
    }
    for (const auto& [k, c] : j.at("counting_by_k").items()) {
        CountingRecord cr;
        for (const auto& x : c.at("x_ones")) cr.x_ones.push_back({x.at(0).get<std::int64_t>(), x.at(1).get<std::int64_t>()});
        for (const auto& y : c.at("y_cells")) cr.y_cells.push_back(static_cast<std::uint8_t>(y.get<int>()));
        r.counting_by_k[key_to_k(k)] = std::move(cr);
    }
    r.runtime_ms = j.at("runtime_ms").get<std::int64_t>();
    return r;
}

std::string serialize_summary(const StatsReport& report) {
    JsonWriter w;
    w.begin_object();
    w.field("type", "summary");
    w.field("mode", report.mode);
    w.field("trials", report.trials);
    w.key("per_k").begin_array();
    for (const auto& s : report.per_k) {
        w.begin_object();
        w.field("k", static_cast<std::uint64_t>(s.k));
        w.field("trials", s.trials);
        w.field("connected", s.connected);
        w.field("p_connected", s.p_connected);
        write_interval(w, "p_connected_ci", s.connected_ci);
        w.key("small_histogram").begin_object();
        for (const auto& [j, n] : s.small_histogram) w.field(std::to_string(j), n);
        w.end_object();
        w.field("mean_small_components", s.mean_small_components);
        w.optional_field("nu", s.nu);
        w.optional_field("tv_vs_poisson", s.tv_vs_poisson);
        w.key("bad_event_counts").begin_array();
        for (auto n : s.bad_counts) w.value(n);
        w.end_array();
        w.field("any_bad_event", s.any_bad);
        w.field("close_pair_trials", s.close_pair_trials);
        write_interval(w, "close_pair_ci", s.close_pair_ci);
        w.field("two_small_trials", s.two_small_trials);
        write_interval(w, "two_small_ci", s.two_small_ci);
        w.key("chen_stein");
        if (s.chen_stein) {
            const auto& cs = *s.chen_stein;
            w.begin_object();
            w.field("p_hat", cs.p_hat).field("p_hat_hw", cs.p_hat_hw);
            w.field("q_hat", cs.q_hat).field("q_hat_hw", cs.q_hat_hw);
            w.optional_field("p_prime", cs.p_prime);
            w.field("mu", cs.mu).field("mu_hw", cs.mu_hw);
            w.optional_field("nu", cs.nu).optional_field("nu_hw", cs.nu_hw);
            w.field("b1", cs.b1).field("b1_hw", cs.b1_hw);
            w.field("b2", cs.b2).field("b2_hw", cs.b2_hw);
            w.field("gamma_size", cs.gamma_size).field("gamma_x_size", cs.gamma_x_size);
            w.optional_field("tv_X_vs_Po_nu", cs.tv_X_vs_Po_nu);
            w.optional_field("tv_Po_mu_vs_Po_nu", cs.tv_Po_mu_vs_Po_nu);
            w.end_object();
        } else {
            w.null();
        }
        if (report.mode == "local") {
            w.field("a_k", s.a_k).field("b_k", s.b_k).field("bad_C", s.bad_C);
            w.field("b_k_without_C", s.b_k_without_C);
            w.field("certificates", s.certificates);
            w.field("certificate_counterexamples", s.certificate_counterexamples);
            w.field("batches_tested", s.batches_tested).field("batches_passed", s.batches_passed);
        }
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str();
}

RecordFile read_record_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    RecordFile file;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        if (end == std::string::npos) break;  // unterminated tail: an interrupted write
        const std::string line = text.substr(pos, end - pos);
        try {
            if (file.config_line.empty()) {
                file.config = parse_config(line);
                file.config_line = line;
            } else {
                const auto j = json::parse(line);
                if (j.value("type", "") == "summary") {
                    file.complete = true;
                } else {
                    auto rec = parse_record(line);
                    if (rec.trial_id != file.records.size()) break;
                    file.records.push_back(std::move(rec));
                }
            }
        } catch (const std::exception&) {
            break;
        }
        pos = end + 1;
        file.valid_bytes = pos;
        if (file.complete) break;
    }
    return file;
}

int resolve_threads(const ExperimentConfig& config) {
    int threads = config.threads.value_or(omp_get_max_threads());
    if (const char* env = std::getenv("KNN_LAB_THREADS"); env && *env) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end && *end == '\0' && cap >= 1) threads = std::min<long>(threads, cap);
    }
    return std::max(threads, 1);
}

namespace {

class RecordSink {
public:
    RecordSink() = default;
    RecordSink(const RecordSink&) = delete;
    RecordSink& operator=(const RecordSink&) = delete;
    ~RecordSink() {
        if (file_) std::fclose(file_);
    }

    void open(const std::string& path, bool append) {
        file_ = std::fopen(path.c_str(), append ? "ab" : "wb");
        if (!file_) throw std::runtime_error("cannot write to '" + path + "'");
    }
    // One fwrite per line, then flush: a crash leaves at most one partial
    // trailing line, which the reader drops.
    void write_line(const std::string& line) {
        if (!file_) return;
        const std::string out = line + '\n';
        if (std::fwrite(out.data(), 1, out.size(), file_) != out.size() || std::fflush(file_) != 0) {
            throw std::runtime_error("write failed");
        }
    }

private:
    std::FILE* file_ = nullptr;
};

ExperimentResult run_impl(const ExperimentConfig& config, bool parallel) {
    const auto ctx = prepare_experiment(config);
    ExperimentResult result;
    result.warnings = ctx.warnings;
    Aggregator agg(ctx);
    RecordSink sink;
    std::uint64_t next = 0;

    if (!config.output_path.empty()) {
        const std::string header = serialize_config(config);
        bool append = false;
        if (config.resume && std::filesystem::exists(config.output_path)) {
            auto existing = read_record_file(config.output_path);
            if (!existing.config_line.empty()) {
                if (existing.config_line != header) {
                    throw std::runtime_error("cannot resume '" + config.output_path +
                                             "': it was written with a different config");
                }
                for (const auto& rec : existing.records) {
                    check_coupling(rec);
                    agg.add(rec);
                }
                next = existing.records.size();
                result.resumed_from = next;
                result.records = std::move(existing.records);
                if (existing.complete || next >= config.trial_count) {
                    result.records.resize(std::min<std::size_t>(result.records.size(), config.trial_count));
                    result.report = aggregate(result.records, ctx);
                    if (!existing.complete) {
                        std::filesystem::resize_file(config.output_path, existing.valid_bytes);
                        sink.open(config.output_path, true);
                        sink.write_line(serialize_summary(result.report));
                    }
                    return result;
                }
                std::filesystem::resize_file(config.output_path, existing.valid_bytes);
                append = true;
            }
        }
        sink.open(config.output_path, append);
        if (!append) sink.write_line(header);
    }

    const int threads = parallel ? resolve_threads(config) : 1;
    const std::uint64_t total = config.trial_count;
    const std::uint64_t chunk = parallel ? std::max<std::uint64_t>(16, 4 * static_cast<std::uint64_t>(threads)) : 1;
    result.records.reserve(total);

    while (next < total) {
        const std::uint64_t count = std::min(chunk, total - next);
        std::vector<TrialRecord> batch(count);
        if (parallel) {
            std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(count); ++i) {
                try {
                    batch[i] = run_trial(ctx, next + i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
            for (const auto& e : errors) {
                if (e) std::rethrow_exception(e);
            }
        } else {
            for (std::uint64_t i = 0; i < count; ++i) batch[i] = run_trial(ctx, next + i);
        }
        for (auto& rec : batch) {
            check_coupling(rec);
            sink.write_line(serialize_record(rec));
            agg.add(rec);
            result.records.push_back(std::move(rec));
        }
        next += count;
    }

    result.report = agg.report();
    sink.write_line(serialize_summary(result.report));
    return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) { return run_impl(config, true); }

ExperimentResult run_experiment_serial(const ExperimentConfig& config) { return run_impl(config, false); }

}  // namespace knnlab
