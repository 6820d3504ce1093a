#ifndef LSGD_ALGORITHMS_HPP
#define LSGD_ALGORITHMS_HPP

// Local SGD, mini-batch SGD, serial SGD, CE-LSGD and mini-batch STORM under
// the intermittent-communication schedule, with per-step instrumentation.
//
// Every oracle call draws from its own stream keyed by (seed, purpose,
// indices), so runs are reproducible and independent of evaluation order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsgd/diagnostics.hpp"
#include "lsgd/problems.hpp"
#include "lsgd/rng.hpp"
#include "lsgd/serialization.hpp"

namespace lsgd {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ICSchedule {
    std::size_t machines = 1;
    std::size_t local_steps = 1;
    std::size_t rounds = 1;

    std::size_t horizon() const { return local_steps * rounds; }

    void validate() const {
        if (machines < 1 || local_steps < 1) throw ConfigError("schedule: M and K must be at least 1");
    }
};

enum class OutputMode { LastIterate, UniformAverage, WeightedAverage };

inline const char* to_string(OutputMode m) {
    switch (m) {
        case OutputMode::LastIterate: return "last-iterate";
        case OutputMode::UniformAverage: return "uniform-average";
        case OutputMode::WeightedAverage: return "weighted-average";
    }
    return "?";
}

struct LocalSGDConfig {
    double inner_step = 0.1;  // eta; unused by mini-batch SGD
    double outer_step = 1.0;  // beta
    ICSchedule schedule;
    Vec init;
    OutputMode output_mode = OutputMode::LastIterate;
    std::vector<double> weights;  // one per synchronized iterate x_1..x_R

    void validate(const Instance& inst) const {
        schedule.validate();
        if (schedule.machines != inst.size()) throw ConfigError("config: schedule M differs from instance size");
        if (static_cast<std::size_t>(init.size()) != inst.dim()) throw ConfigError("config: init dimension mismatch");
        if (!init.allFinite()) throw ConfigError("config: non-finite init");
        if (!(inner_step >= 0.0) || !std::isfinite(inner_step)) throw ConfigError("config: eta must be >= 0");
        if (!(outer_step >= 0.0) || !std::isfinite(outer_step)) throw ConfigError("config: beta must be >= 0");
        if (output_mode == OutputMode::WeightedAverage) {
            if (weights.size() != schedule.rounds) throw ConfigError("config: need one weight per round");
            double s = 0.0;
            for (double w : weights) {
                if (!(w >= 0.0)) throw ConfigError("config: weights must be nonnegative");
                s += w;
            }
            if (!(s > 0.0)) throw ConfigError("config: weights sum to zero");
        }
    }
};

struct CELSGDConfig {
    double step = 0.1;      // eta
    double momentum = 1.0;  // beta in (0, 1]
    std::size_t warm_batch = 1;
    std::size_t local_batch = 1;
    std::size_t local_steps = 1;  // P
    ICSchedule schedule;
    Vec init;

    void validate(const Instance& inst) const {
        schedule.validate();
        if (schedule.machines != inst.size()) throw ConfigError("config: schedule M differs from instance size");
        if (static_cast<std::size_t>(init.size()) != inst.dim()) throw ConfigError("config: init dimension mismatch");
        if (!(momentum > 0.0 && momentum <= 1.0)) throw ConfigError("config: momentum must lie in (0, 1]");
        if (!(step >= 0.0) || !std::isfinite(step)) throw ConfigError("config: step must be >= 0");
        if (warm_batch < 1 || local_batch < 1 || local_steps < 1) throw ConfigError("config: batches and P must be >= 1");
    }
};

inline json to_json(const ICSchedule& s) {
    return {{"M", s.machines}, {"K", s.local_steps}, {"R", s.rounds}, {"T", s.horizon()}};
}

inline json to_json(const LocalSGDConfig& c) {
    return {{"eta", c.inner_step},         {"beta", c.outer_step}, {"schedule", to_json(c.schedule)},
            {"init", to_json(c.init)},     {"output_mode", to_string(c.output_mode)}, {"weights", c.weights}};
}

inline json to_json(const CELSGDConfig& c) {
    return {{"eta", c.step},          {"beta", c.momentum},  {"b0", c.warm_batch},   {"b", c.local_batch},
            {"P", c.local_steps},     {"schedule", to_json(c.schedule)}, {"init", to_json(c.init)}};
}

/// What a probe sees at each step: the (ghost) average and, for
/// multi-machine methods, every machine's iterate.
struct StepView {
    std::size_t t = 0;
    std::size_t round = 0;
    std::size_t local_steps = 1;
    bool is_comm_round = false;
    const Vec& x_bar;
    std::span<const Vec> machines;
};

using Probe = std::function<void(const StepView&)>;

struct RunOptions {
    bool record = true;                  // fill RunTrace::records
    bool keep_machine_iterates = false;  // fill RunTrace::machine_iterates
    Probe probe;

    static RunOptions silent() {
        RunOptions o;
        o.record = false;
        return o;
    }
};

struct RunTrace {
    std::string algorithm;
    std::uint64_t seed = 0;
    ICSchedule schedule;
    json config;
    std::vector<Vec> rounds;                        // synchronized iterates x_0 .. x_R
    std::vector<std::vector<Vec>> machine_iterates;  // [t][m] when kept
    std::vector<TraceRecord> records;
    std::vector<Vec> candidates;  // CE-LSGD / STORM output set
    Vec output;
    bool diverged = false;
    std::optional<std::size_t> diverged_round;
    std::string output_mode = "last-iterate";
};

namespace detail {

inline Vec oracle_gradient(const Instance& inst, std::size_t m, const Vec& x, std::uint64_t seed, std::size_t t) {
    if (inst.kind() == MachineKind::Quadratic && inst.quadratic(m).noise_second == 0.0) {
        return inst.quadratic(m).gradient(x);
    }
    Stream rng(seed, {tag(StreamTag::Oracle), m, t});
    return stochastic_gradient(inst, m, x, rng);
}

/// Runs diverge once an iterate is non-finite or exceeds 1e12 (1 + ||x0|| + B).
struct DivergenceGuard {
    double limit = std::numeric_limits<double>::infinity();

    DivergenceGuard(const Instance& inst, const Vec& x0) {
        const auto xs = try_global_optimum(inst);
        limit = 1e12 * (1.0 + x0.norm() + (xs ? xs->norm() : 0.0));
    }

    bool tripped(const Vec& x) const { return !x.allFinite() || x.norm() > limit; }
};

class Observer {
public:
    Observer(const Instance& inst, const RunOptions& opt, RunTrace& trace)
        : inst_(inst), opt_(opt), trace_(trace) {
        if (opt.record) ref_ = ObjectiveReference::of(inst);
    }

    bool active() const { return opt_.record || opt_.keep_machine_iterates || static_cast<bool>(opt_.probe); }

    void emit(std::size_t t, std::size_t K, const Vec& x_bar, std::span<const Vec> machines) {
        if (opt_.record) trace_.records.push_back(make_record(inst_, ref_, t, K, x_bar, machines));
        if (opt_.keep_machine_iterates) trace_.machine_iterates.emplace_back(machines.begin(), machines.end());
        if (opt_.probe) opt_.probe(StepView{t, t / K, K, t % K == 0, x_bar, machines});
    }

private:
    const Instance& inst_;
    const RunOptions& opt_;
    RunTrace& trace_;
    ObjectiveReference ref_;
};

inline Vec mean_of(std::span<const Vec> xs) {
    Vec s = Vec::Zero(xs.front().size());
    for (const auto& x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline Vec local_sgd_output(const LocalSGDConfig& cfg, const RunTrace& trace) {
    const auto& rs = trace.rounds;
    if (cfg.output_mode == OutputMode::LastIterate || rs.size() < 2 || trace.diverged) return rs.back();
    Vec s = Vec::Zero(rs.front().size());
    double wsum = 0.0;
    for (std::size_t r = 1; r < rs.size(); ++r) {
        const double w = cfg.output_mode == OutputMode::UniformAverage ? 1.0 : cfg.weights[r - 1];
        s += w * rs[r];
        wsum += w;
    }
    return s / wsum;
}

}  // namespace detail

/// Each round every machine restarts from x_{r-1}, takes K steps
/// x <- x - eta g(x), and the server sets
/// x_r = x_{r-1} + (beta/M) sum_m (x^m - x_{r-1}).
inline RunTrace run_local_sgd(const Instance& inst, const LocalSGDConfig& cfg, std::uint64_t seed,
                              const RunOptions& opt = {}) {
    cfg.validate(inst);
    RunTrace trace;
    trace.algorithm = "local-sgd";
    trace.seed = seed;
    trace.schedule = cfg.schedule;
    trace.config = to_json(cfg);
    trace.output_mode = to_string(cfg.output_mode);
    const std::size_t M = cfg.schedule.machines, K = cfg.schedule.local_steps, R = cfg.schedule.rounds;
    const detail::DivergenceGuard guard(inst, cfg.init);
    detail::Observer obs(inst, opt, trace);
    const bool observe = obs.active();

    Vec x_bar = cfg.init;
    trace.rounds.push_back(x_bar);
    std::vector<Vec> x(M, x_bar);
    if (observe) obs.emit(0, K, x_bar, x);

    const double eta = cfg.inner_step;
    const double scale = cfg.outer_step / static_cast<double>(M);
    for (std::size_t r = 1; r <= R; ++r) {
        for (auto& xm : x) xm = x_bar;
        for (std::size_t k = 1; k <= K; ++k) {
            const std::size_t t = (r - 1) * K + k;
            for (std::size_t m = 0; m < M; ++m) x[m] -= eta * detail::oracle_gradient(inst, m, x[m], seed, t);
            if (observe && k < K) {
                const Vec ghost = detail::mean_of(x);
                obs.emit(t, K, ghost, x);
            }
        }
        Vec delta = Vec::Zero(x_bar.size());
        for (const auto& xm : x) delta += xm - x_bar;
        x_bar += scale * delta;
        trace.rounds.push_back(x_bar);
        if (guard.tripped(x_bar)) {
            trace.diverged = true;
            trace.diverged_round = r;
            break;
        }
        if (observe) {
            for (auto& xm : x) xm = x_bar;
            obs.emit(r * K, K, x_bar, x);
        }
    }
    trace.output = detail::local_sgd_output(cfg, trace);
    return trace;
}

/// K gradients per machine at the synchronized point;
/// x_r = x_{r-1} - (beta/M) sum_{m,k} g. The inner step eta is not used.
inline RunTrace run_minibatch_sgd(const Instance& inst, const LocalSGDConfig& cfg, std::uint64_t seed,
                                  const RunOptions& opt = {}) {
    cfg.validate(inst);
    RunTrace trace;
    trace.algorithm = "minibatch-sgd";
    trace.seed = seed;
    trace.schedule = cfg.schedule;
    trace.config = to_json(cfg);
    trace.output_mode = to_string(cfg.output_mode);
    const std::size_t M = cfg.schedule.machines, K = cfg.schedule.local_steps, R = cfg.schedule.rounds;
    const detail::DivergenceGuard guard(inst, cfg.init);
    detail::Observer obs(inst, opt, trace);
    const bool observe = obs.active();

    Vec x_bar = cfg.init;
    trace.rounds.push_back(x_bar);
    std::vector<Vec> x(M, x_bar);
    if (observe) obs.emit(0, K, x_bar, x);
    const double scale = cfg.outer_step / static_cast<double>(M);
    for (std::size_t r = 1; r <= R; ++r) {
        Vec g = Vec::Zero(x_bar.size());
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t k = 1; k <= K; ++k) g += detail::oracle_gradient(inst, m, x_bar, seed, (r - 1) * K + k);
        }
        x_bar -= scale * g;
        trace.rounds.push_back(x_bar);
        if (guard.tripped(x_bar)) {
            trace.diverged = true;
            trace.diverged_round = r;
            break;
        }
        if (observe) {
            // Between rounds nothing moves; the intermediate records repeat x_{r-1}.
            for (std::size_t k = 1; k < K; ++k) obs.emit((r - 1) * K + k, K, trace.rounds[r - 1], x);
            for (auto& xm : x) xm = x_bar;
            obs.emit(r * K, K, x_bar, x);
        }
    }
    trace.output = detail::local_sgd_output(cfg, trace);
    return trace;
}

/// Plain SGD on one machine's objective; records measure the average
/// objective.
inline RunTrace run_serial_sgd(std::size_t machine_index, const Instance& inst, double eta, std::size_t steps,
                               std::uint64_t seed, const Vec& x0, const RunOptions& opt = {}) {
    if (machine_index >= inst.size()) throw ConfigError("serial sgd: machine index out of range");
    if (static_cast<std::size_t>(x0.size()) != inst.dim()) throw ConfigError("serial sgd: init dimension mismatch");
    if (!(eta >= 0.0)) throw ConfigError("serial sgd: eta must be >= 0");
    RunTrace trace;
    trace.algorithm = "serial-sgd";
    trace.seed = seed;
    trace.schedule = {1, 1, steps};
    trace.config = {{"machine", machine_index}, {"eta", eta}, {"T", steps}, {"init", to_json(x0)}};
    const detail::DivergenceGuard guard(inst, x0);
    detail::Observer obs(inst, opt, trace);
    const bool observe = obs.active();
    Vec x = x0;
    trace.rounds.push_back(x);
    if (observe) obs.emit(0, 1, x, std::span<const Vec>(&x, 1));
    for (std::size_t t = 1; t <= steps; ++t) {
        x -= eta * detail::oracle_gradient(inst, machine_index, x, seed, t);
        trace.rounds.push_back(x);
        if (guard.tripped(x)) {
            trace.diverged = true;
            trace.diverged_round = t;
            break;
        }
        if (observe) obs.emit(t, 1, x, std::span<const Vec>(&x, 1));
    }
    trace.output = x;
    return trace;
}

namespace detail {

/// Server estimate mean_m g_B(x) + (1 - rho)(v_prev - mean_m g_B(x_prev)),
/// each machine's batch shared between the two points.
inline Vec momentum_estimate(const Instance& inst, const Vec& x, const Vec& x_prev, const Vec& v_prev, double rho,
                             std::size_t batch, std::uint64_t seed, std::size_t r) {
    const std::size_t M = inst.size();
    Vec cur = Vec::Zero(x.size());
    Vec prev = Vec::Zero(x.size());
    const bool paired = rho != 1.0;
    for (std::size_t m = 0; m < M; ++m) {
        Stream rng(seed, {tag(StreamTag::ServerBatch), r, m});
        if (paired) {
            const Vec pts[2] = {x, x_prev};
            const auto g = batch_multi_point_gradient(inst, m, pts, batch, rng);
            cur += g[0];
            prev += g[1];
        } else {
            const auto g = batch_multi_point_gradient(inst, m, std::span<const Vec>(&x, 1), batch, rng);
            cur += g[0];
        }
    }
    const double inv = 1.0 / static_cast<double>(M);
    if (!paired) return cur * inv;
    return cur * inv + (1.0 - rho) * (v_prev - prev * inv);
}

inline void pick_output(RunTrace& trace, std::uint64_t seed) {
    if (trace.candidates.empty()) {
        trace.output = trace.rounds.back();
        return;
    }
    Stream rng(seed, {tag(StreamTag::OutputChoice)});
    trace.output = trace.candidates[rng.below(trace.candidates.size())];
}

}  // namespace detail

/// Communication-efficient local SGD. Round r broadcasts (x_r, x_{r-1}),
/// forms the momentum estimate v_r from every machine's batch, then one
/// uniformly chosen client runs Q SARAH-style steps
///   v_{r,k} = v_{r,k-1} + g(w_k; z) - g(w_{k-1}; z),  w_{k+1} = w_k - eta v_{r,k}
/// from w_1 = w_0 = x_r, and x_{r+1} = w_{Q+1}. Round 0 uses rho = 1,
/// Q = 1 and server batch b0; later rounds use rho = beta, Q = P and server
/// batch P. The output is drawn uniformly from the w_k, k = 1..Q, of all
/// rounds, round 0 included.
inline RunTrace run_ce_lsgd(const Instance& inst, const CELSGDConfig& cfg, std::uint64_t seed,
                            const RunOptions& opt = {}) {
    cfg.validate(inst);
    RunTrace trace;
    trace.algorithm = "ce-lsgd";
    trace.seed = seed;
    trace.schedule = cfg.schedule;
    trace.config = to_json(cfg);
    trace.output_mode = "uniform-local-iterate";
    const detail::DivergenceGuard guard(inst, cfg.init);
    detail::Observer obs(inst, opt, trace);
    const bool observe = obs.active();

    Vec x = cfg.init, x_prev = cfg.init;
    Vec v = Vec::Zero(x.size());
    trace.rounds.push_back(x);
    if (observe) obs.emit(0, 1, x, std::span<const Vec>(&x, 1));
    for (std::size_t r = 0; r < cfg.schedule.rounds; ++r) {
        const bool warm = r == 0;
        const double rho = warm ? 1.0 : cfg.momentum;
        const std::size_t Q = warm ? 1 : cfg.local_steps;
        const std::size_t batch = warm ? cfg.warm_batch : Q;
        v = detail::momentum_estimate(inst, x, x_prev, v, rho, batch, seed, r);

        Stream pick(seed, {tag(StreamTag::ClientChoice), r});
        const std::size_t client = pick.below(inst.size());
        Vec w_prev = x, w = x;
        Vec vk = v;
        for (std::size_t k = 1; k <= Q; ++k) {
            trace.candidates.push_back(w);
            Stream rng(seed, {tag(StreamTag::LocalBatch), r, k});
            const Vec pts[2] = {w, w_prev};
            const auto g = batch_multi_point_gradient(inst, client, pts, cfg.local_batch, rng);
            vk += g[0] - g[1];
            w_prev = w;
            w -= cfg.step * vk;
        }
        x_prev = x;
        x = w;
        trace.rounds.push_back(x);
        if (guard.tripped(x)) {
            trace.diverged = true;
            trace.diverged_round = r + 1;
            break;
        }
        if (observe) obs.emit(r + 1, 1, x, std::span<const Vec>(&x, 1));
    }
    detail::pick_output(trace, seed);
    return trace;
}

/// Mini-batch STORM: the CE-LSGD server estimate with x_{r+1} = x_r - eta v_r.
/// The local step count P and local batch are not used. Output is uniform
/// over x_0 .. x_{R-1}.
inline RunTrace run_mb_storm(const Instance& inst, const CELSGDConfig& cfg, std::uint64_t seed,
                             const RunOptions& opt = {}) {
    cfg.validate(inst);
    RunTrace trace;
    trace.algorithm = "mb-storm";
    trace.seed = seed;
    trace.schedule = cfg.schedule;
    trace.config = to_json(cfg);
    trace.output_mode = "uniform-iterate";
    const detail::DivergenceGuard guard(inst, cfg.init);
    detail::Observer obs(inst, opt, trace);
    const bool observe = obs.active();

    Vec x = cfg.init, x_prev = cfg.init;
    Vec v = Vec::Zero(x.size());
    trace.rounds.push_back(x);
    if (observe) obs.emit(0, 1, x, std::span<const Vec>(&x, 1));
    for (std::size_t r = 0; r < cfg.schedule.rounds; ++r) {
        const bool warm = r == 0;
        v = detail::momentum_estimate(inst, x, x_prev, v, warm ? 1.0 : cfg.momentum, warm ? cfg.warm_batch : 1, seed,
                                      r);
        trace.candidates.push_back(x);
        x_prev = x;
        x = x - cfg.step * v;
        trace.rounds.push_back(x);
        if (guard.tripped(x)) {
            trace.diverged = true;
            trace.diverged_round = r + 1;
            break;
        }
        if (observe) obs.emit(r + 1, 1, x, std::span<const Vec>(&x, 1));
    }
    detail::pick_output(trace, seed);
    return trace;
}

/// x_R = x* (1 - (1 - (beta/2)(1 - (1 - eta H)^K))^R) for noiseless Local
/// SGD from 0 on the shared-optimum pair.
inline Vec closed_form_shared_optimum_iterate(double H, double eta, double beta, unsigned long long K,
                                              unsigned long long R, const Vec& x_star) {
    const double contraction = 1.0 - 0.5 * beta * (1.0 - std::pow(1.0 - eta * H, static_cast<double>(K)));
    return x_star * (1.0 - std::pow(contraction, static_cast<double>(R)));
}

// ---------------------------------------------------------------------------
// Step-size tuning

struct TuneRow {
    double eta = 0.0;
    double mean_metric = 0.0;  // +inf if any trial diverged
    std::size_t diverged_trials = 0;
};

struct TuneResult {
    std::optional<double> best_eta;  // empty: no stable step size
    double best_metric = std::numeric_limits<double>::infinity();
    std::vector<TuneRow> table;

    bool stable() const { return best_eta.has_value(); }
};

/// `run(eta, trial)` returns the metric of one run (+inf when diverged).
/// Every grid point sees the same trial indices; ties go to the smaller eta.
inline TuneResult tune_step_size(std::span<const double> grid, std::size_t trials,
                                 const std::function<double(double, std::size_t)>& run) {
    if (grid.empty()) throw ConfigError("tune_step_size: empty grid");
    if (trials < 1) throw ConfigError("tune_step_size: need at least one trial");
    TuneResult res;
    for (double eta : grid) {
        TuneRow row;
        row.eta = eta;
        std::vector<double> vals;
        for (std::size_t k = 0; k < trials; ++k) {
            const double v = run(eta, k);
            if (!std::isfinite(v)) ++row.diverged_trials;
            vals.push_back(v);
        }
        row.mean_metric = row.diverged_trials > 0 ? std::numeric_limits<double>::infinity()
                                                   : pairwise_sum(vals) / static_cast<double>(trials);
        if (std::isfinite(row.mean_metric) &&
            (row.mean_metric < res.best_metric || (row.mean_metric == res.best_metric && eta < *res.best_eta))) {
            res.best_metric = row.mean_metric;
            res.best_eta = eta;
        }
        res.table.push_back(row);
    }
    return res;
}

/// First round whose synchronized iterate satisfies error(x) <= target, or
/// R_max + 1 if none does (including after divergence).
inline double rounds_to_target(const RunTrace& trace, const std::function<double(const Vec&)>& error, double target,
                               std::size_t r_max) {
    for (std::size_t r = 0; r < trace.rounds.size() && r <= r_max; ++r) {
        const double e = error(trace.rounds[r]);
        if (std::isfinite(e) && e <= target) return static_cast<double>(r);
    }
    return static_cast<double>(r_max + 1);
}

/// Final-error metric with divergence mapped to +inf.
inline double final_error(const RunTrace& trace, const std::function<double(const Vec&)>& error) {
    if (trace.diverged) return std::numeric_limits<double>::infinity();
    const double e = error(trace.output);
    return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

/// n evenly spaced points from lo to hi inclusive.
inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
    if (!(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi) || n < 1) throw ConfigError("linear_grid: need lo <= hi and n >= 1");
    if (n == 1) return {lo};
    std::vector<double> g;
    for (std::size_t i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    g.back() = hi;
    return g;
}

/// Log-spaced grid of n points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw ConfigError("log_grid: need 0 < lo <= hi and n >= 1");
    std::vector<double> g;
    if (n == 1) return {lo};
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < n; ++i) g.push_back(std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1)));
    g.front() = lo;
    g.back() = hi;
    return g;
}

// ---------------------------------------------------------------------------
// Export

inline std::string optional_cell(const std::optional<double>& x) { return x ? format_double(*x) : ""; }

inline std::string trace_csv(const RunTrace& trace) {
    std::ostringstream os;
    os << "t,r,is_comm_round,iterate_error_sq,consensus_error_sq,func_subopt,grad_norm_sq,output_mode\n";
    for (const auto& rec : trace.records) {
        os << rec.t << ',' << rec.round << ',' << (rec.is_comm_round ? 1 : 0) << ','
           << optional_cell(rec.iterate_error_sq) << ',' << format_double(rec.consensus_sq) << ','
           << optional_cell(rec.func_subopt) << ',' << format_double(rec.grad_norm_sq) << ',' << trace.output_mode
           << '\n';
    }
    return os.str();
}

inline json trace_sidecar(const RunTrace& trace) {
    return {{"algorithm", trace.algorithm},
            {"seed", trace.seed},
            {"config", trace.config},
            {"output_mode", trace.output_mode},
            {"diverged", trace.diverged},
            {"output", to_json(trace.output)}};
}

}  // namespace lsgd

#endif
