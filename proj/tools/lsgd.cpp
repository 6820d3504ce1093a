// Command-line front end: experiment drivers, invariant suites and instance
// generation. Configs are JSON objects; --set key=value and the named flags
// override fields. Every CSV written with --out gets a `<out>.json` sidecar
// holding the resolved config and its FNV-1a hash.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lsgd/experiments.hpp"
#include "lsgd/fixedpoint.hpp"
#include "lsgd/serialization.hpp"
#include "lsgd/validation.hpp"

using namespace lsgd;

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kConfigError = 2;

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--set", f.sets, "override a config field, key=value (value parsed as JSON)");
    cmd->add_option("--seed", f.seed, "base seed");
    cmd->add_option("--workers", f.workers, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "output path (default: stdout, no sidecar)");
}

// Defaults, then the config file, then --set, then --seed. Keys outside the
// defaults are rejected.
json resolve_config(const json& defaults, const CommonFlags& f) {
    json cfg = defaults;
    auto merge = [&](const json& src, const std::string& where) {
        if (!src.is_object()) throw ConfigError(where + ": expected a JSON object");
        for (const auto& [k, v] : src.items()) {
            if (!cfg.contains(k)) throw ConfigError(where + ": unknown field '" + k + "'");
            cfg[k] = v;
        }
    };
    if (!f.config_path.empty()) {
        try {
            merge(json::parse(read_text_file(f.config_path)), f.config_path);
        } catch (const json::parse_error& e) {
            throw ConfigError(f.config_path + ": " + e.what());
        }
    }
    for (const auto& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
        json v;
        try {
            v = json::parse(s.substr(eq + 1));
        } catch (const json::parse_error&) {
            v = s.substr(eq + 1);  // bare words are strings
        }
        merge(json{{s.substr(0, eq), v}}, "--set");
    }
    if (f.seed) cfg["seed"] = *f.seed;
    return cfg;
}

template <class T>
T field(const json& cfg, const char* key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

std::string config_hash(const json& cfg) { return hex64(fnv1a(cfg.dump())); }

void emit(const CommonFlags& f, const std::string& command, const json& cfg, const std::string& body,
          const json& extra = json::object()) {
    if (f.out.empty()) {
        std::cout << body;
        return;
    }
    write_text_file(f.out, body);
    json side = {{"command", command}, {"config", cfg}, {"config_hash", config_hash(cfg)}};
    for (const auto& [k, v] : extra.items()) side[k] = v;
    write_text_file(f.out + ".json", side.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// heatmap / comm-complexity

json cohort_defaults() {
    return {{"d", 5},           {"M", 20},        {"K", 10},          {"R", 5},
            {"sigma_noise", 0.1}, {"R_star", 1.0}, {"mu0", 5.0},       {"eta_min", 1e-3},
            {"eta_max", 1e-1},  {"eta_count", 7}, {"trials", 20},     {"seed", 0}};
}

RegressionStudy study_from(const json& cfg) {
    RegressionStudy st;
    st.cohort.dim = field<std::size_t>(cfg, "d");
    st.cohort.machines = field<std::size_t>(cfg, "M");
    st.cohort.sigma_noise = field<double>(cfg, "sigma_noise");
    st.cohort.R_star = field<double>(cfg, "R_star");
    st.cohort.mu0 = field<double>(cfg, "mu0");
    st.local_steps = field<std::size_t>(cfg, "K");
    if (cfg.contains("R")) st.rounds = field<std::size_t>(cfg, "R");
    st.etas = log_grid(field<double>(cfg, "eta_min"), field<double>(cfg, "eta_max"), field<std::size_t>(cfg, "eta_count"));
    st.trials = field<std::size_t>(cfg, "trials");
    st.seed = field<std::uint64_t>(cfg, "seed");
    st.validate();
    return st;
}

std::vector<double> grid_field(const json& cfg, const char* key) {
    auto g = field<std::vector<double>>(cfg, key);
    if (g.empty()) throw ConfigError(std::string("config field '") + key + "' must be a nonempty list");
    return g;
}

int cmd_heatmap(const CommonFlags& f) {
    json d = cohort_defaults();
    d["taus"] = linear_grid(0.0, 10.0, 8);
    d["zetas"] = linear_grid(0.0, 2.0, 8);
    const json cfg = resolve_config(d, f);
    const RegressionStudy st = study_from(cfg);
    const auto cells = heatmap(st, grid_field(cfg, "taus"), grid_field(cfg, "zetas"), f.workers);
    std::ostringstream os;
    os << "tau,zeta_star,mean_err,stderr,best_eta_mode,mean_err_global,stderr_global\n";
    for (const auto& c : cells) {
        os << format_double(c.tau) << ',' << format_double(c.zeta_star) << ',' << format_double(c.error.mean) << ','
           << format_double(c.error.se) << ',' << format_double(c.best_eta_mode) << ','
           << format_double(c.error_global.mean) << ',' << format_double(c.error_global.se) << '\n';
    }
    emit(f, "heatmap", cfg, os.str());
    return kOk;
}

int cmd_comm_complexity(const CommonFlags& f) {
    json d = cohort_defaults();
    d.erase("R");  // the horizon is r_max
    d["taus"] = linear_grid(0.0, 10.0, 8);
    d["zeta_star"] = 1.0;
    d["target"] = 0.04;
    d["r_max"] = 100;
    const json cfg = resolve_config(d, f);
    const RegressionStudy st = study_from(cfg);
    const auto cells = comm_complexity(st, grid_field(cfg, "taus"), field<double>(cfg, "zeta_star"),
                                       field<double>(cfg, "target"), field<std::size_t>(cfg, "r_max"), f.workers);
    std::ostringstream os;
    os << "tau,mean_rounds,stderr,frac_censored\n";
    for (const auto& c : cells) {
        os << format_double(c.tau) << ',' << format_double(c.rounds.mean) << ',' << format_double(c.rounds.se) << ','
           << format_double(c.frac_censored) << '\n';
    }
    emit(f, "comm-complexity", cfg, os.str());
    return kOk;
}

// ---------------------------------------------------------------------------
// fixed-point

Instance load_instance(const json& spec) {
    if (spec.is_string()) return instance_from_json(json::parse(read_text_file(spec.get<std::string>())));
    if (spec.is_object()) return instance_from_json(spec);
    throw ConfigError("config field 'instance' must be a path or an instance object");
}

int cmd_fixed_point(const CommonFlags& f) {
    const json d = {{"instance", nullptr},
                    {"c", {0.5}},
                    {"K", {1, 2, 4, 8, 16, 32, 64}},
                    {"families", {"c/H", "c/(HK)", "c/(HK^2)"}},
                    {"seed", 0}};
    const json cfg = resolve_config(d, f);
    if (cfg["instance"].is_null()) throw ConfigError("fixed-point: config field 'instance' is required");
    Instance inst = [&] {
        try {
            return load_instance(cfg["instance"]);
        } catch (const json::parse_error& e) {
            throw FormatError(e.what());
        }
    }();
    const double H = heterogeneity_report(inst).smoothness_H;
    const bool strongly_convex = heterogeneity_report(inst).strong_convexity_mu > 0.0 && inst.all_minimizers();
    const auto cs = field<std::vector<double>>(cfg, "c");
    const auto Ks = field<std::vector<unsigned long long>>(cfg, "K");
    const auto families = field<std::vector<std::string>>(cfg, "families");
    std::ostringstream os;
    os << "family,c,K,eta,status,discrepancy,log_discrepancy,norm_bound,discrepancy_bound\n";
    json report = json::array();
    for (const auto& fam : families) {
        for (double c : cs) {
            for (unsigned long long K : Ks) {
                const double k = static_cast<double>(K);
                double eta = 0.0;
                if (fam == "c/H") eta = c / H;
                else if (fam == "c/(HK)") eta = c / (H * k);
                else if (fam == "c/(HK^2)") eta = c / (H * k * k);
                else throw ConfigError("fixed-point: unknown step family '" + fam + "'");
                FixedPointResult fp;
                try {
                    fp = strongly_convex ? compute_fixed_point(inst, eta, K) : convex_fixed_point(inst, eta, K);
                } catch (const FixedPointError& e) {
                    throw ConfigError(e.what());
                }
                fp.eta = eta;
                fp.K = K;
                const double disc = fp.discrepancy.value_or(std::numeric_limits<double>::quiet_NaN());
                os << fam << ',' << format_double(c) << ',' << K << ',' << format_double(eta) << ','
                   << to_string(fp.status) << ',' << format_double(disc) << ',' << format_double(std::log(disc)) << ','
                   << format_double(fp.bounds ? fp.bounds->norm_bound : std::numeric_limits<double>::quiet_NaN()) << ','
                   << format_double(fp.bounds ? fp.bounds->discrepancy_bound : std::numeric_limits<double>::quiet_NaN())
                   << '\n';
                json row = to_json(fp);
                row["family"] = fam;
                row["c"] = c;
                report.push_back(row);
            }
        }
    }
    emit(f, "fixed-point", cfg, os.str(),
         {{"report", report},
          {"mode", strongly_convex ? "strongly-convex" : "convex"},
          {"instance_hash", hex64(fnv1a(instance_to_json(inst).dump()))}});
    return kOk;
}

// ---------------------------------------------------------------------------
// online-regret

int cmd_online_regret(const CommonFlags& f) {
    const json d = {{"algorithms", {"nc-ogd", "fed-posgd", "fed-osgd"}},
                    {"adversary", "stochastic-iid"},
                    {"G", 1.0},
                    {"B", 1.0},
                    {"zeta_hat", 0.0},
                    {"d", 5},
                    {"M", 4},
                    {"K", 8},
                    {"rounds", {8, 32, 128, 512}},
                    {"trials", 10},
                    {"seed", 0}};
    const json cfg = resolve_config(d, f);
    RegretSweep sw;
    try {
        sw.adversary = adversary_kind_from_string(field<std::string>(cfg, "adversary"));
    } catch (const OnlineError& e) {
        throw ConfigError(e.what());
    }
    sw.G = field<double>(cfg, "G");
    sw.B = field<double>(cfg, "B");
    sw.zeta_hat = field<double>(cfg, "zeta_hat");
    sw.dim = field<std::size_t>(cfg, "d");
    sw.machines = field<std::size_t>(cfg, "M");
    sw.local_steps = field<std::size_t>(cfg, "K");
    sw.rounds = field<std::vector<std::size_t>>(cfg, "rounds");
    sw.trials = field<std::size_t>(cfg, "trials");
    sw.seed = field<std::uint64_t>(cfg, "seed");
    std::vector<OnlineAlgorithm> algs;
    for (const auto& a : field<std::vector<std::string>>(cfg, "algorithms")) algs.push_back(online_algorithm_from_string(a));
    std::ostringstream os;
    os << "algorithm,T,mean_avg_regret,stderr\n";
    for (OnlineAlgorithm a : algs) {
        sw.algorithm = a;
        std::vector<RegretPoint> pts;
        try {
            pts = regret_curve(sw, f.workers);
        } catch (const OnlineError& e) {
            throw ConfigError(e.what());
        }
        std::vector<double> T, r;
        for (const auto& p : pts) {
            os << to_string(a) << ',' << p.T << ',' << format_double(p.regret.mean) << ',' << format_double(p.regret.se)
               << '\n';
            T.push_back(static_cast<double>(p.T));
            r.push_back(p.regret.mean);
        }
        // log-log slope of regret against T; nan when a regret is not positive
        double slope = std::numeric_limits<double>::quiet_NaN();
        if (pts.size() >= 2 && std::all_of(r.begin(), r.end(), [](double v) { return v > 0.0; })) slope = loglog_slope(T, r);
        os << to_string(a) << ",slope," << format_double(slope) << ",\n";
    }
    emit(f, "online-regret", cfg, os.str());
    return kOk;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const CommonFlags& f, const std::string& suite, const std::vector<std::string>& faults) {
    const json cfg = resolve_config({{"seed", 0}}, f);
    const auto results = run_validation(suite, field<std::uint64_t>(cfg, "seed"), faults);
    json rows = json::array();
    bool ok = true;
    for (const auto& r : results) {
        rows.push_back(to_json(r));
        ok = ok && r.passed();
    }
    const json doc = {{"suite", suite}, {"seed", cfg["seed"]}, {"passed", ok}, {"results", rows}};
    const std::string text = doc.dump(2) + "\n";
    if (f.out.empty()) std::cout << text;
    else write_text_file(f.out, text);
    for (const auto& r : results)
        if (!r.passed()) std::cerr << "FAILED " << r.suite << '/' << r.name << '\n';
    return ok ? kOk : kValidationFailure;
}

// ---------------------------------------------------------------------------
// instance generate / inspect

int cmd_instance_generate(const CommonFlags& f, const std::string& kind) {
    const json d = {{"H", 1.0},   {"R", 10},        {"B", 1.0},      {"tau", 0.5},         {"alpha", 0.5},
                    {"M", 4},     {"d", 4},         {"mu", 0.1},     {"sigma2", 0.0},      {"x_star", nullptr},
                    {"zeta_star", 1.0}, {"tau_knob", 0.0}, {"mu0", 5.0}, {"R_star", 1.0}, {"sigma_noise", 0.1},
                    {"seed", 0}};
    const json cfg = resolve_config(d, f);
    const double H = field<double>(cfg, "H"), B = field<double>(cfg, "B");
    auto optimum = [&](std::size_t dim) {
        if (cfg["x_star"].is_null()) return Vec(Vec::Ones(static_cast<Eigen::Index>(dim)));
        const Vec v = vec_from_json(cfg["x_star"]);
        if (static_cast<std::size_t>(v.size()) != dim) throw ConfigError("x_star must have dimension " + std::to_string(dim));
        return v;
    };
    Stream rng(field<std::uint64_t>(cfg, "seed"), {tag(StreamTag::Instance)});
    RandomQuadraticSpec spec;
    spec.dim = field<std::size_t>(cfg, "d");
    spec.machines = field<std::size_t>(cfg, "M");
    spec.mu = field<double>(cfg, "mu");
    spec.H = H;
    spec.sigma2 = field<double>(cfg, "sigma2");
    std::optional<Instance> inst;
    try {
        if (kind == "shared-optimum-pair") inst = make_shared_optimum_pair(H, optimum(2));
        else if (kind == "tau-decoupled-pair") inst = make_tau_decoupled_pair(H, field<double>(cfg, "tau"), optimum(3));
        else if (kind == "rotated-pair") inst = make_rotated_pair(H, field<double>(cfg, "alpha"), optimum(2));
        else if (kind == "condition-number") inst = make_condition_number_instance(H, field<unsigned>(cfg, "R"), B);
        else if (kind == "offset-highdim") inst = make_offset_highdim_instance(spec.machines, B);
        else if (kind == "random-quadratic") inst = make_random_quadratic_instance(spec, rng);
        else if (kind == "equal-hessian") inst = make_equal_hessian_instance(spec, rng);
        else if (kind == "regression-cohort") {
            CohortParams p;
            p.machines = spec.machines;
            p.dim = spec.dim;
            p.zeta_star = field<double>(cfg, "zeta_star");
            p.tau_knob = field<double>(cfg, "tau_knob");
            p.mu0 = field<double>(cfg, "mu0");
            p.R_star = field<double>(cfg, "R_star");
            p.sigma_noise = field<double>(cfg, "sigma_noise");
            inst = make_regression_cohort(p, rng);
        } else {
            throw ConfigError("unknown instance kind '" + kind + "'");
        }
    } catch (const ProblemError& e) {
        throw ConfigError(e.what());
    }
    const std::string text = instance_to_json(*inst).dump(2) + "\n";
    if (f.out.empty()) std::cout << text;
    else write_text_file(f.out, text);
    return kOk;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_instance_inspect(const CommonFlags& f, const std::string& path) {
    Instance inst = [&] {
        try {
            return instance_from_json(json::parse(read_text_file(path)));
        } catch (const json::parse_error& e) {
            throw FormatError(path + ": " + e.what());
        }
    }();
    const HeterogeneityReport rep = heterogeneity_report(inst);
    json doc = {{"kind", to_string(inst.kind())},
                {"d", inst.dim()},
                {"M", inst.size()},
                {"H", rep.smoothness_H},
                {"mu", rep.strong_convexity_mu},
                {"kappa", optional_json(rep.kappa)},
                {"tau", rep.tau},
                {"zeta_star", optional_json(rep.zeta_star)},
                {"phi_star", optional_json(rep.phi_star)},
                {"B", optional_json(rep.B)},
                {"B_bar", optional_json(rep.B_bar)},
                {"Q", rep.third_order_Q}};
    const auto opt = try_global_optimum(inst);
    doc["global_optimum"] = opt ? to_json(*opt) : json(nullptr);
    const std::string text = doc.dump(2) + "\n";
    if (f.out.empty()) std::cout << text;
    else write_text_file(f.out, text);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local SGD experiments, invariant suites and hard instances"};
    app.require_subcommand(1);

    CommonFlags heat, comm, fixed, online, valid, gen, insp;
    add_common(app.add_subcommand("heatmap", "mean best final error over a (tau, zeta*) grid"), heat);
    add_common(app.add_subcommand("comm-complexity", "mean rounds to a target error across tau"), comm);
    add_common(app.add_subcommand("fixed-point", "fixed-point discrepancy table for step-size families"), fixed);
    add_common(app.add_subcommand("online-regret", "average regret against horizon for online runners"), online);

    auto* validate = app.add_subcommand("validate", "run invariant suites");
    add_common(validate, valid);
    std::string suite = "all";
    std::vector<std::string> faults;
    validate->add_option("--suite", suite, "fixedpoint | consensus | estimators | hard-instances | all");
    validate->add_option("--inject-fault", faults, "force the named invariant to fail");

    auto* instance = app.add_subcommand("instance", "generate or inspect problem instances");
    instance->require_subcommand(1);
    auto* generate = instance->add_subcommand("generate", "write an instance document");
    add_common(generate, gen);
    std::string kind;
    generate->add_option("--kind", kind,
                         "shared-optimum-pair | tau-decoupled-pair | rotated-pair | condition-number | offset-highdim | "
                         "random-quadratic | equal-hessian | regression-cohort")
        ->required();
    auto* inspect = instance->add_subcommand("inspect", "report heterogeneity constants of an instance");
    add_common(inspect, insp);
    std::string path;
    inspect->add_option("path", path, "instance JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (app.got_subcommand("heatmap")) return cmd_heatmap(heat);
        if (app.got_subcommand("comm-complexity")) return cmd_comm_complexity(comm);
        if (app.got_subcommand("fixed-point")) return cmd_fixed_point(fixed);
        if (app.got_subcommand("online-regret")) return cmd_online_regret(online);
        if (app.got_subcommand("validate")) return cmd_validate(valid, suite, faults);
        if (generate->parsed()) return cmd_instance_generate(gen, kind);
        if (inspect->parsed()) return cmd_instance_inspect(insp, path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const FormatError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}
