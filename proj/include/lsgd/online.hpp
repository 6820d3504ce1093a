#ifndef LSGD_ONLINE_HPP
#define LSGD_ONLINE_HPP

// Federated online optimization: oblivious adversaries, non-collaborative OGD,
// FedPOSGD (one-point bandit feedback) and FedOSGD (two-point feedback), and
// regret against the best fixed point of the ball B_2(B) in hindsight.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsgd/numerics.hpp"
#include "lsgd/problems.hpp"
#include "lsgd/rng.hpp"
#include "lsgd/serialization.hpp"

namespace lsgd {

class OnlineError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// One machine's loss at one step. Linear losses carry beta; anything else
/// supplies value and gradient callbacks.
struct Loss {
    std::optional<Vec> beta;
    std::function<double(const Vec&)> f;
    std::function<Vec(const Vec&)> grad;

    static Loss linear(Vec b) {
        Loss l;
        l.beta = std::move(b);
        return l;
    }

    double value(const Vec& x) const { return beta ? beta->dot(x) : f(x); }
    Vec gradient(const Vec& x) const { return beta ? *beta : grad(x); }
};

/// An oblivious adversary: the losses at step t are a fixed function of t.
class Environment {
public:
    virtual ~Environment() = default;
    virtual std::size_t dim() const = 0;
    virtual std::size_t machines() const = 0;
    virtual std::vector<Loss> losses(std::size_t t) const = 0;
    virtual bool is_linear() const { return false; }
};

enum class AdversaryKind { StochasticIID, CoordinatedRademacher, HeterogeneityControlled };

inline std::string to_string(AdversaryKind k) {
    switch (k) {
        case AdversaryKind::StochasticIID: return "stochastic-iid";
        case AdversaryKind::CoordinatedRademacher: return "coordinated-rademacher";
        case AdversaryKind::HeterogeneityControlled: return "heterogeneity-controlled";
    }
    return "?";
}

inline AdversaryKind adversary_kind_from_string(const std::string& s) {
    if (s == "stochastic-iid") return AdversaryKind::StochasticIID;
    if (s == "coordinated-rademacher") return AdversaryKind::CoordinatedRademacher;
    if (s == "heterogeneity-controlled") return AdversaryKind::HeterogeneityControlled;
    throw OnlineError("unknown adversary kind '" + s + "'");
}

namespace detail {

inline Vec rademacher(std::size_t d, double scale, Stream& rng) {
    Vec v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = (rng() >> 63) ? scale : -scale;
    return v;
}

inline Vec uniform_ball(std::size_t d, double radius, Stream& rng) {
    const Vec u = sample_unit_sphere(d, rng);
    return radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) * u;
}

}  // namespace detail

/// Linear losses <beta_t^m, x> with ||beta_t^m|| <= G.
///
/// stochastic-iid: independent (G/sqrt d) Rademacher vectors per machine and step.
/// coordinated-rademacher: one such vector per step, shared by every machine.
/// heterogeneity-controlled: beta_bar_t uniform in the ball of radius G - s plus
/// centered offsets Delta_t^m with max norm s = min(zeta_hat, G).
class LinearAdversary : public Environment {
public:
    LinearAdversary(AdversaryKind kind, double G, std::size_t d, std::size_t M, double zeta_hat, std::uint64_t seed)
        : kind_(kind), G_(G), d_(d), M_(M), zeta_hat_(zeta_hat), seed_(seed) {
        if (!(G >= 0.0) || !std::isfinite(G)) throw OnlineError("adversary: G must be a finite nonnegative number");
        if (d == 0 || M == 0) throw OnlineError("adversary: d and M must be positive");
        if (!(zeta_hat >= 0.0) || zeta_hat > 2.0 * G) throw OnlineError("adversary: need 0 <= zeta_hat <= 2G");
    }

    AdversaryKind kind() const { return kind_; }
    double G() const { return G_; }
    double zeta_hat() const { return zeta_hat_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t dim() const override { return d_; }
    std::size_t machines() const override { return M_; }
    bool is_linear() const override { return true; }

    std::vector<Vec> betas(std::size_t t) const {
        std::vector<Vec> out;
        out.reserve(M_);
        const double scale = G_ / std::sqrt(static_cast<double>(d_));
        switch (kind_) {
            case AdversaryKind::StochasticIID:
                for (std::size_t m = 0; m < M_; ++m) {
                    Stream rng(seed_, {tag(StreamTag::Adversary), t, m});
                    out.push_back(detail::rademacher(d_, scale, rng));
                }
                break;
            case AdversaryKind::CoordinatedRademacher: {
                Stream rng(seed_, {tag(StreamTag::Adversary), t});
                out.assign(M_, detail::rademacher(d_, scale, rng));
                break;
            }
            case AdversaryKind::HeterogeneityControlled: {
                Stream rng(seed_, {tag(StreamTag::Adversary), t});
                const double s = std::min(zeta_hat_, G_);
                const Vec mean = detail::uniform_ball(d_, G_ - s, rng);
                std::vector<Vec> delta;
                Vec centre = Vec::Zero(static_cast<Eigen::Index>(d_));
                for (std::size_t m = 0; m < M_; ++m) {
                    delta.push_back(rng.normal_vec(static_cast<Eigen::Index>(d_)));
                    centre += delta.back();
                }
                centre /= static_cast<double>(M_);
                double widest = 0.0;
                for (auto& v : delta) {
                    v -= centre;
                    widest = std::max(widest, v.norm());
                }
                for (auto& v : delta) out.push_back(mean + (widest > 0.0 ? s / widest : 0.0) * v);
                break;
            }
        }
        return out;
    }

    std::vector<Loss> losses(std::size_t t) const override {
        std::vector<Loss> out;
        for (auto& b : betas(t)) out.push_back(Loss::linear(std::move(b)));
        return out;
    }

    json to_json() const {
        return {{"kind", to_string(kind_)}, {"G", G_}, {"d", d_}, {"M", M_}, {"zeta_hat", zeta_hat_}, {"seed", seed_}};
    }

private:
    AdversaryKind kind_;
    double G_;
    std::size_t d_, M_;
    double zeta_hat_;
    std::uint64_t seed_;
};

inline LinearAdversary make_linear_adversary(AdversaryKind kind, double G, std::size_t d, std::size_t M,
                                             double zeta_hat, std::uint64_t seed) {
    return LinearAdversary(kind, G, d, M, zeta_hat, seed);
}

inline LinearAdversary linear_adversary_from_json(const json& j) {
    try {
        return LinearAdversary(adversary_kind_from_string(j.at("kind").get<std::string>()), j.at("G").get<double>(),
                               j.at("d").get<std::size_t>(), j.at("M").get<std::size_t>(),
                               j.value("zeta_hat", 0.0), j.value("seed", std::uint64_t{0}));
    } catch (const json::exception& e) {
        throw FormatError(std::string("adversary spec: ") + e.what());
    }
}

/// Losses given by a callback, for non-linear tests and experiments.
class FunctionEnvironment : public Environment {
public:
    /// Set `linear` only when every loss the callback returns is Loss::linear.
    FunctionEnvironment(std::size_t d, std::size_t M, std::function<std::vector<Loss>(std::size_t)> fn,
                        bool linear = false)
        : d_(d), M_(M), linear_(linear), fn_(std::move(fn)) {}
    std::size_t dim() const override { return d_; }
    std::size_t machines() const override { return M_; }
    bool is_linear() const override { return linear_; }
    std::vector<Loss> losses(std::size_t t) const override { return fn_(t); }

private:
    std::size_t d_, M_;
    bool linear_;
    std::function<std::vector<Loss>(std::size_t)> fn_;
};

// ---------------------------------------------------------------------------
// Estimators

inline Vec one_point_estimator(double f_value, const Vec& u, double delta, std::size_t d) {
    if (!(delta > 0.0)) throw OnlineError("one_point_estimator: delta must be positive");
    return (static_cast<double>(d) * f_value / delta) * u;
}

inline Vec two_point_estimator(double f_plus, double f_minus, const Vec& u, double delta, std::size_t d) {
    if (!(delta > 0.0)) throw OnlineError("two_point_estimator: delta must be positive");
    return (static_cast<double>(d) * (f_plus - f_minus) / (2.0 * delta)) * u;
}

inline Vec project_ball(const Vec& x, double B) {
    const double n = x.norm();
    return n > B ? Vec(x * (B / n)) : x;
}

// ---------------------------------------------------------------------------
// Runners

struct OnlineConfig {
    double step = 0.0;       // eta
    double smoothing = 1.0;  // delta
    double ball_radius = 1.0;
    std::size_t local_steps = 1;
    std::size_t rounds = 1;

    std::size_t horizon() const { return local_steps * rounds; }

    void validate(bool needs_smoothing) const {
        if (!(step >= 0.0) || !std::isfinite(step)) throw OnlineError("online: step must be finite and >= 0");
        if (needs_smoothing && !(smoothing > 0.0)) throw OnlineError("online: smoothing delta must be positive");
        if (!(ball_radius > 0.0)) throw OnlineError("online: ball radius must be positive");
        if (local_steps == 0 || rounds == 0) throw OnlineError("online: K and R must be positive");
    }
};

inline json to_json(const OnlineConfig& c) {
    return {{"eta", c.step}, {"delta", c.smoothing}, {"B", c.ball_radius}, {"K", c.local_steps}, {"R", c.rounds}};
}

struct OnlineOptions {
    /// Replaces the sampled direction u_t^m when set (hand traces).
    std::function<Vec(std::size_t t, std::size_t m)> directions;
    bool keep_points = false;
};

struct QueryRecord {
    std::size_t t = 0;
    std::size_t machine = 0;
    std::size_t query_index = 0;
    double loss = 0.0;
    double comparator_loss = 0.0;  // f_t^m(x*) once known
};

struct RegretTrace {
    std::string algorithm;
    std::string feedback;  // first-order, one-point, two-point
    std::uint64_t seed = 0;
    OnlineConfig config;
    std::size_t machines = 0;
    std::size_t queries_per_step = 1;
    std::vector<QueryRecord> queries;
    std::vector<std::vector<Vec>> points;    // [t][m * queries_per_step + j], when kept
    std::vector<std::vector<Vec>> iterates;  // [t][m], x_t^m before the step, when kept
    std::vector<Vec> final_iterates;
    Vec x_star;
    double comparator_avg = 0.0;
    double incurred_avg = 0.0;
    double avg_regret = 0.0;
    double comparator_certificate = 0.0;
};

struct Hindsight {
    Vec x_star;
    double comparator_avg = 0.0;
    double certificate = 0.0;  // projected-gradient norm; 0 for linear losses
};

/// Best fixed point of B_2(B) for the losses seen: closed form for linear
/// losses, projected gradient descent with backtracking otherwise.
inline Hindsight hindsight_optimum(const Environment& env, std::size_t T, double B) {
    const std::size_t M = env.machines();
    const auto d = static_cast<Eigen::Index>(env.dim());
    const double n = static_cast<double>(M * T);
    std::vector<std::vector<Loss>> all;
    all.reserve(T);
    for (std::size_t t = 0; t < T; ++t) all.push_back(env.losses(t));
    auto avg_value = [&](const Vec& x) {
        std::vector<double> v;
        for (const auto& ls : all)
            for (const auto& l : ls) v.push_back(l.value(x));
        return pairwise_sum(v) / n;
    };
    auto avg_grad = [&](const Vec& x) {
        Vec g = Vec::Zero(d);
        for (const auto& ls : all)
            for (const auto& l : ls) g += l.gradient(x);
        return Vec(g / n);
    };
    Hindsight h;
    if (env.is_linear()) {
        const Vec s = avg_grad(Vec::Zero(d));
        const double sn = s.norm();
        h.x_star = sn > 0.0 ? Vec(-B * s / sn) : Vec(Vec::Zero(d));
        h.comparator_avg = sn > 0.0 ? avg_value(h.x_star) : 0.0;
        return h;
    }
    Vec x = Vec::Zero(d);
    double fx = avg_value(x);
    double step = 1.0;
    auto mapping_norm = [&](const Vec& at, const Vec& g, double s) { return (at - project_ball(at - s * g, B)).norm() / s; };
    for (int it = 0; it < 100000; ++it) {
        const Vec g = avg_grad(x);
        h.certificate = mapping_norm(x, g, 1.0);
        if (h.certificate <= 1e-8) break;
        for (;;) {
            const Vec y = project_ball(x - step * g, B);
            const double fy = avg_value(y);
            const Vec dx = y - x;
            if (fy <= fx + g.dot(dx) + dx.squaredNorm() / (2.0 * step) || step < 1e-16) {
                x = y;
                fx = fy;
                break;
            }
            step *= 0.5;
        }
        step *= 2.0;
    }
    h.x_star = x;
    h.comparator_avg = fx;
    h.certificate = mapping_norm(x, avg_grad(x), 1.0);
    return h;
}

namespace detail {

inline Vec online_direction(const OnlineOptions& opt, std::uint64_t seed, std::size_t d, std::size_t t, std::size_t m) {
    if (opt.directions) return opt.directions(t, m);
    Stream rng(seed, {tag(StreamTag::Direction), t, m});
    return sample_unit_sphere(d, rng);
}

/// Fills comparator losses, x* and the regret summary.
inline void settle_regret(RegretTrace& tr, const Environment& env) {
    const std::size_t T = tr.config.horizon();
    const Hindsight h = hindsight_optimum(env, T, tr.config.ball_radius);
    tr.x_star = h.x_star;
    tr.comparator_avg = h.comparator_avg;
    tr.comparator_certificate = h.certificate;
    const double q = static_cast<double>(tr.queries_per_step);
    std::vector<double> incurred;
    incurred.reserve(tr.queries.size());
    std::size_t last_t = std::numeric_limits<std::size_t>::max();
    std::vector<Loss> ls;
    for (auto& rec : tr.queries) {
        if (rec.t != last_t) {
            ls = env.losses(rec.t);
            last_t = rec.t;
        }
        rec.comparator_loss = ls[rec.machine].value(h.x_star);
        incurred.push_back(rec.loss / q);
    }
    tr.incurred_avg = pairwise_sum(incurred) / static_cast<double>(tr.machines * T);
    tr.avg_regret = tr.incurred_avg - tr.comparator_avg;
}

}  // namespace detail

/// Each machine runs OGD on its own first-order feedback; no communication.
inline RegretTrace run_nc_ogd(const Environment& env, const OnlineConfig& cfg, std::uint64_t seed,
                              const OnlineOptions& opt = {}) {
    cfg.validate(false);
    const std::size_t M = env.machines(), T = cfg.horizon();
    RegretTrace tr;
    tr.algorithm = "nc-ogd";
    tr.feedback = "first-order";
    tr.seed = seed;
    tr.config = cfg;
    tr.machines = M;
    std::vector<Vec> x(M, Vec::Zero(static_cast<Eigen::Index>(env.dim())));
    for (std::size_t t = 0; t < T; ++t) {
        const auto ls = env.losses(t);
        if (opt.keep_points) {
            tr.points.push_back(x);
            tr.iterates.push_back(x);
        }
        for (std::size_t m = 0; m < M; ++m) {
            tr.queries.push_back({t, m, 0, ls[m].value(x[m]), 0.0});
            x[m] -= cfg.step * ls[m].gradient(x[m]);
        }
    }
    tr.final_iterates = x;
    detail::settle_regret(tr, env);
    return tr;
}

/// One-point bandit feedback at w + delta u with w the projection of the
/// local state; updates and averaging happen on the unprojected state.
inline RegretTrace run_fed_posgd(const Environment& env, const OnlineConfig& cfg, std::uint64_t seed,
                                 const OnlineOptions& opt = {}) {
    cfg.validate(true);
    const std::size_t M = env.machines(), T = cfg.horizon(), K = cfg.local_steps, d = env.dim();
    RegretTrace tr;
    tr.algorithm = "fed-posgd";
    tr.feedback = "one-point";
    tr.seed = seed;
    tr.config = cfg;
    tr.machines = M;
    std::vector<Vec> x(M, Vec::Zero(static_cast<Eigen::Index>(d)));
    for (std::size_t t = 0; t < T; ++t) {
        const auto ls = env.losses(t);
        std::vector<Vec> pts;
        for (std::size_t m = 0; m < M; ++m) {
            const Vec w = project_ball(x[m], cfg.ball_radius);
            const Vec u = detail::online_direction(opt, seed, d, t, m);
            const Vec q = w + cfg.smoothing * u;
            const double f = ls[m].value(q);
            tr.queries.push_back({t, m, 0, f, 0.0});
            if (opt.keep_points) pts.push_back(q);
            x[m] -= cfg.step * one_point_estimator(f, u, cfg.smoothing, d);
        }
        if (opt.keep_points) {
            tr.points.push_back(std::move(pts));
        }
        if ((t + 1) % K == 0) {
            Vec avg = Vec::Zero(static_cast<Eigen::Index>(d));
            for (const auto& xm : x) avg += xm;
            avg /= static_cast<double>(M);
            for (auto& xm : x) xm = avg;
        }
        if (opt.keep_points) tr.iterates.push_back(x);
    }
    tr.final_iterates = x;
    detail::settle_regret(tr, env);
    return tr;
}

/// Two-point feedback at x +- delta u; Local SGD structure with averaging every K steps.
inline RegretTrace run_fed_osgd(const Environment& env, const OnlineConfig& cfg, std::uint64_t seed,
                                const OnlineOptions& opt = {}) {
    cfg.validate(true);
    const std::size_t M = env.machines(), T = cfg.horizon(), K = cfg.local_steps, d = env.dim();
    RegretTrace tr;
    tr.algorithm = "fed-osgd";
    tr.feedback = "two-point";
    tr.seed = seed;
    tr.config = cfg;
    tr.machines = M;
    tr.queries_per_step = 2;
    std::vector<Vec> x(M, Vec::Zero(static_cast<Eigen::Index>(d)));
    for (std::size_t t = 0; t < T; ++t) {
        const auto ls = env.losses(t);
        std::vector<Vec> pts;
        for (std::size_t m = 0; m < M; ++m) {
            const Vec u = detail::online_direction(opt, seed, d, t, m);
            const Vec plus = x[m] + cfg.smoothing * u, minus = x[m] - cfg.smoothing * u;
            const double fp = ls[m].value(plus), fm = ls[m].value(minus);
            tr.queries.push_back({t, m, 0, fp, 0.0});
            tr.queries.push_back({t, m, 1, fm, 0.0});
            if (opt.keep_points) {
                pts.push_back(plus);
                pts.push_back(minus);
            }
            x[m] -= cfg.step * two_point_estimator(fp, fm, u, cfg.smoothing, d);
        }
        if (opt.keep_points) tr.points.push_back(std::move(pts));
        if ((t + 1) % K == 0) {
            Vec avg = Vec::Zero(static_cast<Eigen::Index>(d));
            for (const auto& xm : x) avg += xm;
            avg /= static_cast<double>(M);
            for (auto& xm : x) xm = avg;
        }
        if (opt.keep_points) tr.iterates.push_back(x);
    }
    tr.final_iterates = x;
    detail::settle_regret(tr, env);
    return tr;
}

// ---------------------------------------------------------------------------
// Tuned parameters
//
// Every formula carries a 1/G factor. With G = 0 all losses vanish and any
// step is optimal, so G = 0 falls back to G = 1 instead of dividing by zero.

namespace detail {
inline double lipschitz_or_one(double G) { return G > 0.0 ? G : 1.0; }
}  // namespace detail

/// eta = B / (G sqrt T), the first-order rate for each machine on its own.
inline double nc_ogd_step(double G, double B, std::size_t T) {
    return B / (detail::lipschitz_or_one(G) * std::sqrt(static_cast<double>(T)));
}

/// eta for FedPOSGD; terms switched off by K = 1 or zeta_hat = 0 drop out of the min.
inline double fed_posgd_step(double G, double B, std::size_t M, std::size_t d, std::size_t K, std::size_t R,
                             double zeta_hat) {
    G = detail::lipschitz_or_one(G);
    const double T = static_cast<double>(K * R), dd = static_cast<double>(d), k = static_cast<double>(K);
    double m = std::min(1.0, std::sqrt(static_cast<double>(M)) / (dd * B));
    if (K > 1) {
        m = std::min(m, 1.0 / (std::sqrt(dd * B) * std::pow(k, 0.25)));
        if (zeta_hat > 0.0) m = std::min(m, std::sqrt(G) / std::sqrt(zeta_hat * k));
    }
    return B / (G * std::sqrt(T)) * m;
}

inline double fed_osgd_step(double G, double B, std::size_t M, std::size_t d, std::size_t K, std::size_t R) {
    G = detail::lipschitz_or_one(G);
    const double T = static_cast<double>(K * R), dd = static_cast<double>(d);
    double m = std::min(1.0, std::sqrt(static_cast<double>(M) / dd));
    if (K > 1) m = std::min(m, 1.0 / (std::sqrt(static_cast<double>(K)) * std::pow(dd, 0.25)));
    return B / (G * std::sqrt(T)) * m;
}

/// FedPOSGD smoothing radius: delta = B.
inline double fed_posgd_smoothing(double B) { return B; }

inline double fed_osgd_smoothing(double B, std::size_t M, std::size_t d, std::size_t K, std::size_t R) {
    const double q = std::pow(static_cast<double>(d), 0.25);
    return B * q / std::sqrt(static_cast<double>(R)) * (1.0 + q / std::sqrt(static_cast<double>(M * K)));
}

// ---------------------------------------------------------------------------
// Export

inline std::string regret_csv(const RegretTrace& tr) {
    std::ostringstream os;
    os << "t,machine,query_index,loss,cum_regret\n";
    const double q = static_cast<double>(tr.queries_per_step);
    double cum = 0.0;
    for (const auto& rec : tr.queries) {
        cum += (rec.loss - rec.comparator_loss) / q;
        os << rec.t << ',' << rec.machine << ',' << rec.query_index << ',' << format_double(rec.loss) << ','
           << format_double(cum) << '\n';
    }
    return os.str();
}

inline json regret_summary(const RegretTrace& tr) {
    return {{"algorithm", tr.algorithm},      {"feedback", tr.feedback},
            {"seed", tr.seed},                {"config", to_json(tr.config)},
            {"M", tr.machines},               {"x_star", to_json(tr.x_star)},
            {"incurred_avg", tr.incurred_avg}, {"comparator_avg", tr.comparator_avg},
            {"avg_regret", tr.avg_regret}};
}

}  // namespace lsgd

#endif
