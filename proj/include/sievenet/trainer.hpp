#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sievenet/errors.hpp"
#include "sievenet/linalg.hpp"
#include "sievenet/model.hpp"
#include "sievenet/penalty.hpp"
#include "sievenet/rng.hpp"
#include "sievenet/sieve.hpp"

namespace sievenet {

/// Full-batch gradient-descent configuration. The network shape comes from
/// the sieve spec (r_n hidden units, input dimension d); the constraints are
/// only enforced when enforce_sieve is set.
struct TrainConfig {
    ActivationKind activation = ActivationKind::Tanh;
    std::size_t iterations = 20000;
    double learning_rate = 1e-2;
    PenaltySpec penalty;
    SieveSpec sieve;
    double init_scale = 0.5;
    std::uint64_t seed = 0;
    bool enforce_sieve = false;
    std::size_t record_every = 100;

    void validate() const {
        if (iterations < 1) throw ValidationError("TrainConfig: iterations must be >= 1");
        if (!(learning_rate > 0.0)) throw ValidationError("TrainConfig: learning_rate must be > 0");
        if (record_every < 1) throw ValidationError("TrainConfig: record_every must be >= 1");
        if (!(init_scale >= 0.0)) throw ValidationError("TrainConfig: init_scale must be >= 0");
        penalty.validate();
        sieve.validate();
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"activation", to_string(c.activation)},
                       {"iterations", c.iterations},
                       {"learning_rate", c.learning_rate},
                       {"penalty", c.penalty},
                       {"sieve", c.sieve},
                       {"init_scale", c.init_scale},
                       {"seed", c.seed},
                       {"enforce_sieve", c.enforce_sieve},
                       {"record_every", c.record_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.iterations = j.value("iterations", std::size_t{20000});
    c.learning_rate = j.value("learning_rate", 1e-2);
    c.penalty = j.at("penalty").get<PenaltySpec>();
    c.sieve = j.at("sieve").get<SieveSpec>();
    c.init_scale = j.value("init_scale", 0.5);
    c.seed = j.value("seed", std::uint64_t{0});
    c.enforce_sieve = j.value("enforce_sieve", false);
    c.record_every = j.value("record_every", std::size_t{100});
    c.validate();
}

struct TrajectoryPoint {
    std::size_t iteration = 0;
    double objective = 0.0;
    double empirical_risk = 0.0;
    double penalty = 0.0;
};

struct FitReport {
    NetworkParams final_params;
    std::vector<TrajectoryPoint> objective_trajectory;
    double empirical_risk = 0.0;   // final Q_n(f_hat)
    double penalty_term = 0.0;     // final lambda_n J_n(f_hat)
    double eta_slack = 0.0;        // final objective minus trajectory minimum
    std::int64_t wall_time_ms = 0;
    TrainConfig config;            // echoed for reproducibility
};

/// Thrown when the objective blows past 1e12 or turns non-finite; the
/// trajectory recorded so far rides along for post-mortems.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::vector<TrajectoryPoint> trajectory)
        : std::runtime_error(what), trajectory(std::move(trajectory)) {}

    std::vector<TrajectoryPoint> trajectory;
};

/// Penalized least-squares objective (1/n) sum (f(X_i) - Y_i)^2 + lambda_n J_n(f).
inline double objective(const NetworkParams& net, const Matrix& X, const Vector& Y,
                        const PenaltySpec& penalty) {
    if (X.rows() == 0) throw ValidationError("objective: sample size must be >= 1");
    if (X.rows() != Y.size()) throw DimensionError("objective Y length", X.rows(), Y.size());
    Vector fx = forward_batch(net, X);
    double mse = 0.0;
    for (std::size_t i = 0; i < fx.size(); ++i) {
        double resid = fx[i] - Y[i];
        mse += resid * resid;
    }
    mse /= static_cast<double>(fx.size());
    double lambda = penalty.lambda_n(X.rows());
    if (lambda == 0.0) return mse;
    if (penalty.kind == PenaltyKind::ParameterL1) return mse + lambda * l1_parameter_penalty(net);
    return mse + lambda * gradient_sparsity_penalty(net, X);
}

namespace detail {

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline double mse_from_cache(const ForwardCache& cache, const Vector& Y) {
    double s = 0.0;
    for (std::size_t i = 0; i < Y.size(); ++i) {
        double resid = cache.values[i] - Y[i];
        s += resid * resid;
    }
    return s / static_cast<double>(Y.size());
}

/// Gradient-sparsity penalty from cached activations (an activation is
/// positive iff its pre-activation is, so the strict indicator is free).
inline double sparsity_penalty_from_cache(const NetworkParams& net, const ForwardCache& cache) {
    const std::size_t n = cache.rows();
    const std::size_t r = net.hidden_units;
    const std::size_t d = net.input_dim;
    double total = 0.0;
    Vector grad(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t j = 0; j < r; ++j) {
            if (cache.activations(i, j) > 0.0) {
                double a = net.alphas[j];
                for (std::size_t k = 0; k < d; ++k) grad[k] += a * net.gammas(j, k);
            }
        }
        for (std::size_t k = 0; k < d; ++k) total += std::abs(grad[k]);
    }
    return total / static_cast<double>(n);
}

inline double penalty_from_cache(const NetworkParams& net, const PenaltySpec& penalty,
                                 const ForwardCache& cache, double lambda) {
    if (lambda == 0.0) return 0.0;
    if (penalty.kind == PenaltyKind::ParameterL1) return lambda * l1_parameter_penalty(net);
    return lambda * sparsity_penalty_from_cache(net, cache);
}

/// Adds lambda_n times the penalty subgradient into g. For the L1 penalty the
/// subgradient is sign(theta) with sign(0) = 0; for gradient sparsity the
/// ReLU indicators are treated as locally constant.
inline void add_penalty_subgradient(ParamGradient& g, const NetworkParams& net,
                                    const PenaltySpec& penalty, const ForwardCache& cache,
                                    double lambda) {
    if (lambda == 0.0) return;
    const std::size_t r = net.hidden_units;
    const std::size_t d = net.input_dim;
    if (penalty.kind == PenaltyKind::ParameterL1) {
        g.alpha0 += lambda * sign_of(net.alpha0);
        for (std::size_t j = 0; j < r; ++j) {
            g.alphas[j] += lambda * sign_of(net.alphas[j]);
            g.gamma0s[j] += lambda * sign_of(net.gamma0s[j]);
            for (std::size_t k = 0; k < d; ++k)
                g.gammas(j, k) += lambda * sign_of(net.gammas(j, k));
        }
        return;
    }
    // gradient sparsity: d/d alpha_j = (1/n) sum_i I_ij sum_k s_ik gamma_jk,
    //                    d/d gamma_jk = (1/n) sum_i I_ij s_ik alpha_j,
    // where s_ik = sign(partial f / partial x_k at X_i).
    const std::size_t n = cache.rows();
    const double lam_over_n = lambda / static_cast<double>(n);
    Vector grad(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t j = 0; j < r; ++j) {
            if (cache.activations(i, j) > 0.0) {
                double a = net.alphas[j];
                for (std::size_t k = 0; k < d; ++k) grad[k] += a * net.gammas(j, k);
            }
        }
        for (std::size_t j = 0; j < r; ++j) {
            if (cache.activations(i, j) <= 0.0) continue;
            double alpha_accum = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                double s = sign_of(grad[k]);
                alpha_accum += s * net.gammas(j, k);
                g.gammas(j, k) += lam_over_n * s * net.alphas[j];
            }
            g.alphas[j] += lam_over_n * alpha_accum;
        }
    }
}

/// One descent step. Under the L1 penalty a coordinate whose update would
/// cross zero is clamped to exactly zero instead: the sign subgradient is
/// only valid on the current orthant, and without the clamp near-zero
/// parameters flip sign forever, the backtracking rate collapses, and the
/// optimization freezes short of the penalized optimum.
inline void apply_step(NetworkParams& out, const NetworkParams& net, const ParamGradient& g,
                       double lr, bool clamp_at_zero) {
    auto step = [lr, clamp_at_zero](double cur, double grad) {
        double next = cur - lr * grad;
        if (clamp_at_zero && ((cur > 0.0 && next < 0.0) || (cur < 0.0 && next > 0.0))) return 0.0;
        return next;
    };
    out.alpha0 = step(net.alpha0, g.alpha0);
    for (std::size_t j = 0; j < net.hidden_units; ++j) {
        out.alphas[j] = step(net.alphas[j], g.alphas[j]);
        out.gamma0s[j] = step(net.gamma0s[j], g.gamma0s[j]);
        for (std::size_t k = 0; k < net.input_dim; ++k)
            out.gammas(j, k) = step(net.gammas(j, k), g.gammas(j, k));
    }
}

}  // namespace detail

/// Full-batch gradient descent on the penalized objective. Parameters start
/// i.i.d. uniform on [-init_scale, init_scale] (drawn in the order alpha0,
/// alphas, then per unit gamma0 followed by the gamma row, from the stream
/// (seed, "init")). The L1 subgradient is sign(theta) with sign(0) = 0, and
/// a parameter that would cross zero within a step stops exactly at zero
/// (see apply_step). A step that would raise the objective is retried with a
/// halved learning rate; if sixty halvings cannot produce a decrease the step
/// is skipped, so the recorded trajectory never increases. After an accepted
/// step the rate recovers by 20% up to its configured value. Deterministic
/// given (X, Y, config).
inline FitReport fit(const Matrix& X, const Vector& Y, const TrainConfig& config) {
    config.validate();
    const std::size_t n = X.rows();
    if (n == 0) throw ValidationError("fit: sample size must be >= 1");
    if (Y.size() != n) throw DimensionError("fit Y length", n, Y.size());
    if (X.cols() != config.sieve.d) throw DimensionError("fit input columns", config.sieve.d, X.cols());
    if (!all_finite(X) || !all_finite(std::span{Y}))
        throw ValidationError("fit: non-finite entries in the training data");

    const double lambda = config.penalty.lambda_n(n);
    if (lambda > 0.0 && config.penalty.kind == PenaltyKind::GradientSparsity &&
        config.activation != ActivationKind::ReLU)
        throw ValidationError("fit: the gradient-sparsity penalty requires the ReLU activation");

    const auto t_start = std::chrono::steady_clock::now();

    NetworkParams net = NetworkParams::zeros(config.activation, config.sieve.r_n, config.sieve.d);
    {
        RngStream rng(config.seed, derive_stream(config.seed, "init"));
        net.alpha0 = rng.uniform(-config.init_scale, config.init_scale);
        for (double& a : net.alphas) a = rng.uniform(-config.init_scale, config.init_scale);
        for (std::size_t j = 0; j < net.hidden_units; ++j) {
            net.gamma0s[j] = rng.uniform(-config.init_scale, config.init_scale);
            for (std::size_t k = 0; k < net.input_dim; ++k)
                net.gammas(j, k) = rng.uniform(-config.init_scale, config.init_scale);
        }
    }
    if (config.enforce_sieve) net = project_to_sieve(net, config.sieve);

    ForwardCache cache, cand_cache;
    forward_batch_cached(net, X, cache);
    double risk = detail::mse_from_cache(cache, Y);
    double pen = detail::penalty_from_cache(net, config.penalty, cache, lambda);
    double obj = risk + pen;

    std::vector<TrajectoryPoint> trajectory;
    trajectory.push_back({0, obj, risk, pen});
    if (!std::isfinite(obj) || obj > 1e12)
        throw DivergenceError("fit: initial objective " + std::to_string(obj) +
                                  " is divergent (non-finite or above 1e12)",
                              std::move(trajectory));

    double min_obj = obj;
    double lr = config.learning_rate;
    const bool clamp_at_zero = lambda > 0.0 && config.penalty.kind == PenaltyKind::ParameterL1;
    NetworkParams cand = net;

    for (std::size_t it = 1; it <= config.iterations; ++it) {
        ParamGradient g = parameter_gradient_cached(net, X, Y, cache);
        detail::add_penalty_subgradient(g, net, config.penalty, cache, lambda);

        bool accepted = false;
        double cand_risk = 0.0, cand_pen = 0.0, cand_obj = 0.0;
        for (int halvings = 0; halvings <= 60; ++halvings) {
            detail::apply_step(cand, net, g, lr, clamp_at_zero);
            if (config.enforce_sieve) cand = project_to_sieve(cand, config.sieve);
            forward_batch_cached(cand, X, cand_cache);
            cand_risk = detail::mse_from_cache(cand_cache, Y);
            cand_pen = detail::penalty_from_cache(cand, config.penalty, cand_cache, lambda);
            cand_obj = cand_risk + cand_pen;
            if (std::isfinite(cand_obj) && cand_obj <= obj) {
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if (accepted) {
            std::swap(net, cand);
            std::swap(cache, cand_cache);
            risk = cand_risk;
            pen = cand_pen;
            obj = cand_obj;
            lr = std::min(lr * 1.2, config.learning_rate);
        }
        min_obj = std::min(min_obj, obj);
        if (it % config.record_every == 0 || it == config.iterations)
            trajectory.push_back({it, obj, risk, pen});
    }

    FitReport report;
    report.final_params = std::move(net);
    report.objective_trajectory = std::move(trajectory);
    report.empirical_risk = risk;
    report.penalty_term = pen;
    report.eta_slack = obj - min_obj;
    report.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t_start)
                              .count();
    report.config = config;
    return report;
}

/// Term-by-term audit of the basic inequality
///   (1/n) sum (fhat - f0)^2 <= I + II + III + slack
/// where I is the approximation term, II the multiplier term, III the penalty
/// difference, and slack the measured optimization slack. The report also
/// verifies the extremum property Q(fhat) <= Q(pi_f0) + slack directly; the
/// inequality is an algebraic consequence whenever that check passes.
struct AuditReport {
    double lhs = 0.0;
    double term_i = 0.0;
    double term_ii = 0.0;
    double term_iii = 0.0;
    double eta_slack = 0.0;
    double residual = 0.0;        // lhs - (I + II + III + slack)
    double q_tilde_fit = 0.0;
    double q_tilde_pi = 0.0;
    bool extremum_holds = false;
    bool inequality_holds = false;
    bool pi_approximate = false;  // pi_f0 came from a refit, not exact padding
};

inline AuditReport audit_basic_inequality(const FitReport& fit_report,
                                          const NetworkParams& pi_n_f0, const Vector& f0_values,
                                          const Vector& eps_values, const Matrix& X,
                                          const PenaltySpec& penalty, double tol = 1e-9,
                                          bool pi_approximate = false) {
    const std::size_t n = X.rows();
    if (n == 0) throw ValidationError("audit: empty design matrix");
    if (f0_values.size() != n) throw DimensionError("audit f0_values", n, f0_values.size());
    if (eps_values.size() != n) throw DimensionError("audit eps_values", n, eps_values.size());

    const double lambda = penalty.lambda_n(n);
    Vector fhat = forward_batch(fit_report.final_params, X);
    Vector fpi = forward_batch(pi_n_f0, X);

    const double inv_n = 1.0 / static_cast<double>(n);
    AuditReport rep;
    rep.pi_approximate = pi_approximate;
    rep.eta_slack = fit_report.eta_slack;

    double lhs = 0.0, term_i = 0.0, term_ii = 0.0;
    double q_fit_mse = 0.0, q_pi_mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double y = f0_values[i] + eps_values[i];
        double dh = fhat[i] - f0_values[i];
        double dp = f0_values[i] - fpi[i];
        lhs += dh * dh;
        term_i += dp * dp;
        term_ii += eps_values[i] * (fhat[i] - fpi[i]);
        double rf = fhat[i] - y;
        double rp = fpi[i] - y;
        q_fit_mse += rf * rf;
        q_pi_mse += rp * rp;
    }
    rep.lhs = lhs * inv_n;
    rep.term_i = term_i * inv_n;
    rep.term_ii = 2.0 * term_ii * inv_n;

    auto penalty_of = [&](const NetworkParams& net) {
        if (lambda == 0.0) return 0.0;
        if (penalty.kind == PenaltyKind::ParameterL1) return lambda * l1_parameter_penalty(net);
        return lambda * gradient_sparsity_penalty(net, X);
    };
    double pen_fit = penalty_of(fit_report.final_params);
    double pen_pi = penalty_of(pi_n_f0);
    rep.term_iii = pen_pi - pen_fit;

    rep.q_tilde_fit = q_fit_mse * inv_n + pen_fit;
    rep.q_tilde_pi = q_pi_mse * inv_n + pen_pi;
    rep.extremum_holds = rep.q_tilde_fit <= rep.q_tilde_pi + rep.eta_slack;
    rep.residual = rep.lhs - (rep.term_i + rep.term_ii + rep.term_iii + rep.eta_slack);
    rep.inequality_holds = rep.residual <= tol;
    return rep;
}

inline void to_json(nlohmann::json& j, const TrajectoryPoint& p) {
    j = nlohmann::json{{"iteration", p.iteration},
                       {"objective", p.objective},
                       {"empirical_risk", p.empirical_risk},
                       {"penalty", p.penalty}};
}

inline void from_json(const nlohmann::json& j, TrajectoryPoint& p) {
    p.iteration = j.at("iteration").get<std::size_t>();
    p.objective = j.at("objective").get<double>();
    p.empirical_risk = j.at("empirical_risk").get<double>();
    p.penalty = j.at("penalty").get<double>();
}

inline void to_json(nlohmann::json& j, const FitReport& r) {
    j = nlohmann::json{{"final_params", r.final_params},
                       {"objective_trajectory", r.objective_trajectory},
                       {"empirical_risk", r.empirical_risk},
                       {"penalty_term", r.penalty_term},
                       {"eta_slack", r.eta_slack},
                       {"wall_time_ms", r.wall_time_ms},
                       {"config", r.config}};
}

inline void from_json(const nlohmann::json& j, FitReport& r) {
    r.final_params = j.at("final_params").get<NetworkParams>();
    r.objective_trajectory = j.at("objective_trajectory").get<std::vector<TrajectoryPoint>>();
    r.empirical_risk = j.at("empirical_risk").get<double>();
    r.penalty_term = j.at("penalty_term").get<double>();
    r.eta_slack = j.at("eta_slack").get<double>();
    r.wall_time_ms = j.at("wall_time_ms").get<std::int64_t>();
    r.config = j.at("config").get<TrainConfig>();
}

inline void to_json(nlohmann::json& j, const AuditReport& r) {
    j = nlohmann::json{{"lhs", r.lhs},
                       {"term_i", r.term_i},
                       {"term_ii", r.term_ii},
                       {"term_iii", r.term_iii},
                       {"eta_slack", r.eta_slack},
                       {"residual", r.residual},
                       {"q_tilde_fit", r.q_tilde_fit},
                       {"q_tilde_pi", r.q_tilde_pi},
                       {"extremum_holds", r.extremum_holds},
                       {"inequality_holds", r.inequality_holds},
                       {"pi_approximate", r.pi_approximate}};
}

/// Writes the trajectory as CSV with columns iteration,objective,empirical_risk,penalty.
inline void write_trajectory_csv(const FitReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open trajectory CSV for writing", path);
    out << "iteration,objective,empirical_risk,penalty\n";
    char line[160];
    for (const auto& p : report.objective_trajectory) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", p.iteration, p.objective,
                      p.empirical_risk, p.penalty);
        out << line;
    }
}

}  // namespace sievenet
