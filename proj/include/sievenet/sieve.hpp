#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sievenet/errors.hpp"
#include "sievenet/linalg.hpp"
#include "sievenet/model.hpp"
#include "sievenet/rng.hpp"

namespace sievenet {

/// Sieve index (r_n, V_n, M_n) for input dimension d. The constraint set is
///   sum_{j=0..r} |alpha_j| <= V_n   and   max_j sum_{i=0..d} |gamma_ij| <= M_n,
/// where i = 0 indexes the hidden bias.
struct SieveSpec {
    std::size_t r_n = 1;
    double v_n = 2.0;
    double m_n = 1.0;
    std::size_t d = 1;

    void validate() const {
        if (r_n == 0) throw ValidationError("SieveSpec: r_n must be >= 1");
        if (!(v_n > 1.0)) throw ValidationError("SieveSpec: V_n must exceed 1");
        if (!(m_n > 0.0)) throw ValidationError("SieveSpec: M_n must be positive");
        if (d == 0) throw ValidationError("SieveSpec: d must be >= 1");
    }

    /// Parameter count r_n(d+2)+1 of a network in this sieve.
    std::size_t parameter_count() const { return r_n * (d + 2) + 1; }
};

inline void to_json(nlohmann::json& j, const SieveSpec& s) {
    j = nlohmann::json{{"r_n", s.r_n}, {"v_n", s.v_n}, {"m_n", s.m_n}, {"d", s.d}};
}

inline void from_json(const nlohmann::json& j, SieveSpec& s) {
    s.r_n = j.at("r_n").get<std::size_t>();
    s.v_n = j.at("v_n").get<double>();
    s.m_n = j.at("m_n").get<double>();
    s.d = j.at("d").get<std::size_t>();
    s.validate();
}

namespace detail {

/// Kahan-compensated sum of a handful of log terms; the entropy exponents
/// get large enough that naive accumulation loses digits before overflow does.
inline double compensated_sum(std::initializer_list<double> terms) {
    double sum = 0.0, carry = 0.0;
    for (double t : terms) {
        double y = t - carry;
        double s = sum + y;
        carry = (s - sum) - y;
        sum = s;
    }
    return sum;
}

inline double alpha_block_l1(const NetworkParams& net) {
    double s = std::abs(net.alpha0);
    for (double a : net.alphas) s += std::abs(a);
    return s;
}

inline double gamma_row_l1(const NetworkParams& net, std::size_t j) {
    double s = std::abs(net.gamma0s[j]);
    for (std::size_t k = 0; k < net.input_dim; ++k) s += std::abs(net.gammas(j, k));
    return s;
}

}  // namespace detail

/// Amounts by which a network exceeds the sieve constraints; both zero iff
/// the network lies in the (closed) constraint set.
struct ConstraintResiduals {
    double alpha_excess = 0.0;
    double gamma_excess = 0.0;

    bool feasible() const { return alpha_excess == 0.0 && gamma_excess == 0.0; }
};

inline ConstraintResiduals constraint_residuals(const NetworkParams& net, const SieveSpec& spec) {
    spec.validate();
    if (net.input_dim != spec.d)
        throw DimensionError("constraint_residuals input_dim", spec.d, net.input_dim);

    ConstraintResiduals res;
    res.alpha_excess = std::max(0.0, detail::alpha_block_l1(net) - spec.v_n);
    double worst_row = 0.0;
    for (std::size_t j = 0; j < net.hidden_units; ++j)
        worst_row = std::max(worst_row, detail::gamma_row_l1(net, j));
    res.gamma_excess = std::max(0.0, worst_row - spec.m_n);
    return res;
}

/// Radial L1 rescaling onto the sieve: the whole alpha block (bias included)
/// shrinks by V_n over its L1 norm when violated, and each violating gamma
/// row (bias included) shrinks by M_n over its row norm. Identity on feasible
/// networks and idempotent; the rescale repeats on the rare rounding spill
/// so the output always satisfies the constraints exactly.
inline NetworkParams project_to_sieve(const NetworkParams& net, const SieveSpec& spec) {
    spec.validate();
    if (net.input_dim != spec.d)
        throw DimensionError("project_to_sieve input_dim", spec.d, net.input_dim);

    NetworkParams out = net;
    for (int pass = 0; pass < 8; ++pass) {
        double s = detail::alpha_block_l1(out);
        if (s <= spec.v_n) break;
        double f = spec.v_n / s;
        out.alpha0 *= f;
        for (double& a : out.alphas) a *= f;
    }
    for (std::size_t j = 0; j < net.hidden_units; ++j) {
        for (int pass = 0; pass < 8; ++pass) {
            double row = detail::gamma_row_l1(out, j);
            if (row <= spec.m_n) break;
            double f = spec.m_n / row;
            out.gamma0s[j] *= f;
            for (std::size_t k = 0; k < net.input_dim; ++k) out.gammas(j, k) *= f;
        }
    }
    return out;
}

/// log of the sup-norm covering-number bound for the tanh sieve,
///   log N(eps) <= [r(d+2)+1] * log(2e [r(d+2)+1] V^2 / (eps (V-1))),
/// evaluated in log space so large exponents cannot overflow.
inline double covering_bound_tanh(const SieveSpec& spec, double eps) {
    spec.validate();
    if (!(eps > 0.0)) throw ValidationError("covering_bound_tanh: eps must be positive");
    const double p = static_cast<double>(spec.parameter_count());
    double log_base = detail::compensated_sum({std::log(2.0), 1.0, std::log(p),
                                               2.0 * std::log(spec.v_n), -std::log(eps),
                                               -std::log(spec.v_n - 1.0)});
    return p * log_base;
}

/// B constant of the tanh entropy-integral bound,
/// [r(d+2)+1] * log(2 [r(d+2)+1] V^2 / (V-1)).
inline double entropy_constant_tanh(const SieveSpec& spec) {
    spec.validate();
    const double p = static_cast<double>(spec.parameter_count());
    double log_base = detail::compensated_sum(
        {std::log(2.0), std::log(p), 2.0 * std::log(spec.v_n), -std::log(spec.v_n - 1.0)});
    return p * log_base;
}

/// Upper bound 4 sqrt(2) B^(1/2) V_n on the entropy integral of the tanh sieve.
inline double entropy_integral_bound_tanh(const SieveSpec& spec) {
    return 4.0 * std::sqrt(2.0) * std::sqrt(entropy_constant_tanh(spec)) * spec.v_n;
}

/// C constant of the ReLU entropy-integral bound,
/// 2 [r(d+2)+2] * log(4 (d+1)(r+1) / e^(1/2)).
inline double entropy_constant_relu(const SieveSpec& spec) {
    spec.validate();
    const double q = static_cast<double>(spec.r_n * (spec.d + 2) + 2);
    double log_base = detail::compensated_sum({std::log(4.0),
                                               std::log(static_cast<double>(spec.d + 1)),
                                               std::log(static_cast<double>(spec.r_n + 1)), -0.5});
    return 2.0 * q * log_base;
}

/// Upper bound 4 sqrt(2) C^(1/2) r_n M_n on the entropy integral of the ReLU sieve.
inline double entropy_integral_bound_relu(const SieveSpec& spec) {
    return 4.0 * std::sqrt(2.0) * std::sqrt(entropy_constant_relu(spec)) *
           static_cast<double>(spec.r_n) * spec.m_n;
}

// --- rate-condition checking -------------------------------------------------

struct RateRow {
    double n = 0.0;
    double r_n = 0.0;
    double v_n = 0.0;
    double m_n = 0.0;
    double lambda_n = 0.0;
};

/// Sequence of sieve/rate tuples plus the user-supplied Lojasiewicz exponent.
struct RateCheckInput {
    std::vector<RateRow> rows;
    double nu = 2.0;

    void validate() const {
        if (rows.size() < 3)
            throw ValidationError("RateCheckInput: need at least 3 rows to judge a trend");
        if (!(nu > 1.0)) throw ValidationError("RateCheckInput: nu must exceed 1");
        double prev_n = 0.0;
        for (const auto& row : rows) {
            if (!(row.n > prev_n))
                throw ValidationError("RateCheckInput: n must be strictly increasing");
            if (!(row.r_n > 0.0 && row.v_n > 0.0 && row.m_n > 0.0 && row.lambda_n > 0.0))
                throw ValidationError("RateCheckInput: all entries must be positive");
            prev_n = row.n;
        }
    }
};

struct RateConditionCheck {
    std::string name;
    Vector ratios;
    bool decreasing = false;
};

/// Finite-sample rendering of the o(.) conditions: each ratio sequence must
/// fall strictly at every step of the supplied grid. This is an asymptotic
/// proxy, not a proof; the label says so and every report carries it.
struct RateReport {
    ActivationKind activation = ActivationKind::Tanh;
    double nu = 2.0;
    std::vector<RateConditionCheck> conditions;
    bool all_pass = false;
    std::string label = "asymptotic proxy: strict monotone decrease over the supplied grid";
};

inline RateReport check_rate_conditions(const RateCheckInput& input, ActivationKind activation) {
    input.validate();
    RateReport report;
    report.activation = activation;
    report.nu = input.nu;

    RateConditionCheck entropy;
    RateConditionCheck lambda;
    if (activation == ActivationKind::Tanh) {
        entropy.name = "entropy: r_n V_n^2 log(r_n V_n) / n";
        lambda.name = "lambda: lambda_n / min(r_n^{-1/2}, r_n^{-(nu-1)/(2nu)})";
    } else {
        entropy.name = "entropy: r_n^3 M_n^2 log(r_n) / n";
        lambda.name = "lambda: lambda_n * r_n M_n";
    }

    const double lam_exp = (input.nu - 1.0) / (2.0 * input.nu);
    for (const auto& row : input.rows) {
        if (activation == ActivationKind::Tanh) {
            entropy.ratios.push_back(row.r_n * row.v_n * row.v_n * std::log(row.r_n * row.v_n) /
                                     row.n);
            double bound = std::min(std::pow(row.r_n, -0.5), std::pow(row.r_n, -lam_exp));
            lambda.ratios.push_back(row.lambda_n / bound);
        } else {
            entropy.ratios.push_back(row.r_n * row.r_n * row.r_n * row.m_n * row.m_n *
                                     std::log(row.r_n) / row.n);
            lambda.ratios.push_back(row.lambda_n * row.r_n * row.m_n);
        }
    }

    auto strictly_decreasing = [](const Vector& v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(v[i] < v[i - 1])) return false;
        return true;
    };
    entropy.decreasing = strictly_decreasing(entropy.ratios);
    lambda.decreasing = strictly_decreasing(lambda.ratios);
    report.all_pass = entropy.decreasing && lambda.decreasing;
    report.conditions = {std::move(entropy), std::move(lambda)};
    return report;
}

/// Parses the rate CSV with header n,r_n,V_n,M_n,lambda_n.
inline std::vector<RateRow> parse_rate_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("rate CSV: empty input");
    auto strip = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
    };
    if (strip(line) != "n,r_n,V_n,M_n,lambda_n")
        throw ValidationError("rate CSV: expected header 'n,r_n,V_n,M_n,lambda_n', got '" + line +
                              "'");
    std::vector<RateRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (strip(line).empty()) continue;
        std::istringstream ss(line);
        std::string field;
        double values[5];
        for (int k = 0; k < 5; ++k) {
            if (!std::getline(ss, field, ','))
                throw ValidationError("rate CSV line " + std::to_string(lineno) +
                                      ": expected 5 comma-separated values");
            try {
                values[k] = std::stod(field);
            } catch (const std::exception&) {
                throw ValidationError("rate CSV line " + std::to_string(lineno) +
                                      ": cannot parse '" + field + "' as a number");
            }
        }
        rows.push_back(RateRow{values[0], values[1], values[2], values[3], values[4]});
    }
    return rows;
}

inline std::vector<RateRow> parse_rate_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rate CSV", path);
    return parse_rate_csv(in);
}

inline std::string format_rate_report(const RateReport& report) {
    std::ostringstream out;
    out << "activation: " << to_string(report.activation) << "\n";
    out << "nu: " << report.nu << "\n";
    for (const auto& cond : report.conditions) {
        out << cond.name << " -> " << (cond.decreasing ? "decreasing (PASS)" : "not decreasing (FAIL)")
            << "\n";
    }
    out << "note: " << report.label << "\n";
    return out.str();
}

// --- multiplier-process estimate ---------------------------------------------

/// Draws a network uniformly-at-random inside the sieve: every parameter is
/// uniform on [-1, 1] (order: alpha0, alphas, then per unit gamma0 followed
/// by the gamma row) and the draw is then projected onto the constraint set.
inline NetworkParams sample_net_in_sieve(const SieveSpec& spec, ActivationKind activation,
                                         RngStream& rng) {
    spec.validate();
    NetworkParams net = NetworkParams::zeros(activation, spec.r_n, spec.d);
    net.alpha0 = rng.uniform(-1.0, 1.0);
    for (double& a : net.alphas) a = rng.uniform(-1.0, 1.0);
    for (std::size_t j = 0; j < spec.r_n; ++j) {
        net.gamma0s[j] = rng.uniform(-1.0, 1.0);
        for (std::size_t k = 0; k < spec.d; ++k) net.gammas(j, k) = rng.uniform(-1.0, 1.0);
    }
    return project_to_sieve(net, spec);
}

/// Monte Carlo estimate of E_xi[ max_f | n^{-1/2} sum_i xi_i (f(X_i) - pi_f0(X_i)) | ]
/// over an explicit list of networks, with i.i.d. Rademacher multipliers.
/// Round m draws its multipliers from the stream (seed, "mp/round/<m>"), so
/// rounds can be evaluated in any order or in parallel without changing the
/// result.
inline double multiplier_process_estimate_over_nets(const std::vector<NetworkParams>& nets,
                                                    const NetworkParams& pi_n_f0, const Matrix& X,
                                                    std::size_t mc_rounds, std::uint64_t seed) {
    if (nets.empty()) throw ValidationError("multiplier_process_estimate: need at least one net");
    if (mc_rounds == 0) throw ValidationError("multiplier_process_estimate: mc_rounds must be >= 1");
    const std::size_t n = X.rows();
    if (n == 0) throw ValidationError("multiplier_process_estimate: empty design matrix");

    Vector reference = forward_batch(pi_n_f0, X);
    std::vector<Vector> residuals(nets.size());
    for (std::size_t j = 0; j < nets.size(); ++j) {
        residuals[j] = forward_batch(nets[j], X);
        for (std::size_t i = 0; i < n; ++i) residuals[j][i] -= reference[i];
    }

    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<int> xi(n);
    double total = 0.0;
    for (std::size_t m = 0; m < mc_rounds; ++m) {
        RngStream rng(seed, derive_stream(seed, "mp/round/" + std::to_string(m)));
        for (auto& x : xi) x = rng.rademacher();
        double best = 0.0;
        for (const auto& resid : residuals) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += xi[i] * resid[i];
            best = std::max(best, std::abs(s) * inv_sqrt_n);
        }
        total += best;
    }
    return total / static_cast<double>(mc_rounds);
}

/// Spec-level wrapper: samples net_count networks inside the sieve (network
/// j from the stream (seed, "mp/net/<j>"), so a larger net_count extends the
/// same sample) and runs the Rademacher Monte Carlo. The result estimates a
/// lower bound on the sup over the sieve, suitable only for one-sided
/// comparison against the entropy-integral bound.
inline double multiplier_process_estimate(const SieveSpec& spec, const NetworkParams& pi_n_f0,
                                          const Matrix& X, std::size_t net_count,
                                          std::size_t mc_rounds, std::uint64_t seed) {
    if (net_count == 0) throw ValidationError("multiplier_process_estimate: net_count must be >= 1");
    std::vector<NetworkParams> nets;
    nets.reserve(net_count);
    for (std::size_t j = 0; j < net_count; ++j) {
        RngStream rng(seed, derive_stream(seed, "mp/net/" + std::to_string(j)));
        nets.push_back(sample_net_in_sieve(spec, pi_n_f0.activation, rng));
    }
    return multiplier_process_estimate_over_nets(nets, pi_n_f0, X, mc_rounds, seed);
}

}  // namespace sievenet
