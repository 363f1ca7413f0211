#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include <json.hpp>

#include "sievenet/errors.hpp"
#include "sievenet/linalg.hpp"
#include "sievenet/model.hpp"
#include "sievenet/rng.hpp"

namespace sievenet {

enum class PenaltyKind { ParameterL1, GradientSparsity };

inline std::string to_string(PenaltyKind k) {
    return k == PenaltyKind::ParameterL1 ? "parameter_l1" : "gradient_sparsity";
}

inline PenaltyKind penalty_kind_from_string(const std::string& s) {
    if (s == "parameter_l1") return PenaltyKind::ParameterL1;
    if (s == "gradient_sparsity") return PenaltyKind::GradientSparsity;
    throw ValidationError("unknown penalty kind '" + s +
                          "' (expected parameter_l1 or gradient_sparsity)");
}

/// Penalty choice plus the schedule lambda_n = lambda_base / n.
struct PenaltySpec {
    PenaltyKind kind = PenaltyKind::ParameterL1;
    double lambda_base = 10.0;

    void validate() const {
        if (!(lambda_base >= 0.0)) throw ValidationError("PenaltySpec: lambda_base must be >= 0");
    }

    double lambda_n(std::size_t n) const {
        if (n == 0) throw ValidationError("PenaltySpec: sample size must be >= 1");
        return lambda_base / static_cast<double>(n);
    }
};

inline void to_json(nlohmann::json& j, const PenaltySpec& p) {
    j = nlohmann::json{{"kind", to_string(p.kind)}, {"lambda_base", p.lambda_base}};
}

inline void from_json(const nlohmann::json& j, PenaltySpec& p) {
    p.kind = penalty_kind_from_string(j.at("kind").get<std::string>());
    p.lambda_base = j.at("lambda_base").get<double>();
    p.validate();
}

/// Sum of absolute values over every penalized parameter:
/// |alpha_0| + sum_j |alpha_j| + sum_j (|gamma0_j| + sum_i |gamma_ij|).
/// The output bias is included; the sum over output weights starts at j = 0.
inline double l1_parameter_penalty(const NetworkParams& net) {
    double s = std::abs(net.alpha0);
    for (double a : net.alphas) s += std::abs(a);
    for (std::size_t j = 0; j < net.hidden_units; ++j) {
        s += std::abs(net.gamma0s[j]);
        for (std::size_t k = 0; k < net.input_dim; ++k) s += std::abs(net.gammas(j, k));
    }
    return s;
}

/// Average L1 norm of the input gradient over the sample,
/// (1/n) sum_i ||grad f(X_i)||_1, with a count of rows that sat on a ReLU
/// kink (those rows use the strict-indicator convention and still count).
struct GradientSparsityResult {
    double value = 0.0;
    std::size_t on_kink_rows = 0;
};

inline GradientSparsityResult gradient_sparsity_penalty_detailed(
    const NetworkParams& net, const Matrix& X, double kink_tolerance = kDefaultKinkTolerance) {
    if (net.activation != ActivationKind::ReLU)
        throw ValidationError("gradient_sparsity_penalty: network must use the ReLU activation");
    if (X.rows() == 0) throw ValidationError("gradient_sparsity_penalty: sample size must be >= 1");

    GradientSparsityResult result;
    double total = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        InputGradient g = input_gradient(net, X.row(i), kink_tolerance);
        if (g.on_kink) ++result.on_kink_rows;
        total += l1_norm(std::span{g.gradient});
    }
    result.value = total / static_cast<double>(X.rows());
    return result;
}

inline double gradient_sparsity_penalty(const NetworkParams& net, const Matrix& X,
                                        double kink_tolerance = kDefaultKinkTolerance) {
    return gradient_sparsity_penalty_detailed(net, X, kink_tolerance).value;
}

/// lambda_n * J_n(f) for the selected penalty. GradientSparsity needs the
/// design matrix; ParameterL1 ignores it.
inline double penalty_value(const PenaltySpec& spec, const NetworkParams& net,
                            const std::optional<Matrix>& X, std::size_t n) {
    spec.validate();
    double lambda = spec.lambda_n(n);
    if (lambda == 0.0) return 0.0;
    if (spec.kind == PenaltyKind::ParameterL1) return lambda * l1_parameter_penalty(net);
    if (!X.has_value())
        throw ValidationError("penalty_value: gradient_sparsity requires the design matrix X");
    return lambda * gradient_sparsity_penalty(net, *X);
}

/// Empirical check of Definition-style well-definedness for the tanh L1
/// penalty: random signed permutations must leave both the penalty value and
/// the input-output map unchanged.
struct WellDefinedReport {
    std::size_t trials = 0;
    double max_penalty_deviation = 0.0;
    double max_forward_deviation = 0.0;
    bool passed = false;
};

inline WellDefinedReport check_well_defined(const NetworkParams& net, std::size_t trials,
                                            double tol, std::uint64_t seed = 1881,
                                            std::size_t probe_count = 100) {
    if (net.activation != ActivationKind::Tanh)
        throw ValidationError("check_well_defined: network must use the tanh activation");
    net.validate();

    const std::size_t r = net.hidden_units;
    RngStream rng(seed, derive_stream(seed, "well_defined"));
    const double base_penalty = l1_parameter_penalty(net);

    // fixed probe grid shared by every trial
    std::vector<Vector> probes(probe_count, Vector(net.input_dim));
    for (auto& p : probes)
        for (auto& v : p) v = rng.uniform(-2.0, 2.0);
    Vector base_values(probe_count);
    for (std::size_t i = 0; i < probe_count; ++i) base_values[i] = forward(net, probes[i]);

    WellDefinedReport report;
    report.trials = trials;
    for (std::size_t t = 0; t < trials; ++t) {
        SignedPermutation sp;
        sp.perm.resize(r);
        for (std::size_t j = 0; j < r; ++j) sp.perm[j] = j;
        // Fisher-Yates over destinations
        for (std::size_t j = r; j > 1; --j) std::swap(sp.perm[j - 1], sp.perm[rng.below(j)]);
        sp.signs.resize(r);
        for (auto& s : sp.signs) s = rng.rademacher();

        NetworkParams mapped = signed_permutation(net, sp);
        report.max_penalty_deviation =
            std::max(report.max_penalty_deviation,
                     std::abs(l1_parameter_penalty(mapped) - base_penalty));
        for (std::size_t i = 0; i < probe_count; ++i)
            report.max_forward_deviation =
                std::max(report.max_forward_deviation,
                         std::abs(forward(mapped, probes[i]) - base_values[i]));
    }
    report.passed =
        report.max_penalty_deviation <= tol && report.max_forward_deviation <= tol;
    return report;
}

}  // namespace sievenet
