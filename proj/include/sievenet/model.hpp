#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sievenet/errors.hpp"
#include "sievenet/linalg.hpp"

namespace sievenet {

enum class ActivationKind { Tanh, ReLU };

inline std::string to_string(ActivationKind a) {
    return a == ActivationKind::Tanh ? "tanh" : "relu";
}

inline ActivationKind activation_from_string(const std::string& s) {
    if (s == "tanh") return ActivationKind::Tanh;
    if (s == "relu") return ActivationKind::ReLU;
    throw ValidationError("unknown activation '" + s + "' (expected tanh or relu)");
}

/// Full parameter vector of a one-hidden-layer network
///   f(x) = alpha0 + sum_j alphas[j] * act(gammas.row(j) . x + gamma0s[j]).
///
/// Shapes: alphas, gamma0s have length hidden_units; gammas is
/// hidden_units x input_dim. All entries must stay finite.
struct NetworkParams {
    ActivationKind activation = ActivationKind::Tanh;
    double alpha0 = 0.0;
    Vector alphas;    // output weights, length r
    Matrix gammas;    // hidden weights, r x d
    Vector gamma0s;   // hidden biases, length r
    std::size_t input_dim = 0;
    std::size_t hidden_units = 0;

    static NetworkParams zeros(ActivationKind activation, std::size_t hidden_units,
                               std::size_t input_dim) {
        NetworkParams net;
        net.activation = activation;
        net.alphas.assign(hidden_units, 0.0);
        net.gammas = Matrix(hidden_units, input_dim);
        net.gamma0s.assign(hidden_units, 0.0);
        net.input_dim = input_dim;
        net.hidden_units = hidden_units;
        return net;
    }

    void validate() const {
        if (input_dim == 0) throw ValidationError("NetworkParams: input_dim must be positive");
        if (hidden_units == 0)
            throw ValidationError("NetworkParams: hidden_units must be positive");
        if (alphas.size() != hidden_units)
            throw DimensionError("NetworkParams.alphas", hidden_units, alphas.size());
        if (gamma0s.size() != hidden_units)
            throw DimensionError("NetworkParams.gamma0s", hidden_units, gamma0s.size());
        if (gammas.rows() != hidden_units)
            throw DimensionError("NetworkParams.gammas rows", hidden_units, gammas.rows());
        if (gammas.cols() != input_dim)
            throw DimensionError("NetworkParams.gammas cols", input_dim, gammas.cols());
        if (!std::isfinite(alpha0) || !all_finite(std::span{alphas}) || !all_finite(gammas) ||
            !all_finite(std::span{gamma0s}))
            throw ValidationError("NetworkParams: non-finite parameter entry");
    }

    /// Total number of trainable parameters, r(d+2)+1.
    std::size_t parameter_count() const { return hidden_units * (input_dim + 2) + 1; }
};

/// Relabeling of hidden units together with per-unit sign flips.
struct SignedPermutation {
    std::vector<std::size_t> perm;  // perm[j] = destination index of unit j
    std::vector<int> signs;         // each +1 or -1

    void validate(std::size_t r) const {
        if (perm.size() != r) throw DimensionError("SignedPermutation.perm", r, perm.size());
        if (signs.size() != r) throw DimensionError("SignedPermutation.signs", r, signs.size());
        std::vector<bool> seen(r, false);
        for (std::size_t p : perm) {
            if (p >= r || seen[p]) throw ValidationError("SignedPermutation: perm is not a bijection");
            seen[p] = true;
        }
        for (int s : signs)
            if (s != 1 && s != -1) throw ValidationError("SignedPermutation: signs must be +1 or -1");
    }
};

namespace detail {

inline double activate(ActivationKind a, double z) {
    return a == ActivationKind::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

inline void check_input(const NetworkParams& net, std::span<const double> x) {
    if (x.size() != net.input_dim)
        throw DimensionError("forward input", net.input_dim, x.size());
}

}  // namespace detail

inline double forward(const NetworkParams& net, std::span<const double> x) {
    detail::check_input(net, x);
    double out = net.alpha0;
    for (std::size_t j = 0; j < net.hidden_units; ++j) {
        double z = dot(net.gammas.row(j), x) + net.gamma0s[j];
        out += net.alphas[j] * detail::activate(net.activation, z);
    }
    return out;
}

inline double forward(const NetworkParams& net, const Vector& x) {
    return forward(net, std::span<const double>{x});
}

/// Row-wise forward pass; element i equals forward(net, X.row(i)).
inline Vector forward_batch(const NetworkParams& net, const Matrix& X) {
    if (X.rows() > 0 && X.cols() != net.input_dim)
        throw DimensionError("forward_batch input columns", net.input_dim, X.cols());
    Vector out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = forward(net, X.row(i));
    return out;
}

/// Gradient of f with respect to the input point, plus a flag telling the
/// caller whether some ReLU unit sat within kink_tolerance of its kink. The
/// indicator uses strict inequality, so a unit exactly at the kink (or
/// inactive) contributes zero.
struct InputGradient {
    Vector gradient;
    bool on_kink = false;
    std::vector<std::size_t> kink_units;
};

inline constexpr double kDefaultKinkTolerance = 1e-9;

inline InputGradient input_gradient(const NetworkParams& net, std::span<const double> x,
                                    double kink_tolerance = kDefaultKinkTolerance) {
    detail::check_input(net, x);
    InputGradient result;
    result.gradient.assign(net.input_dim, 0.0);
    for (std::size_t j = 0; j < net.hidden_units; ++j) {
        double z = dot(net.gammas.row(j), x) + net.gamma0s[j];
        double slope;
        if (net.activation == ActivationKind::Tanh) {
            double t = std::tanh(z);
            slope = 1.0 - t * t;
        } else {
            if (std::abs(z) <= kink_tolerance) {
                result.on_kink = true;
                result.kink_units.push_back(j);
            }
            slope = z > 0.0 ? 1.0 : 0.0;
        }
        double w = net.alphas[j] * slope;
        for (std::size_t k = 0; k < net.input_dim; ++k)
            result.gradient[k] += w * net.gammas(j, k);
    }
    return result;
}

inline InputGradient input_gradient(const NetworkParams& net, const Vector& x,
                                    double kink_tolerance = kDefaultKinkTolerance) {
    return input_gradient(net, std::span<const double>{x}, kink_tolerance);
}

/// Gradient structure congruent to NetworkParams.
struct ParamGradient {
    double alpha0 = 0.0;
    Vector alphas;
    Matrix gammas;
    Vector gamma0s;

    static ParamGradient zeros(std::size_t hidden_units, std::size_t input_dim) {
        ParamGradient g;
        g.alphas.assign(hidden_units, 0.0);
        g.gammas = Matrix(hidden_units, input_dim);
        g.gamma0s.assign(hidden_units, 0.0);
        return g;
    }
};

/// Hidden-unit activations (n x r) and network outputs for a whole batch.
/// The trainer keeps one of these warm across iterations so the gradient
/// pass never re-evaluates the activation function.
struct ForwardCache {
    Matrix activations;  // n x r, sigma(z_ij)
    Vector values;       // n, f(X_i)

    std::size_t rows() const { return values.size(); }
};

/// Fills the cache; values[i] matches forward(net, X.row(i)) bitwise (same
/// accumulation order).
inline void forward_batch_cached(const NetworkParams& net, const Matrix& X, ForwardCache& cache) {
    if (X.rows() > 0 && X.cols() != net.input_dim)
        throw DimensionError("forward_batch input columns", net.input_dim, X.cols());
    const std::size_t n = X.rows();
    const std::size_t r = net.hidden_units;
    if (cache.activations.rows() != n || cache.activations.cols() != r)
        cache.activations = Matrix(n, r);
    cache.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = X.row(i);
        double out = net.alpha0;
        for (std::size_t j = 0; j < r; ++j) {
            double z = dot(net.gammas.row(j), x) + net.gamma0s[j];
            double a = detail::activate(net.activation, z);
            cache.activations(i, j) = a;
            out += net.alphas[j] * a;
        }
        cache.values[i] = out;
    }
}

/// Gradient of (1/n) sum (f(X_i) - Y_i)^2 from precomputed activations.
/// Slopes are recovered from the activation value: 1 - tanh^2 for tanh, the
/// strict indicator for ReLU (activation > 0 iff pre-activation > 0).
inline ParamGradient parameter_gradient_cached(const NetworkParams& net, const Matrix& X,
                                               const Vector& Y, const ForwardCache& cache) {
    if (X.rows() != Y.size()) throw DimensionError("parameter_gradient Y length", X.rows(), Y.size());
    if (cache.rows() != X.rows())
        throw DimensionError("parameter_gradient cache rows", X.rows(), cache.rows());

    const std::size_t n = X.rows();
    const std::size_t r = net.hidden_units;
    const std::size_t d = net.input_dim;
    ParamGradient g = ParamGradient::zeros(r, d);
    if (n == 0) return g;

    const bool is_tanh = net.activation == ActivationKind::Tanh;
    const double scale = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = X.row(i);
        double resid = scale * (cache.values[i] - Y[i]);
        g.alpha0 += resid;
        for (std::size_t j = 0; j < r; ++j) {
            double a = cache.activations(i, j);
            g.alphas[j] += resid * a;
            double slope = is_tanh ? 1.0 - a * a : (a > 0.0 ? 1.0 : 0.0);
            double chain = resid * net.alphas[j] * slope;
            if (chain != 0.0) {
                g.gamma0s[j] += chain;
                for (std::size_t k = 0; k < d; ++k) g.gammas(j, k) += chain * x[k];
            }
        }
    }
    return g;
}

/// Analytic gradient of the empirical squared error (1/n) sum (f(X_i) - Y_i)^2
/// with respect to every network parameter. ReLU uses the same strict
/// subgradient convention as input_gradient (slope 0 at the kink).
inline ParamGradient parameter_gradient(const NetworkParams& net, const Matrix& X,
                                        const Vector& Y) {
    if (X.rows() > 0 && X.cols() != net.input_dim)
        throw DimensionError("parameter_gradient input columns", net.input_dim, X.cols());
    ForwardCache cache;
    forward_batch_cached(net, X, cache);
    return parameter_gradient_cached(net, X, Y, cache);
}

/// Applies a signed permutation to a tanh network: unit j moves to perm[j],
/// and a -1 sign maps (alpha_j, gamma_j, gamma0_j) to its negation. tanh is
/// odd, so the input-output map is unchanged. Rejected for ReLU whenever a
/// sign flip is requested, since ReLU is not odd.
inline NetworkParams signed_permutation(const NetworkParams& net, const SignedPermutation& sp) {
    sp.validate(net.hidden_units);
    if (net.activation == ActivationKind::ReLU) {
        for (int s : sp.signs)
            if (s < 0)
                throw ValidationError(
                    "signed_permutation: sign flips change the map for ReLU networks; "
                    "only tanh admits them");
    }
    NetworkParams out = net;
    for (std::size_t j = 0; j < net.hidden_units; ++j) {
        std::size_t dest = sp.perm[j];
        double s = static_cast<double>(sp.signs[j]);
        out.alphas[dest] = s * net.alphas[j];
        out.gamma0s[dest] = s * net.gamma0s[j];
        for (std::size_t k = 0; k < net.input_dim; ++k) out.gammas(dest, k) = s * net.gammas(j, k);
    }
    return out;
}

/// Rescales every ReLU unit to a unit-magnitude output weight using positive
/// homogeneity: (alpha_j, gamma_j, gamma0_j) -> (sign(alpha_j), |alpha_j| gamma_j,
/// |alpha_j| gamma0_j). Units with alpha_j = 0 are zeroed entirely rather than
/// deleted, so the parameter shape is stable. alpha0 is left untouched.
inline NetworkParams canonicalize_relu(const NetworkParams& net) {
    if (net.activation != ActivationKind::ReLU)
        throw ValidationError("canonicalize_relu: network must use the ReLU activation");
    NetworkParams out = net;
    for (std::size_t j = 0; j < net.hidden_units; ++j) {
        double a = net.alphas[j];
        if (a == 0.0) {
            out.gamma0s[j] = 0.0;
            for (std::size_t k = 0; k < net.input_dim; ++k) out.gammas(j, k) = 0.0;
            continue;
        }
        double mag = std::abs(a);
        out.alphas[j] = a > 0.0 ? 1.0 : -1.0;
        out.gamma0s[j] = mag * net.gamma0s[j];
        for (std::size_t k = 0; k < net.input_dim; ++k) out.gammas(j, k) = mag * net.gammas(j, k);
    }
    return out;
}

/// True when every output weight is in {-1, 0, +1} and alpha0 = 0, i.e. the
/// network is in the normalized ReLU form.
inline bool is_canonical_relu(const NetworkParams& net) {
    if (net.activation != ActivationKind::ReLU) return false;
    if (net.alpha0 != 0.0) return false;
    for (double a : net.alphas)
        if (a != 0.0 && a != 1.0 && a != -1.0) return false;
    return true;
}

/// Outcome of the minimality check. condition = 0 means minimal; otherwise
/// condition in {1,2,3} names the first violated condition and unit_a/unit_b
/// carry the offending 1-based indices (unit_b only for condition 3).
struct MinimalityReport {
    bool minimal = true;
    int condition = 0;
    std::size_t unit_a = 0;
    std::size_t unit_b = 0;
    std::string description = "minimal";
};

/// Checks the three minimality conditions for a tanh network:
///   1. every hidden-weight vector gamma_j is nonzero,
///   2. the output-weight vector [alpha_1..alpha_r] is nonzero as a whole,
///   3. no two units have equal or opposite (gamma_j, gamma0_j) pairs.
/// Comparisons use the sup norm against tol. Condition 2 deliberately tests
/// the whole vector, not each entry.
inline MinimalityReport is_minimal_tanh(const NetworkParams& net, double tol = 0.0) {
    if (net.activation != ActivationKind::Tanh)
        throw ValidationError("is_minimal_tanh: network must use the tanh activation");
    if (tol < 0.0) throw ValidationError("is_minimal_tanh: tol must be nonnegative");

    const std::size_t r = net.hidden_units;
    const std::size_t d = net.input_dim;

    for (std::size_t j = 0; j < r; ++j) {
        if (max_abs(net.gammas.row(j)) <= tol) {
            MinimalityReport rep;
            rep.minimal = false;
            rep.condition = 1;
            rep.unit_a = j + 1;
            rep.description = "violation: condition 1 (" + std::to_string(j + 1) + ")";
            return rep;
        }
    }

    if (max_abs(std::span{net.alphas}) <= tol) {
        MinimalityReport rep;
        rep.minimal = false;
        rep.condition = 2;
        rep.description = "violation: condition 2";
        return rep;
    }

    for (std::size_t j1 = 0; j1 + 1 < r; ++j1) {
        for (std::size_t j2 = j1 + 1; j2 < r; ++j2) {
            double same = std::abs(net.gamma0s[j1] - net.gamma0s[j2]);
            double opposite = std::abs(net.gamma0s[j1] + net.gamma0s[j2]);
            for (std::size_t k = 0; k < d; ++k) {
                same = std::max(same, std::abs(net.gammas(j1, k) - net.gammas(j2, k)));
                opposite = std::max(opposite, std::abs(net.gammas(j1, k) + net.gammas(j2, k)));
            }
            if (same <= tol || opposite <= tol) {
                MinimalityReport rep;
                rep.minimal = false;
                rep.condition = 3;
                rep.unit_a = j1 + 1;
                rep.unit_b = j2 + 1;
                rep.description = "violation: condition 3 (" + std::to_string(j1 + 1) + "," +
                                  std::to_string(j2 + 1) + ")";
                return rep;
            }
        }
    }
    return MinimalityReport{};
}

// JSON round trip. Doubles are emitted with shortest-round-trip formatting,
// so serialize/parse is lossless for finite IEEE values.

inline void to_json(nlohmann::json& j, const NetworkParams& net) {
    j = nlohmann::json{{"activation", to_string(net.activation)},
                       {"alpha0", net.alpha0},
                       {"alphas", net.alphas},
                       {"gammas", net.gammas.data()},
                       {"gamma0s", net.gamma0s},
                       {"input_dim", net.input_dim},
                       {"hidden_units", net.hidden_units}};
}

inline void from_json(const nlohmann::json& j, NetworkParams& net) {
    net.activation = activation_from_string(j.at("activation").get<std::string>());
    net.alpha0 = j.at("alpha0").get<double>();
    net.alphas = j.at("alphas").get<Vector>();
    net.gamma0s = j.at("gamma0s").get<Vector>();
    net.input_dim = j.at("input_dim").get<std::size_t>();
    net.hidden_units = j.at("hidden_units").get<std::size_t>();
    Vector flat = j.at("gammas").get<Vector>();
    if (flat.size() != net.hidden_units * net.input_dim)
        throw DimensionError("NetworkParams.gammas (row-major)", net.hidden_units * net.input_dim,
                             flat.size());
    net.gammas = Matrix(net.hidden_units, net.input_dim);
    net.gammas.data() = std::move(flat);
    net.validate();
}

}  // namespace sievenet
