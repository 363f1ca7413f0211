#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sievenet/sievenet.hpp"
#include "test_helpers.hpp"

using namespace sievenet;
using test_helpers::random_matrix;
using test_helpers::random_net;

namespace {

bool params_equal(const NetworkParams& a, const NetworkParams& b) {
    if (a.alpha0 != b.alpha0) return false;
    for (std::size_t j = 0; j < a.hidden_units; ++j) {
        if (a.alphas[j] != b.alphas[j] || a.gamma0s[j] != b.gamma0s[j]) return false;
        for (std::size_t k = 0; k < a.input_dim; ++k)
            if (a.gammas(j, k) != b.gammas(j, k)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("SieveSpec validation") {
    CHECK_THROWS_AS((SieveSpec{0, 2.0, 1.0, 1}.validate()), ValidationError);
    CHECK_THROWS_AS((SieveSpec{1, 1.0, 1.0, 1}.validate()), ValidationError);  // V must exceed 1
    CHECK_THROWS_AS((SieveSpec{1, 2.0, 0.0, 1}.validate()), ValidationError);
    CHECK_NOTHROW((SieveSpec{1, 1.0001, 0.1, 1}.validate()));
}

TEST_CASE("constraint_residuals measures both excesses") {
    SieveSpec spec{3, 2.5, 2.0, 1};
    CHECK(constraint_residuals(NetworkParams::zeros(ActivationKind::Tanh, 3, 1), spec).feasible());

    NetworkParams net = NetworkParams::zeros(ActivationKind::Tanh, 3, 1);
    net.alphas = {0.0, 2.0, 1.0};  // alpha block sums to 3.0
    ConstraintResiduals res = constraint_residuals(net, spec);
    CHECK(res.alpha_excess == 0.5);
    CHECK(res.gamma_excess == 0.0);

    // boundary row admitted: |gamma0| + |gamma| = M exactly
    NetworkParams edge = NetworkParams::zeros(ActivationKind::Tanh, 3, 1);
    edge.gammas(0, 0) = 1.5;
    edge.gamma0s[0] = 0.5;
    CHECK(constraint_residuals(edge, spec).gamma_excess == 0.0);

    NetworkParams wrong_d = NetworkParams::zeros(ActivationKind::Tanh, 3, 2);
    CHECK_THROWS_AS(constraint_residuals(wrong_d, spec), DimensionError);
}

TEST_CASE("project_to_sieve rescales radially and is idempotent") {
    SieveSpec spec{2, 2.0, 5.0, 1};
    NetworkParams net = NetworkParams::zeros(ActivationKind::Tanh, 2, 1);
    net.alphas = {2.0, 2.0};
    NetworkParams proj = project_to_sieve(net, spec);
    CHECK(proj.alphas[0] == 1.0);
    CHECK(proj.alphas[1] == 1.0);

    RngStream rng(211);
    for (int trial = 0; trial < 100; ++trial) {
        SieveSpec s{1 + rng.below(5), 1.5 + rng.uniform01() * 3.0, 0.5 + rng.uniform01() * 3.0, 2};
        NetworkParams raw = random_net(ActivationKind::Tanh, s.r_n, 2, rng, 4.0);
        NetworkParams once = project_to_sieve(raw, s);
        CHECK(constraint_residuals(once, s).feasible());
        NetworkParams twice = project_to_sieve(once, s);
        CHECK(params_equal(once, twice));

        // feasible nets pass through untouched
        NetworkParams again = project_to_sieve(once, s);
        CHECK(params_equal(once, again));
    }
}

TEST_CASE("covering_bound_tanh reproduces the closed form") {
    SieveSpec spec{1, 2.0, 1.0, 1};
    // 4 log(2e * 4 * 4 / (1 * 1)), evaluated independently in long double
    CHECK(covering_bound_tanh(spec, 1.0) ==
          doctest::Approx(17.8629436111989).epsilon(1e-12));
    CHECK(covering_bound_tanh(spec, 2.0) ==
          doctest::Approx(15.0903548889591).epsilon(1e-12));

    CHECK(covering_bound_tanh(spec, 2.0) < covering_bound_tanh(spec, 1.0));
    SieveSpec doubled{2, 2.0, 1.0, 1};
    CHECK(covering_bound_tanh(doubled, 1.0) > covering_bound_tanh(spec, 1.0));
    CHECK_THROWS_AS(covering_bound_tanh(spec, 0.0), ValidationError);
}

TEST_CASE("entropy_integral_bound_tanh reproduces the closed form") {
    SieveSpec spec{1, 2.0, 1.0, 1};
    CHECK(entropy_constant_tanh(spec) == doctest::Approx(13.8629436111989).epsilon(1e-12));
    CHECK(entropy_integral_bound_tanh(spec) ==
          doctest::Approx(42.1243015637465).epsilon(1e-12));

    for (std::size_t r : {1, 2, 5, 16}) {
        SieveSpec a{r, 3.0, 1.0, 2}, b{2 * r, 3.0, 1.0, 2};
        CHECK(entropy_integral_bound_tanh(a) < entropy_integral_bound_tanh(b));
    }
}

TEST_CASE("entropy_integral_bound_relu reproduces the closed form and scales in M") {
    SieveSpec spec{1, 2.0, 1.0, 1};
    CHECK(entropy_constant_relu(spec) == doctest::Approx(22.7258872223978).epsilon(1e-12));
    CHECK(entropy_integral_bound_relu(spec) ==
          doctest::Approx(26.9671724716688).epsilon(1e-12));

    SieveSpec scaled{1, 2.0, 3.5, 1};
    CHECK(entropy_integral_bound_relu(scaled) == 3.5 * entropy_integral_bound_relu(spec));

    for (std::size_t r : {2, 4, 8}) {
        SieveSpec a{r, 2.0, 1.0, 1}, b{2 * r, 2.0, 1.0, 1};
        CHECK(entropy_integral_bound_relu(a) < entropy_integral_bound_relu(b));
    }
}

TEST_CASE("tanh entropy bound tracks r V^2 log(rV) within a recorded band") {
    // Band observed over this exact sweep; endpoints recorded, not prescribed.
    double lo = 1e300, hi = 0.0;
    for (std::size_t r = 1; r <= 64; r *= 2)
        for (double v = 2.0; v <= 1024.0; v *= 2.0)
            for (std::size_t d = 1; d <= 8; ++d) {
                SieveSpec spec{r, v, 1.0, d};
                double bound = entropy_integral_bound_tanh(spec);
                double ratio = bound * bound / (r * v * v * std::log(r * v));
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            }
    CHECK(lo >= 110.0);
    CHECK(hi <= 2280.0);
    CHECK(hi / lo <= 64.0);
}

TEST_CASE("ReLU entropy bound tracks r^3 M^2 log r within a recorded band") {
    double lo = 1e300, hi = 0.0;
    for (std::size_t r = 2; r <= 64; r *= 2)
        for (double m = 1.0; m <= 1024.0; m *= 2.0)
            for (std::size_t d = 1; d <= 8; ++d) {
                SieveSpec spec{r, 2.0, m, d};
                double bound = entropy_integral_bound_relu(spec);
                double denom = static_cast<double>(r) * r * r * m * m * std::log(double(r));
                double ratio = bound * bound / denom;
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            }
    CHECK(lo >= 265.0);
    CHECK(hi <= 4260.0);
}

TEST_CASE("check_rate_conditions passes a shrinking schedule") {
    RateCheckInput input;
    input.nu = 2.0;
    for (double n = 1e3; n <= 1e9 + 1; n *= 10.0) {
        double r = std::floor(std::pow(n, 0.25));
        input.rows.push_back({n, r, std::log(n), 1.0, 10.0 / n});
    }
    RateReport tanh_report = check_rate_conditions(input, ActivationKind::Tanh);
    CHECK(tanh_report.all_pass);
    for (const auto& cond : tanh_report.conditions) CHECK(cond.decreasing);

    // the ReLU quantity r^3 log r is floor-sensitive; feed the smooth schedule
    RateCheckInput smooth;
    smooth.nu = 2.0;
    for (double n = 1e3; n <= 1e9 + 1; n *= 10.0)
        smooth.rows.push_back({n, std::pow(n, 0.25), std::log(n), 1.0, 10.0 / n});
    RateReport relu_report = check_rate_conditions(smooth, ActivationKind::ReLU);
    CHECK(relu_report.all_pass);
}

TEST_CASE("check_rate_conditions flags growth") {
    // r_n = n with V fixed: the entropy quantity grows
    RateCheckInput runaway;
    runaway.nu = 2.0;
    for (double n : {100.0, 1000.0, 10000.0, 100000.0})
        runaway.rows.push_back({n, n, 1.5, 1.0, 10.0 / n});
    RateReport rep = check_rate_conditions(runaway, ActivationKind::Tanh);
    CHECK_FALSE(rep.conditions[0].decreasing);
    CHECK_FALSE(rep.all_pass);

    // constant lambda with growing r_n: the lambda condition fails
    RateCheckInput flat;
    flat.nu = 2.0;
    for (double n : {100.0, 1000.0, 10000.0, 100000.0})
        flat.rows.push_back({n, std::sqrt(n), 2.0, 1.0, 0.1});
    RateReport rep2 = check_rate_conditions(flat, ActivationKind::Tanh);
    CHECK_FALSE(rep2.conditions[1].decreasing);

    // validation
    RateCheckInput tiny;
    tiny.rows = {{1.0, 1, 2, 1, 0.1}, {2.0, 1, 2, 1, 0.1}};
    CHECK_THROWS_AS(check_rate_conditions(tiny, ActivationKind::Tanh), ValidationError);
    RateCheckInput bad_nu = flat;
    bad_nu.nu = 1.0;
    CHECK_THROWS_AS(check_rate_conditions(bad_nu, ActivationKind::Tanh), ValidationError);
}

TEST_CASE("rate CSV round trip") {
    std::string csv = "n,r_n,V_n,M_n,lambda_n\n100,2,3,1,0.1\n1000,4,5,1,0.01\n10000,8,7,1,0.001\n";
    std::istringstream in(csv);
    std::vector<RateRow> rows = parse_rate_csv(in);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].n == 1000.0);
    CHECK(rows[1].r_n == 4.0);
    CHECK(rows[2].lambda_n == 0.001);

    std::istringstream bad("sample,size\n1,2\n");
    CHECK_THROWS_AS(parse_rate_csv(bad), ValidationError);

    std::istringstream bad_number("n,r_n,V_n,M_n,lambda_n\n100,2,oops,1,0.1\n");
    CHECK_THROWS_AS(parse_rate_csv(bad_number), ValidationError);

    RateCheckInput input{rows, 2.0};
    RateReport report = check_rate_conditions(input, ActivationKind::Tanh);
    std::string text = format_rate_report(report);
    CHECK(text.find("asymptotic proxy") != std::string::npos);
    CHECK(text.find("entropy") != std::string::npos);
}

TEST_CASE("sampled nets always land inside the sieve") {
    RngStream rng(223);
    for (int trial = 0; trial < 50; ++trial) {
        SieveSpec spec{1 + rng.below(8), 1.2 + rng.uniform01(), 0.3 + rng.uniform01(), 1};
        NetworkParams net = sample_net_in_sieve(spec, ActivationKind::Tanh, rng);
        CHECK(constraint_residuals(net, spec).feasible());
    }
}

TEST_CASE("multiplier process estimate is exactly zero on the reference net") {
    SieveSpec spec{3, 2.0, 2.0, 1};
    RngStream rng(227);
    NetworkParams pi = sample_net_in_sieve(spec, ActivationKind::Tanh, rng);
    Matrix X = random_matrix(32, 1, rng);
    for (std::uint64_t seed : {1ULL, 7ULL, 991ULL})
        CHECK(multiplier_process_estimate_over_nets({pi}, pi, X, 25, seed) == 0.0);
}

TEST_CASE("multiplier process estimate grows with net_count and respects the bound") {
    SieveSpec spec{2, 2.0, 2.0, 1};
    RngStream rng(229);
    NetworkParams pi = sample_net_in_sieve(spec, ActivationKind::Tanh, rng);
    Matrix X = random_matrix(32, 1, rng);

    // nets are drawn per-index, so a larger net_count extends the same sample
    double small = multiplier_process_estimate(spec, pi, X, 10, 40, 5);
    double large = multiplier_process_estimate(spec, pi, X, 50, 40, 5);
    CHECK(small <= large);

    CHECK(large <= entropy_integral_bound_tanh(spec));
}
