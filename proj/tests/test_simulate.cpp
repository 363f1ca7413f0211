#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sievenet/sievenet.hpp"
#include "test_helpers.hpp"

using namespace sievenet;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("sievenet_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Small fast grid used by the filesystem-oriented tests.
GridSpec tiny_grid() {
    GridSpec grid;
    grid.f0_tags = {TrueFunctionTag::TwoUnitNet, TrueFunctionTag::Trig};
    grid.activations = {ActivationKind::Tanh, ActivationKind::ReLU};
    grid.sample_sizes = {30, 60};
    grid.hidden_units = {3};
    grid.table_hidden_units = 3;
    grid.seeds = 2;
    grid.iterations = 40;
    grid.record_every = 10;
    grid.threads = 2;
    return grid;
}

}  // namespace

TEST_CASE("true functions evaluate their closed forms") {
    TrueFunction trig = TrueFunction::trig();
    CHECK(trig.eval(0.0) == doctest::Approx(0.180100768622713).epsilon(1e-12));

    TrueFunction cx = TrueFunction::complex_fn();
    CHECK(cx.eval(0.0) == 1.0);  // sin 0 + exp 0

    TrueFunction two = TrueFunction::two_unit(ActivationKind::Tanh);
    Vector x{0.7};
    CHECK(two.eval(0.7) == forward(*two.params, x));
    CHECK(two.params->hidden_units == 2);
}

TEST_CASE("generate_dataset is seeded, ranged and self-consistent") {
    SimConfig config;
    config.f0 = TrueFunction::trig();
    config.n = 500;
    config.seed = 99;

    Dataset a = generate_dataset(config);
    Dataset b = generate_dataset(config);
    REQUIRE(a.y.size() == 500);
    for (std::size_t i = 0; i < config.n; ++i) {
        CHECK(a.x(i, 0) >= -2.0);
        CHECK(a.x(i, 0) <= 2.0);
        CHECK(a.y[i] == a.f0_values[i] + a.eps[i]);  // bitwise by construction
        CHECK(a.x(i, 0) == b.x(i, 0));
        CHECK(a.y[i] == b.y[i]);
    }

    config.noise_sd = 0.0;
    Dataset clean = generate_dataset(config);
    for (std::size_t i = 0; i < config.n; ++i) CHECK(clean.y[i] == clean.f0_values[i]);
}

TEST_CASE("noise mean concentrates at the CLT rate") {
    SimConfig config;
    config.f0 = TrueFunction::trig();
    config.n = 1000000;
    config.seed = 4242;
    Dataset ds = generate_dataset(config);
    double mean = 0.0;
    for (double e : ds.eps) mean += e;
    mean /= static_cast<double>(config.n);
    CHECK(std::abs(mean) <= 3.0 * 0.7 / std::sqrt(1e6));
}

TEST_CASE("empirical_error matches its definition") {
    TrueFunction f0 = TrueFunction::two_unit(ActivationKind::Tanh);
    RngStream rng(401);
    Matrix X = test_helpers::random_matrix(50, 1, rng);
    CHECK(empirical_error(*f0.params, f0, X) == 0.0);

    TrueFunction trig = TrueFunction::trig();
    NetworkParams zero = NetworkParams::zeros(ActivationKind::Tanh, 2, 1);
    double expected = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        double t = trig.eval(X(i, 0));
        expected += t * t;
    }
    expected /= static_cast<double>(X.rows());
    CHECK(empirical_error(zero, trig, X) == doctest::Approx(expected).epsilon(1e-15));

    // permutation invariance of the average
    NetworkParams net = test_helpers::random_net(ActivationKind::Tanh, 3, 1, rng);
    Matrix reversed(X.rows(), 1);
    for (std::size_t i = 0; i < X.rows(); ++i) reversed(i, 0) = X(X.rows() - 1 - i, 0);
    CHECK(empirical_error(net, trig, X) ==
          doctest::Approx(empirical_error(net, trig, reversed)).epsilon(1e-12));
}

TEST_CASE("a noiseless realizable cell reaches the est_error target") {
    GridSpec grid;
    grid.f0_tags = {TrueFunctionTag::TwoUnitNet};
    grid.activations = {ActivationKind::Tanh};
    grid.sample_sizes = {100};
    grid.hidden_units = {2};
    grid.table_hidden_units = 2;
    grid.seeds = 1;
    grid.noise_sd = 0.0;
    grid.lambda_base = 0.0;
    grid.iterations = 20000;
    ExperimentResult result = run_grid(grid);
    REQUIRE(result.cells.size() == 1);
    CHECK_FALSE(result.cells[0].diverged);
    CHECK(result.cells[0].est_error <= 1e-3);
}

TEST_CASE("run_grid resumes from stored cells with byte-identical outputs") {
    GridSpec grid = tiny_grid();
    TempDir full("full"), resumed("resumed");

    run_simulation(grid, full.path.string(), true);

    // pre-seed the resumed directory with half of the finished cells
    fs::create_directories(resumed.path / "cells");
    std::size_t copied = 0;
    for (const auto& entry : fs::directory_iterator(full.path / "cells")) {
        if (++copied % 2 == 0) continue;
        fs::copy_file(entry.path(), resumed.path / "cells" / entry.path().filename());
    }
    run_simulation(grid, resumed.path.string(), true);

    for (const char* rel : {"tables/tanh.csv", "tables/relu.csv", "manifest.json",
                            "plots/two_unit_net_tanh.csv", "plots/trig_relu.csv",
                            "plots/two_unit_net_relu.svg"})
        CHECK(slurp(full.path / rel) == slurp(resumed.path / rel));
}

TEST_CASE("emit_tables lays out one row per sample size") {
    CHECK_THROWS_AS(emit_tables(ExperimentResult{}, "/tmp"), ValidationError);

    GridSpec grid;
    grid.f0_tags = {TrueFunctionTag::TwoUnitNet, TrueFunctionTag::Trig, TrueFunctionTag::Complex};
    grid.activations = {ActivationKind::Tanh};
    grid.sample_sizes = {20, 30, 40, 50, 60};
    grid.hidden_units = {2};
    grid.table_hidden_units = 2;
    grid.seeds = 1;
    grid.iterations = 5;
    grid.threads = 2;
    TempDir dir("tables");
    ExperimentResult result = run_grid(grid);
    emit_tables(result, dir.path.string());

    std::istringstream in(slurp(dir.path / "tables" / "tanh.csv"));
    std::string line;
    std::size_t data_rows = 0, comment_rows = 0;
    std::string header;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            ++comment_rows;
            continue;
        }
        if (header.empty()) {
            header = line;
            continue;
        }
        ++data_rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 6);  // n + 3 pairs
        CHECK(line.find("E") != std::string::npos);             // scientific notation
    }
    CHECK(comment_rows >= 1);  // the pinned two-unit weights ride along
    CHECK(data_rows == 5);
    CHECK(header ==
          "n,two_unit_net_est_error,two_unit_net_lsq_error,trig_est_error,trig_lsq_error,"
          "complex_est_error,complex_lsq_error");
}

TEST_CASE("emit_plot_data writes the 1001-point grid and flags missing cells") {
    GridSpec grid = tiny_grid();
    grid.f0_tags = {TrueFunctionTag::Trig};
    grid.activations = {ActivationKind::Tanh};
    TempDir dir("plots");
    ExperimentResult result = run_grid(grid);
    emit_plot_data(result, TrueFunctionTag::Trig, ActivationKind::Tanh, dir.path.string(), true);

    std::istringstream in(slurp(dir.path / "plots" / "trig_tanh.csv"));
    std::string line, header;
    std::vector<std::string> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header.empty())
            header = line;
        else
            rows.push_back(line);
    }
    CHECK(header == "x,f0,fhat_n30,fhat_n60");
    REQUIRE(rows.size() == 1001);
    CHECK(rows.front().substr(0, 3) == "-2,");
    CHECK(rows.back().substr(0, 2) == "2,");
    // f0 at x = 0 sits on row 500 of the inclusive grid
    std::istringstream mid(rows[500]);
    std::string x_field, f0_field;
    std::getline(mid, x_field, ',');
    std::getline(mid, f0_field, ',');
    CHECK(std::stod(x_field) == 0.0);
    CHECK(std::stod(f0_field) == doctest::Approx(0.180100768622713).epsilon(1e-9));

    CHECK(slurp(dir.path / "plots" / "trig_tanh.svg").find("<svg") == 0);

    CHECK_THROWS_WITH_AS(
        emit_plot_data(result, TrueFunctionTag::Complex, ActivationKind::Tanh, dir.path.string()),
        doctest::Contains("complex_tanh_n00030_h003_s00"), ValidationError);
}

TEST_CASE("cell JSON round trips and audits cleanly") {
    GridSpec grid = tiny_grid();
    grid.f0_tags = {TrueFunctionTag::TwoUnitNet};
    grid.activations = {ActivationKind::Tanh};
    grid.sample_sizes = {50};
    grid.seeds = 1;
    grid.iterations = 2000;
    TempDir dir("cells");
    ExperimentResult result = run_grid(grid, dir.path.string());
    REQUIRE(result.cells.size() == 1);
    const CellResult& cell = result.cells[0];

    nlohmann::json j = cell;
    CellResult back = nlohmann::json::parse(j.dump()).get<CellResult>();
    CHECK(back.id == cell.id);
    CHECK(back.est_error == cell.est_error);
    CHECK(back.fit.empirical_risk == cell.fit.empirical_risk);

    AuditReport audit = audit_cell(cell);
    CHECK_FALSE(audit.pi_approximate);  // exact padded two-unit target
    CHECK(audit.inequality_holds);
    CHECK(audit.residual <= 1e-9);

    fs::path cell_path = dir.path / "cells" / (cell.id + ".json");
    AuditReport from_file = audit_cell_file(cell_path.string());
    CHECK(from_file.lhs == audit.lhs);
}

TEST_CASE("audit of a non-network target uses an approximate projection") {
    GridSpec grid = tiny_grid();
    grid.f0_tags = {TrueFunctionTag::Trig};
    grid.activations = {ActivationKind::Tanh};
    grid.sample_sizes = {40};
    grid.seeds = 1;
    grid.iterations = 300;
    ExperimentResult result = run_grid(grid);
    AuditReport audit = audit_cell(result.cells[0]);
    CHECK(audit.pi_approximate);
    CHECK(std::isfinite(audit.residual));
}

TEST_CASE("cell divergence is recorded without sinking the grid") {
    GridSpec grid = tiny_grid();
    grid.f0_tags = {TrueFunctionTag::Trig};
    grid.activations = {ActivationKind::Tanh};
    grid.sample_sizes = {20};
    grid.seeds = 1;
    grid.noise_sd = 1e7;  // initial objective blows past the 1e12 divergence gate
    ExperimentResult result = run_grid(grid);
    REQUIRE(result.cells.size() == 1);
    CHECK(result.cells[0].diverged);
    CHECK(result.cells[0].error.find("divergent") != std::string::npos);
    CHECK(result.cells[0].est_error == -1.0);

    CHECK_THROWS_AS(audit_cell(result.cells[0]), ValidationError);
}

TEST_CASE("manifest records the grid and code version") {
    GridSpec grid = tiny_grid();
    grid.f0_tags = {TrueFunctionTag::Trig};
    grid.activations = {ActivationKind::Tanh};
    grid.sample_sizes = {30};
    grid.seeds = 1;
    grid.iterations = 10;
    TempDir dir("manifest");
    run_simulation(grid, dir.path.string());

    nlohmann::json manifest = nlohmann::json::parse(slurp(dir.path / "manifest.json"));
    CHECK(manifest.at("code_version").get<std::string>() == kVersion);
    GridSpec loaded = manifest.at("grid").get<GridSpec>();
    CHECK(loaded.sample_sizes == grid.sample_sizes);
    CHECK(loaded.base_seed == grid.base_seed);

    ExperimentResult reloaded = load_results(dir.path.string());
    CHECK(reloaded.cells.size() == 1);
    CHECK(reloaded.cells[0].id == cell_id(TrueFunctionTag::Trig, ActivationKind::Tanh, 30, 3, 0));
}
