#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sievenet/errors.hpp"
#include "sievenet/linalg.hpp"
#include "sievenet/model.hpp"
#include "sievenet/penalty.hpp"
#include "sievenet/rng.hpp"
#include "sievenet/sieve.hpp"
#include "sievenet/trainer.hpp"
#include "sievenet/version.hpp"

namespace sievenet {

enum class TrueFunctionTag { TwoUnitNet, Trig, Complex };

inline std::string to_string(TrueFunctionTag t) {
    switch (t) {
        case TrueFunctionTag::TwoUnitNet: return "two_unit_net";
        case TrueFunctionTag::Trig: return "trig";
        default: return "complex";
    }
}

inline TrueFunctionTag f0_from_string(const std::string& s) {
    if (s == "two_unit_net") return TrueFunctionTag::TwoUnitNet;
    if (s == "trig") return TrueFunctionTag::Trig;
    if (s == "complex") return TrueFunctionTag::Complex;
    throw ValidationError("unknown true function '" + s +
                          "' (expected two_unit_net, trig or complex)");
}

/// Ground-truth regression function. Trig is sin(pi x / 3) + cos(pi x / 4 + 1) / 3,
/// Complex is sin(x) + exp(-4 x^2), TwoUnitNet evaluates an embedded two-unit
/// network whose activation matches the experiment.
struct TrueFunction {
    TrueFunctionTag tag = TrueFunctionTag::Trig;
    std::optional<NetworkParams> params;  // set iff tag == TwoUnitNet

    /// The fixed two-unit target used throughout the experiments:
    /// alpha0 = 0, alphas = (1.5, -1), gammas = (2, -1), gamma0s = (0.5, 1).
    /// The weights are pinned here and echoed in every output header so that
    /// runs stay comparable.
    static TrueFunction two_unit(ActivationKind activation) {
        NetworkParams net = NetworkParams::zeros(activation, 2, 1);
        net.alphas = {1.5, -1.0};
        net.gammas(0, 0) = 2.0;
        net.gammas(1, 0) = -1.0;
        net.gamma0s = {0.5, 1.0};
        TrueFunction f;
        f.tag = TrueFunctionTag::TwoUnitNet;
        f.params = std::move(net);
        return f;
    }

    static TrueFunction trig() { return TrueFunction{TrueFunctionTag::Trig, std::nullopt}; }
    static TrueFunction complex_fn() { return TrueFunction{TrueFunctionTag::Complex, std::nullopt}; }

    /// Builds the tagged function, embedding the two-unit target when needed.
    static TrueFunction make(TrueFunctionTag tag, ActivationKind activation) {
        if (tag == TrueFunctionTag::TwoUnitNet) return two_unit(activation);
        return TrueFunction{tag, std::nullopt};
    }

    double eval(double x) const {
        switch (tag) {
            case TrueFunctionTag::Trig:
                return std::sin(std::numbers::pi * x / 3.0) +
                       std::cos(std::numbers::pi * x / 4.0 + 1.0) / 3.0;
            case TrueFunctionTag::Complex:
                return std::sin(x) + std::exp(-4.0 * x * x);
            default: {
                if (!params) throw ValidationError("TrueFunction: two_unit_net has no parameters");
                Vector xv{x};
                return forward(*params, xv);
            }
        }
    }

    Vector eval_batch(const Matrix& X) const {
        Vector out(X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i) out[i] = eval(X(i, 0));
        return out;
    }
};

/// One simulated regression problem: y_i = f0(x_i) + eps_i.
struct SimConfig {
    TrueFunction f0;
    std::size_t n = 100;
    double noise_sd = 0.7;
    double x_low = -2.0;
    double x_high = 2.0;
    std::uint64_t seed = 0;
    TrainConfig train;

    void validate() const {
        if (n == 0) throw ValidationError("SimConfig: n must be >= 1");
        if (!(noise_sd >= 0.0)) throw ValidationError("SimConfig: noise_sd must be >= 0");
        if (!(x_low < x_high)) throw ValidationError("SimConfig: x_low must be below x_high");
    }
};

/// Design matrix, responses, and the generation byproducts the audits need.
/// y = f0_values + eps holds bitwise by construction.
struct Dataset {
    Matrix x;
    Vector y;
    Vector f0_values;
    Vector eps;
    std::uint64_t seed = 0;
};

/// Draws X uniform on [x_low, x_high] from the stream (seed, "data/x") and
/// noise from (seed, "data/eps") via the Box-Muller transform, then sets
/// y = f0(x) + eps.
inline Dataset generate_dataset(const SimConfig& config) {
    config.validate();
    Dataset ds;
    ds.seed = config.seed;
    ds.x = Matrix(config.n, 1);
    RngStream xs(config.seed, derive_stream(config.seed, "data/x"));
    for (std::size_t i = 0; i < config.n; ++i) ds.x(i, 0) = xs.uniform(config.x_low, config.x_high);

    ds.f0_values = config.f0.eval_batch(ds.x);
    ds.eps.resize(config.n);
    RngStream es(config.seed, derive_stream(config.seed, "data/eps"));
    for (std::size_t i = 0; i < config.n; ++i) ds.eps[i] = es.normal(0.0, config.noise_sd);

    ds.y.resize(config.n);
    for (std::size_t i = 0; i < config.n; ++i) ds.y[i] = ds.f0_values[i] + ds.eps[i];
    return ds;
}

/// ||fhat - f0||_n^2 = (1/n) sum (fhat(x_i) - f0(x_i))^2.
inline double empirical_error(const NetworkParams& net, const TrueFunction& f0, const Matrix& X) {
    if (X.rows() == 0) throw ValidationError("empirical_error: sample size must be >= 1");
    Vector fhat = forward_batch(net, X);
    Vector truth = f0.eval_batch(X);
    double s = 0.0;
    for (std::size_t i = 0; i < fhat.size(); ++i) {
        double d = fhat[i] - truth[i];
        s += d * d;
    }
    return s / static_cast<double>(fhat.size());
}

// --- experiment grid -----------------------------------------------------------

/// Full factorial experiment definition plus shared training settings.
struct GridSpec {
    std::vector<TrueFunctionTag> f0_tags{TrueFunctionTag::TwoUnitNet, TrueFunctionTag::Trig,
                                         TrueFunctionTag::Complex};
    std::vector<ActivationKind> activations{ActivationKind::Tanh, ActivationKind::ReLU};
    std::vector<std::size_t> sample_sizes{100, 200, 500, 1000, 2000};
    std::vector<std::size_t> hidden_units{10};
    std::size_t seeds = 5;
    std::uint64_t base_seed = 20260808;

    double noise_sd = 0.7;
    double x_low = -2.0;
    double x_high = 2.0;

    std::size_t iterations = 20000;
    double learning_rate = 1e-2;
    double init_scale = 0.5;
    double lambda_base = 10.0;
    bool enforce_sieve = false;
    std::size_t record_every = 500;
    PenaltyKind relu_penalty = PenaltyKind::GradientSparsity;
    double v_n = 1e6;  // generous budgets; binding only with enforce_sieve
    double m_n = 1e6;

    std::size_t table_hidden_units = 10;  // headline width for tables and plots
    std::size_t threads = 0;              // 0 = hardware concurrency

    void validate() const {
        if (f0_tags.empty() || activations.empty() || sample_sizes.empty() || hidden_units.empty())
            throw ValidationError("GridSpec: every grid axis must be nonempty");
        if (seeds == 0) throw ValidationError("GridSpec: seeds must be >= 1");
        if (!(noise_sd >= 0.0)) throw ValidationError("GridSpec: noise_sd must be >= 0");
        if (!(x_low < x_high)) throw ValidationError("GridSpec: x_low must be below x_high");
        if (iterations == 0) throw ValidationError("GridSpec: iterations must be >= 1");
    }

    /// Width used for tables/plots: the configured headline width when the
    /// sweep contains it, otherwise the first width in the sweep.
    std::size_t headline_width() const {
        for (std::size_t h : hidden_units)
            if (h == table_hidden_units) return h;
        return hidden_units.front();
    }
};

inline void to_json(nlohmann::json& j, const GridSpec& g) {
    std::vector<std::string> f0s, acts;
    for (auto t : g.f0_tags) f0s.push_back(to_string(t));
    for (auto a : g.activations) acts.push_back(to_string(a));
    j = nlohmann::json{{"f0", f0s},
                       {"activations", acts},
                       {"sample_sizes", g.sample_sizes},
                       {"hidden_units", g.hidden_units},
                       {"seeds", g.seeds},
                       {"base_seed", g.base_seed},
                       {"noise_sd", g.noise_sd},
                       {"x_low", g.x_low},
                       {"x_high", g.x_high},
                       {"train",
                        {{"iterations", g.iterations},
                         {"learning_rate", g.learning_rate},
                         {"init_scale", g.init_scale},
                         {"lambda_base", g.lambda_base},
                         {"enforce_sieve", g.enforce_sieve},
                         {"record_every", g.record_every},
                         {"relu_penalty", to_string(g.relu_penalty)},
                         {"v_n", g.v_n},
                         {"m_n", g.m_n}}},
                       {"table_hidden_units", g.table_hidden_units},
                       {"threads", g.threads}};
}

inline void from_json(const nlohmann::json& j, GridSpec& g) {
    g = GridSpec{};
    if (j.contains("f0")) {
        g.f0_tags.clear();
        for (const auto& s : j.at("f0")) g.f0_tags.push_back(f0_from_string(s.get<std::string>()));
    }
    if (j.contains("activations")) {
        g.activations.clear();
        for (const auto& s : j.at("activations"))
            g.activations.push_back(activation_from_string(s.get<std::string>()));
    }
    if (j.contains("sample_sizes")) g.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
    if (j.contains("hidden_units")) g.hidden_units = j.at("hidden_units").get<std::vector<std::size_t>>();
    g.seeds = j.value("seeds", g.seeds);
    g.base_seed = j.value("base_seed", g.base_seed);
    g.noise_sd = j.value("noise_sd", g.noise_sd);
    g.x_low = j.value("x_low", g.x_low);
    g.x_high = j.value("x_high", g.x_high);
    if (j.contains("train")) {
        const auto& t = j.at("train");
        g.iterations = t.value("iterations", g.iterations);
        g.learning_rate = t.value("learning_rate", g.learning_rate);
        g.init_scale = t.value("init_scale", g.init_scale);
        g.lambda_base = t.value("lambda_base", g.lambda_base);
        g.enforce_sieve = t.value("enforce_sieve", g.enforce_sieve);
        g.record_every = t.value("record_every", g.record_every);
        if (t.contains("relu_penalty"))
            g.relu_penalty = penalty_kind_from_string(t.at("relu_penalty").get<std::string>());
        g.v_n = t.value("v_n", g.v_n);
        g.m_n = t.value("m_n", g.m_n);
    }
    g.table_hidden_units = j.value("table_hidden_units", g.table_hidden_units);
    g.threads = j.value("threads", g.threads);
    g.validate();
}

/// Stable cell identity; doubles as the stream-split label for seeds.
inline std::string cell_id(TrueFunctionTag f0, ActivationKind act, std::size_t n,
                           std::size_t hidden, std::size_t seed_index) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s_%s_n%05zu_h%03zu_s%02zu", to_string(f0).c_str(),
                  to_string(act).c_str(), n, hidden, seed_index);
    return buf;
}

/// One grid cell: the trained fit plus the two reported metrics.
struct CellResult {
    std::string id;
    TrueFunctionTag f0_tag = TrueFunctionTag::Trig;
    ActivationKind activation = ActivationKind::Tanh;
    std::size_t n = 0;
    std::size_t hidden = 0;
    std::size_t seed_index = 0;
    std::uint64_t data_seed = 0;
    std::uint64_t train_seed = 0;
    double noise_sd = 0.7;
    double x_low = -2.0;
    double x_high = 2.0;
    double est_error = -1.0;  // ||fhat - f0||_n^2, -1 when diverged
    double lsq_error = -1.0;  // Q_n(fhat), -1 when diverged
    bool diverged = false;
    std::string error;
    FitReport fit;
};

inline void to_json(nlohmann::json& j, const CellResult& c) {
    j = nlohmann::json{{"id", c.id},
                       {"f0", to_string(c.f0_tag)},
                       {"activation", to_string(c.activation)},
                       {"n", c.n},
                       {"hidden_units", c.hidden},
                       {"seed_index", c.seed_index},
                       {"data_seed", c.data_seed},
                       {"train_seed", c.train_seed},
                       {"noise_sd", c.noise_sd},
                       {"x_low", c.x_low},
                       {"x_high", c.x_high},
                       {"est_error", c.est_error},
                       {"lsq_error", c.lsq_error},
                       {"diverged", c.diverged},
                       {"error", c.error},
                       {"fit", c.fit}};
}

inline void from_json(const nlohmann::json& j, CellResult& c) {
    c.id = j.at("id").get<std::string>();
    c.f0_tag = f0_from_string(j.at("f0").get<std::string>());
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.n = j.at("n").get<std::size_t>();
    c.hidden = j.at("hidden_units").get<std::size_t>();
    c.seed_index = j.at("seed_index").get<std::size_t>();
    c.data_seed = j.at("data_seed").get<std::uint64_t>();
    c.train_seed = j.at("train_seed").get<std::uint64_t>();
    c.noise_sd = j.at("noise_sd").get<double>();
    c.x_low = j.at("x_low").get<double>();
    c.x_high = j.at("x_high").get<double>();
    c.est_error = j.at("est_error").get<double>();
    c.lsq_error = j.at("lsq_error").get<double>();
    c.diverged = j.at("diverged").get<bool>();
    c.error = j.at("error").get<std::string>();
    c.fit = j.at("fit").get<FitReport>();
}

struct ExperimentResult {
    GridSpec grid;
    std::vector<CellResult> cells;

    const CellResult* find(const std::string& id) const {
        for (const auto& c : cells)
            if (c.id == id) return &c;
        return nullptr;
    }
};

/// Training configuration for one cell. tanh cells use the parameter L1
/// penalty; ReLU cells use the grid's ReLU penalty choice (gradient sparsity
/// unless overridden).
inline TrainConfig cell_train_config(const GridSpec& grid, ActivationKind activation,
                                     std::size_t hidden, std::uint64_t train_seed) {
    TrainConfig config;
    config.activation = activation;
    config.iterations = grid.iterations;
    config.learning_rate = grid.learning_rate;
    config.penalty.kind =
        activation == ActivationKind::Tanh ? PenaltyKind::ParameterL1 : grid.relu_penalty;
    config.penalty.lambda_base = grid.lambda_base;
    config.sieve = SieveSpec{hidden, grid.v_n, grid.m_n, 1};
    config.init_scale = grid.init_scale;
    config.seed = train_seed;
    config.enforce_sieve = grid.enforce_sieve;
    config.record_every = grid.record_every;
    return config;
}

/// Runs a single cell from scratch: deterministic given the grid definition
/// (seeds are split from base_seed by the cell id).
inline CellResult run_cell(const GridSpec& grid, TrueFunctionTag f0_tag, ActivationKind activation,
                           std::size_t n, std::size_t hidden, std::size_t seed_index) {
    CellResult cell;
    cell.id = cell_id(f0_tag, activation, n, hidden, seed_index);
    cell.f0_tag = f0_tag;
    cell.activation = activation;
    cell.n = n;
    cell.hidden = hidden;
    cell.seed_index = seed_index;
    cell.data_seed = derive_stream(grid.base_seed, cell.id + "/data");
    cell.train_seed = derive_stream(grid.base_seed, cell.id + "/init");
    cell.noise_sd = grid.noise_sd;
    cell.x_low = grid.x_low;
    cell.x_high = grid.x_high;

    SimConfig sim;
    sim.f0 = TrueFunction::make(f0_tag, activation);
    sim.n = n;
    sim.noise_sd = grid.noise_sd;
    sim.x_low = grid.x_low;
    sim.x_high = grid.x_high;
    sim.seed = cell.data_seed;
    sim.train = cell_train_config(grid, activation, hidden, cell.train_seed);

    Dataset ds = generate_dataset(sim);
    try {
        cell.fit = fit(ds.x, ds.y, sim.train);
        cell.est_error = empirical_error(cell.fit.final_params, sim.f0, ds.x);
        cell.lsq_error = cell.fit.empirical_risk;
    } catch (const DivergenceError& e) {
        cell.diverged = true;
        cell.error = e.what();
    }
    return cell;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open file for writing", path.string());
    out << text;
    if (!out) throw IoError("write failed", path.string());
}

}  // namespace detail

/// Runs every cell of the grid. Cells are independent jobs pulled off a
/// shared queue by a small worker pool, and every file write is funneled
/// through one mutex. Cells already present under out_dir/cells are loaded
/// instead of re-run, so interrupted grids resume where they stopped.
inline ExperimentResult run_grid(const GridSpec& grid,
                                 const std::optional<std::string>& out_dir = std::nullopt) {
    grid.validate();

    struct Job {
        TrueFunctionTag f0;
        ActivationKind act;
        std::size_t n, hidden, seed_index;
        std::string id;
    };
    std::vector<Job> jobs;
    for (TrueFunctionTag f0 : grid.f0_tags)
        for (ActivationKind act : grid.activations)
            for (std::size_t n : grid.sample_sizes)
                for (std::size_t hidden : grid.hidden_units)
                    for (std::size_t s = 0; s < grid.seeds; ++s)
                        jobs.push_back({f0, act, n, hidden, s, cell_id(f0, act, n, hidden, s)});

    std::filesystem::path cells_dir;
    if (out_dir) {
        cells_dir = std::filesystem::path(*out_dir) / "cells";
        std::filesystem::create_directories(cells_dir);
    }

    std::vector<CellResult> results(jobs.size());
    std::vector<char> loaded(jobs.size(), 0);
    if (out_dir) {
        for (std::size_t k = 0; k < jobs.size(); ++k) {
            auto path = cells_dir / (jobs[k].id + ".json");
            if (!std::filesystem::exists(path)) continue;
            try {
                std::ifstream in(path);
                nlohmann::json j = nlohmann::json::parse(in);
                results[k] = j.get<CellResult>();
                loaded[k] = 1;
            } catch (...) {
                // unreadable cell file: recompute and overwrite
            }
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex write_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t k = next.fetch_add(1);
            if (k >= jobs.size()) return;
            if (loaded[k]) continue;
            const Job& job = jobs[k];
            CellResult cell;
            try {
                cell = run_cell(grid, job.f0, job.act, job.n, job.hidden, job.seed_index);
            } catch (const std::exception& e) {
                cell.id = job.id;
                cell.f0_tag = job.f0;
                cell.activation = job.act;
                cell.n = job.n;
                cell.hidden = job.hidden;
                cell.seed_index = job.seed_index;
                cell.diverged = true;
                cell.error = e.what();
            }
            if (out_dir) {
                try {
                    nlohmann::json j = cell;
                    std::lock_guard<std::mutex> lock(write_mutex);
                    detail::write_text_file(cells_dir / (job.id + ".json"), j.dump(1));
                } catch (const std::exception& e) {
                    // keep the in-memory result; the cell is simply not resumable
                    cell.error += std::string(cell.error.empty() ? "" : "; ") +
                                  "cell write failed: " + e.what();
                }
            }
            results[k] = std::move(cell);
        }
    };

    std::size_t thread_count = grid.threads ? grid.threads : std::thread::hardware_concurrency();
    thread_count = std::max<std::size_t>(1, std::min(thread_count, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < thread_count; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ExperimentResult result;
    result.grid = grid;
    result.cells = std::move(results);
    return result;
}

namespace detail {

inline std::string two_unit_header(ActivationKind act) {
    std::ostringstream out;
    out << "# two_unit_net target: alpha0=0, alphas=[1.5,-1], gammas=[2,-1], gamma0s=[0.5,1], "
           "activation="
        << to_string(act) << "\n";
    return out.str();
}

/// Mean over non-diverged seeds; nullopt when every seed diverged.
inline std::optional<double> seed_mean(const ExperimentResult& result, TrueFunctionTag f0,
                                       ActivationKind act, std::size_t n, std::size_t hidden,
                                       bool est) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < result.grid.seeds; ++s) {
        const CellResult* cell = result.find(cell_id(f0, act, n, hidden, s));
        if (!cell || cell->diverged) continue;
        sum += est ? cell->est_error : cell->lsq_error;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

}  // namespace detail

/// Emits tables/<activation>.csv: one row per sample size, and per true
/// function a pair of columns with the mean ||fhat-f0||_n^2 and mean Q_n over
/// seeds at the headline width, in scientific notation with three
/// significant digits.
inline void emit_tables(const ExperimentResult& result, const std::string& dir) {
    if (result.cells.empty()) throw ValidationError("emit_tables: empty experiment result");
    const GridSpec& grid = result.grid;
    std::size_t hidden = grid.headline_width();
    std::filesystem::path tables_dir = std::filesystem::path(dir) / "tables";
    std::filesystem::create_directories(tables_dir);

    for (ActivationKind act : grid.activations) {
        std::ostringstream out;
        out << detail::two_unit_header(act);
        out << "# hidden_units=" << hidden << ", seeds=" << grid.seeds
            << ", lambda_base=" << grid.lambda_base << ", iterations=" << grid.iterations << "\n";
        out << "n";
        for (TrueFunctionTag f0 : grid.f0_tags)
            out << "," << to_string(f0) << "_est_error," << to_string(f0) << "_lsq_error";
        out << "\n";
        for (std::size_t n : grid.sample_sizes) {
            out << n;
            for (TrueFunctionTag f0 : grid.f0_tags) {
                for (bool est : {true, false}) {
                    auto mean = detail::seed_mean(result, f0, act, n, hidden, est);
                    if (mean) {
                        char buf[32];
                        std::snprintf(buf, sizeof buf, "%.2E", *mean);
                        out << "," << buf;
                    } else {
                        out << ",";
                    }
                }
            }
            out << "\n";
        }
        detail::write_text_file(tables_dir / (to_string(act) + ".csv"), out.str());
    }
}

namespace detail {

inline std::string svg_line_chart(const Vector& xs, const std::vector<Vector>& series,
                                  const std::vector<std::string>& labels) {
    static const char* colors[] = {"#000000", "#d62728", "#1f77b4", "#2ca02c",
                                   "#9467bd", "#ff7f0e", "#8c564b"};
    double lo = series[0][0], hi = series[0][0];
    for (const auto& s : series)
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double width = 860, height = 520, ml = 60, mr = 180, mt = 20, mb = 40;
    auto px = [&](double x) {
        return ml + (x - xs.front()) / (xs.back() - xs.front()) * (width - ml - mr);
    };
    auto py = [&](double y) { return height - mb - (y - lo) / (hi - lo) * (height - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 860 520\">\n";
    svg << "<rect width=\"860\" height=\"520\" fill=\"white\"/>\n";
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                  height - mb, width - mr, height - mb);
    svg << buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                  mt, ml, height - mb);
    svg << buf;
    for (std::size_t s = 0; s < series.size(); ++s) {
        svg << "<polyline fill=\"none\" stroke=\"" << colors[s % 7] << "\" stroke-width=\""
            << (s == 0 ? "2.5" : "1.5") << "\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(xs[i]), py(series[s][i]));
            svg << buf;
        }
        svg << "\"/>\n";
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"14\" fill=\"%s\">%s</text>\n",
                      width - mr + 10, mt + 20.0 * (s + 1), colors[s % 7], labels[s].c_str());
        svg << buf;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace detail

/// Writes plots/<f0>_<activation>.csv: a 1001-point x grid over [x_low, x_high]
/// with the true function and the first-seed fit at the headline width for
/// each sample size. Optionally also writes a self-contained SVG chart.
inline void emit_plot_data(const ExperimentResult& result, TrueFunctionTag f0, ActivationKind act,
                           const std::string& dir, bool svg = false) {
    const GridSpec& grid = result.grid;
    std::size_t hidden = grid.headline_width();

    std::vector<const CellResult*> cells;
    std::vector<std::string> missing;
    for (std::size_t n : grid.sample_sizes) {
        std::string id = cell_id(f0, act, n, hidden, 0);
        const CellResult* cell = result.find(id);
        if (!cell || cell->diverged)
            missing.push_back(id);
        else
            cells.push_back(cell);
    }
    if (!missing.empty()) {
        std::string msg = "emit_plot_data: missing or diverged cells:";
        for (const auto& id : missing) msg += " " + id;
        throw ValidationError(msg);
    }

    const std::size_t points = 1001;
    Vector xs(points);
    for (std::size_t k = 0; k < points; ++k)
        xs[k] = grid.x_low + (grid.x_high - grid.x_low) * static_cast<double>(k) /
                                 static_cast<double>(points - 1);

    TrueFunction truth = TrueFunction::make(f0, act);
    std::vector<Vector> series;
    std::vector<std::string> labels;
    series.emplace_back(points);
    labels.push_back("f0");
    for (std::size_t k = 0; k < points; ++k) series[0][k] = truth.eval(xs[k]);
    for (const CellResult* cell : cells) {
        Vector fhat(points);
        Vector xv{0.0};
        for (std::size_t k = 0; k < points; ++k) {
            xv[0] = xs[k];
            fhat[k] = forward(cell->fit.final_params, xv);
        }
        series.push_back(std::move(fhat));
        labels.push_back("fhat_n" + std::to_string(cell->n));
    }

    std::filesystem::path plots_dir = std::filesystem::path(dir) / "plots";
    std::filesystem::create_directories(plots_dir);
    std::string stem = to_string(f0) + "_" + to_string(act);

    std::ostringstream out;
    out << detail::two_unit_header(act);
    out << "x,f0";
    for (std::size_t s = 1; s < labels.size(); ++s) out << "," << labels[s];
    out << "\n";
    char buf[64];
    for (std::size_t k = 0; k < points; ++k) {
        std::snprintf(buf, sizeof buf, "%.10g", xs[k]);
        out << buf;
        for (const auto& s : series) {
            std::snprintf(buf, sizeof buf, ",%.10g", s[k]);
            out << buf;
        }
        out << "\n";
    }
    detail::write_text_file(plots_dir / (stem + ".csv"), out.str());

    if (svg)
        detail::write_text_file(plots_dir / (stem + ".svg"),
                                detail::svg_line_chart(xs, series, labels));
}

/// manifest.json records the grid definition, derived seeds, code version and
/// output inventory; rerunning with the same manifest reproduces every table
/// and plot byte for byte.
inline void write_manifest(const ExperimentResult& result, const std::string& dir, bool svg) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : result.cells) cells.push_back("cells/" + c.id + ".json");
    nlohmann::json tables = nlohmann::json::array();
    for (ActivationKind act : result.grid.activations)
        tables.push_back("tables/" + to_string(act) + ".csv");
    nlohmann::json plots = nlohmann::json::array();
    for (TrueFunctionTag f0 : result.grid.f0_tags)
        for (ActivationKind act : result.grid.activations)
            plots.push_back("plots/" + to_string(f0) + "_" + to_string(act) + ".csv");
    nlohmann::json j{{"code_version", kVersion}, {"grid", result.grid},   {"svg", svg},
                     {"cells", cells},           {"tables", tables},      {"plots", plots}};
    detail::write_text_file(std::filesystem::path(dir) / "manifest.json", j.dump(1));
}

/// Full pipeline: grid, tables, plot data, manifest.
inline ExperimentResult run_simulation(const GridSpec& grid, const std::string& out_dir,
                                       bool svg = false) {
    ExperimentResult result = run_grid(grid, out_dir);
    emit_tables(result, out_dir);
    for (TrueFunctionTag f0 : grid.f0_tags)
        for (ActivationKind act : grid.activations) emit_plot_data(result, f0, act, out_dir, svg);
    write_manifest(result, out_dir, svg);
    return result;
}

/// Loads a results directory (manifest + cells) for re-emitting outputs.
inline ExperimentResult load_results(const std::string& dir) {
    std::filesystem::path manifest_path = std::filesystem::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest", manifest_path.string());
    nlohmann::json manifest = nlohmann::json::parse(in);

    ExperimentResult result;
    result.grid = manifest.at("grid").get<GridSpec>();
    for (const auto& rel : manifest.at("cells")) {
        std::filesystem::path path = std::filesystem::path(dir) / rel.get<std::string>();
        std::ifstream cell_in(path);
        if (!cell_in) throw IoError("cannot open cell file", path.string());
        result.cells.push_back(nlohmann::json::parse(cell_in).get<CellResult>());
    }
    return result;
}

/// Rebuilds the audit inputs for a stored cell and runs the basic-inequality
/// audit. For the two-unit target, pi_f0 is the exact true network padded
/// with dead units to the trained width; otherwise pi_f0 comes from an
/// unpenalized refit with a fresh seed and the report is flagged approximate.
inline AuditReport audit_cell(const CellResult& cell, double tol = 1e-9) {
    if (cell.diverged) throw ValidationError("audit_cell: cell diverged: " + cell.error);

    SimConfig sim;
    sim.f0 = TrueFunction::make(cell.f0_tag, cell.activation);
    sim.n = cell.n;
    sim.noise_sd = cell.noise_sd;
    sim.x_low = cell.x_low;
    sim.x_high = cell.x_high;
    sim.seed = cell.data_seed;
    sim.train = cell.fit.config;
    Dataset ds = generate_dataset(sim);

    NetworkParams pi;
    bool approximate = false;
    if (cell.f0_tag == TrueFunctionTag::TwoUnitNet) {
        const NetworkParams& f0_net = *sim.f0.params;
        pi = NetworkParams::zeros(cell.activation, cell.fit.final_params.hidden_units, 1);
        pi.alpha0 = f0_net.alpha0;
        for (std::size_t j = 0; j < f0_net.hidden_units; ++j) {
            pi.alphas[j] = f0_net.alphas[j];
            pi.gamma0s[j] = f0_net.gamma0s[j];
            pi.gammas(j, 0) = f0_net.gammas(j, 0);
        }
    } else {
        approximate = true;
        TrainConfig refit = cell.fit.config;
        refit.penalty.lambda_base = 0.0;
        refit.seed = derive_stream(cell.train_seed, "pi_refit");
        pi = fit(ds.x, ds.y, refit).final_params;
    }
    return audit_basic_inequality(cell.fit, pi, ds.f0_values, ds.eps, ds.x,
                                  cell.fit.config.penalty, tol, approximate);
}

inline AuditReport audit_cell_file(const std::string& path, double tol = 1e-9) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cell file", path);
    CellResult cell = nlohmann::json::parse(in).get<CellResult>();
    return audit_cell(cell, tol);
}

}  // namespace sievenet
