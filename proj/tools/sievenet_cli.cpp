// Command-line front end. Every subcommand is a thin adapter over the
// library; no numeric logic lives here.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sievenet/sievenet.hpp"

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sievenet::IoError("cannot open file", path);
    return json::parse(in);
}

sievenet::NetworkParams load_net(const std::string& path) {
    return load_json_file(path).get<sievenet::NetworkParams>();
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sievenet::IoError("cannot open file for writing", path);
    out << j.dump(1) << "\n";
}

/// Default output directory: --out flag, else SIEVENET_OUT, else cwd.
std::string resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("SIEVENET_OUT")) return env;
    return ".";
}

struct DataFile {
    sievenet::Matrix x;
    sievenet::Vector y;
};

/// Dataset JSON: {"x": [[...], ...], "y": [...]}; rows of x are samples.
DataFile load_data(const std::string& path) {
    json j = load_json_file(path);
    DataFile data;
    std::vector<sievenet::Vector> rows;
    for (const auto& row : j.at("x")) rows.push_back(row.get<sievenet::Vector>());
    data.x = sievenet::Matrix::from_rows(rows);
    data.y = j.at("y").get<sievenet::Vector>();
    return data;
}

int run(int argc, char** argv) {
    CLI::App app{"penalized neural-network sieve estimation"};
    app.require_subcommand(1);
    bool json_out = false;
    app.add_flag("--json", json_out, "machine-readable output on stdout");

    // fit
    auto* cmd_fit = app.add_subcommand("fit", "train one penalized network on a dataset");
    std::string fit_config, fit_data, fit_out, fit_trajectory;
    cmd_fit->add_option("--config", fit_config, "TrainConfig JSON")->required();
    cmd_fit->add_option("--data", fit_data, "dataset JSON with x and y")->required();
    cmd_fit->add_option("--out", fit_out, "path for the FitReport JSON")->required();
    cmd_fit->add_option("--trajectory", fit_trajectory, "optional trajectory CSV path");

    // simulate
    auto* cmd_sim = app.add_subcommand("simulate", "run the experiment grid");
    std::string sim_config, sim_out;
    bool sim_svg = false;
    cmd_sim->add_option("--config", sim_config, "grid config JSON (or a manifest.json)")->required();
    cmd_sim->add_option("--out", sim_out, "output directory");
    cmd_sim->add_flag("--svg", sim_svg, "also write SVG charts");

    // tables
    auto* cmd_tables = app.add_subcommand("tables", "re-emit tables from a results directory");
    std::string tables_results, tables_out;
    cmd_tables->add_option("--results", tables_results, "results directory with manifest.json")
        ->required();
    cmd_tables->add_option("--out", tables_out, "output directory (defaults to results dir)");

    // plot-data
    auto* cmd_plot = app.add_subcommand("plot-data", "re-emit plot data from a results directory");
    std::string plot_results, plot_out, plot_f0, plot_act;
    bool plot_svg = false;
    cmd_plot->add_option("--results", plot_results, "results directory with manifest.json")
        ->required();
    cmd_plot->add_option("--f0", plot_f0, "two_unit_net, trig or complex")->required();
    cmd_plot->add_option("--activation", plot_act, "tanh or relu")->required();
    cmd_plot->add_option("--out", plot_out, "output directory (defaults to results dir)");
    cmd_plot->add_flag("--svg", plot_svg, "also write the SVG chart");

    // entropy
    auto* cmd_entropy = app.add_subcommand("entropy", "print the entropy-bound calculators");
    std::string ent_act;
    std::size_t ent_r = 1, ent_d = 1;
    double ent_v = 2.0, ent_m = 1.0, ent_eps = 1.0;
    cmd_entropy->add_option("--activation", ent_act, "tanh or relu")->required();
    cmd_entropy->add_option("--r", ent_r, "hidden units r_n")->required();
    cmd_entropy->add_option("--v", ent_v, "output-weight budget V_n (tanh)");
    cmd_entropy->add_option("--m", ent_m, "hidden-weight budget M_n (relu)");
    cmd_entropy->add_option("--d", ent_d, "input dimension")->required();
    cmd_entropy->add_option("--eps", ent_eps, "covering radius for the log-N bound (tanh)");

    // rates
    auto* cmd_rates = app.add_subcommand("rates", "check the rate conditions over a grid CSV");
    std::string rates_csv, rates_act;
    double rates_nu = 2.0;
    cmd_rates->add_option("--csv", rates_csv, "CSV with header n,r_n,V_n,M_n,lambda_n")->required();
    cmd_rates->add_option("--nu", rates_nu, "Lojasiewicz exponent nu (> 1)")->required();
    cmd_rates->add_option("--activation", rates_act, "tanh or relu")->required();

    // minimal
    auto* cmd_minimal = app.add_subcommand("minimal", "check tanh minimality conditions");
    std::string minimal_net;
    double minimal_tol = 0.0;
    cmd_minimal->add_option("--net", minimal_net, "network JSON")->required();
    cmd_minimal->add_option("--tol", minimal_tol, "sup-norm comparison tolerance");

    // canonicalize
    auto* cmd_canon = app.add_subcommand("canonicalize", "normalize a ReLU network");
    std::string canon_net, canon_out;
    cmd_canon->add_option("--net", canon_net, "network JSON")->required();
    cmd_canon->add_option("--out", canon_out, "path for the canonicalized JSON");

    // audit
    auto* cmd_audit = app.add_subcommand("audit", "basic-inequality audit of a stored cell");
    std::string audit_cell_path;
    double audit_tol = 1e-9;
    cmd_audit->add_option("--cell", audit_cell_path, "cell JSON from a simulate run")->required();
    cmd_audit->add_option("--tol", audit_tol, "residual tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints usage or help text
        return code == 0 ? 0 : 1;
    }

    if (cmd_fit->parsed()) {
        auto config = load_json_file(fit_config).get<sievenet::TrainConfig>();
        DataFile data = load_data(fit_data);
        sievenet::FitReport report = sievenet::fit(data.x, data.y, config);
        write_json_file(fit_out, json(report));
        if (!fit_trajectory.empty()) sievenet::write_trajectory_csv(report, fit_trajectory);
        if (json_out) {
            std::cout << json{{"empirical_risk", report.empirical_risk},
                              {"penalty_term", report.penalty_term},
                              {"eta_slack", report.eta_slack},
                              {"wall_time_ms", report.wall_time_ms},
                              {"out", fit_out}}
                             .dump()
                      << "\n";
        } else {
            std::cout << "fit done: Q_n = " << report.empirical_risk
                      << ", penalty = " << report.penalty_term
                      << ", wall time = " << report.wall_time_ms << " ms\n"
                      << "report written to " << fit_out << "\n";
        }
        return 0;
    }

    if (cmd_sim->parsed()) {
        json config_json = load_json_file(sim_config);
        // accept either a bare grid config or a manifest wrapping one
        sievenet::GridSpec grid = (config_json.contains("grid") ? config_json.at("grid")
                                                                : config_json)
                                      .get<sievenet::GridSpec>();
        std::string out_dir = resolve_out_dir(sim_out);
        sievenet::ExperimentResult result = sievenet::run_simulation(grid, out_dir, sim_svg);
        std::size_t diverged = 0;
        for (const auto& c : result.cells) diverged += c.diverged ? 1 : 0;
        if (json_out) {
            std::cout << json{{"cells", result.cells.size()}, {"diverged", diverged},
                              {"out", out_dir}}
                             .dump()
                      << "\n";
        } else {
            std::cout << "grid complete: " << result.cells.size() << " cells (" << diverged
                      << " diverged), outputs under " << out_dir << "\n";
            std::size_t hidden = grid.headline_width();
            for (sievenet::ActivationKind act : grid.activations)
                for (sievenet::TrueFunctionTag f0 : grid.f0_tags)
                    for (std::size_t n : grid.sample_sizes) {
                        double sum = 0.0, sum_sq = 0.0;
                        std::size_t count = 0;
                        for (std::size_t s = 0; s < grid.seeds; ++s) {
                            const auto* cell =
                                result.find(sievenet::cell_id(f0, act, n, hidden, s));
                            if (!cell || cell->diverged) continue;
                            sum += cell->est_error;
                            sum_sq += cell->est_error * cell->est_error;
                            ++count;
                        }
                        if (!count) continue;
                        double mean = sum / count;
                        double var = count > 1 ? (sum_sq - sum * mean) / (count - 1) : 0.0;
                        std::cout << "  " << sievenet::to_string(f0) << " "
                                  << sievenet::to_string(act) << " n=" << n
                                  << ": est_error mean = " << mean
                                  << ", sd = " << std::sqrt(std::max(0.0, var)) << " (" << count
                                  << " seeds)\n";
                    }
        }
        return 0;
    }

    if (cmd_tables->parsed()) {
        sievenet::ExperimentResult result = sievenet::load_results(tables_results);
        std::string out_dir = tables_out.empty() ? tables_results : tables_out;
        sievenet::emit_tables(result, out_dir);
        std::cout << "tables written under " << out_dir << "/tables\n";
        return 0;
    }

    if (cmd_plot->parsed()) {
        sievenet::ExperimentResult result = sievenet::load_results(plot_results);
        std::string out_dir = plot_out.empty() ? plot_results : plot_out;
        sievenet::emit_plot_data(result, sievenet::f0_from_string(plot_f0),
                                 sievenet::activation_from_string(plot_act), out_dir, plot_svg);
        std::cout << "plot data written under " << out_dir << "/plots\n";
        return 0;
    }

    if (cmd_entropy->parsed()) {
        sievenet::ActivationKind act = sievenet::activation_from_string(ent_act);
        sievenet::SieveSpec spec{ent_r, ent_v, ent_m, ent_d};
        if (act == sievenet::ActivationKind::Tanh) {
            double log_n = sievenet::covering_bound_tanh(spec, ent_eps);
            double integral = sievenet::entropy_integral_bound_tanh(spec);
            if (json_out)
                std::cout << json{{"log_covering_bound", log_n},
                                  {"entropy_integral_bound", integral},
                                  {"eps", ent_eps}}
                                 .dump()
                          << "\n";
            else
                std::cout << "log covering bound at eps=" << ent_eps << ": " << log_n << "\n"
                          << "entropy integral bound: " << integral << "\n";
        } else {
            double integral = sievenet::entropy_integral_bound_relu(spec);
            if (json_out)
                std::cout << json{{"entropy_integral_bound", integral}}.dump() << "\n";
            else
                std::cout << "entropy integral bound: " << integral << "\n";
        }
        return 0;
    }

    if (cmd_rates->parsed()) {
        sievenet::RateCheckInput input;
        input.rows = sievenet::parse_rate_csv_file(rates_csv);
        input.nu = rates_nu;
        sievenet::RateReport report =
            sievenet::check_rate_conditions(input, sievenet::activation_from_string(rates_act));
        if (json_out) {
            json conditions = json::array();
            for (const auto& c : report.conditions)
                conditions.push_back(
                    {{"name", c.name}, {"ratios", c.ratios}, {"decreasing", c.decreasing}});
            std::cout << json{{"all_pass", report.all_pass}, {"conditions", conditions}}.dump()
                      << "\n";
        } else {
            std::cout << sievenet::format_rate_report(report);
        }
        return 0;
    }

    if (cmd_minimal->parsed()) {
        sievenet::MinimalityReport report =
            sievenet::is_minimal_tanh(load_net(minimal_net), minimal_tol);
        if (json_out)
            std::cout << json{{"minimal", report.minimal},
                              {"condition", report.condition},
                              {"description", report.description}}
                             .dump()
                      << "\n";
        else
            std::cout << report.description << "\n";
        return 0;
    }

    if (cmd_canon->parsed()) {
        sievenet::NetworkParams canon = sievenet::canonicalize_relu(load_net(canon_net));
        if (!canon_out.empty()) write_json_file(canon_out, json(canon));
        if (json_out)
            std::cout << json(canon).dump() << "\n";
        else if (!canon_out.empty())
            std::cout << "canonicalized network written to " << canon_out << "\n";
        else
            std::cout << json(canon).dump(1) << "\n";
        return 0;
    }

    if (cmd_audit->parsed()) {
        sievenet::AuditReport report = sievenet::audit_cell_file(audit_cell_path, audit_tol);
        if (json_out) {
            std::cout << json(report).dump() << "\n";
        } else {
            std::cout << "lhs = " << report.lhs << "\n"
                      << "term I (approximation) = " << report.term_i << "\n"
                      << "term II (multiplier)  = " << report.term_ii << "\n"
                      << "term III (penalty)    = " << report.term_iii << "\n"
                      << "eta slack             = " << report.eta_slack << "\n"
                      << "residual              = " << report.residual << "\n"
                      << "extremum check: " << (report.extremum_holds ? "holds" : "FAILS") << "\n"
                      << "basic inequality: " << (report.inequality_holds ? "holds" : "FAILS")
                      << (report.pi_approximate ? " (pi_f0 from approximate refit)" : "") << "\n";
        }
        return report.inequality_holds ? 0 : 2;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const sievenet::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const sievenet::DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
