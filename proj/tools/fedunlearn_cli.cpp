// Command-line front end: run, sweep, table, verify-bound.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedunlearn/config.hpp"
#include "fedunlearn/experiment.hpp"
#include "fedunlearn/report_json.hpp"
#include "fedunlearn/unlearn.hpp"

using namespace fedunlearn;

namespace {

int report_failures(const std::vector<std::string>& failures) {
    for (const auto& f : failures) std::cerr << "invariant failure: " << f << '\n';
    return failures.empty() ? 0 : 1;
}

int cmd_run(const std::string& config_path, std::size_t cell_threads) {
    auto cfg = ExperimentConfig::load(config_path);
    if (cell_threads > 0) cfg.run.cell_threads = cell_threads;
    const auto res = run_experiment(cfg);
    std::cout << "wrote " << res.rows.size() << " rows to " << (res.output_dir / "rows.csv").string() << '\n';
    return report_failures(res.invariant_failures);
}

int cmd_sweep(const std::string& config_path, const std::string& axis, const std::vector<std::string>& values) {
    const auto doc = ConfigDocument::load(config_path);
    const auto res = ablation_sweep(doc, sweep_axis_from_string(axis), values);
    std::cout << res.plot_csv;
    return report_failures(res.invariant_failures);
}

int cmd_table(const std::string& rows_path, const std::string& tmpl, const std::string& csv_out) {
    const auto rows = read_rows_csv(rows_path);
    const auto table = emit_table(rows, table_template_from_string(tmpl));
    std::cout << table.text;
    if (!csv_out.empty()) {
        std::ofstream f(csv_out, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + csv_out);
        f << table.csv;
    }
    return 0;
}

int cmd_verify_bound(const std::string& report_path, bool verbose) {
    const auto report = load_report(report_path);
    const auto check = theorem_bound(report);
    if (!check.preconditions_ok) {
        std::cerr << "bound not evaluated: " << check.violation << '\n';
        return 1;
    }
    std::size_t violations = 0;
    for (std::size_t t = 0; t < check.lhs.size(); ++t) {
        if (!check.holds[t]) ++violations;
        if (verbose || !check.holds[t]) {
            std::printf("t=%zu lhs=%.6e rhs=%.6e %s\n", t, check.lhs[t], check.rhs[t],
                        check.holds[t] ? "ok" : "VIOLATED");
        }
    }
    std::printf("%s: %zu rounds, M=%.6e, %zu violations\n", report.method.c_str(), check.lhs.size(),
                report.measured_M, violations);
    return violations == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning and unlearning experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::size_t cell_threads = 0;
    auto* run = app.add_subcommand("run", "Run every cell of an experiment config");
    run->add_option("config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
    run->add_option("--cell-threads", cell_threads, "Experiment cells run concurrently (overrides config)");

    std::string axis;
    std::vector<std::string> values;
    auto* sweep = app.add_subcommand("sweep", "Run an ablation sweep over one axis");
    sweep->add_option("config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--axis", axis, "noniid_q, malicious_fraction or buffer_r")->required();
    sweep->add_option("--values", values, "Comma-separated axis values")->required()->delimiter(',');

    std::string rows_path;
    std::string tmpl;
    std::string csv_out;
    auto* table = app.add_subcommand("table", "Render a results table from rows.csv");
    table->add_option("rows", rows_path, "rows.csv produced by run or sweep")->required()->check(CLI::ExistingFile);
    table->add_option("--template", tmpl, "t1, t2, t3, t4 or ablation")->required();
    table->add_option("--csv", csv_out, "Also write the grid as CSV");

    std::string report_path;
    bool verbose = false;
    auto* verify = app.add_subcommand("verify-bound", "Re-check the convergence bound of a report");
    verify->add_option("report", report_path, "Report JSON")->required()->check(CLI::ExistingFile);
    verify->add_flag("-v,--verbose", verbose, "Print every round");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, cell_threads);
        if (*sweep) return cmd_sweep(config_path, axis, values);
        if (*table) return cmd_table(rows_path, tmpl, csv_out);
        if (*verify) return cmd_verify_bound(report_path, verbose);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
