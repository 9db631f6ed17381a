#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedunlearn/config.hpp"
#include "fedunlearn/dataset.hpp"
#include "fedunlearn/fl_engine.hpp"
#include "fedunlearn/model.hpp"

namespace fedunlearn {

/// Environment variable naming the root directory for relative output paths.
inline constexpr const char* kOutputRootEnv = "FEDUNLEARN_OUTPUT_ROOT";

/// One row per (config, seed, method) and matrix cell.
struct ResultRow {
    std::string digest;
    std::string axis = "-";
    std::string value = "-";
    std::string method;
    std::string arr;
    std::string fl_attack;
    std::string fu_attack;
    std::string knowledge;
    std::uint64_t seed = 0;
    /// Unset for the quadratic probe, which is not a classifier.
    std::optional<double> ter;
    std::optional<double> asr;
    std::optional<bool> bound_holds;
    std::optional<std::size_t> exact_requests;
    double wall_seconds = 0.0;
};

const std::string& csv_header();
/// Numbers use four decimals; unset values print as "NA". Wall time is not included.
std::string csv_line(const ResultRow& row);
std::vector<ResultRow> read_rows_csv(const std::filesystem::path& path);
void write_rows_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

/// Data, model and trigger of one seed.
struct Task {
    TrainTestSplit data;
    LabeledDataset asr_set;
    ModelSpec model;
    TriggerSpec trigger;
};

Task build_task(const ExperimentConfig& config, std::uint64_t seed);

/// Partition, roster and training settings of one (seed, ARR, FL attack) group.
Federation build_federation(const ExperimentConfig& config, const Task& task, std::uint64_t seed,
                            const AggregatorKind& arr, AttackKind fl_attack);

struct ExperimentResult {
    std::vector<ResultRow> rows;
    /// Human-readable descriptions of violated runtime invariants.
    std::vector<std::string> invariant_failures;
    std::filesystem::path output_dir;
};

/// Resolves run.output against the output-root environment variable.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

struct RunLabels {
    std::string axis = "-";
    std::string value = "-";
};

/// FL, detection and every requested unlearning method over the config's matrix.
/// Writes rows.csv, timings.csv and reports/*.json under the output directory
/// unless `write_artifacts` is false.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunLabels& labels = {},
                                bool write_artifacts = true);

ExperimentResult run_experiment(const std::filesystem::path& config_path);

enum class TableTemplate { t1, t2, t3, t4, ablation };

TableTemplate table_template_from_string(const std::string& name);

struct RenderedTable {
    std::string text;
    std::string csv;
};

/// Grid of seed-averaged cells; backdoor cells read "TER / ASR", missing cells "—".
RenderedTable emit_table(const std::vector<ResultRow>& rows, TableTemplate tmpl);

/// Axis values applied as overrides of the parsed document.
enum class SweepAxis { noniid_q, malicious_fraction, buffer_r };

SweepAxis sweep_axis_from_string(const std::string& name);
const char* to_string(SweepAxis axis);

struct SweepResult {
    std::vector<ResultRow> rows;
    /// Columns x, method, ter (mean over seeds and matrix cells).
    std::string plot_csv;
    std::vector<std::string> invariant_failures;
};

SweepResult ablation_sweep(const ConfigDocument& doc, SweepAxis axis, const std::vector<std::string>& values,
                           bool write_artifacts = true);

}  // namespace fedunlearn
