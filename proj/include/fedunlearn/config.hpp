#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fedunlearn/aggregation.hpp"
#include "fedunlearn/attacks.hpp"
#include "fedunlearn/fl_engine.hpp"
#include "fedunlearn/model.hpp"
#include "fedunlearn/unlearn.hpp"

namespace fedunlearn {

/// Parse or validation failure; the message carries "file:line: key: problem".
class ConfigError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// A value in the flat key/value format: scalar or a one-level array.
struct ConfigValue {
    using Scalar = std::variant<bool, std::int64_t, double, std::string>;
    std::variant<Scalar, std::vector<Scalar>> value;
    std::size_t line = 0;
};

/// Sections of `key = value` lines. Supports `[section]` headers, `#` comments,
/// double-quoted strings, integers, floats, booleans and `[a, b, ...]` arrays.
class ConfigDocument {
 public:
    static ConfigDocument parse(const std::string& text, const std::string& source = "<config>");
    static ConfigDocument load(const std::filesystem::path& path);

    const std::string& source() const { return source_; }
    const ConfigValue* find(const std::string& section, const std::string& key) const;
    /// Overrides or adds a value (used by sweeps); `text` uses value syntax.
    void set(const std::string& section, const std::string& key, const std::string& text);

    const std::map<std::string, std::map<std::string, ConfigValue>>& sections() const {
        return sections_;
    }

 private:
    std::string source_;
    std::map<std::string, std::map<std::string, ConfigValue>> sections_;
};

struct TaskConfig {
    std::string source = "synthetic";  // synthetic | idx
    ModelKind model = ModelKind::softmax_regression;
    std::size_t classes = 10;
    std::size_t dim = 20;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    double spread = 1.0;
    double l2_lambda = 0.01;
    std::size_t hidden = 32;
    /// Diagonal Hessian range of the quadratic probe (log-spaced over the dimension).
    double probe_h_min = 0.5;
    double probe_h_max = 2.0;
    std::string idx_train_images;
    std::string idx_train_labels;
    std::string idx_test_images;
    std::string idx_test_labels;
    std::size_t trigger_size = 3;
    double trigger_value = 3.0;
    int trigger_target = 0;
    double poison_fraction = 0.3;
};

struct FederationConfig {
    std::size_t clients = 20;
    double noniid_q = 0.5;
    double learning_rate = 0.05;
    std::size_t rounds = 300;
    std::size_t batch_size = 0;
    double malicious_fraction = 0.2;
    double fu_malicious_fraction = 0.2;
    std::vector<AggregatorKind> aggregators{AggregatorKind{}};
    DetectionMode detection = DetectionMode::perfect;
    std::vector<std::size_t> detected_ids;
    std::size_t threads = 1;
    double history_budget_mb = 256.0;
};

struct AttackConfig {
    std::vector<AttackKind> fl{AttackKind::none};
    std::vector<AttackKind> fu{AttackKind::none};
    std::vector<Knowledge> knowledge{Knowledge::full};
    double trim_b = 2.0;
    double lie_z = 1.5;
    double backdoor_scale = 1.0;
    EpsilonGrid eps_grid;
    BadUnlearnAnchor anchor = BadUnlearnAnchor::model;
};

struct UnlearnConfig {
    std::vector<UnlearnMethod> methods{UnlearnMethod::scratch};
    UnlearnOptions options;
    bool shared_init = false;
    bool scratch_attackers_active = false;
    bool check_bound = true;
};

struct RunConfig {
    std::vector<std::uint64_t> seeds{1};
    std::string output = "results";
    std::size_t cell_threads = 1;
};

struct ExperimentConfig {
    TaskConfig task;
    FederationConfig federation;
    AttackConfig attack;
    UnlearnConfig unlearn;
    RunConfig run;

    /// Throws ConfigError with key-level diagnostics on any violated precondition.
    void validate() const;
    /// Stable textual form of every setting (seeds excluded); digests hash this.
    std::string canonical() const;
    /// 16 hex digits of FNV-1a over canonical().
    std::string digest() const;

    static ExperimentConfig from_document(const ConfigDocument& doc);
    static ExperimentConfig load(const std::filesystem::path& path);
};

std::string fnv1a_hex(const std::string& text);

}  // namespace fedunlearn
