#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedunlearn/dataset.hpp"
#include "fedunlearn/param_vector.hpp"

namespace fedunlearn {

class ModelError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

enum class ModelKind { softmax_regression, mlp2, quadratic_probe };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelSpec {
    ModelKind kind = ModelKind::softmax_regression;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::size_t hidden = 32;
    double l2_lambda = 0.0;
    /// Diagonal Hessian of the quadratic probe; size input_dim, entries positive.
    std::vector<double> probe_hessian;

    std::size_t param_count() const;
    void validate() const;
};

/// Strong convexity, smoothness and the measured HVP error bound of a task.
struct ConvexityProfile {
    double mu = 0.0;
    double lipschitz_L = 0.0;
    double hvp_error_M = 0.0;
};

/// Seeded initial parameters (small Gaussian for classifiers, unit Gaussian for the probe).
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Mean cross-entropy + (lambda/2)|w|^2 for classifiers; for the probe,
/// 1/2 (w - c)^T H (w - c) with c the mean feature row of `data`.
double loss(const ModelSpec& spec, const ParamVector& params, const LabeledDataset& data);

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const LabeledDataset& data);

/// Class scores for one input row.
std::vector<double> logits(const ModelSpec& spec, const ParamVector& params,
                           std::span<const double> x);

/// argmax of the logits, ties toward the lowest class id.
int predict(const ModelSpec& spec, const ParamVector& params, std::span<const double> x);

double test_error_rate(const ModelSpec& spec, const ParamVector& params, const LabeledDataset& data);

/// Fraction of rows classified as `target_label`.
double attack_success_rate(const ModelSpec& spec, const ParamVector& params,
                           const LabeledDataset& triggered, int target_label);

/// Analytic mu and L: exact diagonal extremes for the probe; for L2-regularized
/// softmax regression mu = lambda and L = lambda + max_s(|x_s|^2 + 1) / 2.
ConvexityProfile convexity_profile(const ModelSpec& spec, const LabeledDataset& data);

}  // namespace fedunlearn
