#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fedunlearn/attacks.hpp"
#include "fedunlearn/fl_engine.hpp"
#include "fedunlearn/history.hpp"
#include "fedunlearn/lbfgs.hpp"
#include "fedunlearn/model.hpp"
#include "fedunlearn/param_vector.hpp"

namespace fedunlearn {

class UnlearnError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

enum class UnlearnMethod { learned, scratch, historical, fedrecover, unlearnguard_dist, unlearnguard_dir };

const char* to_string(UnlearnMethod method);
UnlearnMethod unlearn_method_from_string(const std::string& name);

struct FedRecoverSchedule {
    std::size_t warmup = 20;
    std::size_t correction_period = 10;
    std::size_t final_exact = 5;
    /// Estimates with norm above tau_factor * (median stored norm) are re-requested.
    double tau_factor = 10.0;
};

struct UnlearnOptions {
    std::size_t buffer_r = 5;
    std::size_t lbfgs_s = 2;
    double sigma_min = kDefaultSigmaMin;
    double rcond_floor = kHvpConditionFloor;
    bool dir_filter_flipped = false;
    /// Rescale exact updates requested after a filter rejection: to the window's
    /// median norm (dir), or clipped to it when larger (dist).
    bool rescale_exact = true;
    /// Also cap exact updates of the warm-up rounds against the rounds stored so far.
    bool rescale_warmup = false;
    FedRecoverSchedule fedrecover;
    /// Malicious clients answer exact requests with their unlearning-phase attack.
    bool attacks_active = true;
    /// Compute honest gradients alongside used updates to measure the estimate error M.
    bool measure_error = false;
    /// Reference trajectory (e.g. train-from-scratch) for the distance trace.
    const std::vector<ParamVector>* reference = nullptr;
};

/// Conditions under which the convergence bound applies.
struct BoundPremises {
    bool fedavg = false;
    bool perfect_detection = false;
    bool no_fu_attack = false;
    bool convex_task = false;

    bool all() const { return fedavg && perfect_detection && no_fu_attack && convex_task; }
};

struct UnlearnReport {
    std::string method;
    ParamVector unlearned_model;
    std::vector<std::size_t> remaining;
    std::vector<std::size_t> removed;
    std::size_t rounds = 0;
    std::size_t warmup_rounds = 0;

    /// Post-warm-up estimate / exact-request counts, in total and per round.
    std::size_t estimated_count = 0;
    std::size_t exact_count = 0;
    std::size_t warmup_exact_count = 0;
    std::size_t hvp_failures = 0;
    std::size_t filter_rejections = 0;
    std::vector<std::size_t> estimated_per_round;
    std::vector<std::size_t> exact_per_round;
    /// Filter rejections per remaining client, aligned with `remaining`.
    std::vector<std::size_t> rejections_per_client;

    /// |w^t - reference^t| for t = 0..T when a reference was given.
    std::vector<double> distance_trace;
    /// Largest |used update - honest gradient| over clients and rounds.
    double measured_M = 0.0;
    bool error_measured = false;

    double learning_rate = 0.0;
    std::optional<ConvexityProfile> profile;
    BoundPremises premises;

    double ter = 0.0;
    double asr = 0.0;
};

/// Retrains on the remaining clients. `init` defaults to an independent seed-derived
/// model; `attackers_active` lets undetected clients run their training-phase attack.
FlResult train_from_scratch(const Federation& fed, std::optional<ParamVector> init = std::nullopt,
                            bool attackers_active = false);

/// Replays stored updates of the remaining clients from w~^0, without client contact.
ParamVector historical_only(const Federation& fed, const HistoryStore& history);

/// Warm-up, periodic correction and final exact rounds around L-BFGS estimates.
UnlearnReport fedrecover_baseline(const Federation& fed, const HistoryStore& history,
                                  const ParamVector& learned_model, const UnlearnOptions& options);

/// Estimate-then-filter unlearning with distance or direction consistency checks.
UnlearnReport unlearnguard(const Federation& fed, const HistoryStore& history,
                           const ParamVector& learned_model, FilterVariant variant,
                           const UnlearnOptions& options);

struct BoundCheck {
    bool preconditions_ok = false;
    std::string violation;
    std::vector<double> lhs;
    std::vector<double> rhs;
    std::vector<bool> holds;

    bool all_hold() const;
};

inline constexpr double kBoundSlack = 1e-9;

/// Evaluates rhs(t) = q^t |w^0 - w''^0| + (1 - q^t) / (1 - q) * eta * M with
/// q = sqrt(1 - eta mu) against lhs(t) = distance_trace[t]. Violated premises
/// are reported and nothing is evaluated.
BoundCheck theorem_bound(const std::vector<double>& distance_trace, double M,
                         const ConvexityProfile& profile, double eta,
                         const BoundPremises& premises);
BoundCheck theorem_bound(const UnlearnReport& report);

}  // namespace fedunlearn
