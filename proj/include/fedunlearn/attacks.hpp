#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedunlearn/aggregation.hpp"
#include "fedunlearn/dataset.hpp"
#include "fedunlearn/filters.hpp"
#include "fedunlearn/param_vector.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

class AttackError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

enum class AttackKind { none, trim, backdoor, lie, bad_unlearn, adaptive };
enum class Knowledge { full, partial, black_box };
enum class Phase { fl, fu };

/// How a BadUnlearn update relates to the learned model #w.
///  - model: malicious clients steer the next global model toward #w + eps*psi,
///    i.e. send (w^t - (#w + eps*psi)) / eta and minimise |#w - w^{t+1}|.
///  - literal: send #w + eps*psi and minimise |#w - ARR(...)| in update space.
///  - aggregate: anchor on the pre-attack aggregate update instead of #w.
enum class BadUnlearnAnchor { model, literal, aggregate };

enum class FilterVariant { dist, dir };

const char* to_string(AttackKind kind);
const char* to_string(Knowledge knowledge);
const char* to_string(BadUnlearnAnchor anchor);
AttackKind attack_kind_from_string(const std::string& name);
Knowledge knowledge_from_string(const std::string& name);
BadUnlearnAnchor anchor_from_string(const std::string& name);

/// Log-spaced epsilon grid; refined once between the neighbours of the best point.
struct EpsilonGrid {
    double lo = 1e-3;
    double hi = 10.0;
    std::size_t points = 25;
    std::size_t refine_points = 8;

    std::vector<double> values() const;
};

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    Knowledge knowledge = Knowledge::full;
    double trim_b = 2.0;
    double lie_z = 1.5;
    TriggerSpec trigger;
    double backdoor_scale = 1.0;
    EpsilonGrid eps_grid;
    BadUnlearnAnchor anchor = BadUnlearnAnchor::model;

    /// bad_unlearn and adaptive exist only in the unlearning phase.
    void validate(Phase phase) const;
};

/// What the attacker sees in one round.
struct AttackContext {
    /// Updates visible to the attacker: every other client's update under full
    /// knowledge, the malicious clients' own honest updates otherwise.
    std::vector<ParamVector> visible;
    std::vector<double> visible_weights;
    /// Number of malicious updates to craft and their FedAvg weights.
    std::size_t num_malicious = 0;
    std::vector<double> malicious_weights;
    Knowledge knowledge = Knowledge::full;
    AggregatorKind arr;
    /// Learned model #w (unlearning phase only).
    std::optional<ParamVector> learned_model;
    /// Global model of the current round and the server learning rate.
    std::optional<ParamVector> current_model;
    double learning_rate = 0.0;

    /// The true rule, or the Median surrogate when the attacker is black-box.
    AggregatorKind effective_arr() const;
    /// ARR over visible + `malicious` copies of `mal`, weights renormalised to one.
    ParamVector aggregate_with(const ParamVector& mal) const;
};

/// Directed-deviation values drawn per coordinate against the visible mean's sign.
std::vector<ParamVector> trim_attack(const AttackContext& ctx, double b, Rng& rng);

/// mean - z * (population) std over the visible updates, per coordinate.
std::vector<ParamVector> lie_attack(const AttackContext& ctx, double z);

/// honest + scale * (poisoned - honest).
ParamVector backdoor_update(const ParamVector& honest, const ParamVector& poisoned, double scale);

struct BadUnlearnResult {
    std::vector<ParamVector> updates;
    double epsilon = 0.0;
    double objective = 0.0;
};

/// Malicious update for a given epsilon under `anchor`.
ParamVector bad_unlearn_update(const AttackContext& ctx, double epsilon, BadUnlearnAnchor anchor);

/// Attacker objective |anchor - outcome| for a given epsilon (smaller is better).
double bad_unlearn_objective(const AttackContext& ctx, double epsilon, BadUnlearnAnchor anchor);

/// Grid search over `epsilons` (ties toward the smaller epsilon); with
/// `refine_points` > 0 the interval around the best point is searched once more.
BadUnlearnResult bad_unlearn(const AttackContext& ctx, const std::vector<double>& epsilons,
                             BadUnlearnAnchor anchor, std::size_t refine_points = 0);

/// Moves `target` into the region a distance filter accepts for `window`.
ParamVector project_into_dist_filter(const ParamVector& target, const FilterWindow& window);

/// Moves `target` into the region a direction filter accepts, then applies the
/// defender's median-norm rescale.
ParamVector project_into_dir_filter(const ParamVector& target, const FilterWindow& window,
                                    bool flipped);

/// Filter-aware BadUnlearn: one update per malicious client, each projected
/// against that client's stored-update window.
std::vector<ParamVector> adaptive_attack(const AttackContext& ctx,
                                         const std::vector<FilterWindow>& windows,
                                         FilterVariant variant, const AttackSpec& spec,
                                         bool dir_flipped = false);

}  // namespace fedunlearn
