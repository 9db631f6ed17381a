#include "fedunlearn/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedunlearn {

const char* to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::none: return "none";
        case AttackKind::trim: return "trim";
        case AttackKind::backdoor: return "backdoor";
        case AttackKind::lie: return "lie";
        case AttackKind::bad_unlearn: return "bad_unlearn";
        case AttackKind::adaptive: return "adaptive";
    }
    return "?";
}

const char* to_string(Knowledge knowledge) {
    switch (knowledge) {
        case Knowledge::full: return "full";
        case Knowledge::partial: return "partial";
        case Knowledge::black_box: return "black_box";
    }
    return "?";
}

const char* to_string(BadUnlearnAnchor anchor) {
    switch (anchor) {
        case BadUnlearnAnchor::model: return "model";
        case BadUnlearnAnchor::literal: return "literal";
        case BadUnlearnAnchor::aggregate: return "aggregate";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& name) {
    for (auto k : {AttackKind::none, AttackKind::trim, AttackKind::backdoor, AttackKind::lie,
                   AttackKind::bad_unlearn, AttackKind::adaptive}) {
        if (name == to_string(k)) return k;
    }
    if (name == "badunlearn") return AttackKind::bad_unlearn;
    throw AttackError("unknown attack '" + name + "'");
}

Knowledge knowledge_from_string(const std::string& name) {
    for (auto k : {Knowledge::full, Knowledge::partial, Knowledge::black_box}) {
        if (name == to_string(k)) return k;
    }
    if (name == "blackbox") return Knowledge::black_box;
    throw AttackError("unknown knowledge setting '" + name + "'");
}

BadUnlearnAnchor anchor_from_string(const std::string& name) {
    for (auto a : {BadUnlearnAnchor::model, BadUnlearnAnchor::literal, BadUnlearnAnchor::aggregate}) {
        if (name == to_string(a)) return a;
    }
    throw AttackError("unknown BadUnlearn anchor '" + name + "'");
}

std::vector<double> EpsilonGrid::values() const {
    if (points == 0 || !(lo > 0.0) || !(hi >= lo)) throw AttackError("epsilon grid: invalid bounds");
    std::vector<double> out;
    out.reserve(points);
    if (points == 1) return {lo};
    const double step = std::log(hi / lo) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) out.push_back(lo * std::exp(step * static_cast<double>(i)));
    return out;
}

void AttackSpec::validate(Phase phase) const {
    if (phase == Phase::fl && (kind == AttackKind::bad_unlearn || kind == AttackKind::adaptive)) {
        throw AttackError(std::string(to_string(kind)) + " is an unlearning-phase attack");
    }
    if (!(trim_b >= 1.0)) throw AttackError("trim attack: b must be at least 1");
}

AggregatorKind AttackContext::effective_arr() const {
    if (knowledge == Knowledge::black_box) return AggregatorKind{AggregatorRule::median, {}, 0.2};
    return arr;
}

ParamVector AttackContext::aggregate_with(const ParamVector& mal) const {
    std::vector<ParamVector> all = visible;
    all.insert(all.end(), num_malicious, mal);
    std::vector<double> w = visible_weights;
    if (w.size() != visible.size()) w.assign(visible.size(), 1.0);
    if (malicious_weights.size() == num_malicious) {
        w.insert(w.end(), malicious_weights.begin(), malicious_weights.end());
    } else {
        w.insert(w.end(), num_malicious, 1.0);
    }
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0)) {
        w.assign(all.size(), 1.0);
        total = static_cast<double>(all.size());
    }
    for (double& x : w) x /= total;
    return aggregate(effective_arr(), all, w);
}

namespace {

void require_visible(const AttackContext& ctx, std::size_t at_least, const char* who) {
    if (ctx.visible.size() < at_least) {
        throw AttackError(std::string(who) + ": not enough visible updates");
    }
}

}  // namespace

std::vector<ParamVector> trim_attack(const AttackContext& ctx, double b, Rng& rng) {
    require_visible(ctx, 1, "trim_attack");
    const std::size_t d = ctx.visible.front().dim();
    ParamVector wmax = ctx.visible.front(), wmin = ctx.visible.front(), sum(d, 0.0);
    for (const auto& v : ctx.visible) {
        require_same_dim(v, sum, "trim_attack");
        for (std::size_t j = 0; j < d; ++j) {
            wmax[j] = std::max(wmax[j], v[j]);
            wmin[j] = std::min(wmin[j], v[j]);
        }
        sum += v;
    }
    std::vector<ParamVector> out(ctx.num_malicious, ParamVector(d));
    for (auto& mal : out) {
        for (std::size_t j = 0; j < d; ++j) {
            double lo, hi;
            if (sum[j] > 0.0) {
                lo = wmin[j] > 0.0 ? wmin[j] / b : b * wmin[j];
                hi = wmin[j];
            } else if (sum[j] < 0.0) {
                lo = wmax[j];
                hi = wmax[j] > 0.0 ? b * wmax[j] : wmax[j] / b;
            } else {
                mal[j] = wmin[j];
                continue;
            }
            mal[j] = lo + (hi - lo) * rng.uniform();
        }
    }
    return out;
}

std::vector<ParamVector> lie_attack(const AttackContext& ctx, double z) {
    require_visible(ctx, 1, "lie_attack");
    const std::size_t d = ctx.visible.front().dim();
    const double n = static_cast<double>(ctx.visible.size());
    ParamVector mean(d, 0.0);
    for (const auto& v : ctx.visible) mean += v;
    mean /= n;
    ParamVector var(d, 0.0);
    for (const auto& v : ctx.visible) {
        for (std::size_t j = 0; j < d; ++j) var[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
    }
    ParamVector mal(d);
    for (std::size_t j = 0; j < d; ++j) mal[j] = mean[j] - z * std::sqrt(var[j] / n);
    return std::vector<ParamVector>(ctx.num_malicious, mal);
}

ParamVector backdoor_update(const ParamVector& honest, const ParamVector& poisoned, double scale) {
    require_same_dim(honest, poisoned, "backdoor_update");
    ParamVector out = honest;
    out.axpy(scale, poisoned - honest);
    return out;
}

namespace {

const ParamVector& require_learned(const AttackContext& ctx) {
    if (!ctx.learned_model) throw AttackError("bad_unlearn: learned model #w is required");
    return *ctx.learned_model;
}

}  // namespace

ParamVector bad_unlearn_update(const AttackContext& ctx, double epsilon, BadUnlearnAnchor anchor) {
    switch (anchor) {
        case BadUnlearnAnchor::literal: {
            const auto& w_hash = require_learned(ctx);
            return w_hash - epsilon * coordinate_sign(w_hash);
        }
        case BadUnlearnAnchor::aggregate: {
            require_visible(ctx, 1, "bad_unlearn");
            std::vector<double> w = ctx.visible_weights;
            const double total = std::accumulate(w.begin(), w.end(), 0.0);
            if (w.size() != ctx.visible.size() || !(total > 0.0)) {
                w.assign(ctx.visible.size(), 1.0 / static_cast<double>(ctx.visible.size()));
            } else {
                for (double& x : w) x /= total;
            }
            const auto pre = aggregate(ctx.effective_arr(), ctx.visible, w);
            return pre - epsilon * coordinate_sign(pre);
        }
        case BadUnlearnAnchor::model: {
            const auto& w_hash = require_learned(ctx);
            if (!ctx.current_model || !(ctx.learning_rate > 0.0)) {
                throw AttackError("bad_unlearn: model anchor needs the current model and learning rate");
            }
            const ParamVector target = w_hash - epsilon * coordinate_sign(w_hash);
            return (*ctx.current_model - target) / ctx.learning_rate;
        }
    }
    throw AttackError("bad_unlearn: unknown anchor");
}

double bad_unlearn_objective(const AttackContext& ctx, double epsilon, BadUnlearnAnchor anchor) {
    const ParamVector mal = bad_unlearn_update(ctx, epsilon, anchor);
    const ParamVector agg = ctx.aggregate_with(mal);
    switch (anchor) {
        case BadUnlearnAnchor::literal: return l2_distance(*ctx.learned_model, agg);
        case BadUnlearnAnchor::aggregate: {
            // anchor = the epsilon = 0 update, i.e. the pre-attack aggregate
            return l2_distance(bad_unlearn_update(ctx, 0.0, anchor), agg);
        }
        case BadUnlearnAnchor::model: {
            ParamVector next = *ctx.current_model;
            next.axpy(-ctx.learning_rate, agg);
            return l2_distance(*ctx.learned_model, next);
        }
    }
    return 0.0;
}

BadUnlearnResult bad_unlearn(const AttackContext& ctx, const std::vector<double>& epsilons,
                             BadUnlearnAnchor anchor, std::size_t refine_points) {
    if (epsilons.empty()) throw AttackError("bad_unlearn: empty epsilon grid");
    if (ctx.num_malicious == 0) throw AttackError("bad_unlearn: no malicious clients");
    std::vector<double> grid = epsilons;
    std::sort(grid.begin(), grid.end());

    std::vector<double> objective(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) objective[i] = bad_unlearn_objective(ctx, grid[i], anchor);
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (objective[i] < objective[best]) best = i;
    }
    double best_eps = grid[best];
    double best_obj = objective[best];

    if (refine_points > 0 && grid.size() > 1) {
        const double lo = grid[best == 0 ? 0 : best - 1];
        const double hi = grid[std::min(best + 1, grid.size() - 1)];
        for (std::size_t k = 1; k <= refine_points; ++k) {
            const double eps = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(refine_points + 1);
            const double obj = bad_unlearn_objective(ctx, eps, anchor);
            if (obj < best_obj || (obj == best_obj && eps < best_eps)) {
                best_obj = obj;
                best_eps = eps;
            }
        }
    }

    BadUnlearnResult result;
    result.epsilon = best_eps;
    result.objective = best_obj;
    result.updates.assign(ctx.num_malicious, bad_unlearn_update(ctx, best_eps, anchor));
    return result;
}

ParamVector project_into_dist_filter(const ParamVector& target, const FilterWindow& window) {
    if (window.stored.empty()) throw AttackError("adaptive: empty filter window");
    if (dist_filter(target, window)) return target;
    if (window.diameter() == 0.0) return window.stored.back();
    const ParamVector center = window.centroid();
    if (!dist_filter(center, window)) return window.stored.back();
    const ParamVector dir = target - center;
    double feasible = 0.0, infeasible = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (feasible + infeasible);
        ParamVector probe = center;
        probe.axpy(mid, dir);
        (dist_filter(probe, window) ? feasible : infeasible) = mid;
    }
    ParamVector out = center;
    out.axpy(feasible, dir);
    return out;
}

ParamVector project_into_dir_filter(const ParamVector& target, const FilterWindow& window,
                                    bool flipped) {
    if (window.stored.size() < 2) throw AttackError("adaptive: direction filter needs two stored updates");
    const double median = window.median_norm();
    // the returned vector is the rescaled one, so that is what must pass
    auto passes = [&](const ParamVector& v) {
        return dir_filter_and_rescale(rescale_to_norm(v, median), window, flipped).accept;
    };
    if (passes(target)) return rescale_to_norm(target, median);

    // an endpoint the filter accepts: the latest stored update under the flipped
    // check; under the literal one a reflected stored update or reflected centroid
    const ParamVector& recent = window.stored.back();
    std::vector<ParamVector> candidates;
    if (flipped) {
        candidates.push_back(recent);
    } else {
        candidates.push_back(-recent);
        candidates.push_back(-window.centroid());
        for (auto it = window.stored.rbegin(); it != window.stored.rend(); ++it) candidates.push_back(-*it);
    }
    const auto found = std::find_if(candidates.begin(), candidates.end(), passes);
    if (found == candidates.end()) return rescale_to_norm(recent, median);
    const ParamVector anchor = *found;

    const ParamVector dir = anchor - target;
    double bad = 0.0, good = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (bad + good);
        ParamVector probe = target;
        probe.axpy(mid, dir);
        (passes(probe) ? good : bad) = mid;
    }
    ParamVector out = target;
    out.axpy(good, dir);
    return rescale_to_norm(out, median);
}

std::vector<ParamVector> adaptive_attack(const AttackContext& ctx,
                                         const std::vector<FilterWindow>& windows,
                                         FilterVariant variant, const AttackSpec& spec,
                                         bool dir_flipped) {
    if (windows.size() != ctx.num_malicious) {
        throw AttackError("adaptive: one filter window per malicious client is required");
    }
    const auto target = bad_unlearn(ctx, spec.eps_grid.values(), spec.anchor, spec.eps_grid.refine_points);
    std::vector<ParamVector> out;
    out.reserve(windows.size());
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto& u = target.updates[k];
        out.push_back(variant == FilterVariant::dist ? project_into_dist_filter(u, windows[k])
                                                     : project_into_dir_filter(u, windows[k], dir_flipped));
    }
    return out;
}

}  // namespace fedunlearn
