#include "fedunlearn/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "fedunlearn/filters.hpp"
#include "fedunlearn/parallel.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

const char* to_string(UnlearnMethod method) {
    switch (method) {
        case UnlearnMethod::learned: return "learned";
        case UnlearnMethod::scratch: return "scratch";
        case UnlearnMethod::historical: return "historical";
        case UnlearnMethod::fedrecover: return "fedrecover";
        case UnlearnMethod::unlearnguard_dist: return "ug_dist";
        case UnlearnMethod::unlearnguard_dir: return "ug_dir";
    }
    return "?";
}

UnlearnMethod unlearn_method_from_string(const std::string& name) {
    for (auto m : {UnlearnMethod::learned, UnlearnMethod::scratch, UnlearnMethod::historical,
                   UnlearnMethod::fedrecover, UnlearnMethod::unlearnguard_dist,
                   UnlearnMethod::unlearnguard_dir}) {
        if (name == to_string(m)) return m;
    }
    throw UnlearnError("unknown unlearning method '" + name + "'");
}

FlResult train_from_scratch(const Federation& fed, std::optional<ParamVector> init,
                            bool attackers_active) {
    FlOptions opt;
    opt.participants = fed.roster.remaining();
    if (opt.participants.empty()) throw UnlearnError("train_from_scratch: no remaining clients");
    opt.init = init ? std::move(init)
                    : init_params(fed.model, derive_seed(fed.seed, {seed_tag::scratch_init}));
    opt.attacks_active = attackers_active;
    opt.record_history = false;
    return run_fl(fed, opt);
}

ParamVector historical_only(const Federation& fed, const HistoryStore& history) {
    if (history.size() == 0) throw UnlearnError("historical_only: empty history");
    const auto ids = fed.roster.remaining();
    if (ids.empty()) throw UnlearnError("historical_only: no remaining clients");
    const auto weights = fed.weights(ids);
    ParamVector w = history.global_model(0);
    const std::size_t T = history.size() - 1;
    std::vector<ParamVector> stored(ids.size());
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < ids.size(); ++k) stored[k] = history.client_update(t, ids[k]);
        w.axpy(-fed.learning_rate, aggregate(fed.arr, stored, weights));
        w.require_finite("historical_only: global model");
    }
    return w;
}

namespace {

enum class Status { estimated, exact, rejected, hvp_failed };

bool is_zero(const ParamVector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

double median_of(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct FuRun {
    const Federation& fed;
    const HistoryStore& history;
    const ParamVector& learned;
    const UnlearnOptions& opt;
    bool fedrecover = false;
    FilterVariant variant = FilterVariant::dist;
};

void apply_fu_attack(const FuRun& run, std::size_t t, const ParamVector& w,
                     const std::vector<std::size_t>& ids, const std::vector<std::size_t>& pos,
                     const std::vector<ParamVector>& honest, const std::vector<FilterWindow>& windows,
                     std::vector<ParamVector>& used) {
    if (pos.empty()) return;
    const Federation& fed = run.fed;
    const AttackSpec& spec = fed.roster.at(ids[pos.front()]).fu_attack;
    switch (spec.kind) {
        case AttackKind::none: return;
        case AttackKind::backdoor:
            for (std::size_t p : pos) {
                used[p] = backdoor_update(honest[p], fed.poisoned_update(ids[p], t, w),
                                          spec.backdoor_scale);
            }
            return;
        case AttackKind::trim:
        case AttackKind::lie:
        case AttackKind::bad_unlearn:
        case AttackKind::adaptive: break;
    }
    AttackContext ctx = make_attack_context(fed, spec.knowledge, ids, pos, used, honest);
    ctx.learned_model = run.learned;
    ctx.current_model = w;
    std::vector<ParamVector> crafted;
    if (spec.kind == AttackKind::trim) {
        Rng rng(derive_seed(fed.seed, {seed_tag::fu_trim, t}));
        crafted = trim_attack(ctx, spec.trim_b, rng);
    } else if (spec.kind == AttackKind::lie) {
        crafted = lie_attack(ctx, spec.lie_z);
    } else if (spec.kind == AttackKind::adaptive && !run.fedrecover && !windows.empty()) {
        std::vector<FilterWindow> mine;
        for (std::size_t p : pos) mine.push_back(windows[p]);
        crafted = adaptive_attack(ctx, mine, run.variant, spec, run.opt.dir_filter_flipped);
    } else {
        crafted = bad_unlearn(ctx, spec.eps_grid.values(), spec.anchor, spec.eps_grid.refine_points)
                      .updates;
    }
    for (std::size_t j = 0; j < pos.size(); ++j) used[pos[j]] = std::move(crafted[j]);
}

UnlearnReport run_fu(const FuRun& run) {
    const Federation& fed = run.fed;
    const HistoryStore& history = run.history;
    const UnlearnOptions& opt = run.opt;
    if (history.size() == 0) throw UnlearnError("unlearning: empty history");
    const auto ids = fed.roster.remaining();
    if (ids.empty()) throw UnlearnError("unlearning: no remaining clients");
    for (std::size_t id : ids) {
        if (!history.has_client(id)) {
            throw UnlearnError("client " + std::to_string(id) + " has no stored updates");
        }
    }
    if (!run.fedrecover && opt.buffer_r == 0) throw UnlearnError("buffer r must be positive");
    if (opt.lbfgs_s == 0) throw UnlearnError("L-BFGS buffer size must be positive");
    const auto& sched = opt.fedrecover;
    if (run.fedrecover && sched.correction_period == 0) {
        throw UnlearnError("fedrecover: correction period must be positive");
    }

    const std::size_t T = history.size() - 1;
    const std::size_t n = ids.size();
    const auto weights = fed.weights(ids);
    const std::size_t r = opt.buffer_r;
    const std::size_t warmup = std::min(T, run.fedrecover ? sched.warmup : r);

    std::vector<bool> attacker(n, false);
    if (opt.attacks_active) {
        for (std::size_t k = 0; k < n; ++k) attacker[k] = fed.roster.at(ids[k]).attacks_in(Phase::fu);
    }

    std::vector<double> tau(n, 0.0);
    if (run.fedrecover) {
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<double> norms;
            norms.reserve(T);
            for (std::size_t t = 0; t < T; ++t) norms.push_back(l2_norm(history.client_update(t, ids[k])));
            tau[k] = sched.tau_factor * median_of(std::move(norms));
        }
    }

    UnlearnReport report;
    report.method = run.fedrecover ? "fedrecover"
                                   : (run.variant == FilterVariant::dist ? "ug_dist" : "ug_dir");
    report.remaining = ids;
    report.removed = fed.roster.detected();
    report.rounds = T;
    report.warmup_rounds = warmup;
    report.rejections_per_client.assign(n, 0);
    report.learning_rate = fed.learning_rate;
    report.error_measured = opt.measure_error;
    report.premises.fedavg = fed.arr.rule == AggregatorRule::fedavg;
    report.premises.no_fu_attack = std::none_of(attacker.begin(), attacker.end(), [](bool b) { return b; });
    {
        const auto perfect = detection_oracle(fed.roster, DetectionMode::perfect);
        report.premises.perfect_detection = perfect == report.removed;
    }
    report.premises.convex_task = fed.model.kind == ModelKind::quadratic_probe ||
                                  (fed.model.kind == ModelKind::softmax_regression &&
                                   fed.model.l2_lambda > 0.0);

    if (opt.reference && opt.reference->size() != T + 1) {
        throw UnlearnError("reference trajectory has the wrong length");
    }

    std::vector<LbfgsBuffers> buffers(n, LbfgsBuffers(opt.lbfgs_s));
    std::vector<std::deque<ParamVector>> recent(n);
    ParamVector w = history.global_model(0);
    if (opt.reference) report.distance_trace.push_back(l2_distance(w, (*opt.reference)[0]));

    std::vector<ParamVector> stored(n), used(n), honest(n);
    std::vector<Status> status(n);
    std::vector<FilterWindow> windows;
    for (std::size_t t = 0; t < T; ++t) {
        const ParamVector& w_fl = history.cached_global_model(t);
        const ParamVector dw = w - w_fl;
        const bool dw_zero = is_zero(dw);
        for (std::size_t k = 0; k < n; ++k) {
            stored[k] = history.client_update(t, ids[k]);
            if (!run.fedrecover) {
                recent[k].push_back(stored[k]);
                if (recent[k].size() > r + 1) recent[k].pop_front();
            }
        }
        windows.clear();
        if (!run.fedrecover && t >= warmup) {
            windows.resize(n);
            for (std::size_t k = 0; k < n; ++k) {
                windows[k].stored.assign(recent[k].begin(), recent[k].end());
            }
        }

        bool all_exact = t < warmup;
        if (run.fedrecover && !all_exact) {
            all_exact = t + sched.final_exact >= T ||
                        (t + 1 - sched.warmup) % sched.correction_period == 0;
        }

        std::fill(status.begin(), status.end(), Status::exact);
        if (!all_exact) {
            parallel_for(n, fed.threads, [&](std::size_t k) {
                const double sigma = sigma_coefficient(buffers[k], t, opt.sigma_min);
                auto hv = lbfgs_hvp(buffers[k], dw, sigma, opt.rcond_floor);
                if (!hv) {
                    status[k] = Status::hvp_failed;
                    return;
                }
                ParamVector est = stored[k] + *hv;
                if (!est.is_finite()) {
                    status[k] = Status::hvp_failed;
                    return;
                }
                if (run.fedrecover) {
                    if (l2_norm(est) > tau[k]) {
                        status[k] = Status::rejected;
                        return;
                    }
                    used[k] = std::move(est);
                } else if (run.variant == FilterVariant::dist) {
                    if (!dist_filter(est, windows[k])) {
                        status[k] = Status::rejected;
                        return;
                    }
                    used[k] = std::move(est);
                } else {
                    auto res = dir_filter_and_rescale(est, windows[k], opt.dir_filter_flipped);
                    if (!res.accept) {
                        status[k] = Status::rejected;
                        return;
                    }
                    used[k] = std::move(res.adjusted);
                }
                status[k] = Status::estimated;
            });
        }

        parallel_for(n, fed.threads, [&](std::size_t k) {
            if (status[k] != Status::estimated || opt.measure_error) {
                honest[k] = fed.honest_update(ids[k], t, w);
            }
            if (status[k] != Status::estimated) used[k] = honest[k];
        });

        std::vector<std::size_t> requested_attackers;
        for (std::size_t k = 0; k < n; ++k) {
            if (attacker[k] && status[k] != Status::estimated) requested_attackers.push_back(k);
        }
        apply_fu_attack(run, t, w, ids, requested_attackers, honest, windows, used);

        const bool rescale_now = t >= warmup ? opt.rescale_exact : opt.rescale_exact && opt.rescale_warmup;
        if (!run.fedrecover && rescale_now) {
            for (std::size_t k = 0; k < n; ++k) {
                if (status[k] == Status::estimated) continue;
                const double cap = t >= warmup ? windows[k].median_norm()
                                               : FilterWindow{{recent[k].begin(), recent[k].end()}}.median_norm();
                if (run.variant == FilterVariant::dir || l2_norm(used[k]) > cap) {
                    used[k] = rescale_to_norm(used[k], cap);
                }
            }
        }

        std::size_t est_count = 0;
        std::size_t exact_count = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (opt.measure_error) {
                report.measured_M = std::max(report.measured_M, l2_distance(used[k], honest[k]));
            }
            if (t < warmup) {
                ++report.warmup_exact_count;
                continue;
            }
            switch (status[k]) {
                case Status::estimated: ++est_count; break;
                case Status::exact: ++exact_count; break;
                case Status::rejected:
                    ++exact_count;
                    ++report.filter_rejections;
                    ++report.rejections_per_client[k];
                    break;
                case Status::hvp_failed:
                    ++exact_count;
                    ++report.hvp_failures;
                    break;
            }
        }
        if (t >= warmup) {
            report.estimated_count += est_count;
            report.exact_count += exact_count;
            report.estimated_per_round.push_back(est_count);
            report.exact_per_round.push_back(exact_count);
        }

        const ParamVector agg = aggregate(fed.arr, used, weights);
        if (!dw_zero) {
            for (std::size_t k = 0; k < n; ++k) {
                if (run.fedrecover && status[k] == Status::estimated) continue;
                buffers[k].push(t, dw, used[k] - stored[k]);
            }
        }
        w.axpy(-fed.learning_rate, agg);
        w.require_finite("unlearning: global model");
        if (opt.reference) report.distance_trace.push_back(l2_distance(w, (*opt.reference)[t + 1]));
    }
    report.unlearned_model = std::move(w);
    return report;
}

}  // namespace

UnlearnReport fedrecover_baseline(const Federation& fed, const HistoryStore& history,
                                  const ParamVector& learned_model, const UnlearnOptions& options) {
    return run_fu(FuRun{fed, history, learned_model, options, true, FilterVariant::dist});
}

UnlearnReport unlearnguard(const Federation& fed, const HistoryStore& history,
                           const ParamVector& learned_model, FilterVariant variant,
                           const UnlearnOptions& options) {
    return run_fu(FuRun{fed, history, learned_model, options, false, variant});
}

bool BoundCheck::all_hold() const {
    return preconditions_ok && std::all_of(holds.begin(), holds.end(), [](bool b) { return b; });
}

BoundCheck theorem_bound(const std::vector<double>& distance_trace, double M,
                         const ConvexityProfile& profile, double eta, const BoundPremises& premises) {
    BoundCheck out;
    auto fail = [&](std::string why) {
        out.violation = std::move(why);
        return out;
    };
    if (!premises.fedavg) return fail("aggregation rule is not FedAvg");
    if (!premises.perfect_detection) return fail("detection is not perfect");
    if (!premises.no_fu_attack) return fail("unlearning-phase attackers are active");
    if (!premises.convex_task) return fail("task is not strongly convex");
    if (!(profile.mu > 0.0) || !(profile.lipschitz_L >= profile.mu)) {
        return fail("invalid convexity profile");
    }
    if (!(eta > 0.0) || eta > std::min(1.0 / profile.mu, 1.0 / profile.lipschitz_L) * (1.0 + 1e-12)) {
        return fail("learning rate exceeds min(1/mu, 1/L)");
    }
    if (!std::isfinite(M) || M < 0.0) return fail("estimate error M is not finite");
    if (distance_trace.empty()) return fail("no distance trace");

    out.preconditions_ok = true;
    const double q = std::sqrt(std::max(0.0, 1.0 - eta * profile.mu));
    const double d0 = distance_trace.front();
    double qt = 1.0;
    double geometric = 0.0;  // sum_{j<t} q^j
    for (double lhs : distance_trace) {
        const double rhs = qt * d0 + geometric * eta * M;
        out.lhs.push_back(lhs);
        out.rhs.push_back(rhs);
        out.holds.push_back(lhs <= rhs + kBoundSlack);
        geometric += qt;
        qt *= q;
    }
    return out;
}

BoundCheck theorem_bound(const UnlearnReport& report) {
    if (!report.profile) {
        BoundCheck out;
        out.violation = "report has no convexity profile";
        return out;
    }
    if (!report.error_measured) {
        BoundCheck out;
        out.violation = "estimate error was not measured";
        return out;
    }
    return theorem_bound(report.distance_trace, report.measured_M, *report.profile,
                         report.learning_rate, report.premises);
}

}  // namespace fedunlearn
