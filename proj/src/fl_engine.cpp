#include "fedunlearn/fl_engine.hpp"

#include <algorithm>
#include <numeric>

#include "fedunlearn/parallel.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

const ClientInfo& ClientRoster::at(std::size_t id) const {
    if (id >= clients.size() || clients[id].id != id) {
        throw std::out_of_range("roster: unknown client " + std::to_string(id));
    }
    return clients[id];
}

ClientInfo& ClientRoster::at(std::size_t id) {
    return const_cast<ClientInfo&>(static_cast<const ClientRoster&>(*this).at(id));
}

std::vector<std::size_t> ClientRoster::all_ids() const {
    std::vector<std::size_t> ids(clients.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    return ids;
}

std::vector<std::size_t> ClientRoster::remaining() const {
    std::vector<std::size_t> ids;
    for (const auto& c : clients) {
        if (!c.detected) ids.push_back(c.id);
    }
    return ids;
}

std::vector<std::size_t> ClientRoster::detected() const {
    std::vector<std::size_t> ids;
    for (const auto& c : clients) {
        if (c.detected) ids.push_back(c.id);
    }
    return ids;
}

ClientRoster ClientRoster::assign(std::size_t n, std::size_t fl_attackers, std::size_t fu_attackers,
                                  const AttackSpec& fl_attack, const AttackSpec& fu_attack,
                                  std::uint64_t seed) {
    if (fl_attackers + fu_attackers > n) {
        throw std::invalid_argument("roster: more attackers than clients");
    }
    fl_attack.validate(Phase::fl);
    fu_attack.validate(Phase::fu);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {seed_tag::roles}));
    rng.shuffle(order);

    ClientRoster roster;
    roster.clients.resize(n);
    for (std::size_t i = 0; i < n; ++i) roster.clients[i].id = i;
    for (std::size_t k = 0; k < fl_attackers + fu_attackers; ++k) {
        auto& c = roster.clients[order[k]];
        c.role = Role::malicious;
        if (k < fl_attackers) c.fl_attack = fl_attack;
        // every malicious client keeps its unlearning-phase behaviour, including
        // FL attackers that escape detection
        c.fu_attack = fu_attack;
    }
    return roster;
}

void Federation::prepare_triggers() {
    triggered.assign(shards.num_clients(), std::nullopt);
    for (const auto& c : roster.clients) {
        if (c.role != Role::malicious) continue;
        const AttackSpec* spec = nullptr;
        if (c.fl_attack.kind == AttackKind::backdoor) spec = &c.fl_attack;
        if (c.fu_attack.kind == AttackKind::backdoor) spec = &c.fu_attack;
        if (!spec) continue;
        triggered.at(c.id) = inject_trigger(shards.shards.at(c.id), spec->trigger,
                                            derive_seed(seed, {seed_tag::trigger, c.id}));
    }
}

namespace {

ParamVector local_gradient(const Federation& fed, const LabeledDataset& data, std::size_t id,
                           std::size_t round, const ParamVector& w) {
    if (fed.batch_size == 0 || fed.batch_size >= data.size()) return gradient(fed.model, w, data);
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Rng rng(derive_seed(fed.seed, {seed_tag::batch, id, round}));
    rng.shuffle(rows);
    rows.resize(fed.batch_size);
    std::sort(rows.begin(), rows.end());
    return gradient(fed.model, w, data.subset(rows));
}

}  // namespace

ParamVector Federation::honest_update(std::size_t id, std::size_t round, const ParamVector& w) const {
    return local_gradient(*this, shards.shards.at(id), id, round, w);
}

ParamVector Federation::poisoned_update(std::size_t id, std::size_t round, const ParamVector& w) const {
    if (id >= triggered.size() || !triggered[id]) {
        throw AttackError("client " + std::to_string(id) + " has no poisoned shard");
    }
    return local_gradient(*this, *triggered[id], id, round, w);
}

std::vector<double> Federation::weights(std::span<const std::size_t> active) const {
    return shards.weights(active);
}

AttackContext make_attack_context(const Federation& fed, Knowledge knowledge,
                                  std::span<const std::size_t> ids,
                                  std::span<const std::size_t> attacker_pos,
                                  const std::vector<ParamVector>& updates,
                                  const std::vector<ParamVector>& honest) {
    AttackContext ctx;
    ctx.knowledge = knowledge;
    ctx.arr = fed.arr;
    ctx.learning_rate = fed.learning_rate;
    ctx.num_malicious = attacker_pos.size();
    const auto all_w = fed.weights(ids);
    std::vector<bool> is_attacker(ids.size(), false);
    for (std::size_t p : attacker_pos) is_attacker.at(p) = true;
    for (std::size_t p : attacker_pos) ctx.malicious_weights.push_back(all_w[p]);
    if (knowledge == Knowledge::full) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (is_attacker[k]) continue;
            ctx.visible.push_back(updates[k]);
            ctx.visible_weights.push_back(all_w[k]);
        }
    }
    if (ctx.visible.empty()) {
        // partial or black-box knowledge, or nobody else to observe
        for (std::size_t p : attacker_pos) {
            ctx.visible.push_back(honest[p]);
            ctx.visible_weights.push_back(all_w[p]);
        }
    }
    return ctx;
}

void apply_fl_attack(const Federation& fed, std::size_t round, const ParamVector& w,
                     std::span<const std::size_t> ids, std::span<const std::size_t> attacker_pos,
                     const std::vector<ParamVector>& honest, std::vector<ParamVector>& updates) {
    if (attacker_pos.empty()) return;
    const AttackSpec& spec = fed.roster.at(ids[attacker_pos.front()]).fl_attack;
    for (std::size_t p : attacker_pos) {
        if (fed.roster.at(ids[p]).fl_attack.kind != spec.kind) {
            throw AttackError("attackers in one phase must share an attack");
        }
    }
    switch (spec.kind) {
        case AttackKind::none: return;
        case AttackKind::backdoor:
            for (std::size_t p : attacker_pos) {
                updates[p] = backdoor_update(honest[p], fed.poisoned_update(ids[p], round, w),
                                             spec.backdoor_scale);
            }
            return;
        case AttackKind::trim:
        case AttackKind::lie: {
            const auto ctx = make_attack_context(fed, spec.knowledge, ids, attacker_pos, updates, honest);
            std::vector<ParamVector> crafted;
            if (spec.kind == AttackKind::trim) {
                Rng rng(derive_seed(fed.seed, {seed_tag::trim, round}));
                crafted = trim_attack(ctx, spec.trim_b, rng);
            } else {
                crafted = lie_attack(ctx, spec.lie_z);
            }
            for (std::size_t j = 0; j < attacker_pos.size(); ++j) updates[attacker_pos[j]] = crafted[j];
            return;
        }
        case AttackKind::bad_unlearn:
        case AttackKind::adaptive:
            throw AttackError(std::string(to_string(spec.kind)) + " is an unlearning-phase attack");
    }
}

FlResult run_fl(const Federation& fed, const FlOptions& options) {
    fed.model.validate();
    std::vector<std::size_t> ids = options.participants.empty() ? fed.roster.all_ids()
                                                                 : options.participants;
    if (ids.empty()) throw std::invalid_argument("run_fl: no participating clients");
    for (std::size_t id : ids) (void)fed.roster.at(id);
    if (!(fed.learning_rate > 0.0)) throw std::invalid_argument("run_fl: learning rate must be positive");

    ParamVector w = options.init ? *options.init
                                 : init_params(fed.model, derive_seed(fed.seed, {seed_tag::init}));
    if (w.dim() != fed.model.param_count()) throw std::invalid_argument("run_fl: init dimension mismatch");

    std::vector<std::size_t> attacker_pos;
    if (options.attacks_active) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (fed.roster.at(ids[k]).attacks_in(Phase::fl)) attacker_pos.push_back(k);
        }
    }
    const auto weights = fed.weights(ids);

    FlResult result;
    if (options.record_history) {
        result.history = options.history_file ? HistoryStore(ids, *options.history_file)
                                              : HistoryStore(ids);
    }
    result.trajectory.reserve(fed.rounds + 1);

    std::vector<ParamVector> honest(ids.size());
    for (std::size_t t = 0; t < fed.rounds; ++t) {
        parallel_for(ids.size(), fed.threads,
                     [&](std::size_t k) { honest[k] = fed.honest_update(ids[k], t, w); });
        std::vector<ParamVector> sent = honest;
        apply_fl_attack(fed, t, w, ids, attacker_pos, honest, sent);

        const ParamVector agg = aggregate(fed.arr, sent, weights);
        result.trajectory.push_back(w);
        if (result.history) result.history->append({t, w, std::move(sent)});
        w.axpy(-fed.learning_rate, agg);
        w.require_finite("run_fl: global model");
    }
    result.trajectory.push_back(w);
    if (result.history) {
        result.history->append({fed.rounds, w, {}});
        result.history->seal();
    }
    result.learned_model = std::move(w);
    return result;
}

DetectionMode detection_mode_from_string(const std::string& name) {
    if (name == "perfect") return DetectionMode::perfect;
    if (name == "subset") return DetectionMode::subset;
    if (name == "none") return DetectionMode::none;
    throw std::invalid_argument("unknown detection mode '" + name + "'");
}

const char* to_string(DetectionMode mode) {
    switch (mode) {
        case DetectionMode::perfect: return "perfect";
        case DetectionMode::subset: return "subset";
        case DetectionMode::none: return "none";
    }
    return "?";
}

std::vector<std::size_t> detection_oracle(const ClientRoster& roster, DetectionMode mode,
                                          std::span<const std::size_t> ids) {
    std::vector<std::size_t> out;
    switch (mode) {
        case DetectionMode::perfect:
            for (const auto& c : roster.clients) {
                if (c.attacks_in(Phase::fl)) out.push_back(c.id);
            }
            break;
        case DetectionMode::subset:
            for (std::size_t id : ids) {
                (void)roster.at(id);
                out.push_back(id);
            }
            std::sort(out.begin(), out.end());
            out.erase(std::unique(out.begin(), out.end()), out.end());
            break;
        case DetectionMode::none: break;
    }
    return out;
}

void apply_detection(ClientRoster& roster, std::span<const std::size_t> removed) {
    for (auto& c : roster.clients) c.detected = false;
    for (std::size_t id : removed) roster.at(id).detected = true;
}

}  // namespace fedunlearn
