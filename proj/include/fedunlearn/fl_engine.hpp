#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedunlearn/aggregation.hpp"
#include "fedunlearn/attacks.hpp"
#include "fedunlearn/dataset.hpp"
#include "fedunlearn/history.hpp"
#include "fedunlearn/model.hpp"
#include "fedunlearn/param_vector.hpp"

namespace fedunlearn {

/// Seed-derivation tags shared by the engines.
namespace seed_tag {
inline constexpr std::uint64_t init = 0x10;
inline constexpr std::uint64_t scratch_init = 0x11;
inline constexpr std::uint64_t batch = 0x20;
inline constexpr std::uint64_t trigger = 0x21;
inline constexpr std::uint64_t trim = 0x30;
inline constexpr std::uint64_t fu_trim = 0x31;
inline constexpr std::uint64_t roles = 0x40;
inline constexpr std::uint64_t partition = 0x50;
inline constexpr std::uint64_t task = 0x51;
}  // namespace seed_tag

enum class Role { benign, malicious };

struct ClientInfo {
    std::size_t id = 0;
    Role role = Role::benign;
    AttackSpec fl_attack;
    AttackSpec fu_attack;
    bool detected = false;

    bool attacks_in(Phase phase) const {
        return role == Role::malicious &&
               (phase == Phase::fl ? fl_attack.kind : fu_attack.kind) != AttackKind::none;
    }
};

/// Client i has shard i of the federation's ClientShards.
struct ClientRoster {
    std::vector<ClientInfo> clients;

    std::size_t size() const { return clients.size(); }
    const ClientInfo& at(std::size_t id) const;
    ClientInfo& at(std::size_t id);
    std::vector<std::size_t> all_ids() const;
    /// Clients not flagged as detected, in id order.
    std::vector<std::size_t> remaining() const;
    std::vector<std::size_t> detected() const;

    /// Seeded role draw: `fl_attackers` clients attack during FL, `fu_attackers`
    /// further clients stay honest in FL and attack only during unlearning.
    static ClientRoster assign(std::size_t n, std::size_t fl_attackers, std::size_t fu_attackers,
                               const AttackSpec& fl_attack, const AttackSpec& fu_attack,
                               std::uint64_t seed);
};

/// Everything a round of training needs: task, data, roster and server settings.
struct Federation {
    ModelSpec model;
    ClientShards shards;
    ClientRoster roster;
    AggregatorKind arr;
    double learning_rate = 0.05;
    std::size_t rounds = 300;
    /// 0 means full-batch local gradients.
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    /// Trigger-poisoned copy of the shard for clients that run a backdoor attack.
    std::vector<std::optional<LabeledDataset>> triggered;

    /// Builds triggered shards for every backdoor attacker in the roster.
    void prepare_triggers();

    /// grad L_i(w); with a batch size, a minibatch keyed by (seed, client, round).
    ParamVector honest_update(std::size_t id, std::size_t round, const ParamVector& w) const;
    /// Same gradient on the client's trigger-poisoned shard.
    ParamVector poisoned_update(std::size_t id, std::size_t round, const ParamVector& w) const;

    /// FedAvg weights |D_i| / sum |D_j| over `active`.
    std::vector<double> weights(std::span<const std::size_t> active) const;
};

/// Builds the attacker's view. `updates` are the values the server would
/// currently use for every active client; `honest` are the honest gradients.
/// Full knowledge sees the other clients' `updates`; otherwise only the
/// attackers' own honest updates.
AttackContext make_attack_context(const Federation& fed, Knowledge knowledge,
                                  std::span<const std::size_t> ids,
                                  std::span<const std::size_t> attacker_pos,
                                  const std::vector<ParamVector>& updates,
                                  const std::vector<ParamVector>& honest);

/// Overwrites the attackers' entries of `updates` with training-phase attack updates.
void apply_fl_attack(const Federation& fed, std::size_t round, const ParamVector& w,
                     std::span<const std::size_t> ids, std::span<const std::size_t> attacker_pos,
                     const std::vector<ParamVector>& honest, std::vector<ParamVector>& updates);

struct FlOptions {
    /// Participating client ids; empty means every client in the roster.
    std::vector<std::size_t> participants;
    std::optional<ParamVector> init;
    bool attacks_active = true;
    bool record_history = true;
    /// When set, history is streamed to this file instead of memory.
    std::optional<std::filesystem::path> history_file;
};

struct FlResult {
    ParamVector learned_model;
    std::optional<HistoryStore> history;
    /// Global models w^0..w^T.
    std::vector<ParamVector> trajectory;
};

FlResult run_fl(const Federation& fed, const FlOptions& options = {});

enum class DetectionMode { perfect, subset, none };

DetectionMode detection_mode_from_string(const std::string& name);
const char* to_string(DetectionMode mode);

/// Clients to remove after training: FL attackers (perfect), the given ids
/// (subset) or nobody (none). Throws on ids not in the roster.
std::vector<std::size_t> detection_oracle(const ClientRoster& roster, DetectionMode mode,
                                          std::span<const std::size_t> ids = {});

/// Marks the given ids as detected.
void apply_detection(ClientRoster& roster, std::span<const std::size_t> removed);

}  // namespace fedunlearn
