#include "fedunlearn/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedunlearn {

namespace {

std::size_t check_updates(std::span<const ParamVector> updates, const char* who) {
    if (updates.empty()) throw AggregationError(std::string(who) + ": empty update set");
    const std::size_t d = updates.front().dim();
    for (const auto& u : updates) {
        if (u.dim() != d) throw AggregationError(std::string(who) + ": dimension mismatch");
    }
    return d;
}

std::size_t ceil_fraction(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

// Krum scores with `neighbours` nearest others (clamped to what exists).
std::vector<double> krum_scores(std::span<const ParamVector> updates, std::size_t neighbours) {
    const std::size_t n = updates.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            dist[i][j] = dist[j][i] = squared_distance(updates[i], updates[j]);
        }
    }
    std::vector<double> scores(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        row.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row.push_back(dist[i][j]);
        }
        std::sort(row.begin(), row.end());
        const std::size_t take = std::min(neighbours, row.size());
        scores[i] = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take), 0.0);
    }
    return scores;
}

std::size_t argmin_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[best]) best = i;
    }
    return best;
}

std::size_t krum_neighbours(std::size_t n, std::size_t m) { return n >= m + 2 ? n - m - 2 : 0; }

}  // namespace

std::size_t AggregatorKind::resolve_param(std::size_t n) const {
    std::size_t want = param.value_or(ceil_fraction(byzantine_fraction, n));
    std::size_t cap = 0;
    switch (rule) {
        case AggregatorRule::fedavg:
        case AggregatorRule::median: return 0;
        case AggregatorRule::trimmed_mean: cap = n > 0 ? (n - 1) / 2 : 0; break;
        case AggregatorRule::krum: cap = n >= 3 ? (n - 3) / 2 : 0; break;
        case AggregatorRule::bulyan: cap = n >= 3 ? (n - 3) / 4 : 0; break;
    }
    if (param) return want;  // explicit values are checked by the rule itself
    return std::min(want, cap);
}

std::string AggregatorKind::name() const {
    switch (rule) {
        case AggregatorRule::fedavg: return "fedavg";
        case AggregatorRule::median: return "median";
        case AggregatorRule::trimmed_mean: return "trmean";
        case AggregatorRule::krum: return "krum";
        case AggregatorRule::bulyan: return "bulyan";
    }
    return "?";
}

AggregatorKind AggregatorKind::parse(const std::string& text) {
    // accepts "name" or "name:param"
    AggregatorKind kind;
    std::string name = text;
    if (auto colon = text.find(':'); colon != std::string::npos) {
        name = text.substr(0, colon);
        kind.param = static_cast<std::size_t>(std::stoul(text.substr(colon + 1)));
    }
    if (name == "fedavg") kind.rule = AggregatorRule::fedavg;
    else if (name == "median") kind.rule = AggregatorRule::median;
    else if (name == "trmean" || name == "trimmed_mean") kind.rule = AggregatorRule::trimmed_mean;
    else if (name == "krum") kind.rule = AggregatorRule::krum;
    else if (name == "bulyan") kind.rule = AggregatorRule::bulyan;
    else throw AggregationError("unknown aggregation rule '" + name + "'");
    return kind;
}

ParamVector fedavg(std::span<const ParamVector> updates, std::span<const double> weights) {
    const std::size_t d = check_updates(updates, "fedavg");
    if (weights.size() != updates.size()) throw AggregationError("fedavg: weight count mismatch");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw AggregationError("fedavg: weights must sum to 1");
    ParamVector out(d, 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i) out.axpy(weights[i], updates[i]);
    return out;
}

ParamVector coordinate_median(std::span<const ParamVector> updates) {
    const std::size_t d = check_updates(updates, "median");
    const std::size_t n = updates.size();
    ParamVector out(d);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = updates[i][j];
        std::sort(col.begin(), col.end());
        out[j] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return out;
}

ParamVector trimmed_mean(std::span<const ParamVector> updates, std::size_t k) {
    const std::size_t d = check_updates(updates, "trimmed_mean");
    const std::size_t n = updates.size();
    if (n <= 2 * k) {
        throw AggregationError("trimmed_mean: need more than 2k updates (n=" + std::to_string(n) +
                               ", k=" + std::to_string(k) + ")");
    }
    ParamVector out(d);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = updates[i][j];
        std::sort(col.begin(), col.end());
        double acc = 0.0;
        for (std::size_t i = k; i < n - k; ++i) acc += col[i];
        out[j] = acc / static_cast<double>(n - 2 * k);
    }
    return out;
}

std::size_t krum_index(std::span<const ParamVector> updates, std::size_t m) {
    check_updates(updates, "krum");
    const std::size_t n = updates.size();
    if (n < 2 * m + 3) {
        throw AggregationError("krum: need n >= 2m + 3 (n=" + std::to_string(n) + ", m=" +
                               std::to_string(m) + ")");
    }
    return argmin_lowest(krum_scores(updates, krum_neighbours(n, m)));
}

ParamVector krum(std::span<const ParamVector> updates, std::size_t m) {
    return updates[krum_index(updates, m)];
}

ParamVector bulyan(std::span<const ParamVector> updates, std::size_t m) {
    const std::size_t d = check_updates(updates, "bulyan");
    const std::size_t n = updates.size();
    if (n < 4 * m + 3) {
        throw AggregationError("bulyan: need n >= 4m + 3 (n=" + std::to_string(n) + ", m=" +
                               std::to_string(m) + ")");
    }
    const std::size_t theta = n - 2 * m;
    const std::size_t beta = theta - 2 * m;

    std::vector<ParamVector> pool(updates.begin(), updates.end());
    std::vector<ParamVector> selected;
    selected.reserve(theta);
    while (selected.size() < theta) {
        const auto scores = krum_scores(pool, krum_neighbours(pool.size(), m));
        const std::size_t pick = argmin_lowest(scores);
        selected.push_back(std::move(pool[pick]));
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    ParamVector out(d);
    std::vector<double> col(theta);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < theta; ++i) col[i] = selected[i][j];
        std::sort(col.begin(), col.end());
        const double med = theta % 2 == 1 ? col[theta / 2] : 0.5 * (col[theta / 2 - 1] + col[theta / 2]);
        // equal distances resolve toward the smaller value
        std::stable_sort(col.begin(), col.end(), [med](double a, double b) {
            return std::abs(a - med) < std::abs(b - med);
        });
        double acc = 0.0;
        for (std::size_t i = 0; i < beta; ++i) acc += col[i];
        out[j] = acc / static_cast<double>(beta);
    }
    return out;
}

ParamVector aggregate(const AggregatorKind& kind, std::span<const ParamVector> updates,
                      std::span<const double> weights) {
    const std::size_t n = updates.size();
    switch (kind.rule) {
        case AggregatorRule::fedavg: return fedavg(updates, weights);
        case AggregatorRule::median: return coordinate_median(updates);
        case AggregatorRule::trimmed_mean: return trimmed_mean(updates, kind.resolve_param(n));
        case AggregatorRule::krum:
            if (n < 3 && !kind.param) {
                check_updates(updates, "krum");
                return updates[0];
            }
            return krum(updates, kind.resolve_param(n));
        case AggregatorRule::bulyan:
            if (n < 3 && !kind.param) return trimmed_mean(updates, 0);
            return bulyan(updates, kind.resolve_param(n));
    }
    throw AggregationError("aggregate: unknown rule");
}

}  // namespace fedunlearn
