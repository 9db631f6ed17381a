#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedunlearn/param_vector.hpp"

namespace fedunlearn {

class AggregationError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

enum class AggregatorRule { fedavg, median, trimmed_mean, krum, bulyan };

/// Server aggregation rule plus its tolerance parameter.
///
/// `param` is the trim count k (trimmed mean) or the Byzantine tolerance m
/// (Krum, Bulyan). When unset it is resolved per call as
/// ceil(byzantine_fraction * n), clamped to the rule's feasibility bound.
struct AggregatorKind {
    AggregatorRule rule = AggregatorRule::fedavg;
    std::optional<std::size_t> param;
    double byzantine_fraction = 0.2;

    std::size_t resolve_param(std::size_t n) const;
    std::string name() const;

    static AggregatorKind parse(const std::string& text);
};

/// Sum_i alpha_i g_i; weights must sum to one.
ParamVector fedavg(std::span<const ParamVector> updates, std::span<const double> weights);

ParamVector coordinate_median(std::span<const ParamVector> updates);

/// Per coordinate: drop the k largest and k smallest values, average the rest.
ParamVector trimmed_mean(std::span<const ParamVector> updates, std::size_t k);

/// Index of the update with the smallest sum of squared distances to its
/// n - m - 2 nearest neighbours; ties toward the lowest index. Requires n >= 2m + 3.
std::size_t krum_index(std::span<const ParamVector> updates, std::size_t m);
ParamVector krum(std::span<const ParamVector> updates, std::size_t m);

/// Krum-selects theta = n - 2m candidates, then per coordinate averages the
/// beta = theta - 2m values closest to the candidates' median. Requires n >= 4m + 3.
ParamVector bulyan(std::span<const ParamVector> updates, std::size_t m);

/// Dispatches on `kind`; `weights` are only used by FedAvg.
ParamVector aggregate(const AggregatorKind& kind, std::span<const ParamVector> updates,
                      std::span<const double> weights);

}  // namespace fedunlearn
