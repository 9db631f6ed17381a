#pragma once

#include <vector>

#include "fedunlearn/param_vector.hpp"

namespace fedunlearn {

/// Stored FL-phase updates of one client over rounds [t - r, t], oldest first.
struct FilterWindow {
    std::vector<ParamVector> stored;

    /// max over distinct pairs of |a - b|; 0 for a single element.
    double diameter() const;
    /// max over distinct pairs of cos(a, b).
    double max_pair_cosine() const;
    /// Median of the stored update norms (mean of the two middles for even counts).
    double median_norm() const;
    ParamVector centroid() const;
};

/// Distance consistency check: max_t |estimate - stored_t| <= window diameter.
bool dist_filter(const ParamVector& estimate, const FilterWindow& window);

struct DirFilterResult {
    bool accept = false;
    /// On accept, the estimate rescaled to the window's median norm; otherwise the estimate.
    ParamVector adjusted;
};

/// Direction consistency check on the maximum cosine to the stored updates.
///
/// Literal form accepts when max_t cos(estimate, stored_t) is at most the largest
/// pairwise cosine among stored updates; `flipped` reverses the inequality.
/// A zero estimate is rejected. Requires at least two stored updates.
DirFilterResult dir_filter_and_rescale(const ParamVector& estimate, const FilterWindow& window,
                                       bool flipped = false);

/// v / |v| * target_norm (zero vectors are returned unchanged).
ParamVector rescale_to_norm(const ParamVector& v, double target_norm);

}  // namespace fedunlearn
