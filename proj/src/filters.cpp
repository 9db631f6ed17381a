#include "fedunlearn/filters.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace fedunlearn {

double FilterWindow::diameter() const {
    double best = 0.0;
    for (std::size_t a = 0; a < stored.size(); ++a) {
        for (std::size_t b = a + 1; b < stored.size(); ++b) {
            best = std::max(best, l2_distance(stored[a], stored[b]));
        }
    }
    return best;
}

double FilterWindow::max_pair_cosine() const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < stored.size(); ++a) {
        for (std::size_t b = a + 1; b < stored.size(); ++b) {
            best = std::max(best, cosine_similarity(stored[a], stored[b]));
        }
    }
    return best;
}

double FilterWindow::median_norm() const {
    if (stored.empty()) throw std::invalid_argument("FilterWindow: empty window");
    std::vector<double> norms;
    norms.reserve(stored.size());
    for (const auto& g : stored) norms.push_back(l2_norm(g));
    std::sort(norms.begin(), norms.end());
    const std::size_t n = norms.size();
    return n % 2 == 1 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
}

ParamVector FilterWindow::centroid() const {
    if (stored.empty()) throw std::invalid_argument("FilterWindow: empty window");
    ParamVector c(stored.front().dim(), 0.0);
    for (const auto& g : stored) c += g;
    return c / static_cast<double>(stored.size());
}

bool dist_filter(const ParamVector& estimate, const FilterWindow& window) {
    if (window.stored.empty()) throw std::invalid_argument("dist_filter: empty window");
    double lhs = 0.0;
    for (const auto& g : window.stored) lhs = std::max(lhs, l2_distance(estimate, g));
    return lhs <= window.diameter();
}

ParamVector rescale_to_norm(const ParamVector& v, double target_norm) {
    const double n = l2_norm(v);
    if (n == 0.0) return v;
    return v * (target_norm / n);
}

DirFilterResult dir_filter_and_rescale(const ParamVector& estimate, const FilterWindow& window,
                                       bool flipped) {
    if (window.stored.size() < 2) {
        throw std::invalid_argument("dir_filter_and_rescale: window needs at least two updates");
    }
    if (l2_norm(estimate) == 0.0) return {false, estimate};
    double lhs = -std::numeric_limits<double>::infinity();
    for (const auto& g : window.stored) lhs = std::max(lhs, cosine_similarity(estimate, g));
    const double rhs = window.max_pair_cosine();
    const bool accept = flipped ? lhs >= rhs : lhs <= rhs;
    if (!accept) return {false, estimate};
    return {true, rescale_to_norm(estimate, window.median_norm())};
}

}  // namespace fedunlearn
