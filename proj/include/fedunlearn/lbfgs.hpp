#pragma once

#include <cstddef>
#include <deque>
#include <optional>

#include "fedunlearn/param_vector.hpp"

namespace fedunlearn {

/// Sliding window of (model difference, update difference) pairs for one client.
///
/// Entry k holds dw = w^t - w~^t and dg = g^t - g~^t for the round tagged t.
/// The oldest pair is evicted once `capacity` pairs are held.
class LbfgsBuffers {
 public:
    struct Pair {
        std::size_t round;
        ParamVector dw;
        ParamVector dg;
    };

    explicit LbfgsBuffers(std::size_t capacity);

    void push(std::size_t round, ParamVector dw, ParamVector dg);
    void clear() { pairs_.clear(); }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }
    const std::deque<Pair>& pairs() const { return pairs_; }

    /// Pair recorded for `round`, if still buffered.
    const Pair* find(std::size_t round) const;

 private:
    std::size_t capacity_;
    std::deque<Pair> pairs_;
};

inline constexpr double kDefaultSigmaMin = 1e-6;
inline constexpr double kHvpConditionFloor = 1e-12;

/// Initial Hessian scaling dg.dw / dw.dw from the pair tagged `target_round - 2`.
///
/// Falls back to the latest pair with a nonzero denominator when that round is
/// not buffered; nonpositive or undefined values are clamped to `sigma_min`.
double sigma_coefficient(const LbfgsBuffers& buffers, std::size_t target_round,
                         double sigma_min = kDefaultSigmaMin);

/// Compact-form L-BFGS approximation of H * delta_w.
///
/// Builds A = dW^T dG, D = diag(A), L = strict lower triangle of A and solves
///   [ -D   L^T        ] p = [ dG^T delta_w       ]
///   [  L   sigma dW^TdW ]     [ sigma dW^T delta_w ]
/// returning sigma delta_w - [dG, sigma dW] p. A zero delta_w maps to zero.
/// Otherwise returns nullopt when the buffers
/// are empty or the block system's reciprocal condition number is below
/// `rcond_floor` (the caller must then fall back to an exact update).
std::optional<ParamVector> lbfgs_hvp(const LbfgsBuffers& buffers, const ParamVector& delta_w,
                                     double sigma, double rcond_floor = kHvpConditionFloor);

}  // namespace fedunlearn
