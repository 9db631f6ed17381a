#include "fedunlearn/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fedunlearn {

LbfgsBuffers::LbfgsBuffers(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("LbfgsBuffers: capacity must be positive");
}

void LbfgsBuffers::push(std::size_t round, ParamVector dw, ParamVector dg) {
    require_same_dim(dw, dg, "LbfgsBuffers::push");
    if (!pairs_.empty()) require_same_dim(dw, pairs_.front().dw, "LbfgsBuffers::push");
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back(Pair{round, std::move(dw), std::move(dg)});
}

const LbfgsBuffers::Pair* LbfgsBuffers::find(std::size_t round) const {
    for (const auto& p : pairs_) {
        if (p.round == round) return &p;
    }
    return nullptr;
}

double sigma_coefficient(const LbfgsBuffers& buffers, std::size_t target_round, double sigma_min) {
    auto ratio = [](const LbfgsBuffers::Pair& p) -> std::optional<double> {
        const double den = dot(p.dw, p.dw);
        if (den == 0.0 || !std::isfinite(den)) return std::nullopt;
        return dot(p.dg, p.dw) / den;
    };

    std::optional<double> sigma;
    if (target_round >= 2) {
        if (const auto* p = buffers.find(target_round - 2)) sigma = ratio(*p);
    }
    for (auto it = buffers.pairs().rbegin(); !sigma && it != buffers.pairs().rend(); ++it) {
        sigma = ratio(*it);
    }
    if (!sigma || !std::isfinite(*sigma) || *sigma <= sigma_min) return sigma_min;
    return *sigma;
}

namespace {

using Matrix = std::vector<std::vector<double>>;

double one_norm(const Matrix& m) {
    const std::size_t n = m.size();
    double best = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < n; ++i) col += std::abs(m[i][j]);
        best = std::max(best, col);
    }
    return best;
}

// Gauss-Jordan inverse with partial pivoting; nullopt on an exactly singular pivot.
std::optional<Matrix> invert(Matrix a) {
    const std::size_t n = a.size();
    Matrix inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        if (a[piv][col] == 0.0 || !std::isfinite(a[piv][col])) return std::nullopt;
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        const double d = a[col][col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a[r][col] == 0.0) continue;
            const double f = a[r][col];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return inv;
}

}  // namespace

std::optional<ParamVector> lbfgs_hvp(const LbfgsBuffers& buffers, const ParamVector& delta_w,
                                     double sigma, double rcond_floor) {
    if (!(sigma > 0.0)) throw std::invalid_argument("lbfgs_hvp: sigma must be positive");
    if (std::all_of(delta_w.begin(), delta_w.end(), [](double x) { return x == 0.0; })) {
        // both right-hand blocks vanish, so p = 0 whatever the buffers hold
        return ParamVector(delta_w.dim(), 0.0);
    }
    if (buffers.empty()) return std::nullopt;
    const auto& pairs = buffers.pairs();
    const std::size_t k = pairs.size();
    require_same_dim(pairs.front().dw, delta_w, "lbfgs_hvp");

    // A = dW^T dG, S = dW^T dW
    Matrix block(2 * k, std::vector<double>(2 * k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double a_ij = dot(pairs[i].dw, pairs[j].dg);
            if (i == j) block[i][i] = -a_ij;
            if (i > j) {
                block[k + i][j] = a_ij;  // L
                block[j][k + i] = a_ij;  // L^T
            }
            block[k + i][k + j] = sigma * dot(pairs[i].dw, pairs[j].dw);
        }
    }

    const double norm = one_norm(block);
    if (norm == 0.0 || !std::isfinite(norm)) return std::nullopt;
    const auto inv = invert(block);
    if (!inv) return std::nullopt;
    const double rcond = 1.0 / (norm * one_norm(*inv));
    if (!(rcond >= rcond_floor)) return std::nullopt;

    std::vector<double> rhs(2 * k);
    for (std::size_t i = 0; i < k; ++i) {
        rhs[i] = dot(pairs[i].dg, delta_w);
        rhs[k + i] = sigma * dot(pairs[i].dw, delta_w);
    }
    std::vector<double> p(2 * k, 0.0);
    for (std::size_t i = 0; i < 2 * k; ++i) {
        for (std::size_t j = 0; j < 2 * k; ++j) p[i] += (*inv)[i][j] * rhs[j];
    }

    ParamVector out = sigma * delta_w;
    for (std::size_t i = 0; i < k; ++i) {
        out.axpy(-p[i], pairs[i].dg);
        out.axpy(-sigma * p[k + i], pairs[i].dw);
    }
    if (!out.is_finite()) return std::nullopt;
    return out;
}

}  // namespace fedunlearn
