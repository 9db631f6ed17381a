#include "fedunlearn/param_vector.hpp"

#include <algorithm>
#include <cmath>

namespace fedunlearn {

void require_same_dim(const ParamVector& a, const ParamVector& b, const char* op) {
    if (a.dim() != b.dim()) {
        throw NumericError(std::string(op) + ": dimension mismatch (" + std::to_string(a.dim()) +
                           " vs " + std::to_string(b.dim()) + ")");
    }
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
    require_same_dim(*this, other, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
    require_same_dim(*this, other, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator*=(double scale) {
    for (double& x : values_) x *= scale;
    return *this;
}

ParamVector& ParamVector::operator/=(double scale) {
    for (double& x : values_) x /= scale;
    return *this;
}

ParamVector& ParamVector::axpy(double scale, const ParamVector& other) {
    require_same_dim(*this, other, "axpy");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
    return *this;
}

bool ParamVector::is_finite() const {
    for (double x : values_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void ParamVector::require_finite(const std::string& what) const {
    if (!is_finite()) throw NumericError(what + ": non-finite entry");
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator-(ParamVector a) { return a *= -1.0; }
ParamVector operator*(ParamVector a, double s) { return a *= s; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }
ParamVector operator/(ParamVector a, double s) { return a /= s; }

double dot(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(const ParamVector& v) {
    v.require_finite("l2_norm");
    // scaled accumulation so huge attack vectors do not overflow the square
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double acc = 0.0;
    for (double x : v) {
        const double y = x / scale;
        acc += y * y;
    }
    return scale * std::sqrt(acc);
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b, "squared_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double l2_distance(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b, "l2_distance");
    return l2_norm(a - b);
}

double cosine_similarity(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b, "cosine_similarity");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double c = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) c += (a[i] / na) * (b[i] / nb);
    return std::clamp(c, -1.0, 1.0);
}

ParamVector coordinate_sign(const ParamVector& v) {
    v.require_finite("coordinate_sign");
    ParamVector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = (v[i] > 0.0) - (v[i] < 0.0);
    return out;
}

}  // namespace fedunlearn
