#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedunlearn {

/// Raised for dimension mismatches and non-finite values in vector arithmetic.
class NumericError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Flat real-valued vector holding model parameters or a model update.
///
/// All binary operations require equal dimensions. Entries are expected to be
/// finite; `require_finite()` and the norm/sign helpers enforce it.
class ParamVector {
 public:
    ParamVector() = default;
    explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
    explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
    ParamVector(std::initializer_list<double> values) : values_(values) {}

    std::size_t dim() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> span() { return values_; }
    std::span<const double> span() const { return values_; }
    const std::vector<double>& values() const { return values_; }

    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }

    ParamVector& operator+=(const ParamVector& other);
    ParamVector& operator-=(const ParamVector& other);
    ParamVector& operator*=(double scale);
    ParamVector& operator/=(double scale);

    /// this += scale * other
    ParamVector& axpy(double scale, const ParamVector& other);

    bool is_finite() const;
    /// Throws NumericError naming `what` if any entry is NaN or infinite.
    void require_finite(const std::string& what = "vector") const;

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
    std::vector<double> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a);
ParamVector operator*(ParamVector a, double s);
ParamVector operator*(double s, ParamVector a);
ParamVector operator/(ParamVector a, double s);

void require_same_dim(const ParamVector& a, const ParamVector& b, const char* op);

double dot(const ParamVector& a, const ParamVector& b);
double l2_norm(const ParamVector& v);
double squared_distance(const ParamVector& a, const ParamVector& b);
double l2_distance(const ParamVector& a, const ParamVector& b);

/// a.b / (|a||b|); 0 when either norm vanishes.
double cosine_similarity(const ParamVector& a, const ParamVector& b);

/// Per-coordinate sign in {-1, 0, +1}.
ParamVector coordinate_sign(const ParamVector& v);

}  // namespace fedunlearn
