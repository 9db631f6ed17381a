#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fedunlearn/aggregation.hpp"
#include "fedunlearn/rng.hpp"

using namespace fedunlearn;

namespace {

constexpr double kTol = 1e-12;

std::vector<ParamVector> random_updates(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<ParamVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        ParamVector v(d);
        for (auto& x : v) x = rng.normal(0.0, 1.0 + static_cast<double>(i % 3));
        out.push_back(v);
    }
    return out;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Oracles below avoid sorting whole columns: they count ranks or remove extremes one at a time.

double oracle_median_of(std::vector<double> col) {
    const std::size_t n = col.size();
    // the value at rank k is the x with #(< x) <= k < #(<= x)
    auto at_rank = [&](std::size_t k) {
        for (double x : col) {
            std::size_t less = 0, leq = 0;
            for (double y : col) {
                less += y < x;
                leq += y <= x;
            }
            if (less <= k && k < leq) return x;
        }
        return std::numeric_limits<double>::quiet_NaN();
    };
    return n % 2 == 1 ? at_rank(n / 2) : (at_rank(n / 2 - 1) + at_rank(n / 2)) / 2.0;
}

ParamVector oracle_median(const std::vector<ParamVector>& u) {
    ParamVector out(u[0].dim());
    for (std::size_t j = 0; j < out.dim(); ++j) {
        std::vector<double> col;
        for (const auto& v : u) col.push_back(v[j]);
        out[j] = oracle_median_of(col);
    }
    return out;
}

ParamVector oracle_trimmed(const std::vector<ParamVector>& u, std::size_t k) {
    ParamVector out(u[0].dim());
    for (std::size_t j = 0; j < out.dim(); ++j) {
        std::vector<double> col;
        for (const auto& v : u) col.push_back(v[j]);
        for (std::size_t r = 0; r < k; ++r) {
            col.erase(std::min_element(col.begin(), col.end()));
            col.erase(std::max_element(col.begin(), col.end()));
        }
        double s = 0.0;
        for (double x : col) s += x;
        out[j] = s / static_cast<double>(col.size());
    }
    return out;
}

std::size_t oracle_krum(const std::vector<ParamVector>& u, std::size_t m) {
    const std::size_t n = u.size();
    const std::size_t take = n - m - 2;
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> dist;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < u[i].dim(); ++c) s += (u[i][c] - u[j][c]) * (u[i][c] - u[j][c]);
            dist.push_back(s);
        }
        // repeatedly take the nearest remaining neighbour
        double score = 0.0;
        for (std::size_t r = 0; r < take; ++r) {
            auto it = std::min_element(dist.begin(), dist.end());
            score += *it;
            dist.erase(it);
        }
        if (score < best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

ParamVector oracle_bulyan(std::vector<ParamVector> pool, std::size_t m) {
    const std::size_t theta = pool.size() - 2 * m;
    const std::size_t beta = theta - 2 * m;
    std::vector<ParamVector> sel;
    while (sel.size() < theta) {
        const std::size_t i = pool.size() >= m + 3 ? oracle_krum(pool, m) : 0;
        sel.push_back(pool[i]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    }
    ParamVector out(sel[0].dim());
    for (std::size_t j = 0; j < out.dim(); ++j) {
        std::vector<double> col;
        for (const auto& v : sel) col.push_back(v[j]);
        const double med = oracle_median_of(col);
        double s = 0.0;
        for (std::size_t r = 0; r < beta; ++r) {
            std::size_t pick = 0;
            for (std::size_t c = 1; c < col.size(); ++c) {
                const double dc = std::abs(col[c] - med), dp = std::abs(col[pick] - med);
                if (dc < dp || (dc == dp && col[c] < col[pick])) pick = c;
            }
            s += col[pick];
            col.erase(col.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        out[j] = s / static_cast<double>(beta);
    }
    return out;
}

}  // namespace

TEST_CASE("FedAvg matches the weighted sum") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(12), d = 1 + rng.below(6);
        const auto u = random_updates(rng, n, d);
        std::vector<double> w(n);
        double tot = 0.0;
        for (auto& x : w) tot += (x = 0.1 + rng.uniform());
        for (auto& x : w) x /= tot;
        ParamVector want(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < n; ++i) want[j] += w[i] * u[i][j];
        }
        CHECK(max_abs_diff(fedavg(u, w), want) <= kTol);
    }
}

TEST_CASE("coordinate median matches the rank oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(12), d = 1 + rng.below(6);
        auto u = random_updates(rng, n, d);
        // occasional duplicates exercise ties
        if (n > 2 && trial % 5 == 0) u[1] = u[0];
        CHECK(max_abs_diff(coordinate_median(u), oracle_median(u)) <= kTol);
    }
}

TEST_CASE("trimmed mean matches repeated extreme removal") {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(12), d = 1 + rng.below(6);
        const auto u = random_updates(rng, n, d);
        const std::size_t k = rng.below((n + 1) / 2);
        if (2 * k >= n) continue;
        CHECK(max_abs_diff(trimmed_mean(u, k), oracle_trimmed(u, k)) <= kTol);
    }
}

TEST_CASE("Krum selects the brute-force minimiser") {
    Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 3 + rng.below(10), d = 1 + rng.below(6);
        const std::size_t m = rng.below((n - 3) / 2 + 1);
        const auto u = random_updates(rng, n, d);
        const auto idx = oracle_krum(u, m);
        CHECK(krum_index(u, m) == idx);
        CHECK(krum(u, m) == u[idx]);
    }
}

TEST_CASE("Bulyan matches the selection-then-trim oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 3 + rng.below(12), d = 1 + rng.below(5);
        const std::size_t m = rng.below((n - 3) / 4 + 1);
        const auto u = random_updates(rng, n, d);
        CHECK(max_abs_diff(bulyan(u, m), oracle_bulyan(u, m)) <= kTol);
    }
}

TEST_CASE("infeasible parameters raise") {
    Rng rng(6);
    const auto u = random_updates(rng, 6, 3);
    CHECK_THROWS_AS(trimmed_mean(u, 3), AggregationError);
    CHECK_THROWS_AS(krum(u, 2), AggregationError);
    CHECK_THROWS_AS(bulyan(u, 1), AggregationError);
    CHECK_THROWS_AS(coordinate_median(std::vector<ParamVector>{}), AggregationError);
    const std::vector<double> bad_w(6, 0.5);
    CHECK_THROWS_AS(fedavg(u, bad_w), AggregationError);
    std::vector<ParamVector> mixed{ParamVector{1.0}, ParamVector{1.0, 2.0}};
    CHECK_THROWS_AS(coordinate_median(mixed), AggregationError);
    CHECK_THROWS_AS(AggregatorKind::parse("geomed"), AggregationError);
}

TEST_CASE("defaults resolve to ceil(0.2 n) within feasibility") {
    AggregatorKind tm = AggregatorKind::parse("trmean");
    CHECK(tm.resolve_param(20) == 4);
    CHECK(tm.resolve_param(3) == 1);
    AggregatorKind kr = AggregatorKind::parse("krum");
    CHECK(kr.resolve_param(20) == 4);
    CHECK(kr.resolve_param(5) == 1);
    AggregatorKind bu = AggregatorKind::parse("bulyan");
    CHECK(bu.resolve_param(20) == 4);
    CHECK(bu.resolve_param(10) == 1);
    CHECK(AggregatorKind::parse("trmean:2").resolve_param(20) == 2);
    CHECK(AggregatorKind::parse("trimmed_mean").name() == "trmean");
}

TEST_CASE("a single update passes through every rule") {
    const std::vector<ParamVector> one{ParamVector{1.5, -2.0}};
    const std::vector<double> w{1.0};
    for (const char* name : {"fedavg", "median", "trmean", "krum", "bulyan"}) {
        CHECK(aggregate(AggregatorKind::parse(name), one, w) == one[0]);
    }
}
