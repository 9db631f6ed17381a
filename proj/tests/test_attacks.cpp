#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedunlearn/attacks.hpp"
#include "fedunlearn/rng.hpp"

using namespace fedunlearn;

namespace {

ParamVector random_vector(Rng& rng, std::size_t d, double scale = 1.0) {
    ParamVector v(d);
    for (auto& x : v) x = rng.normal(0.0, scale);
    return v;
}

AttackContext make_ctx(Rng& rng, std::size_t visible, std::size_t malicious, std::size_t d,
                       const char* arr = "fedavg") {
    AttackContext ctx;
    for (std::size_t i = 0; i < visible; ++i) ctx.visible.push_back(random_vector(rng, d));
    ctx.visible_weights.assign(visible, 1.0);
    ctx.num_malicious = malicious;
    ctx.malicious_weights.assign(malicious, 1.0);
    ctx.arr = AggregatorKind::parse(arr);
    ctx.learned_model = random_vector(rng, d);
    ctx.current_model = random_vector(rng, d);
    ctx.learning_rate = 0.1;
    return ctx;
}

}  // namespace

TEST_CASE("trim attack values fall in the directed-deviation interval") {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t d = 1 + rng.below(8);
        const auto ctx = make_ctx(rng, 2 + rng.below(6), 1 + rng.below(3), d);
        const double b = 1.0 + 3.0 * rng.uniform();
        Rng arng(trial);
        const auto mal = trim_attack(ctx, b, arng);
        REQUIRE(mal.size() == ctx.num_malicious);
        for (std::size_t j = 0; j < d; ++j) {
            double mx = -1e300, mn = 1e300, s = 0.0;
            for (const auto& v : ctx.visible) {
                mx = std::max(mx, v[j]);
                mn = std::min(mn, v[j]);
                s += v[j];
            }
            for (const auto& m : mal) {
                if (s > 0) {
                    // pushes below the smallest value, by at most a factor b
                    CHECK(m[j] <= mn);
                    CHECK(m[j] >= (mn > 0 ? mn / b : mn * b) - 1e-12);
                } else {
                    CHECK(m[j] >= mx);
                    CHECK(m[j] <= (mx > 0 ? mx * b : mx / b) + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("LIE update is mean minus z standard deviations") {
    Rng rng(32);
    const auto ctx = make_ctx(rng, 5, 2, 4);
    const auto mal = lie_attack(ctx, 1.5);
    REQUIRE(mal.size() == 2);
    for (std::size_t j = 0; j < 4; ++j) {
        double mean = 0.0;
        for (const auto& v : ctx.visible) mean += v[j] / 5.0;
        double var = 0.0;
        for (const auto& v : ctx.visible) var += (v[j] - mean) * (v[j] - mean) / 5.0;
        CHECK(mal[0][j] == doctest::Approx(mean - 1.5 * std::sqrt(var)).epsilon(1e-12));
        CHECK(mal[1][j] == mal[0][j]);
    }
}

TEST_CASE("backdoor update scales the poisoned direction") {
    const ParamVector h{1.0, 2.0}, p{3.0, 0.0};
    CHECK(backdoor_update(h, p, 1.0) == p);
    CHECK(backdoor_update(h, p, 0.0) == h);
    CHECK(backdoor_update(h, p, 2.0) == ParamVector{5.0, -2.0});
}

TEST_CASE("BadUnlearn model anchor steers the FedAvg step onto #w + eps psi") {
    Rng rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        const auto ctx = make_ctx(rng, 5, 3, 6);
        const double eps = 0.01 + rng.uniform();
        const auto mal = bad_unlearn_update(ctx, eps, BadUnlearnAnchor::model);
        ParamVector agg(6, 0.0);
        for (const auto& v : ctx.visible) agg += v / 8.0;
        agg += mal * (3.0 / 8.0);
        ParamVector next = *ctx.current_model - agg * ctx.learning_rate;
        CHECK(bad_unlearn_objective(ctx, eps, BadUnlearnAnchor::model) ==
              doctest::Approx(l2_distance(*ctx.learned_model, next)).epsilon(1e-12));
    }
}

TEST_CASE("BadUnlearn literal anchor crafts #w - eps sign(#w)") {
    Rng rng(34);
    const auto ctx = make_ctx(rng, 3, 1, 5);
    const auto mal = bad_unlearn_update(ctx, 0.5, BadUnlearnAnchor::literal);
    for (std::size_t j = 0; j < 5; ++j) {
        const double w = (*ctx.learned_model)[j];
        CHECK(mal[j] == doctest::Approx(w - 0.5 * (w > 0 ? 1.0 : -1.0)));
    }
}

TEST_CASE("epsilon search returns the best grid point with ties toward smaller values") {
    Rng rng(35);
    for (int trial = 0; trial < 50; ++trial) {
        const auto ctx = make_ctx(rng, 4, 2, 5);
        const EpsilonGrid grid;
        const auto values = grid.values();
        CHECK(values.size() == 25);
        CHECK(values.front() == doctest::Approx(1e-3));
        CHECK(values.back() == doctest::Approx(10.0));
        const auto res = bad_unlearn(ctx, values, BadUnlearnAnchor::model, 0);
        for (double e : values) {
            CHECK(res.objective <= bad_unlearn_objective(ctx, e, BadUnlearnAnchor::model));
        }
        const auto refined = bad_unlearn(ctx, values, BadUnlearnAnchor::model, 8);
        CHECK(refined.objective <= res.objective);
    }
    // median over many visible updates ignores two malicious copies: every epsilon ties
    Rng rng2(36);
    auto ctx = make_ctx(rng2, 15, 1, 3, "median");
    for (auto& v : ctx.visible) v = ParamVector{1.0, 1.0, 1.0};
    const auto res = bad_unlearn(ctx, {0.5, 0.1, 2.0}, BadUnlearnAnchor::model, 0);
    CHECK(res.epsilon == 0.1);
}

TEST_CASE("adaptive projections land inside the filters' acceptance regions") {
    Rng rng(37);
    int projected = 0;
    for (int trial = 0; trial < 200; ++trial) {
        FilterWindow win;
        for (int k = 0; k < 6; ++k) win.stored.push_back(random_vector(rng, 4) + ParamVector{2.0, 0.0, 0.0, 0.0});
        const auto target = random_vector(rng, 4, 20.0);
        const auto pd = project_into_dist_filter(target, win);
        CHECK(dist_filter(pd, win));
        for (bool flipped : {false, true}) {
            const auto pr = project_into_dir_filter(target, win, flipped);
            const auto res = dir_filter_and_rescale(pr, win, flipped);
            bool feasible = flipped;
            for (const auto& g : win.stored) feasible = feasible || dir_filter_and_rescale(-g, win, flipped).accept;
            feasible = feasible || dir_filter_and_rescale(-win.centroid(), win, flipped).accept;
            if (!feasible) continue;
            ++projected;
            CHECK(res.accept);
            CHECK(l2_norm(pr) == doctest::Approx(win.median_norm()).epsilon(1e-9));
        }
    }
    CHECK(projected > 300);
    FilterWindow win{{ParamVector{0.0, 0.0}, ParamVector{2.0, 0.0}}};
    CHECK(project_into_dist_filter(ParamVector{1.0, 0.5}, win) == ParamVector{1.0, 0.5});
}

TEST_CASE("attack validation and black-box surrogate") {
    AttackSpec spec;
    spec.kind = AttackKind::bad_unlearn;
    CHECK_THROWS_AS(spec.validate(Phase::fl), AttackError);
    CHECK_NOTHROW(spec.validate(Phase::fu));
    spec.kind = AttackKind::trim;
    spec.trim_b = 0.5;
    CHECK_THROWS_AS(spec.validate(Phase::fl), AttackError);
    CHECK_THROWS_AS(attack_kind_from_string("sybil"), AttackError);

    AttackContext ctx;
    ctx.arr = AggregatorKind::parse("trmean");
    ctx.knowledge = Knowledge::black_box;
    CHECK(ctx.effective_arr().rule == AggregatorRule::median);
    ctx.knowledge = Knowledge::partial;
    CHECK(ctx.effective_arr().rule == AggregatorRule::trimmed_mean);

    Rng rng(38);
    auto c2 = make_ctx(rng, 3, 2, 3);
    CHECK_THROWS_AS(adaptive_attack(c2, {}, FilterVariant::dist, AttackSpec{}), AttackError);
    c2.learned_model.reset();
    CHECK_THROWS_AS(bad_unlearn_update(c2, 0.1, BadUnlearnAnchor::literal), AttackError);
}
