#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedunlearn/dataset.hpp"
#include "fedunlearn/model.hpp"
#include "fedunlearn/rng.hpp"

using namespace fedunlearn;

namespace {

ModelSpec make_spec(ModelKind kind, std::size_t dim, std::size_t classes, double lambda) {
    ModelSpec spec;
    spec.kind = kind;
    spec.input_dim = dim;
    spec.num_classes = classes;
    spec.hidden = 6;
    spec.l2_lambda = lambda;
    if (kind == ModelKind::quadratic_probe) {
        for (std::size_t j = 0; j < dim; ++j) spec.probe_hessian.push_back(0.5 + static_cast<double>(j));
    }
    return spec;
}

ParamVector central_difference(const ModelSpec& spec, const ParamVector& w, const LabeledDataset& data,
                               double h) {
    ParamVector g(w.dim());
    for (std::size_t i = 0; i < w.dim(); ++i) {
        ParamVector plus = w, minus = w;
        plus[i] += h;
        minus[i] -= h;
        g[i] = (loss(spec, plus, data) - loss(spec, minus, data)) / (2.0 * h);
    }
    return g;
}

void check_gradient(ModelKind kind, double lambda, std::uint64_t seed) {
    const auto data = generate_synthetic(4, 5, 6, 1.0, seed);
    const auto spec = make_spec(kind, 5, 4, lambda);
    Rng rng(seed);
    ParamVector w(spec.param_count());
    for (auto& x : w) x = rng.normal(0.0, 0.5);
    const auto g = gradient(spec, w, data);
    const auto fd = central_difference(spec, w, data, 1e-4);
    const double rel = l2_distance(g, fd) / l2_norm(fd);
    CHECK_MESSAGE(rel <= 1e-5, to_string(kind) << " seed " << seed << " rel " << rel);
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        check_gradient(ModelKind::softmax_regression, 0.0, seed);
        check_gradient(ModelKind::softmax_regression, 0.01, seed);
        check_gradient(ModelKind::mlp2, 0.0, seed);
        check_gradient(ModelKind::mlp2, 0.001, seed);
        check_gradient(ModelKind::quadratic_probe, 0.0, seed);
    }
}

TEST_CASE("parameter counts") {
    CHECK(make_spec(ModelKind::softmax_regression, 5, 4, 0).param_count() == 4 * 6);
    CHECK(make_spec(ModelKind::mlp2, 5, 4, 0).param_count() == 6 * 6 + 4 * 7);
    CHECK(make_spec(ModelKind::quadratic_probe, 5, 4, 0).param_count() == 5);
}

TEST_CASE("probe loss and gradient against the closed form") {
    const auto data = generate_synthetic(3, 4, 5, 1.0, 2);
    const auto spec = make_spec(ModelKind::quadratic_probe, 4, 3, 0);
    std::vector<double> c(4, 0.0);
    for (std::size_t s = 0; s < data.size(); ++s) {
        for (std::size_t j = 0; j < 4; ++j) c[j] += data.row(s)[j] / static_cast<double>(data.size());
    }
    const ParamVector w{0.3, -1.0, 2.0, 0.5};
    double want = 0.0;
    for (std::size_t j = 0; j < 4; ++j) want += 0.5 * spec.probe_hessian[j] * (w[j] - c[j]) * (w[j] - c[j]);
    CHECK(loss(spec, w, data) == doctest::Approx(want).epsilon(1e-12));
    const auto g = gradient(spec, w, data);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(g[j] == doctest::Approx(spec.probe_hessian[j] * (w[j] - c[j])).epsilon(1e-12));
    }
    const auto prof = convexity_profile(spec, data);
    CHECK(prof.mu == 0.5);
    CHECK(prof.lipschitz_L == 3.5);
}

TEST_CASE("softmax curvature stays within the analytic mu and L") {
    const auto data = generate_synthetic(3, 4, 8, 1.0, 4);
    const auto spec = make_spec(ModelKind::softmax_regression, 4, 3, 0.05);
    const auto prof = convexity_profile(spec, data);
    CHECK(prof.mu == 0.05);
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        ParamVector w(spec.param_count()), v(spec.param_count());
        for (auto& x : w) x = rng.normal();
        for (auto& x : v) x = rng.normal();
        v /= l2_norm(v);
        // Rayleigh quotient of the Hessian along v by differencing gradients
        const double h = 1e-5;
        const auto gp = gradient(spec, w + v * h, data);
        const auto gm = gradient(spec, w - v * h, data);
        const double curv = dot(gp - gm, v) / (2.0 * h);
        CHECK(curv >= prof.mu - 1e-6);
        CHECK(curv <= prof.lipschitz_L + 1e-6);
    }
}

TEST_CASE("prediction, error rate and attack success") {
    const auto spec = make_spec(ModelKind::softmax_regression, 2, 3, 0);
    // all weights zero: every logit ties and the lowest class wins
    const ParamVector zero(spec.param_count(), 0.0);
    const std::vector<double> x{1.0, -1.0};
    CHECK(predict(spec, zero, x) == 0);
    const LabeledDataset ds(2, 3, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, 0.5}, {0, 1, 0, 2});
    CHECK(test_error_rate(spec, zero, ds) == doctest::Approx(0.5));
    CHECK(attack_success_rate(spec, zero, ds, 0) == doctest::Approx(1.0));
    CHECK(attack_success_rate(spec, zero, ds, 1) == doctest::Approx(0.0));
}

TEST_CASE("model spec validation and seeded init") {
    auto spec = make_spec(ModelKind::quadratic_probe, 3, 2, 0);
    spec.probe_hessian = {1.0, -1.0, 2.0};
    CHECK_THROWS_AS(spec.validate(), ModelError);
    const auto s2 = make_spec(ModelKind::mlp2, 3, 2, 0);
    CHECK(init_params(s2, 1) == init_params(s2, 1));
    CHECK_FALSE(init_params(s2, 1) == init_params(s2, 2));
    CHECK_THROWS_AS(model_kind_from_string("cnn"), ModelError);
    CHECK_THROWS_AS((void)gradient(s2, ParamVector(3, 0.0), generate_synthetic(2, 3, 2, 1.0, 1)), ModelError);
}
