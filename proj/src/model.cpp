#include "fedunlearn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedunlearn/rng.hpp"

namespace fedunlearn {

const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::softmax_regression: return "softmax";
        case ModelKind::mlp2: return "mlp";
        case ModelKind::quadratic_probe: return "quadratic";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "softmax" || name == "softmax_regression") return ModelKind::softmax_regression;
    if (name == "mlp" || name == "mlp2") return ModelKind::mlp2;
    if (name == "quadratic" || name == "quadratic_probe") return ModelKind::quadratic_probe;
    throw ModelError("unknown model kind '" + name + "'");
}

std::size_t ModelSpec::param_count() const {
    switch (kind) {
        case ModelKind::softmax_regression: return num_classes * input_dim + num_classes;
        case ModelKind::mlp2: return hidden * input_dim + hidden + num_classes * hidden + num_classes;
        case ModelKind::quadratic_probe: return input_dim;
    }
    return 0;
}

void ModelSpec::validate() const {
    if (input_dim == 0) throw ModelError("model: input dimension must be positive");
    if (l2_lambda < 0.0) throw ModelError("model: l2_lambda must be nonnegative");
    if (kind == ModelKind::quadratic_probe) {
        if (probe_hessian.size() != input_dim) {
            throw ModelError("model: probe Hessian diagonal must have input_dim entries");
        }
        for (double h : probe_hessian) {
            if (!(h > 0.0) || !std::isfinite(h)) throw ModelError("model: probe Hessian must be positive");
        }
    } else {
        if (num_classes < 2) throw ModelError("model: classifiers need at least 2 classes");
        if (kind == ModelKind::mlp2 && hidden == 0) throw ModelError("model: hidden width must be positive");
    }
}

namespace {

void check_dims(const ModelSpec& spec, const ParamVector& params, const LabeledDataset& data) {
    if (params.dim() != spec.param_count()) {
        throw ModelError("model: parameter dimension " + std::to_string(params.dim()) +
                         " does not match spec (" + std::to_string(spec.param_count()) + ")");
    }
    if (data.size() > 0 && data.dim() != spec.input_dim) {
        throw ModelError("model: data dimension does not match spec");
    }
}

// In-place softmax; returns log-sum-exp of the input scores.
double softmax_inplace(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        s += v;
    }
    for (double& v : z) v /= s;
    return m + std::log(s);
}

std::vector<double> feature_mean(const LabeledDataset& data) {
    std::vector<double> c(data.dim(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto r = data.row(i);
        for (std::size_t j = 0; j < c.size(); ++j) c[j] += r[j];
    }
    for (double& v : c) v /= static_cast<double>(data.size());
    return c;
}

struct MlpView {
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;
};

MlpView mlp_view(const ModelSpec& s, const ParamVector& p) {
    const double* base = p.span().data();
    const double* w1 = base;
    const double* b1 = w1 + s.hidden * s.input_dim;
    const double* w2 = b1 + s.hidden;
    const double* b2 = w2 + s.num_classes * s.hidden;
    return {w1, b1, w2, b2};
}

}  // namespace

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, {0x696e6974}));
    ParamVector p(spec.param_count());
    switch (spec.kind) {
        case ModelKind::softmax_regression:
            for (std::size_t i = 0; i < spec.num_classes * spec.input_dim; ++i) p[i] = 0.01 * rng.normal();
            break;
        case ModelKind::mlp2: {
            const double s1 = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
            const double s2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
            std::size_t k = 0;
            for (std::size_t i = 0; i < spec.hidden * spec.input_dim; ++i) p[k++] = s1 * rng.normal();
            k += spec.hidden;
            for (std::size_t i = 0; i < spec.num_classes * spec.hidden; ++i) p[k++] = s2 * rng.normal();
            break;
        }
        case ModelKind::quadratic_probe:
            for (double& v : p) v = rng.normal();
            break;
    }
    return p;
}

std::vector<double> logits(const ModelSpec& spec, const ParamVector& params,
                           std::span<const double> x) {
    const std::size_t d = spec.input_dim;
    const std::size_t c = spec.num_classes;
    std::vector<double> z(c, 0.0);
    if (spec.kind == ModelKind::softmax_regression) {
        for (std::size_t k = 0; k < c; ++k) {
            double acc = params[c * d + k];
            const double* w = params.span().data() + k * d;
            for (std::size_t j = 0; j < d; ++j) acc += w[j] * x[j];
            z[k] = acc;
        }
    } else if (spec.kind == ModelKind::mlp2) {
        const auto v = mlp_view(spec, params);
        std::vector<double> h(spec.hidden);
        for (std::size_t u = 0; u < spec.hidden; ++u) {
            double acc = v.b1[u];
            for (std::size_t j = 0; j < d; ++j) acc += v.w1[u * d + j] * x[j];
            h[u] = std::tanh(acc);
        }
        for (std::size_t k = 0; k < c; ++k) {
            double acc = v.b2[k];
            for (std::size_t u = 0; u < spec.hidden; ++u) acc += v.w2[k * spec.hidden + u] * h[u];
            z[k] = acc;
        }
    } else {
        throw ModelError("logits: quadratic probe is not a classifier");
    }
    return z;
}

double loss(const ModelSpec& spec, const ParamVector& params, const LabeledDataset& data) {
    check_dims(spec, params, data);
    if (spec.kind == ModelKind::quadratic_probe) {
        if (data.size() == 0) return 0.0;
        const auto c = feature_mean(data);
        double acc = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) {
            const double e = params[j] - c[j];
            acc += spec.probe_hessian[j] * e * e;
        }
        return 0.5 * acc;
    }
    double ce = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto z = logits(spec, params, data.row(i));
        const double target = z[static_cast<std::size_t>(data.label(i))];
        ce += softmax_inplace(z) - target;
    }
    if (data.size() > 0) ce /= static_cast<double>(data.size());
    return ce + 0.5 * spec.l2_lambda * dot(params, params);
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const LabeledDataset& data) {
    check_dims(spec, params, data);
    const std::size_t d = spec.input_dim;
    const std::size_t c = spec.num_classes;
    ParamVector g(params.dim(), 0.0);

    if (spec.kind == ModelKind::quadratic_probe) {
        if (data.size() == 0) return g;
        const auto center = feature_mean(data);
        for (std::size_t j = 0; j < d; ++j) g[j] = spec.probe_hessian[j] * (params[j] - center[j]);
        return g;
    }

    const double inv_n = data.size() > 0 ? 1.0 / static_cast<double>(data.size()) : 0.0;
    if (spec.kind == ModelKind::softmax_regression) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto x = data.row(i);
            auto p = logits(spec, params, x);
            softmax_inplace(p);
            p[static_cast<std::size_t>(data.label(i))] -= 1.0;
            for (std::size_t k = 0; k < c; ++k) {
                const double r = p[k] * inv_n;
                double* gw = g.span().data() + k * d;
                for (std::size_t j = 0; j < d; ++j) gw[j] += r * x[j];
                g[c * d + k] += r;
            }
        }
    } else {
        const auto v = mlp_view(spec, params);
        const std::size_t hdim = spec.hidden;
        double* gw1 = g.span().data();
        double* gb1 = gw1 + hdim * d;
        double* gw2 = gb1 + hdim;
        double* gb2 = gw2 + c * hdim;
        std::vector<double> h(hdim), dh(hdim), z(c);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto x = data.row(i);
            for (std::size_t u = 0; u < hdim; ++u) {
                double acc = v.b1[u];
                for (std::size_t j = 0; j < d; ++j) acc += v.w1[u * d + j] * x[j];
                h[u] = std::tanh(acc);
            }
            for (std::size_t k = 0; k < c; ++k) {
                double acc = v.b2[k];
                for (std::size_t u = 0; u < hdim; ++u) acc += v.w2[k * hdim + u] * h[u];
                z[k] = acc;
            }
            softmax_inplace(z);
            z[static_cast<std::size_t>(data.label(i))] -= 1.0;
            std::fill(dh.begin(), dh.end(), 0.0);
            for (std::size_t k = 0; k < c; ++k) {
                const double r = z[k] * inv_n;
                gb2[k] += r;
                for (std::size_t u = 0; u < hdim; ++u) {
                    gw2[k * hdim + u] += r * h[u];
                    dh[u] += r * v.w2[k * hdim + u];
                }
            }
            for (std::size_t u = 0; u < hdim; ++u) {
                const double pre = dh[u] * (1.0 - h[u] * h[u]);
                gb1[u] += pre;
                for (std::size_t j = 0; j < d; ++j) gw1[u * d + j] += pre * x[j];
            }
        }
    }
    if (spec.l2_lambda != 0.0) g.axpy(spec.l2_lambda, params);
    return g;
}

int predict(const ModelSpec& spec, const ParamVector& params, std::span<const double> x) {
    const auto z = logits(spec, params, x);
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k) {
        if (z[k] > z[best]) best = k;
    }
    return static_cast<int>(best);
}

double test_error_rate(const ModelSpec& spec, const ParamVector& params, const LabeledDataset& data) {
    if (spec.kind == ModelKind::quadratic_probe) {
        throw ModelError("test_error_rate: quadratic probe is not a classifier");
    }
    check_dims(spec, params, data);
    if (data.size() == 0) throw ModelError("test_error_rate: empty dataset");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (predict(spec, params, data.row(i)) != data.label(i)) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

double attack_success_rate(const ModelSpec& spec, const ParamVector& params,
                           const LabeledDataset& triggered, int target_label) {
    if (spec.kind == ModelKind::quadratic_probe) {
        throw ModelError("attack_success_rate: quadratic probe is not a classifier");
    }
    check_dims(spec, params, triggered);
    if (triggered.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < triggered.size(); ++i) {
        if (predict(spec, params, triggered.row(i)) == target_label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(triggered.size());
}

ConvexityProfile convexity_profile(const ModelSpec& spec, const LabeledDataset& data) {
    spec.validate();
    ConvexityProfile p;
    if (spec.kind == ModelKind::quadratic_probe) {
        const auto [lo, hi] = std::minmax_element(spec.probe_hessian.begin(), spec.probe_hessian.end());
        p.mu = *lo;
        p.lipschitz_L = *hi;
        return p;
    }
    if (spec.kind != ModelKind::softmax_regression || !(spec.l2_lambda > 0.0)) {
        throw ModelError("convexity_profile: task is not strongly convex");
    }
    // per-sample Hessian (diag(p) - p p^T) (x) [x;1][x;1]^T, spectral norm of the first factor <= 1/2
    double max_sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double sq = 1.0;
        for (double v : data.row(i)) sq += v * v;
        max_sq = std::max(max_sq, sq);
    }
    p.mu = spec.l2_lambda;
    p.lipschitz_L = spec.l2_lambda + 0.5 * max_sq;
    return p;
}

}  // namespace fedunlearn
