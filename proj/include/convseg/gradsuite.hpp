#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "convseg/gradcheck.hpp"
#include "convseg/model.hpp"
#include "convseg/ops.hpp"
#include "convseg/rng.hpp"

// Finite-difference verification of every differentiable op plus the tiny
// end-to-end model. Checks scalarize an op through a fixed random projection
// r, compare analytic input gradients against central differences.

namespace convseg {

struct GradSuiteEntry {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradSuiteReport {
    std::vector<GradSuiteEntry> entries;
    double max_rel_error = 0.0;

    void add(const std::string& name, double err) {
        entries.push_back({name, err});
        if (err > max_rel_error) max_rel_error = err;
    }
};

namespace gradsuite_detail {

inline std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian(0.0, scale);
    return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double check_matmul(Rng& rng) {
    const std::size_t m = 3, k = 4, n = 2;
    Tensor a({m, k}, random_vec(m * k, rng));
    Tensor b({k, n}, random_vec(k * n, rng));
    const auto r = random_vec(m * n, rng);
    std::vector<double> x(a.data);
    x.insert(x.end(), b.data.begin(), b.data.end());
    auto f = [&](const std::vector<double>& v) {
        Tensor aa({m, k}, {v.begin(), v.begin() + m * k});
        Tensor bb({k, n}, {v.begin() + m * k, v.end()});
        return dot(matmul(aa, bb).data, r);
    };
    Tensor dc({m, n}, r);
    auto [da, db] = matmul_backward(a, b, dc);
    std::vector<double> analytic(da.data);
    analytic.insert(analytic.end(), db.data.begin(), db.data.end());
    return gradient_check(f, x, analytic).max_rel_error;
}

inline double check_activation(Activation kind, double slope, Rng& rng) {
    const std::size_t n = 12;
    std::vector<double> x;
    do {
        x = random_vec(n, rng);
    } while (near_kink(x));
    const auto r = random_vec(n, rng);
    auto f = [&](const std::vector<double>& v) {
        return dot(activation(Tensor({n}, v), kind, slope).data, r);
    };
    Tensor dy({n}, r);
    Tensor analytic = activation_backward(Tensor({n}, x), kind, slope, dy);
    return gradient_check(f, x, analytic.data).max_rel_error;
}

inline double check_batch_norm(Rng& rng) {
    const std::size_t n = 6, c = 3;
    const auto xv = random_vec(n * c, rng);
    const auto gv = random_vec(c, rng);
    const auto bv = random_vec(c, rng);
    const auto r = random_vec(n * c, rng);
    // packed as [x, gamma, beta]
    std::vector<double> packed(xv);
    packed.insert(packed.end(), gv.begin(), gv.end());
    packed.insert(packed.end(), bv.begin(), bv.end());
    auto f = [&](const std::vector<double>& v) {
        Tensor x({n, c}, {v.begin(), v.begin() + n * c});
        Tensor gamma({c}, {v.begin() + n * c, v.begin() + n * c + c});
        Tensor beta({c}, {v.begin() + n * c + c, v.end()});
        Tensor rm = Tensor::zeros({c}), rv = Tensor::full({c}, 1.0);
        return dot(batch_norm(x, gamma, beta, Mode::kTrain, rm, rv).data, r);
    };
    Tensor x({n, c}, xv), gamma({c}, gv), beta({c}, bv);
    Tensor rm = Tensor::zeros({c}), rv = Tensor::full({c}, 1.0);
    BatchNormCache cache;
    batch_norm(x, gamma, beta, Mode::kTrain, rm, rv, 0.9, 1e-5, &cache);
    Tensor dgamma = Tensor::zeros({c}), dbeta = Tensor::zeros({c});
    Tensor dx = batch_norm_backward(cache, gamma, Tensor({n, c}, r), dgamma, dbeta);
    std::vector<double> analytic(dx.data);
    analytic.insert(analytic.end(), dgamma.data.begin(), dgamma.data.end());
    analytic.insert(analytic.end(), dbeta.data.begin(), dbeta.data.end());
    return gradient_check(f, packed, analytic).max_rel_error;
}

inline double check_max_aggregate(Rng& rng) {
    const std::size_t n = 4, k = 3, c = 2;
    std::vector<double> x;
    bool ok = false;
    while (!ok) {
        x = random_vec(n * k * c, rng);
        ok = true;
        // reject near-ties so the winner is stable under the probe step
        for (std::size_t i = 0; i < n && ok; ++i) {
            for (std::size_t j = 0; j < c && ok; ++j) {
                double best = -1e300, second = -1e300;
                for (std::size_t s = 0; s < k; ++s) {
                    const double v = x[(i * k + s) * c + j];
                    if (v > best) {
                        second = best;
                        best = v;
                    } else if (v > second) {
                        second = v;
                    }
                }
                ok = best - second > 1e-4;
            }
        }
    }
    const auto r = random_vec(n * c, rng);
    auto f = [&](const std::vector<double>& v) {
        return dot(max_aggregate(Tensor({n, k, c}, v)).pooled.data, r);
    };
    auto res = max_aggregate(Tensor({n, k, c}, x));
    Tensor dedge = max_aggregate_backward(res.argmax, k, Tensor({n, c}, r));
    return gradient_check(f, x, dedge.data).max_rel_error;
}

inline double check_softmax_ce(Rng& rng) {
    const std::size_t n = 5, c = 4;
    const auto x = random_vec(n * c, rng);
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.index(c));
    auto f = [&](const std::vector<double>& v) {
        return softmax_cross_entropy(Tensor({n, c}, v), labels).loss;
    };
    auto loss = softmax_cross_entropy(Tensor({n, c}, x), labels);
    return gradient_check(f, x, loss.grad.data).max_rel_error;
}

inline double check_dropout(Rng& rng) {
    // fixed mask replay: backward must match differences through the mask
    const std::size_t n = 16;
    const auto x = random_vec(n, rng);
    const auto r = random_vec(n, rng);
    Rng mask_rng(rng.engine()());
    auto [y, mask] = dropout(Tensor({n}, x), 0.5, Mode::kTrain, mask_rng);
    auto f = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i] * mask.mask[i] * r[i];
        return s;
    };
    Tensor dx = dropout_backward(mask, Tensor({n}, r));
    return gradient_check(f, x, dx.data).max_rel_error;
}

inline CategoryConfig tiny_model_config() {
    CategoryConfig cfg = default_category_config(Category::kLamp, 3);
    cfg.dropout_rate = 0.0;
    cfg.k_neighbors = 2;
    cfg.edge_conv_channels = {4, 4};
    cfg.global_channels = 8;
    cfg.head_channels = {8};
    return cfg;
}

// End-to-end: cross-entropy of the tiny model against every trainable
// parameter at once.
inline double check_model(std::uint64_t seed) {
    const CategoryConfig cfg = tiny_model_config();
    Rng rng(seed);
    const std::size_t n = 8;
    Tensor points = Tensor::gaussian({n, 3}, 0.0, 1.0, rng);
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.index(cfg.num_parts));

    ModelParams params = model_init(cfg, seed + 1);
    std::vector<Tensor*> tensors = trainable_params(params);
    std::vector<double> packed;
    for (Tensor* t : tensors) packed.insert(packed.end(), t->data.begin(), t->data.end());

    auto unpack = [&](ModelParams& p, const std::vector<double>& v) {
        std::size_t off = 0;
        for (Tensor* t : trainable_params(p)) {
            std::copy(v.begin() + off, v.begin() + off + t->numel(), t->data.begin());
            off += t->numel();
        }
    };
    auto f = [&](const std::vector<double>& v) {
        ModelParams p = params;
        unpack(p, v);
        Rng dummy(0);
        Tensor logits = model_forward(points, p, Mode::kTrain, dummy);
        return softmax_cross_entropy(logits, labels).loss;
    };

    ModelParams work = params;
    zero_gradients(work);
    Rng dummy(0);
    ForwardCache cache;
    Tensor logits = model_forward(points, work, Mode::kTrain, dummy, &cache);
    auto loss = softmax_cross_entropy(logits, labels);
    model_backward(cache, work, loss.grad);
    std::vector<double> analytic;
    for (Tensor* t : trainable_params(work))
        analytic.insert(analytic.end(), t->grad.begin(), t->grad.end());
    return gradient_check(f, packed, analytic).max_rel_error;
}

}  // namespace gradsuite_detail

inline GradSuiteReport run_gradient_suite(std::size_t points_per_op = 20,
                                          std::uint64_t seed = 12345) {
    namespace d = gradsuite_detail;
    GradSuiteReport report;
    Rng rng(seed);
    auto repeat = [&](const std::string& name, auto&& fn) {
        double worst = 0.0;
        for (std::size_t i = 0; i < points_per_op; ++i) worst = std::max(worst, fn());
        report.add(name, worst);
    };
    repeat("matmul", [&] { return d::check_matmul(rng); });
    repeat("relu", [&] { return d::check_activation(Activation::kRelu, 0.0, rng); });
    repeat("leaky_relu", [&] { return d::check_activation(Activation::kLeakyRelu, 0.1, rng); });
    repeat("batch_norm", [&] { return d::check_batch_norm(rng); });
    repeat("max_aggregate", [&] { return d::check_max_aggregate(rng); });
    repeat("softmax_cross_entropy", [&] { return d::check_softmax_ce(rng); });
    repeat("dropout", [&] { return d::check_dropout(rng); });
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < points_per_op; ++i)
            worst = std::max(worst, d::check_model(seed + 100 + i));
        report.add("dgcnn_model", worst);
    }
    return report;
}

}  // namespace convseg
