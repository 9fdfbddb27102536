#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "convseg/errors.hpp"
#include "convseg/rng.hpp"
#include "convseg/tensor.hpp"

// Differentiable primitive operations. Each op is a pure function and ships
// an explicit backward rule; there is no tape.

namespace convseg {

enum class Mode { kTrain, kEval };

enum class Activation { kRelu, kLeakyRelu };

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMat>;
using MutMap = Eigen::Map<EigenRowMat>;

// ---------------------------------------------------------------------------
// matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
        throw ShapeError("matmul shape mismatch: " + a.shape_str() + " x " + b.shape_str());
    }
    check_finite(a, "matmul lhs");
    check_finite(b, "matmul rhs");
    Tensor c({a.shape[0], b.shape[1]});
    MutMap(c.data.data(), a.shape[0], b.shape[1]) =
        ConstMap(a.data.data(), a.shape[0], a.shape[1]) *
        ConstMap(b.data.data(), b.shape[0], b.shape[1]);
    return c;
}

// dA = dC * B^T, dB = A^T * dC
inline std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b,
                                                 const Tensor& grad_c) {
    Tensor da({a.shape[0], a.shape[1]});
    Tensor db({b.shape[0], b.shape[1]});
    ConstMap ma(a.data.data(), a.shape[0], a.shape[1]);
    ConstMap mb(b.data.data(), b.shape[0], b.shape[1]);
    ConstMap mdc(grad_c.data.data(), a.shape[0], b.shape[1]);
    MutMap(da.data.data(), a.shape[0], a.shape[1]) = mdc * mb.transpose();
    MutMap(db.data.data(), b.shape[0], b.shape[1]) = ma.transpose() * mdc;
    return {std::move(da), std::move(db)};
}

// ---------------------------------------------------------------------------
// activation

inline Tensor activation(const Tensor& x, Activation kind, double slope = 0.0) {
    if (slope < 0.0) throw ParamError("negative leaky-relu slope: " + std::to_string(slope));
    check_finite(x, "activation input");
    const double s = (kind == Activation::kRelu) ? 0.0 : slope;
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        y.data[i] = v > 0.0 ? v : s * v;
    }
    return y;
}

inline Tensor activation_backward(const Tensor& x, Activation kind, double slope,
                                  const Tensor& grad_y) {
    const double s = (kind == Activation::kRelu) ? 0.0 : slope;
    Tensor dx(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        dx.data[i] = grad_y.data[i] * (x.data[i] > 0.0 ? 1.0 : s);
    return dx;
}

// ---------------------------------------------------------------------------
// dropout (inverted: survivors scaled by 1/(1-rate), eval is an identity)

struct DropoutMask {
    double rate = 0.0;
    Mode mode = Mode::kEval;
    std::vector<double> mask;  // entries in {0, 1/(1-rate)}; all-ones in eval
};

inline std::pair<Tensor, DropoutMask> dropout(const Tensor& x, double rate, Mode mode,
                                              Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ParamError("dropout rate must be in [0,1): " + std::to_string(rate));
    DropoutMask m{rate, mode, std::vector<double>(x.data.size(), 1.0)};
    Tensor y = x;
    if (mode == Mode::kTrain && rate > 0.0) {
        const double keep_scale = 1.0 / (1.0 - rate);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            m.mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
            y.data[i] = x.data[i] * m.mask[i];
        }
    }
    return {std::move(y), std::move(m)};
}

inline Tensor dropout_backward(const DropoutMask& m, const Tensor& grad_y) {
    Tensor dx(grad_y.shape);
    for (std::size_t i = 0; i < grad_y.data.size(); ++i)
        dx.data[i] = grad_y.data[i] * m.mask[i];
    return dx;
}

// ---------------------------------------------------------------------------
// batch norm over the leading axis of an N x C tensor

struct BatchNormCache {
    std::vector<double> x_hat;    // N*C normalized values
    std::vector<double> inv_std;  // per channel
    std::size_t rows = 0, cols = 0;
};

// Normalizes each channel by batch statistics (train) or running statistics
// (eval). Running stats are updated in place in train mode with the given
// momentum; biased variance throughout.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Mode mode, Tensor& running_mean, Tensor& running_var,
                         double momentum = 0.9, double epsilon = 1e-5,
                         BatchNormCache* cache = nullptr) {
    if (x.shape.size() != 2) throw ShapeError("batch_norm expects N x C, got " + x.shape_str());
    const std::size_t n = x.shape[0], c = x.shape[1];
    if (gamma.numel() != c || beta.numel() != c)
        throw ShapeError("batch_norm gamma/beta size mismatch");
    if (epsilon <= 0.0) throw ParamError("batch_norm epsilon must be > 0");
    if (mode == Mode::kTrain && n < 2)
        throw ShapeError("batch_norm needs N >= 2 in train mode, got N=" + std::to_string(n));

    std::vector<double> mean(c), var(c);
    if (mode == Mode::kTrain) {
        for (std::size_t j = 0; j < c; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += x.at(i, j);
            m /= static_cast<double>(n);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = x.at(i, j) - m;
                v += d * d;
            }
            v /= static_cast<double>(n);
            mean[j] = m;
            var[j] = v;
            running_mean.data[j] = momentum * running_mean.data[j] + (1.0 - momentum) * m;
            running_var.data[j] = momentum * running_var.data[j] + (1.0 - momentum) * v;
        }
    } else {
        for (std::size_t j = 0; j < c; ++j) {
            mean[j] = running_mean.data[j];
            var[j] = running_var.data[j];
        }
    }

    Tensor y(x.shape);
    if (cache) {
        cache->x_hat.resize(n * c);
        cache->inv_std.resize(c);
        cache->rows = n;
        cache->cols = c;
    }
    for (std::size_t j = 0; j < c; ++j) {
        const double inv_std = 1.0 / std::sqrt(var[j] + epsilon);
        if (cache) cache->inv_std[j] = inv_std;
        for (std::size_t i = 0; i < n; ++i) {
            const double xh = (x.at(i, j) - mean[j]) * inv_std;
            if (cache) cache->x_hat[i * c + j] = xh;
            y.at(i, j) = gamma.data[j] * xh + beta.data[j];
        }
    }
    return y;
}

// Standard train-mode batch-norm gradient. Accumulates into dgamma/dbeta.
inline Tensor batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                  const Tensor& grad_y, Tensor& dgamma, Tensor& dbeta) {
    const std::size_t n = cache.rows, c = cache.cols;
    Tensor dx({n, c});
    for (std::size_t j = 0; j < c; ++j) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dy = grad_y.at(i, j);
            sum_dy += dy;
            sum_dy_xhat += dy * cache.x_hat[i * c + j];
        }
        dgamma.data[j] += sum_dy_xhat;
        dbeta.data[j] += sum_dy;
        const double scale = gamma.data[j] * cache.inv_std[j] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double dy = grad_y.at(i, j);
            dx.at(i, j) = scale * (static_cast<double>(n) * dy - sum_dy -
                                   cache.x_hat[i * c + j] * sum_dy_xhat);
        }
    }
    return dx;
}

// Eval-mode backward (normalization constants are fixed).
inline Tensor batch_norm_backward_eval(const Tensor& gamma, const Tensor& running_var,
                                       double epsilon, const Tensor& grad_y) {
    const std::size_t n = grad_y.shape[0], c = grad_y.shape[1];
    Tensor dx({n, c});
    for (std::size_t j = 0; j < c; ++j) {
        const double scale = gamma.data[j] / std::sqrt(running_var.data[j] + epsilon);
        for (std::size_t i = 0; i < n; ++i) dx.at(i, j) = grad_y.at(i, j) * scale;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// max aggregation over the k neighbor slots of an N x k x C edge tensor

struct MaxAggregateResult {
    Tensor pooled;                      // N x C
    std::vector<std::uint32_t> argmax;  // N*C winning slot indices
};

inline MaxAggregateResult max_aggregate(const Tensor& edge_features) {
    if (edge_features.shape.size() != 3)
        throw ShapeError("max_aggregate expects N x k x C, got " + edge_features.shape_str());
    const std::size_t n = edge_features.shape[0], k = edge_features.shape[1],
                      c = edge_features.shape[2];
    if (k == 0) throw ShapeError("max_aggregate over empty neighborhood (k=0)");
    MaxAggregateResult r{Tensor({n, c}), std::vector<std::uint32_t>(n * c, 0)};
    for (std::size_t i = 0; i < n; ++i) {
        const double* base = edge_features.data.data() + i * k * c;
        for (std::size_t j = 0; j < c; ++j) {
            double best = base[j];
            std::uint32_t best_s = 0;
            for (std::size_t s = 1; s < k; ++s) {
                const double v = base[s * c + j];
                if (v > best) {  // ties keep the lowest slot
                    best = v;
                    best_s = static_cast<std::uint32_t>(s);
                }
            }
            r.pooled.at(i, j) = best;
            r.argmax[i * c + j] = best_s;
        }
    }
    return r;
}

// Gradient routes only to the winning slot of each (point, channel).
inline Tensor max_aggregate_backward(const std::vector<std::uint32_t>& argmax,
                                     std::size_t k, const Tensor& grad_pooled) {
    const std::size_t n = grad_pooled.shape[0], c = grad_pooled.shape[1];
    Tensor dedge({n, k, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            dedge.data[(i * k + argmax[i * c + j]) * c + j] = grad_pooled.at(i, j);
    return dedge;
}

// ---------------------------------------------------------------------------
// softmax cross entropy

struct SoftmaxLoss {
    double loss = 0.0;
    Tensor grad;  // N x C, (softmax - one_hot) / N
};

inline SoftmaxLoss softmax_cross_entropy(const Tensor& logits,
                                         const std::vector<int>& labels) {
    if (logits.shape.size() != 2 || logits.shape[0] != labels.size())
        throw ShapeError("softmax_cross_entropy logits " + logits.shape_str() + " vs " +
                         std::to_string(labels.size()) + " labels");
    check_finite(logits, "softmax_cross_entropy logits");
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    SoftmaxLoss out;
    out.grad = Tensor({n, c});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw DataError("label " + std::to_string(labels[i]) + " out of range at row " +
                            std::to_string(i));
        const double* row = logits.data.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const double log_denom = std::log(denom);
        total += log_denom - (row[labels[i]] - mx);
        for (std::size_t j = 0; j < c; ++j) {
            double p = std::exp(row[j] - mx) / denom;
            if (j == static_cast<std::size_t>(labels[i])) p -= 1.0;
            out.grad.at(i, j) = p / static_cast<double>(n);
        }
    }
    out.loss = total / static_cast<double>(n);
    return out;
}

}  // namespace convseg
