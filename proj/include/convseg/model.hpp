#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convseg/dataset.hpp"
#include "convseg/errors.hpp"
#include "convseg/knn.hpp"
#include "convseg/ops.hpp"
#include "convseg/rng.hpp"
#include "convseg/tensor.hpp"

namespace convseg {

// ---------------------------------------------------------------------------
// configuration

struct CategoryConfig {
    Category category = Category::kChair;
    int num_parts = 2;
    double dropout_rate = 0.4;
    std::size_t k_neighbors = 20;
    std::vector<std::size_t> edge_conv_channels = {64, 64, 64};
    std::size_t global_channels = 1024;
    std::vector<std::size_t> head_channels = {512, 256};
    Activation activation = Activation::kRelu;
    double leaky_slope = 0.2;
    bool use_batch_norm = true;
    bool static_graph = false;   // reuse the coordinate-space graph everywhere
    bool majority_vote = false;  // component label by point-vote instead of logit mean
    double bn_momentum = 0.9;
    double bn_epsilon = 1e-5;

    void validate() const {
        if (num_parts < 2) throw ParamError("num_parts must be >= 2");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ParamError("dropout_rate must be in [0,1)");
        if (k_neighbors < 1) throw ParamError("k_neighbors must be >= 1");
        if (edge_conv_channels.empty()) throw ParamError("need at least one edge-conv layer");
        if (leaky_slope < 0.0) throw ParamError("negative leaky slope");
    }
};

inline double default_dropout_rate(Category c) {
    return c == Category::kChair ? 0.6 : 0.4;
}

inline CategoryConfig default_category_config(Category c, int num_parts) {
    CategoryConfig cfg;
    cfg.category = c;
    cfg.num_parts = num_parts;
    cfg.dropout_rate = default_dropout_rate(c);
    return cfg;
}

inline nlohmann::json category_config_to_json(const CategoryConfig& c) {
    return {{"category", category_name(c.category)},
            {"num_parts", c.num_parts},
            {"dropout_rate", c.dropout_rate},
            {"k_neighbors", c.k_neighbors},
            {"edge_conv_channels", c.edge_conv_channels},
            {"global_channels", c.global_channels},
            {"head_channels", c.head_channels},
            {"activation", c.activation == Activation::kRelu ? "relu" : "leaky_relu"},
            {"leaky_slope", c.leaky_slope},
            {"use_batch_norm", c.use_batch_norm},
            {"static_graph", c.static_graph},
            {"majority_vote", c.majority_vote},
            {"bn_momentum", c.bn_momentum},
            {"bn_epsilon", c.bn_epsilon}};
}

inline CategoryConfig category_config_from_json(const nlohmann::json& j) {
    CategoryConfig c;
    c.category = category_from_name(j.at("category").get<std::string>());
    c.num_parts = j.at("num_parts").get<int>();
    c.dropout_rate = j.value("dropout_rate", default_dropout_rate(c.category));
    c.k_neighbors = j.value("k_neighbors", std::size_t{20});
    c.edge_conv_channels =
        j.value("edge_conv_channels", std::vector<std::size_t>{64, 64, 64});
    c.global_channels = j.value("global_channels", std::size_t{1024});
    c.head_channels = j.value("head_channels", std::vector<std::size_t>{512, 256});
    const std::string act = j.value("activation", std::string("relu"));
    if (act == "relu") {
        c.activation = Activation::kRelu;
    } else if (act == "leaky_relu") {
        c.activation = Activation::kLeakyRelu;
    } else {
        throw DataError("unknown activation: " + act);
    }
    c.leaky_slope = j.value("leaky_slope", 0.2);
    c.use_batch_norm = j.value("use_batch_norm", true);
    c.static_graph = j.value("static_graph", false);
    c.majority_vote = j.value("majority_vote", false);
    c.bn_momentum = j.value("bn_momentum", 0.9);
    c.bn_epsilon = j.value("bn_epsilon", 1e-5);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// parameters

// One linear layer with optional batch-norm state.
struct DenseParams {
    Tensor weight;  // in x out
    Tensor bias;    // out
    bool has_bn = false;
    Tensor gamma, beta, running_mean, running_var;  // out, when has_bn
};

struct ModelParams {
    CategoryConfig config;
    std::vector<DenseParams> edge_layers;  // weight is 2*C_in x C_out
    DenseParams global_layer;
    std::vector<DenseParams> head_layers;
    DenseParams classifier;  // never batch-normed

    std::size_t edge_concat_channels() const {
        std::size_t s = 0;
        for (std::size_t c : config.edge_conv_channels) s += c;
        return s;
    }
    std::size_t head_input_channels() const {
        return edge_concat_channels() + config.global_channels;
    }
};

namespace detail {

inline DenseParams make_dense(std::size_t in, std::size_t out, bool bn, Rng& rng,
                              double scale = 1.0) {
    DenseParams p;
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(in + out));
    p.weight = Tensor::uniform({in, out}, -bound, bound, rng);
    p.bias = Tensor::zeros({out});
    p.has_bn = bn;
    if (bn) {
        p.gamma = Tensor::full({out}, 1.0);
        p.beta = Tensor::zeros({out});
        p.running_mean = Tensor::zeros({out});
        p.running_var = Tensor::full({out}, 1.0);
    }
    return p;
}

template <typename Fn>
void for_each_param(ModelParams& p, bool include_stats, Fn&& fn) {
    auto visit = [&](DenseParams& d, const std::string& prefix) {
        fn(prefix + ".weight", d.weight, true);
        fn(prefix + ".bias", d.bias, true);
        if (d.has_bn) {
            fn(prefix + ".bn_gamma", d.gamma, true);
            fn(prefix + ".bn_beta", d.beta, true);
            if (include_stats) {
                fn(prefix + ".bn_running_mean", d.running_mean, false);
                fn(prefix + ".bn_running_var", d.running_var, false);
            }
        }
    };
    for (std::size_t i = 0; i < p.edge_layers.size(); ++i)
        visit(p.edge_layers[i], "edge" + std::to_string(i));
    visit(p.global_layer, "global");
    for (std::size_t i = 0; i < p.head_layers.size(); ++i)
        visit(p.head_layers[i], "head" + std::to_string(i));
    visit(p.classifier, "classifier");
}

}  // namespace detail

// Glorot-uniform weights, zero biases, unit batch-norm scales. Deterministic
// per seed.
inline ModelParams model_init(const CategoryConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ModelParams p;
    p.config = config;
    const bool bn = config.use_batch_norm;
    std::size_t in_c = 3;
    for (std::size_t out_c : config.edge_conv_channels) {
        p.edge_layers.push_back(detail::make_dense(2 * in_c, out_c, bn, rng));
        in_c = out_c;
    }
    p.global_layer =
        detail::make_dense(p.edge_concat_channels(), config.global_channels, bn, rng);
    std::size_t h = p.head_input_channels();
    for (std::size_t out_c : config.head_channels) {
        p.head_layers.push_back(detail::make_dense(h, out_c, bn, rng));
        h = out_c;
    }
    // small output-layer init keeps the fresh-model loss at ln(num_parts)
    p.classifier = detail::make_dense(h, static_cast<std::size_t>(config.num_parts),
                                      false, rng, 0.1);
    return p;
}

// Trainable tensors in a stable order, for the optimizer.
inline std::vector<Tensor*> trainable_params(ModelParams& p) {
    std::vector<Tensor*> out;
    detail::for_each_param(p, false,
                           [&](const std::string&, Tensor& t, bool) { out.push_back(&t); });
    return out;
}

inline std::vector<std::string> trainable_param_names(ModelParams& p) {
    std::vector<std::string> out;
    detail::for_each_param(p, false,
                           [&](const std::string& n, Tensor&, bool) { out.push_back(n); });
    return out;
}

// All tensors including running stats, for checkpoints.
inline std::vector<std::pair<std::string, Tensor*>> all_params(ModelParams& p) {
    std::vector<std::pair<std::string, Tensor*>> out;
    detail::for_each_param(
        p, true, [&](const std::string& n, Tensor& t, bool) { out.emplace_back(n, &t); });
    return out;
}

inline void zero_gradients(ModelParams& p) {
    for (Tensor* t : trainable_params(p)) {
        t->ensure_grad();
        t->zero_grad();
    }
}

// ---------------------------------------------------------------------------
// forward / backward

struct DenseCache {
    Tensor input;
    Tensor act_in;  // post-BN pre-activation (or pre-activation without BN)
    BatchNormCache bn;
    DropoutMask drop;
    Tensor output;
    Mode mode = Mode::kEval;
};

struct EdgeConvCache {
    KnnGraph graph;
    Tensor input;    // N x C_in
    Tensor act_in;   // (N*k) x C_out, post-BN pre-activation
    BatchNormCache bn;
    std::vector<std::uint32_t> argmax;
    Mode mode = Mode::kEval;
};

struct ForwardCache {
    std::vector<EdgeConvCache> edge;
    std::vector<Tensor> edge_out;  // F_l, N x C_l
    Tensor fcat;                   // N x sum(C_l)
    DenseCache global_dense;       // N x global
    std::vector<std::size_t> global_argmax;  // winning row per channel
    Tensor head_in;                // N x (sum + global)
    std::vector<DenseCache> head;
    DenseCache cls;
};

namespace detail {

// Shared linear(+BN)(+activation)(+dropout) block.
inline Tensor dense_forward(const Tensor& x, DenseParams& p, const CategoryConfig& cfg,
                            bool apply_act, double dropout_rate, Mode mode, Rng& rng,
                            DenseCache* cache) {
    Tensor y = matmul(x, p.weight);
    const std::size_t n = y.shape[0], c = y.shape[1];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) y.at(i, j) += p.bias.data[j];
    if (p.has_bn) {
        y = batch_norm(y, p.gamma, p.beta, mode, p.running_mean, p.running_var,
                       cfg.bn_momentum, cfg.bn_epsilon, cache ? &cache->bn : nullptr);
    }
    if (cache) {
        cache->input = x;
        cache->act_in = y;
        cache->mode = mode;
    }
    if (apply_act) y = activation(y, cfg.activation, cfg.leaky_slope);
    if (dropout_rate > 0.0) {
        auto [dropped, mask] = dropout(y, dropout_rate, mode, rng);
        y = std::move(dropped);
        if (cache) cache->drop = std::move(mask);
    }
    if (cache) cache->output = y;
    return y;
}

// Accumulates weight/bias/BN grads into p's grad buffers, returns dX.
inline Tensor dense_backward(const DenseCache& cache, DenseParams& p,
                             const CategoryConfig& cfg, bool apply_act, bool had_dropout,
                             const Tensor& grad_out) {
    Tensor dy = grad_out;
    if (had_dropout && !cache.drop.mask.empty()) dy = dropout_backward(cache.drop, dy);
    if (apply_act) dy = activation_backward(cache.act_in, cfg.activation, cfg.leaky_slope, dy);
    if (p.has_bn) {
        p.gamma.ensure_grad();
        p.beta.ensure_grad();
        const std::size_t c = p.gamma.numel();
        Tensor g_acc = Tensor::zeros({c}), b_acc = Tensor::zeros({c});
        if (cache.mode == Mode::kTrain) {
            dy = batch_norm_backward(cache.bn, p.gamma, dy, g_acc, b_acc);
        } else {
            // fixed normalization constants in eval mode
            for (std::size_t j = 0; j < c; ++j) {
                for (std::size_t i = 0; i < dy.shape[0]; ++i) {
                    g_acc.data[j] += dy.at(i, j) * cache.bn.x_hat[i * c + j];
                    b_acc.data[j] += dy.at(i, j);
                }
            }
            dy = batch_norm_backward_eval(p.gamma, p.running_var, cfg.bn_epsilon, dy);
        }
        for (std::size_t j = 0; j < c; ++j) {
            p.gamma.grad[j] += g_acc.data[j];
            p.beta.grad[j] += b_acc.data[j];
        }
    }
    p.bias.ensure_grad();
    for (std::size_t i = 0; i < dy.shape[0]; ++i)
        for (std::size_t j = 0; j < dy.shape[1]; ++j) p.bias.grad[j] += dy.at(i, j);
    auto [dx, dw] = matmul_backward(cache.input, p.weight, dy);
    p.weight.ensure_grad();
    for (std::size_t i = 0; i < dw.numel(); ++i) p.weight.grad[i] += dw.data[i];
    return dx;
}

}  // namespace detail

// EdgeConv: per edge (i, j) the feature concat(x_i, x_j - x_i) goes through a
// shared linear(+BN)+activation, then max over the k neighbors. The linear
// part is computed as per-point products gathered per edge.
inline Tensor edge_conv(const Tensor& features, const KnnGraph& graph, DenseParams& layer,
                        const CategoryConfig& cfg, Mode mode, EdgeConvCache* cache) {
    const std::size_t n = features.shape[0], c_in = features.shape[1];
    if (graph.n_points != n)
        throw ShapeError("edge_conv: graph over " + std::to_string(graph.n_points) +
                         " points vs " + std::to_string(n) + " features");
    const std::size_t c_out = layer.weight.shape[1];
    if (layer.weight.shape[0] != 2 * c_in)
        throw ShapeError("edge_conv: weight expects " +
                         std::to_string(layer.weight.shape[0] / 2) + " input channels, got " +
                         std::to_string(c_in));
    const std::size_t k = graph.k;

    // A = X * W_top (self term), B = X * W_bot (offset term)
    ConstMap x(features.data.data(), n, c_in);
    ConstMap w(layer.weight.data.data(), 2 * c_in, c_out);
    EigenRowMat a = x * w.topRows(c_in);
    EigenRowMat b = x * w.bottomRows(c_in);

    Tensor edge_pre({n * k, c_out});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < k; ++s) {
            const std::uint32_t j = graph.at(i, s);
            double* row = edge_pre.data.data() + (i * k + s) * c_out;
            for (std::size_t ch = 0; ch < c_out; ++ch)
                row[ch] = a(i, ch) - b(i, ch) + b(j, ch) + layer.bias.data[ch];
        }
    }
    if (layer.has_bn) {
        edge_pre = batch_norm(edge_pre, layer.gamma, layer.beta, mode, layer.running_mean,
                              layer.running_var, cfg.bn_momentum, cfg.bn_epsilon,
                              cache ? &cache->bn : nullptr);
    }
    if (cache) {
        cache->graph = graph;
        cache->input = features;
        cache->act_in = edge_pre;
        cache->mode = mode;
    }
    Tensor act = activation(edge_pre, cfg.activation, cfg.leaky_slope);
    act.shape = {n, k, c_out};
    auto pooled = max_aggregate(act);
    if (cache) cache->argmax = std::move(pooled.argmax);
    return std::move(pooled.pooled);
}

inline Tensor edge_conv_backward(const EdgeConvCache& cache, DenseParams& layer,
                                 const CategoryConfig& cfg, const Tensor& grad_pooled) {
    const std::size_t n = cache.input.shape[0], c_in = cache.input.shape[1];
    const std::size_t k = cache.graph.k, c_out = layer.weight.shape[1];

    Tensor dedge = max_aggregate_backward(cache.argmax, k, grad_pooled);
    dedge.shape = {n * k, c_out};
    dedge = activation_backward(cache.act_in, cfg.activation, cfg.leaky_slope, dedge);
    if (layer.has_bn) {
        layer.gamma.ensure_grad();
        layer.beta.ensure_grad();
        Tensor g_acc = Tensor::zeros({c_out}), b_acc = Tensor::zeros({c_out});
        dedge = batch_norm_backward(cache.bn, layer.gamma, dedge, g_acc, b_acc);
        for (std::size_t ch = 0; ch < c_out; ++ch) {
            layer.gamma.grad[ch] += g_acc.data[ch];
            layer.beta.grad[ch] += b_acc.data[ch];
        }
    }

    layer.bias.ensure_grad();
    Tensor da({n, c_out}), db({n, c_out});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < k; ++s) {
            const std::uint32_t j = cache.graph.at(i, s);
            const double* row = dedge.data.data() + (i * k + s) * c_out;
            for (std::size_t ch = 0; ch < c_out; ++ch) {
                const double g = row[ch];
                layer.bias.grad[ch] += g;
                da.at(i, ch) += g;
                db.at(i, ch) -= g;
                db.at(j, ch) += g;
            }
        }
    }

    ConstMap x(cache.input.data.data(), n, c_in);
    ConstMap mda(da.data.data(), n, c_out);
    ConstMap mdb(db.data.data(), n, c_out);
    ConstMap w(layer.weight.data.data(), 2 * c_in, c_out);
    layer.weight.ensure_grad();
    MutMap dw(layer.weight.grad.data(), 2 * c_in, c_out);
    dw.topRows(c_in) += x.transpose() * mda;
    dw.bottomRows(c_in) += x.transpose() * mdb;
    Tensor dx({n, c_in});
    MutMap(dx.data.data(), n, c_in) =
        mda * w.topRows(c_in).transpose() + mdb * w.bottomRows(c_in).transpose();
    return dx;
}

// Full segmentation forward: EdgeConv stack with the graph rebuilt in feature
// space before each layer, concat of all EdgeConv outputs, linear to the
// global channel count max-pooled over all points, broadcast-concat, head MLP
// with dropout after each layer, final linear to num_parts.
inline Tensor model_forward(const Tensor& points, ModelParams& params, Mode mode, Rng& rng,
                            ForwardCache* cache = nullptr) {
    const CategoryConfig& cfg = params.config;
    if (points.shape.size() != 2 || points.shape[1] != 3)
        throw ShapeError("model_forward expects N x 3 points, got " + points.shape_str());
    const std::size_t n = points.shape[0];
    if (n <= cfg.k_neighbors)
        throw ShapeError("scene has " + std::to_string(n) + " points but k=" +
                         std::to_string(cfg.k_neighbors) + " neighbors");
    check_finite(points, "model_forward points");

    if (cache) {
        cache->edge.resize(params.edge_layers.size());
        cache->edge_out.resize(params.edge_layers.size());
        cache->head.resize(params.head_layers.size());
    }

    const KnnGraph coord_graph = dynamic_graph(points, cfg.k_neighbors);
    Tensor feat = points;
    std::vector<Tensor> outputs;
    for (std::size_t l = 0; l < params.edge_layers.size(); ++l) {
        const KnnGraph graph = (l == 0 || cfg.static_graph)
                                   ? coord_graph
                                   : dynamic_graph(feat, cfg.k_neighbors);
        feat = edge_conv(feat, graph, params.edge_layers[l], cfg, mode,
                         cache ? &cache->edge[l] : nullptr);
        if (cache) cache->edge_out[l] = feat;
        outputs.push_back(feat);
    }

    const std::size_t csum = params.edge_concat_channels();
    Tensor fcat({n, csum});
    {
        std::size_t off = 0;
        for (const Tensor& f : outputs) {
            const std::size_t c = f.shape[1];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) fcat.at(i, off + j) = f.at(i, j);
            off += c;
        }
    }
    if (cache) cache->fcat = fcat;

    Tensor g = detail::dense_forward(fcat, params.global_layer, cfg, true, 0.0, mode, rng,
                                     cache ? &cache->global_dense : nullptr);

    // global max pool over all points, one winner row per channel
    const std::size_t gc = cfg.global_channels;
    std::vector<double> gvec(gc);
    std::vector<std::size_t> gargmax(gc, 0);
    for (std::size_t j = 0; j < gc; ++j) {
        double best = g.at(0, j);
        std::size_t best_i = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (g.at(i, j) > best) {
                best = g.at(i, j);
                best_i = i;
            }
        }
        gvec[j] = best;
        gargmax[j] = best_i;
    }
    if (cache) cache->global_argmax = gargmax;

    Tensor h({n, csum + gc});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < csum; ++j) h.at(i, j) = fcat.at(i, j);
        for (std::size_t j = 0; j < gc; ++j) h.at(i, csum + j) = gvec[j];
    }
    if (cache) cache->head_in = h;

    for (std::size_t l = 0; l < params.head_layers.size(); ++l) {
        h = detail::dense_forward(h, params.head_layers[l], cfg, true, cfg.dropout_rate,
                                  mode, rng, cache ? &cache->head[l] : nullptr);
    }
    return detail::dense_forward(h, params.classifier, cfg, false, 0.0, mode, rng,
                                 cache ? &cache->cls : nullptr);
}

// Accumulates parameter gradients for one scene; returns d(points) (unused by
// training but kept for checking).
inline Tensor model_backward(const ForwardCache& cache, ModelParams& params,
                             const Tensor& grad_logits) {
    const CategoryConfig& cfg = params.config;
    Tensor dh = detail::dense_backward(cache.cls, params.classifier, cfg, false, false,
                                       grad_logits);
    for (std::size_t l = params.head_layers.size(); l-- > 0;) {
        dh = detail::dense_backward(cache.head[l], params.head_layers[l], cfg, true,
                                    cfg.dropout_rate > 0.0, dh);
    }

    const std::size_t n = cache.head_in.shape[0];
    const std::size_t csum = params.edge_concat_channels();
    const std::size_t gc = cfg.global_channels;
    Tensor dfcat({n, csum});
    std::vector<double> dgvec(gc, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < csum; ++j) dfcat.at(i, j) = dh.at(i, j);
        for (std::size_t j = 0; j < gc; ++j) dgvec[j] += dh.at(i, csum + j);
    }

    Tensor dg({n, gc});
    for (std::size_t j = 0; j < gc; ++j) dg.at(cache.global_argmax[j], j) = dgvec[j];
    Tensor dfcat_global =
        detail::dense_backward(cache.global_dense, params.global_layer, cfg, true, false, dg);
    for (std::size_t i = 0; i < dfcat.numel(); ++i) dfcat.data[i] += dfcat_global.data[i];

    // walk the EdgeConv stack backwards, splitting dfcat per layer
    std::vector<Tensor> dfeat(params.edge_layers.size());
    {
        std::size_t off = 0;
        for (std::size_t l = 0; l < params.edge_layers.size(); ++l) {
            const std::size_t c = cfg.edge_conv_channels[l];
            dfeat[l] = Tensor({n, c});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) dfeat[l].at(i, j) = dfcat.at(i, off + j);
            off += c;
        }
    }
    Tensor dx;
    for (std::size_t l = params.edge_layers.size(); l-- > 0;) {
        Tensor dpooled = std::move(dfeat[l]);
        if (!dx.data.empty())
            for (std::size_t i = 0; i < dpooled.numel(); ++i) dpooled.data[i] += dx.data[i];
        dx = edge_conv_backward(cache.edge[l], params.edge_layers[l], cfg, dpooled);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// per-component labels

// Mean of logits over each component's points, then argmax (ties to the
// lowest class). Majority vote over per-point argmaxes behind the flag.
inline std::map<int, int> component_aggregate(const Tensor& logits,
                                              const std::vector<int>& component_ids,
                                              bool majority_vote = false) {
    if (logits.shape.size() != 2 || logits.shape[0] != component_ids.size())
        throw ShapeError("component_aggregate: logits " + logits.shape_str() + " vs " +
                         std::to_string(component_ids.size()) + " component ids");
    if (component_ids.empty()) throw DataError("component_aggregate: empty scene");
    const std::size_t p = logits.shape[1];

    auto argmax_row = [&](const std::vector<double>& row) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < p; ++j)
            if (row[j] > row[best]) best = j;
        return static_cast<int>(best);
    };

    std::map<int, std::vector<double>> acc;
    std::map<int, int> count;
    for (std::size_t i = 0; i < component_ids.size(); ++i) {
        auto& v = acc[component_ids[i]];
        if (v.empty()) v.assign(p, 0.0);
        if (majority_vote) {
            std::vector<double> row(logits.data.begin() + i * p,
                                    logits.data.begin() + (i + 1) * p);
            v[argmax_row(row)] += 1.0;
        } else {
            for (std::size_t j = 0; j < p; ++j) v[j] += logits.at(i, j);
        }
        count[component_ids[i]] += 1;
    }
    std::map<int, int> out;
    for (auto& [comp, v] : acc) out[comp] = argmax_row(v);
    return out;
}

}  // namespace convseg
