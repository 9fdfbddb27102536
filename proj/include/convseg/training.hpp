#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "convseg/dataset.hpp"
#include "convseg/errors.hpp"
#include "convseg/model.hpp"
#include "convseg/optim.hpp"

namespace convseg {

struct TrainConfig {
    CategoryConfig model;
    std::int64_t epochs = 250;
    double base_lr = 1e-3;
    ScheduleKind schedule = ScheduleKind::kSgdr;
    // SGDR: t0 <= 0 means one cycle spanning the whole run
    std::int64_t sgdr_t0 = 0;
    std::int64_t sgdr_t_mult = 2;
    double sgdr_eta_min = 0.0;
    // step decay
    double step_factor = 0.8;
    std::int64_t step_period = 25;
    std::size_t scenes_per_batch = 2;
    std::size_t points_per_scene = 256;
    std::uint64_t seed = 0;

    void validate() const {
        model.validate();
        if (epochs < 1) throw ParamError("epochs must be >= 1");
        if (base_lr <= 0.0) throw ParamError("base_lr must be > 0");
        if (scenes_per_batch < 1) throw ParamError("scenes_per_batch must be >= 1");
    }

    ScheduleState make_schedule() const {
        if (schedule == ScheduleKind::kStepDecay)
            return make_step_decay(base_lr, step_factor, step_period);
        return make_sgdr(base_lr, sgdr_eta_min, sgdr_t0 > 0 ? sgdr_t0 : epochs,
                         sgdr_t_mult);
    }
};

inline TrainConfig default_train_config(Category c, int num_parts) {
    TrainConfig cfg;
    cfg.model = default_category_config(c, num_parts);
    return cfg;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"model", category_config_to_json(c.model)},
            {"epochs", c.epochs},
            {"base_lr", c.base_lr},
            {"schedule", c.schedule == ScheduleKind::kSgdr ? "sgdr" : "step_decay"},
            {"sgdr_t0", c.sgdr_t0},
            {"sgdr_t_mult", c.sgdr_t_mult},
            {"sgdr_eta_min", c.sgdr_eta_min},
            {"step_factor", c.step_factor},
            {"step_period", c.step_period},
            {"scenes_per_batch", c.scenes_per_batch},
            {"points_per_scene", c.points_per_scene},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.model = category_config_from_json(j.at("model"));
    c.epochs = j.value("epochs", std::int64_t{250});
    c.base_lr = j.value("base_lr", 1e-3);
    const std::string sched = j.value("schedule", std::string("sgdr"));
    if (sched == "sgdr") {
        c.schedule = ScheduleKind::kSgdr;
    } else if (sched == "step_decay") {
        c.schedule = ScheduleKind::kStepDecay;
    } else {
        throw DataError("unknown schedule: " + sched);
    }
    c.sgdr_t0 = j.value("sgdr_t0", std::int64_t{0});
    c.sgdr_t_mult = j.value("sgdr_t_mult", std::int64_t{2});
    c.sgdr_eta_min = j.value("sgdr_eta_min", 0.0);
    c.step_factor = j.value("step_factor", 0.8);
    c.step_period = j.value("step_period", std::int64_t{25});
    c.scenes_per_batch = j.value("scenes_per_batch", std::size_t{2});
    c.points_per_scene = j.value("points_per_scene", std::size_t{256});
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// history

struct EpochRecord {
    std::int64_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void emit_history_csv(const TrainHistory& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write history: " + path);
    out << "epoch,lr,loss,accuracy\n";
    for (const auto& r : h.records)
        out << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
            << format_double(r.accuracy) << '\n';
}

// ---------------------------------------------------------------------------
// training loop

// Optional early-stop hook: called after each epoch; return false to stop.
using EpochCallback =
    std::function<bool(const EpochRecord&, ModelParams&)>;

// One per-category session: epochs of batched forward / cross-entropy /
// backward / Adam, lr from the schedule once per epoch. Losses inside a batch
// are averaged into a single Adam step. Fully deterministic per seed.
inline std::pair<ModelParams, TrainHistory> train_category(
    const TrainConfig& config, const DatasetSplit& split,
    const EpochCallback& callback = nullptr) {
    config.validate();
    if (split.scenes.empty()) throw DataError("training split is empty");
    for (const Scene& s : split.scenes) {
        if (s.category != config.model.category)
            throw DataError("scene " + s.scene_id + " is " + category_name(s.category) +
                            " but the session trains " +
                            category_name(config.model.category));
        if (!s.has_labels()) throw DataError("scene " + s.scene_id + " has no labels");
    }

    ModelParams params = model_init(config.model, config.seed);
    Rng rng(config.seed);
    std::vector<Tensor*> trainable = trainable_params(params);
    std::vector<std::string> names = trainable_param_names(params);
    AdamState adam = adam_init(trainable);
    ScheduleState schedule = config.make_schedule();

    TrainHistory history;
    for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = schedule_lr(schedule);
        auto batches = make_batches(split.scenes.size(), config.scenes_per_batch, rng);
        double epoch_loss = 0.0;
        std::size_t correct = 0, total = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            zero_gradients(params);
            double batch_loss = 0.0;
            const double inv_batch = 1.0 / static_cast<double>(batches[b].size());
            for (std::size_t idx : batches[b]) {
                Scene scene =
                    resample_scene(split.scenes[idx], config.points_per_scene, rng);
                ForwardCache cache;
                Tensor logits = model_forward(scene.points, params, Mode::kTrain, rng, &cache);
                SoftmaxLoss loss = softmax_cross_entropy(logits, scene.labels);
                batch_loss += loss.loss * inv_batch;
                for (double& g : loss.grad.data) g *= inv_batch;
                model_backward(cache, params, loss.grad);

                const std::size_t p = logits.shape[1];
                for (std::size_t i = 0; i < logits.shape[0]; ++i) {
                    const double* row = logits.data.data() + i * p;
                    std::size_t am = 0;
                    for (std::size_t j = 1; j < p; ++j)
                        if (row[j] > row[am]) am = j;
                    correct += static_cast<int>(am) == scene.labels[i];
                    ++total;
                }
            }
            if (!std::isfinite(batch_loss))
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                      " batch " + std::to_string(b));
            adam_step(trainable, adam, lr, &names);
            epoch_loss += batch_loss;
        }
        EpochRecord rec{epoch, lr, epoch_loss / static_cast<double>(batches.size()),
                        static_cast<double>(correct) / static_cast<double>(total)};
        history.records.push_back(rec);
        schedule = schedule_advance(schedule);
        if (callback && !callback(rec, params)) break;
    }
    return {std::move(params), std::move(history)};
}

// ---------------------------------------------------------------------------
// checkpoints

inline constexpr int kCheckpointVersion = 1;

inline void checkpoint_save(ModelParams& params, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["config"] = category_config_to_json(params.config);
    nlohmann::json tensors;
    for (auto& [name, t] : all_params(params)) {
        tensors[name] = {{"shape", t->shape}, {"data", t->data}};
    }
    j["params"] = std::move(tensors);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump() << '\n';
}

inline ModelParams checkpoint_load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("malformed checkpoint: " + path);
    const int version = j.value("format_version", -1);
    if (version != kCheckpointVersion)
        throw DataError("checkpoint " + path + " has format version " +
                        std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    CategoryConfig cfg = category_config_from_json(j.at("config"));
    ModelParams params = model_init(cfg, 0);
    for (auto& [name, t] : all_params(params)) {
        if (!j.at("params").contains(name))
            throw DataError("checkpoint " + path + " missing tensor " + name);
        const auto& jt = j["params"][name];
        const auto shape = jt.at("shape").get<std::vector<std::size_t>>();
        if (shape != t->shape)
            throw DataError("checkpoint tensor " + name + " has inconsistent shape");
        t->data = jt.at("data").get<std::vector<double>>();
        if (t->data.size() != Tensor::numel_of(shape))
            throw DataError("checkpoint tensor " + name + " has wrong length");
    }
    return params;
}

// ---------------------------------------------------------------------------
// the five sessions

struct SessionResult {
    Category category;
    std::string checkpoint_path;
    std::string history_path;
};

// Runs the five independent per-category sessions, optionally in parallel;
// each owns its RNG, Adam state, and schedule. Writes one checkpoint and one
// history CSV per category under out_dir.
inline std::vector<SessionResult> train_all(
    const std::vector<std::pair<TrainConfig, DatasetSplit>>& sessions,
    const std::string& out_dir, std::size_t jobs = 1) {
    if (sessions.size() != kAllCategories.size())
        throw DataError("train_all needs one session per category, got " +
                        std::to_string(sessions.size()));
    for (Category c : kAllCategories) {
        bool found = false;
        for (const auto& [cfg, split] : sessions)
            found = found || cfg.model.category == c;
        if (!found) throw DataError("missing category " + category_name(c));
    }

    std::vector<SessionResult> results(sessions.size());
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto run_one = [&](std::size_t i) {
        try {
            const auto& [cfg, split] = sessions[i];
            auto [params, history] = train_category(cfg, split);
            const std::string name = category_name(cfg.model.category);
            SessionResult r{cfg.model.category, out_dir + "/" + name + ".ckpt.json",
                            out_dir + "/" + name + ".history.csv"};
            checkpoint_save(params, r.checkpoint_path);
            emit_history_csv(history, r.history_path);
            results[i] = std::move(r);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
        }
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < sessions.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < std::min(jobs, sessions.size()); ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < sessions.size();
                     i = next.fetch_add(1))
                    run_one(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

}  // namespace convseg
