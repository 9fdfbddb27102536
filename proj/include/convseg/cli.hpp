#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convseg/dataset.hpp"
#include "convseg/errors.hpp"
#include "convseg/evaluation.hpp"
#include "convseg/gradsuite.hpp"
#include "convseg/model.hpp"
#include "convseg/optim.hpp"
#include "convseg/training.hpp"

namespace convseg::cli {

namespace fs = std::filesystem;

inline std::string scenes_path(const std::string& data_dir, Category c,
                               const std::string& split) {
    return data_dir + "/" + category_name(c) + "/" + split + ".jsonl";
}

inline std::uint64_t env_seed_or(std::uint64_t fallback) {
    if (const char* env = std::getenv("CONVSEG_SEED")) return std::strtoull(env, nullptr, 10);
    return fallback;
}

namespace detail {

inline void write_schedule_csv(std::ostream& out, ScheduleState state, std::int64_t epochs) {
    out << "epoch,lr\n";
    for (std::int64_t e = 0; e < epochs; ++e) {
        out << e << ',' << format_double(schedule_lr(state)) << '\n';
        state = schedule_advance(state);
    }
}

inline void update_categories_file(const std::string& path, const CategoryInfo& info) {
    std::vector<CategoryInfo> infos;
    if (fs::exists(path)) infos = load_categories(path);
    bool replaced = false;
    for (auto& ci : infos) {
        if (ci.category == info.category) {
            ci = info;
            replaced = true;
        }
    }
    if (!replaced) infos.push_back(info);
    std::sort(infos.begin(), infos.end(),
              [](const CategoryInfo& a, const CategoryInfo& b) { return a.category < b.category; });
    emit_categories(infos, path);
}

inline void run_session_to_files(const TrainConfig& cfg, const DatasetSplit& split,
                                 const std::string& out_dir) {
    auto [params, history] = train_category(cfg, split);
    const std::string name = category_name(cfg.model.category);
    checkpoint_save(params, out_dir + "/" + name + ".ckpt.json");
    emit_history_csv(history, out_dir + "/" + name + ".history.csv");
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
    CLI::App app{"convseg: per-category point-cloud part segmentation pipeline"};
    app.require_subcommand(1);

    // generate-synth
    std::string gs_category, gs_out, gs_split = "train";
    std::size_t gs_scenes = 20, gs_points = 256;
    std::int64_t gs_seed = -1;
    auto* gen = app.add_subcommand("generate-synth", "Generate synthetic labeled scenes");
    gen->add_option("--category", gs_category, "Category name")->required();
    gen->add_option("--scenes", gs_scenes, "Number of scenes");
    gen->add_option("--points", gs_points, "Points per scene");
    gen->add_option("--seed", gs_seed, "RNG seed (default: CONVSEG_SEED or 0)");
    gen->add_option("--split", gs_split, "Split name (train|dev|test)");
    gen->add_option("--out", gs_out, "Dataset root directory")->required();

    // train
    std::string tr_config, tr_data, tr_out;
    bool tr_all = false;
    std::size_t tr_jobs = 1;
    std::int64_t tr_epochs = -1, tr_seed = -1;
    auto* train = app.add_subcommand("train", "Train one category (or all five with --all)");
    train->add_option("--config", tr_config, "TrainConfig JSON file");
    train->add_option("--data", tr_data, "Dataset root directory")->required();
    train->add_option("--out", tr_out, "Output directory for checkpoints")->required();
    train->add_flag("--all", tr_all, "Train all five categories with default configs");
    train->add_option("--jobs", tr_jobs, "Parallel sessions with --all");
    train->add_option("--epochs", tr_epochs, "Override epoch count");
    train->add_option("--seed", tr_seed, "Override seed (default: CONVSEG_SEED or config)");

    // evaluate
    std::string ev_ckpt, ev_data, ev_report, ev_split = "dev";
    bool ev_absent_one = false;
    auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on labeled scenes");
    eval->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", ev_data, "Dataset root directory")->required();
    eval->add_option("--report", ev_report, "Metrics report JSON output")->required();
    eval->add_option("--split", ev_split, "Split to evaluate");
    eval->add_flag("--include-absent-as-1", ev_absent_one,
                   "Count classes absent from both sides as IoU 1");

    // predict
    std::string pr_ckpt, pr_data, pr_out, pr_split = "test";
    auto* predict = app.add_subcommand("predict", "Write a submission CSV for one category");
    predict->add_option("--checkpoint", pr_ckpt, "Checkpoint file")->required();
    predict->add_option("--data", pr_data, "Dataset root directory")->required();
    predict->add_option("--out", pr_out, "Submission CSV output")->required();
    predict->add_option("--split", pr_split, "Split to predict");

    // merge
    std::vector<std::string> mg_inputs;
    std::string mg_out;
    auto* merge = app.add_subcommand("merge", "Merge the five per-category submissions");
    merge->add_option("--inputs", mg_inputs, "Five submission CSV files")
        ->expected(5)
        ->required();
    merge->add_option("--out", mg_out, "Merged submission CSV")->required();

    // plot-schedule
    std::string ps_kind = "sgdr", ps_out;
    std::int64_t ps_epochs = 250, ps_t0 = 0, ps_t_mult = 2, ps_period = 25;
    double ps_base = 1e-3, ps_eta_min = 0.0, ps_factor = 0.8;
    auto* plot = app.add_subcommand("plot-schedule", "Emit epoch,lr CSV for a schedule");
    plot->add_option("--kind", ps_kind, "sgdr | step")
        ->check(CLI::IsMember({"sgdr", "step"}));
    plot->add_option("--epochs", ps_epochs, "Number of epochs");
    plot->add_option("--out", ps_out, "CSV output (stdout if omitted)");
    plot->add_option("--base-lr", ps_base, "Base learning rate");
    plot->add_option("--eta-min", ps_eta_min, "SGDR floor");
    plot->add_option("--t0", ps_t0, "SGDR first cycle length (default: epochs)");
    plot->add_option("--t-mult", ps_t_mult, "SGDR cycle multiplier");
    plot->add_option("--factor", ps_factor, "Step-decay factor");
    plot->add_option("--period", ps_period, "Step-decay period");

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            const Category cat = category_from_name(gs_category);
            const std::uint64_t seed =
                gs_seed >= 0 ? static_cast<std::uint64_t>(gs_seed) : env_seed_or(0);
            auto scenes = synth_generate(cat, gs_scenes, gs_points, seed);
            fs::create_directories(fs::path(gs_out) / category_name(cat));
            emit_scenes(scenes, scenes_path(gs_out, cat, gs_split));
            detail::update_categories_file(gs_out + "/categories.json",
                                           synth_category_info(cat));
            std::cout << "wrote " << scenes.size() << " scenes to "
                      << scenes_path(gs_out, cat, gs_split) << "\n";
        } else if (train->parsed()) {
            fs::create_directories(tr_out);
            if (tr_all) {
                auto infos = load_categories(tr_data + "/categories.json");
                std::vector<std::pair<TrainConfig, DatasetSplit>> sessions;
                for (Category c : kAllCategories) {
                    TrainConfig cfg = default_train_config(c, num_parts_for(infos, c));
                    if (tr_epochs > 0) cfg.epochs = tr_epochs;
                    if (tr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tr_seed);
                    DatasetSplit split{"train",
                                       load_scenes(scenes_path(tr_data, c, "train"))};
                    sessions.emplace_back(std::move(cfg), std::move(split));
                }
                for (const auto& r : train_all(sessions, tr_out, tr_jobs))
                    std::cout << "wrote " << r.checkpoint_path << "\n";
            } else {
                if (tr_config.empty())
                    throw CLI::RequiredError("--config (without --all)");
                std::ifstream in(tr_config);
                if (!in) throw DataError("cannot open config: " + tr_config);
                nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
                if (j.is_discarded()) throw DataError("malformed config: " + tr_config);
                TrainConfig cfg = train_config_from_json(j);
                if (tr_epochs > 0) cfg.epochs = tr_epochs;
                if (tr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tr_seed);
                DatasetSplit split{
                    "train",
                    load_scenes(scenes_path(tr_data, cfg.model.category, "train"))};
                detail::run_session_to_files(cfg, split, tr_out);
                std::cout << "wrote " << tr_out << "/"
                          << category_name(cfg.model.category) << ".ckpt.json\n";
            }
        } else if (eval->parsed()) {
            ModelParams params = checkpoint_load(ev_ckpt);
            auto scenes =
                load_scenes(scenes_path(ev_data, params.config.category, ev_split));
            MetricsReport report = evaluate_model(params, scenes, ev_absent_one);
            std::ofstream out(ev_report);
            if (!out) throw DataError("cannot write report: " + ev_report);
            out << metrics_to_json(report).dump(2) << '\n';
            std::cout << "point_accuracy=" << report.point_accuracy
                      << " component_accuracy=" << report.component_accuracy
                      << " mean_iou=" << report.mean_iou << "\n";
        } else if (predict->parsed()) {
            ModelParams params = checkpoint_load(pr_ckpt);
            auto scenes =
                load_scenes(scenes_path(pr_data, params.config.category, pr_split));
            emit_submission(predict_scenes(params, scenes), pr_out);
            std::cout << "wrote " << pr_out << "\n";
        } else if (merge->parsed()) {
            merge_submissions(mg_inputs, mg_out);
            std::cout << "wrote " << mg_out << "\n";
        } else if (plot->parsed()) {
            ScheduleState state =
                ps_kind == "step"
                    ? make_step_decay(ps_base, ps_factor, ps_period)
                    : make_sgdr(ps_base, ps_eta_min, ps_t0 > 0 ? ps_t0 : ps_epochs,
                                ps_t_mult);
            if (ps_out.empty()) {
                detail::write_schedule_csv(std::cout, state, ps_epochs);
            } else {
                std::ofstream out(ps_out);
                if (!out) throw DataError("cannot write " + ps_out);
                detail::write_schedule_csv(out, state, ps_epochs);
            }
        } else if (grad->parsed()) {
            GradSuiteReport report = run_gradient_suite();
            for (const auto& e : report.entries)
                std::printf("%-24s max_rel_error=%.3e\n", e.name.c_str(), e.max_rel_error);
            std::printf("max relative error: %.3e\n", report.max_rel_error);
            if (report.max_rel_error >= 1e-4) {
                std::cerr << "gradient check FAILED\n";
                return 2;
            }
        }
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const ParamError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace convseg::cli
