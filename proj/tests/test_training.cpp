#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "convseg/dataset.hpp"
#include "convseg/training.hpp"

using namespace convseg;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train_config(Category c) {
    TrainConfig cfg = default_train_config(c, synth_num_parts(c));
    cfg.model.k_neighbors = 4;
    cfg.model.edge_conv_channels = {8, 8};
    cfg.model.global_channels = 16;
    cfg.model.head_channels = {16};
    cfg.points_per_scene = 32;
    cfg.epochs = 3;
    cfg.seed = 9;
    return cfg;
}

DatasetSplit tiny_split(Category c, std::size_t scenes = 4, std::uint64_t seed = 77) {
    return {"train", synth_generate(c, scenes, 48, seed)};
}

std::string temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / name;
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(TrainConfig, DefaultsSnapshot) {
    for (Category c : kAllCategories) {
        TrainConfig cfg = default_train_config(c, 4);
        EXPECT_EQ(cfg.epochs, 250);
        EXPECT_DOUBLE_EQ(cfg.base_lr, 1e-3);
        EXPECT_EQ(cfg.scenes_per_batch, 2u);
        EXPECT_DOUBLE_EQ(cfg.model.dropout_rate, c == Category::kChair ? 0.6 : 0.4);
    }
}

TEST(TrainConfig, JsonRoundTrip) {
    TrainConfig cfg = tiny_train_config(Category::kBed);
    cfg.schedule = ScheduleKind::kStepDecay;
    TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    EXPECT_EQ(back.epochs, cfg.epochs);
    EXPECT_EQ(back.schedule, ScheduleKind::kStepDecay);
    EXPECT_EQ(back.model.edge_conv_channels, cfg.model.edge_conv_channels);
    EXPECT_EQ(back.seed, cfg.seed);
}

TEST(TrainCategory, HistoryLengthMatchesEpochs) {
    auto [params, history] = train_category(tiny_train_config(Category::kLamp),
                                            tiny_split(Category::kLamp, 1));
    EXPECT_EQ(history.records.size(), 3u);
}

TEST(TrainCategory, LrMatchesScheduleExactly) {
    TrainConfig cfg = tiny_train_config(Category::kLamp);
    cfg.epochs = 6;
    cfg.schedule = ScheduleKind::kSgdr;
    cfg.sgdr_t0 = 6;
    auto [params, history] = train_category(cfg, tiny_split(Category::kLamp));
    ScheduleState s = cfg.make_schedule();
    for (const auto& rec : history.records) {
        EXPECT_NEAR(rec.lr, schedule_lr(s), 1e-15);
        s = schedule_advance(s);
    }

    cfg.schedule = ScheduleKind::kStepDecay;
    cfg.step_period = 2;
    auto [params2, history2] = train_category(cfg, tiny_split(Category::kLamp));
    for (const auto& rec : history2.records)
        EXPECT_NEAR(rec.lr, step_decay_lr(rec.epoch, cfg.base_lr, cfg.step_factor, 2), 1e-15);
}

// balanced synthetic data: first-epoch loss sits near ln(parts)
TEST(TrainCategory, InitialLossNearLogParts) {
    TrainConfig cfg = tiny_train_config(Category::kChair);
    cfg.epochs = 1;
    auto [params, history] = train_category(cfg, tiny_split(Category::kChair, 6));
    const double anchor = std::log(static_cast<double>(cfg.model.num_parts));
    EXPECT_NEAR(history.records[0].loss, anchor, 0.2 * anchor);
}

TEST(TrainCategory, DeterministicPerSeed) {
    TrainConfig cfg = tiny_train_config(Category::kBed);
    DatasetSplit split = tiny_split(Category::kBed);
    auto [pa, ha] = train_category(cfg, split);
    auto [pb, hb] = train_category(cfg, split);
    auto ta = all_params(pa), tb = all_params(pb);
    for (std::size_t i = 0; i < ta.size(); ++i)
        EXPECT_EQ(ta[i].second->data, tb[i].second->data);
    for (std::size_t i = 0; i < ha.records.size(); ++i) {
        EXPECT_EQ(ha.records[i].loss, hb.records[i].loss);
        EXPECT_EQ(ha.records[i].accuracy, hb.records[i].accuracy);
    }
}

TEST(TrainCategory, WrongCategoryRejected) {
    TrainConfig cfg = tiny_train_config(Category::kBed);
    EXPECT_THROW(train_category(cfg, tiny_split(Category::kLamp)), DataError);
}

TEST(TrainCategory, UnlabeledSceneRejected) {
    TrainConfig cfg = tiny_train_config(Category::kBed);
    DatasetSplit split = tiny_split(Category::kBed);
    split.scenes[0].labels.clear();
    EXPECT_THROW(train_category(cfg, split), DataError);
}

TEST(TrainCategory, EarlyStopCallback) {
    TrainConfig cfg = tiny_train_config(Category::kLamp);
    cfg.epochs = 10;
    int calls = 0;
    auto [params, history] = train_category(
        cfg, tiny_split(Category::kLamp),
        [&](const EpochRecord& rec, ModelParams&) { return ++calls < 2; });
    EXPECT_EQ(history.records.size(), 2u);
}

TEST(Checkpoint, SaveLoadBitExact) {
    TrainConfig cfg = tiny_train_config(Category::kTable);
    auto [params, history] = train_category(cfg, tiny_split(Category::kTable, 2));
    const std::string path = temp_dir("convseg_ckpt") + "/table.ckpt.json";
    checkpoint_save(params, path);
    ModelParams loaded = checkpoint_load(path);
    auto orig = all_params(params), back = all_params(loaded);
    ASSERT_EQ(orig.size(), back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        EXPECT_EQ(orig[i].first, back[i].first);
        EXPECT_EQ(orig[i].second->data, back[i].second->data);
    }
    EXPECT_EQ(loaded.config.category, Category::kTable);
}

TEST(Checkpoint, TruncatedFileRejected) {
    const std::string dir = temp_dir("convseg_ckpt");
    TrainConfig cfg = tiny_train_config(Category::kTable);
    ModelParams params = model_init(cfg.model, 1);
    const std::string path = dir + "/good.ckpt.json";
    checkpoint_save(params, path);
    std::string text = slurp(path);
    const std::string trunc = dir + "/trunc.ckpt.json";
    std::ofstream(trunc) << text.substr(0, text.size() / 2);
    EXPECT_THROW(checkpoint_load(trunc), DataError);
}

TEST(Checkpoint, VersionMismatchRejected) {
    const std::string dir = temp_dir("convseg_ckpt");
    ModelParams params = model_init(tiny_train_config(Category::kBed).model, 1);
    const std::string path = dir + "/v.ckpt.json";
    checkpoint_save(params, path);
    nlohmann::json j = nlohmann::json::parse(std::ifstream(path));
    j["format_version"] = 999;
    std::ofstream(path) << j.dump();
    EXPECT_THROW(checkpoint_load(path), DataError);
}

TEST(TrainAll, FiveSessionsParallelMatchesSerial) {
    std::vector<std::pair<TrainConfig, DatasetSplit>> sessions;
    for (Category c : kAllCategories) {
        TrainConfig cfg = tiny_train_config(c);
        cfg.epochs = 2;
        sessions.emplace_back(cfg, tiny_split(c, 2));
    }
    const std::string serial_dir = temp_dir("convseg_serial");
    const std::string parallel_dir = temp_dir("convseg_parallel");
    auto serial = train_all(sessions, serial_dir, 1);
    auto parallel = train_all(sessions, parallel_dir, 4);
    ASSERT_EQ(serial.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(slurp(serial[i].checkpoint_path), slurp(parallel[i].checkpoint_path));
        EXPECT_EQ(slurp(serial[i].history_path), slurp(parallel[i].history_path));
        ModelParams loaded = checkpoint_load(serial[i].checkpoint_path);
        EXPECT_EQ(loaded.config.category, serial[i].category);
    }
}

TEST(TrainAll, MissingCategoryRejected) {
    std::vector<std::pair<TrainConfig, DatasetSplit>> sessions;
    for (Category c : {Category::kChair, Category::kChair, Category::kBed, Category::kLamp,
                       Category::kTable}) {
        TrainConfig cfg = tiny_train_config(c);
        sessions.emplace_back(cfg, tiny_split(c, 1));
    }
    EXPECT_THROW(train_all(sessions, temp_dir("convseg_missing")), DataError);
}
