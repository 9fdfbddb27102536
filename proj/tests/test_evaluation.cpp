#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "convseg/dataset.hpp"
#include "convseg/evaluation.hpp"
#include "convseg/model.hpp"

using namespace convseg;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / name;
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// independent oracle: metrics recomputed from an explicitly built confusion
// matrix, with IoU from per-class set counts
struct Oracle {
    double accuracy;
    std::map<int, double> per_class_iou;
    double mean_iou;
};

Oracle brute_force_metrics(const std::vector<int>& pred, const std::vector<int>& gt,
                           int classes) {
    std::vector<std::vector<long>> conf(classes, std::vector<long>(classes, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) conf[gt[i]][pred[i]] += 1;
    long trace = 0, total = 0;
    for (int a = 0; a < classes; ++a)
        for (int b = 0; b < classes; ++b) {
            total += conf[a][b];
            if (a == b) trace += conf[a][b];
        }
    Oracle o;
    o.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < classes; ++c) {
        long inter = conf[c][c], gt_n = 0, pred_n = 0;
        for (int x = 0; x < classes; ++x) {
            gt_n += conf[c][x];
            pred_n += conf[x][c];
        }
        const long uni = gt_n + pred_n - inter;
        if (uni == 0) continue;
        o.per_class_iou[c] = static_cast<double>(inter) / static_cast<double>(uni);
        sum += o.per_class_iou[c];
        ++counted;
    }
    o.mean_iou = counted ? sum / counted : 0.0;
    return o;
}

}  // namespace

TEST(Accuracy, BasicCases) {
    EXPECT_DOUBLE_EQ(accuracy({1, 2, 3}, {1, 2, 3}), 1.0);
    EXPECT_NEAR(accuracy({0, 0, 1}, {0, 1, 1}), 2.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(accuracy({0, 0}, {1, 1}), 0.0);
    EXPECT_THROW(accuracy({0}, {0, 1}), DataError);
}

TEST(Iou, WorkedExample) {
    // pred [A,A,B] vs gt [A,B,B]
    IouResult r = iou({0, 0, 1}, {0, 1, 1}, 2);
    EXPECT_DOUBLE_EQ(r.per_class[0], 0.5);
    EXPECT_DOUBLE_EQ(r.per_class[1], 0.5);
    EXPECT_DOUBLE_EQ(r.mean, 0.5);
}

TEST(Iou, PerfectPrediction) {
    IouResult r = iou({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
    for (const auto& [c, v] : r.per_class) EXPECT_DOUBLE_EQ(v, 1.0);
    EXPECT_DOUBLE_EQ(r.mean, 1.0);
}

TEST(Iou, AbsentClassExcludedByDefault) {
    IouResult r = iou({0, 0}, {0, 0}, 2);
    EXPECT_EQ(r.per_class.count(1), 0u);
    EXPECT_DOUBLE_EQ(r.mean, 1.0);
}

TEST(Iou, AbsentClassCountsAsOneBehindFlag) {
    IouResult r = iou({0, 1}, {0, 0}, 3, true);
    EXPECT_DOUBLE_EQ(r.per_class[2], 1.0);
}

TEST(Iou, OutOfRangeRejected) {
    EXPECT_THROW(iou({0, 5}, {0, 1}, 2), DataError);
}

TEST(Iou, OneIffIdenticalSets) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> pred(30), gt(30);
        for (std::size_t i = 0; i < 30; ++i) {
            pred[i] = static_cast<int>(rng.index(3));
            gt[i] = static_cast<int>(rng.index(3));
        }
        IouResult r = iou(pred, gt, 3);
        for (const auto& [c, v] : r.per_class) {
            bool identical = true;
            for (std::size_t i = 0; i < 30; ++i)
                identical = identical && ((pred[i] == c) == (gt[i] == c));
            EXPECT_EQ(v == 1.0, identical);
        }
    }
}

// accuracy and IoU agree with the independent confusion-matrix oracle
TEST(Metrics, MatchBruteForceOracle) {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int classes = 2 + static_cast<int>(rng.index(5));
        const std::size_t n = 1 + rng.index(200);
        std::vector<int> pred(n), gt(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.index(classes));
            gt[i] = static_cast<int>(rng.index(classes));
        }
        Oracle o = brute_force_metrics(pred, gt, classes);
        EXPECT_EQ(accuracy(pred, gt), o.accuracy);
        IouResult r = iou(pred, gt, classes);
        EXPECT_EQ(r.per_class, o.per_class_iou);
        EXPECT_EQ(r.mean, o.mean_iou);
    }
}

TEST(Iou, RelabelingPermutationInvariance) {
    Rng rng(5);
    std::vector<int> pred(60), gt(60);
    for (std::size_t i = 0; i < 60; ++i) {
        pred[i] = static_cast<int>(rng.index(4));
        gt[i] = static_cast<int>(rng.index(4));
    }
    const double base = iou(pred, gt, 4).mean;
    const std::vector<int> perm{2, 0, 3, 1};
    std::vector<int> ppred(60), pgt(60);
    for (std::size_t i = 0; i < 60; ++i) {
        ppred[i] = perm[pred[i]];
        pgt[i] = perm[gt[i]];
    }
    EXPECT_DOUBLE_EQ(iou(ppred, pgt, 4).mean, base);
}

TEST(EvaluateModel, SelfConsistencyAndBookkeeping) {
    CategoryConfig cfg = default_category_config(Category::kLamp, 3);
    cfg.k_neighbors = 4;
    cfg.edge_conv_channels = {8, 8};
    cfg.global_channels = 16;
    cfg.head_channels = {16};
    ModelParams params = model_init(cfg, 7);
    auto scenes = synth_generate(Category::kLamp, 3, 48, 11);
    MetricsReport r = evaluate_model(params, scenes);
    // confusion row sums equal ground-truth class counts
    std::map<int, long> gt_counts;
    for (const auto& s : scenes)
        for (int l : s.labels) gt_counts[l] += 1;
    for (int c = 0; c < 3; ++c) {
        long row = 0;
        for (int x = 0; x < 3; ++x) row += r.confusion[c][x];
        EXPECT_EQ(row, gt_counts[c]);
    }
    EXPECT_NEAR(r.point_accuracy,
                static_cast<double>(r.confusion[0][0] + r.confusion[1][1] +
                                    r.confusion[2][2]) /
                    static_cast<double>(scenes.size() * 48),
                1e-15);

    // a model evaluated against its own predictions scores perfectly
    std::vector<Scene> self = scenes;
    Rng rng(0);
    for (auto& s : self) {
        Tensor logits = model_forward(s.points, params, Mode::kEval, rng);
        auto comp = component_aggregate(logits, s.component_ids, cfg.majority_vote);
        for (std::size_t i = 0; i < s.n_points(); ++i) s.labels[i] = comp[s.component_ids[i]];
    }
    MetricsReport perfect = evaluate_model(params, self);
    EXPECT_DOUBLE_EQ(perfect.point_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(perfect.component_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(perfect.mean_iou, 1.0);
}

TEST(EvaluateModel, CategoryMismatchGuard) {
    CategoryConfig cfg = default_category_config(Category::kChair, 4);
    cfg.k_neighbors = 4;
    cfg.edge_conv_channels = {8};
    cfg.global_channels = 8;
    cfg.head_channels = {8};
    ModelParams params = model_init(cfg, 1);
    auto scenes = synth_generate(Category::kBed, 1, 48, 1);
    EXPECT_THROW(evaluate_model(params, scenes), DataError);
    EXPECT_THROW(predict_scenes(params, scenes), DataError);
}

TEST(Submission, EmitParseRoundTrip) {
    const std::string path = temp_dir("convseg_sub") + "/a.csv";
    std::vector<SubmissionRecord> records{{"s2", 0, 1}, {"s1", 3, 2}, {"s1", 1, 0}};
    emit_submission(records, path);
    auto back = parse_submission(path);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[0].scene_id, "s1");
    EXPECT_EQ(back[0].component_id, 1);
    EXPECT_EQ(back[2].scene_id, "s2");
}

TEST(Submission, DuplicateKeyRejected) {
    const std::string path = temp_dir("convseg_sub") + "/dup.csv";
    std::vector<SubmissionRecord> records{{"s1", 0, 1}, {"s1", 0, 2}};
    try {
        emit_submission(records, path);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("s1"), std::string::npos);
    }
}

TEST(Submission, MergeOrderIndependentByteIdentical) {
    const std::string dir = temp_dir("convseg_merge");
    std::vector<std::string> files;
    for (int f = 0; f < 5; ++f) {
        const std::string path = dir + "/in" + std::to_string(f) + ".csv";
        emit_submission({{"scene" + std::to_string(f), 0, f},
                         {"scene" + std::to_string(f), 1, f}},
                        path);
        files.push_back(path);
    }
    const std::string out_a = dir + "/merged_a.csv", out_b = dir + "/merged_b.csv";
    merge_submissions(files, out_a);
    std::vector<std::string> reversed(files.rbegin(), files.rend());
    merge_submissions(reversed, out_b);
    EXPECT_EQ(slurp(out_a), slurp(out_b));
    EXPECT_EQ(parse_submission(out_a).size(), 10u);
}

TEST(Submission, MergeConflictAcrossFiles) {
    const std::string dir = temp_dir("convseg_merge2");
    emit_submission({{"s1", 0, 1}}, dir + "/a.csv");
    emit_submission({{"s1", 0, 2}}, dir + "/b.csv");
    EXPECT_THROW(merge_submissions({dir + "/a.csv", dir + "/b.csv"}, dir + "/out.csv"),
                 DataError);
}

TEST(Metrics, JsonReportShape) {
    MetricsReport r;
    r.point_accuracy = 0.5;
    r.component_accuracy = 0.75;
    r.per_class_iou = {{0, 1.0}, {1, 0.25}};
    r.mean_iou = 0.625;
    r.confusion = {{1, 1}, {0, 2}};
    nlohmann::json j = metrics_to_json(r);
    EXPECT_DOUBLE_EQ(j["mean_iou"].get<double>(), 0.625);
    EXPECT_DOUBLE_EQ(j["per_class_iou"]["1"].get<double>(), 0.25);
}
