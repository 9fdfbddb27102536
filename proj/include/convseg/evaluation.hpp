#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "convseg/dataset.hpp"
#include "convseg/errors.hpp"
#include "convseg/model.hpp"

namespace convseg {

// ---------------------------------------------------------------------------
// metrics

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw DataError("accuracy: length mismatch " + std::to_string(pred.size()) + " vs " +
                        std::to_string(gt.size()));
    std::size_t matches = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) matches += pred[i] == gt[i];
    return static_cast<double>(matches) / static_cast<double>(pred.size());
}

struct IouResult {
    std::map<int, double> per_class;  // classes present in pred or gt
    double mean = 0.0;
};

// Per class: |pred==c && gt==c| / |pred==c || gt==c|, areas measured as point
// counts. Classes absent from both sides are excluded from the mean unless
// include_absent_as_one counts them as 1.
inline IouResult iou(const std::vector<int>& pred, const std::vector<int>& gt,
                     int num_classes, bool include_absent_as_one = false) {
    if (pred.size() != gt.size()) throw DataError("iou: length mismatch");
    std::vector<long> inter(num_classes, 0), pred_n(num_classes, 0), gt_n(num_classes, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= num_classes || gt[i] < 0 || gt[i] >= num_classes)
            throw DataError("iou: label out of range at index " + std::to_string(i));
        pred_n[pred[i]] += 1;
        gt_n[gt[i]] += 1;
        inter[pred[i]] += pred[i] == gt[i];
    }
    IouResult r;
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        const long uni = pred_n[c] + gt_n[c] - inter[c];
        if (uni == 0) {
            if (include_absent_as_one) {
                r.per_class[c] = 1.0;
                sum += 1.0;
                ++counted;
            }
            continue;
        }
        const double v = static_cast<double>(inter[c]) / static_cast<double>(uni);
        r.per_class[c] = v;
        sum += v;
        ++counted;
    }
    r.mean = counted ? sum / counted : 0.0;
    return r;
}

struct MetricsReport {
    double point_accuracy = 0.0;
    double component_accuracy = 0.0;
    std::map<int, double> per_class_iou;
    double mean_iou = 0.0;
    std::vector<std::vector<long>> confusion;  // P x P point-level counts, [gt][pred]
};

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [c, v] : r.per_class_iou) per_class[std::to_string(c)] = v;
    return {{"point_accuracy", r.point_accuracy},
            {"component_accuracy", r.component_accuracy},
            {"per_class_iou", per_class},
            {"mean_iou", r.mean_iou},
            {"confusion", r.confusion}};
}

// Eval-mode forward and per-component aggregation on labeled scenes. Point
// metrics broadcast each component's predicted label to its points.
inline MetricsReport evaluate_model(ModelParams& params, const std::vector<Scene>& scenes,
                                    bool include_absent_as_one = false) {
    if (scenes.empty()) throw DataError("evaluate_model: no scenes");
    const int p = params.config.num_parts;
    MetricsReport r;
    r.confusion.assign(p, std::vector<long>(p, 0));
    std::size_t comp_correct = 0, comp_total = 0;
    std::vector<int> point_pred, point_gt;
    Rng rng(0);  // unused in eval mode
    for (const Scene& s : scenes) {
        if (s.category != params.config.category)
            throw DataError("scene " + s.scene_id + " is " + category_name(s.category) +
                            " but checkpoint is for " +
                            category_name(params.config.category));
        if (!s.has_labels()) throw DataError("scene " + s.scene_id + " has no labels");
        Tensor logits = model_forward(s.points, params, Mode::kEval, rng);
        auto comp_labels =
            component_aggregate(logits, s.component_ids, params.config.majority_vote);
        std::map<int, int> comp_gt;
        for (std::size_t i = 0; i < s.n_points(); ++i)
            comp_gt[s.component_ids[i]] = s.labels[i];
        for (const auto& [comp, label] : comp_labels) {
            comp_correct += label == comp_gt[comp];
            ++comp_total;
        }
        for (std::size_t i = 0; i < s.n_points(); ++i) {
            const int pr = comp_labels[s.component_ids[i]];
            point_pred.push_back(pr);
            point_gt.push_back(s.labels[i]);
            r.confusion[s.labels[i]][pr] += 1;
        }
    }
    r.point_accuracy = accuracy(point_pred, point_gt);
    r.component_accuracy = static_cast<double>(comp_correct) / static_cast<double>(comp_total);
    IouResult ir = iou(point_pred, point_gt, p, include_absent_as_one);
    r.per_class_iou = std::move(ir.per_class);
    r.mean_iou = ir.mean;
    return r;
}

// ---------------------------------------------------------------------------
// submission files

struct SubmissionRecord {
    std::string scene_id;
    int component_id = 0;
    int predicted_label = 0;

    bool operator<(const SubmissionRecord& o) const {
        return scene_id != o.scene_id ? scene_id < o.scene_id
                                      : component_id < o.component_id;
    }
};

inline std::vector<SubmissionRecord> predict_scenes(ModelParams& params,
                                                    const std::vector<Scene>& scenes) {
    std::vector<SubmissionRecord> out;
    Rng rng(0);
    for (const Scene& s : scenes) {
        if (s.category != params.config.category)
            throw DataError("scene " + s.scene_id + " is " + category_name(s.category) +
                            " but checkpoint is for " +
                            category_name(params.config.category));
        Tensor logits = model_forward(s.points, params, Mode::kEval, rng);
        for (const auto& [comp, label] :
             component_aggregate(logits, s.component_ids, params.config.majority_vote))
            out.push_back({s.scene_id, comp, label});
    }
    return out;
}

namespace detail {
inline void check_unique(std::vector<SubmissionRecord>& records) {
    std::sort(records.begin(), records.end());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].scene_id == records[i - 1].scene_id &&
            records[i].component_id == records[i - 1].component_id)
            throw DataError("duplicate submission key (" + records[i].scene_id + ", " +
                            std::to_string(records[i].component_id) + ")");
    }
}
}  // namespace detail

// CSV `scene_id,component_id,label`, rows sorted by (scene_id, component_id).
inline void emit_submission(std::vector<SubmissionRecord> records, const std::string& path) {
    detail::check_unique(records);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write submission: " + path);
    out << "scene_id,component_id,label\n";
    for (const auto& r : records)
        out << r.scene_id << ',' << r.component_id << ',' << r.predicted_label << '\n';
}

inline std::vector<SubmissionRecord> parse_submission(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open submission: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "scene_id,component_id,label")
        throw DataError("bad submission header in " + path);
    std::vector<SubmissionRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        SubmissionRecord r;
        std::string comp, label;
        if (!std::getline(ss, r.scene_id, ',') || !std::getline(ss, comp, ',') ||
            !std::getline(ss, label))
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
        try {
            r.component_id = std::stoi(comp);
            r.predicted_label = std::stoi(label);
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
        }
        records.push_back(std::move(r));
    }
    return records;
}

// Concatenate per-category submissions and re-sort; duplicate keys across
// files are conflicts. Output is byte-identical under any input ordering.
inline void merge_submissions(const std::vector<std::string>& inputs,
                              const std::string& out_path) {
    std::vector<SubmissionRecord> all;
    for (const auto& path : inputs) {
        auto recs = parse_submission(path);
        all.insert(all.end(), recs.begin(), recs.end());
    }
    emit_submission(std::move(all), out_path);
}

}  // namespace convseg
