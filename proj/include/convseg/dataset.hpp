#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "convseg/errors.hpp"
#include "convseg/rng.hpp"
#include "convseg/tensor.hpp"

namespace convseg {

enum class Category { kChair, kBed, kLamp, kStorageFurniture, kTable };

inline constexpr std::array<Category, 5> kAllCategories = {
    Category::kChair, Category::kBed, Category::kLamp, Category::kStorageFurniture,
    Category::kTable};

inline std::string category_name(Category c) {
    switch (c) {
        case Category::kChair: return "chair";
        case Category::kBed: return "bed";
        case Category::kLamp: return "lamp";
        case Category::kStorageFurniture: return "storage_furniture";
        case Category::kTable: return "table";
    }
    throw ParamError("bad category enum");
}

inline Category category_from_name(const std::string& name) {
    for (Category c : kAllCategories)
        if (category_name(c) == name) return c;
    throw DataError("unknown category: " + name);
}

// One 3D object instance: points, per-point component ids, optional labels.
struct Scene {
    std::string scene_id;
    Category category = Category::kChair;
    Tensor points;                    // N x 3
    std::vector<int> component_ids;   // N
    std::vector<int> labels;          // N or empty; constant per component

    std::size_t n_points() const { return points.shape.empty() ? 0 : points.shape[0]; }
    bool has_labels() const { return !labels.empty(); }
};

struct DatasetSplit {
    std::string name;  // train | test | dev
    std::vector<Scene> scenes;
};

struct CategoryInfo {
    std::string category;
    int num_parts = 0;
    std::vector<std::string> part_names;
};

// ---------------------------------------------------------------------------
// validation

inline void validate_scene(const Scene& s, const std::string& context) {
    const std::size_t n = s.n_points();
    if (s.points.shape.size() != 2 || s.points.shape[1] != 3)
        throw DataError(context + ": points must be N x 3");
    if (s.component_ids.size() != n)
        throw DataError(context + ": components length " +
                        std::to_string(s.component_ids.size()) + " != point count " +
                        std::to_string(n));
    if (s.has_labels()) {
        if (s.labels.size() != n)
            throw DataError(context + ": labels length " + std::to_string(s.labels.size()) +
                            " != point count " + std::to_string(n));
        std::map<int, int> comp_label;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, inserted] = comp_label.emplace(s.component_ids[i], s.labels[i]);
            if (!inserted && it->second != s.labels[i])
                throw DataError(context + ": label varies within component " +
                                std::to_string(s.component_ids[i]) + " of scene " +
                                s.scene_id);
        }
    }
    if (!s.points.all_finite()) throw DataError(context + ": non-finite coordinate");
}

// ---------------------------------------------------------------------------
// JSONL scene files

inline nlohmann::json scene_to_json(const Scene& s) {
    nlohmann::json j;
    j["scene_id"] = s.scene_id;
    j["category"] = category_name(s.category);
    auto pts = nlohmann::json::array();
    for (std::size_t i = 0; i < s.n_points(); ++i)
        pts.push_back({s.points.at(i, 0), s.points.at(i, 1), s.points.at(i, 2)});
    j["points"] = std::move(pts);
    j["components"] = s.component_ids;
    if (s.has_labels()) j["labels"] = s.labels;
    return j;
}

inline Scene scene_from_json(const nlohmann::json& j, const std::string& context) {
    Scene s;
    try {
        s.scene_id = j.at("scene_id").get<std::string>();
        s.category = category_from_name(j.at("category").get<std::string>());
        const auto& pts = j.at("points");
        s.points = Tensor({pts.size(), 3});
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (pts[i].size() != 3) throw DataError(context + ": point is not 3-D");
            for (std::size_t d = 0; d < 3; ++d)
                s.points.at(i, d) = pts[i][d].get<double>();
        }
        s.component_ids = j.at("components").get<std::vector<int>>();
        if (j.contains("labels")) s.labels = j["labels"].get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(context + ": " + e.what());
    }
    validate_scene(s, context);
    return s;
}

inline std::vector<Scene> load_scenes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scene file: " + path);
    std::vector<Scene> scenes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string context = path + ":" + std::to_string(line_no);
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError(context + ": malformed JSON line");
        scenes.push_back(scene_from_json(j, context));
    }
    return scenes;
}

inline void emit_scenes(const std::vector<Scene>& scenes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write scene file: " + path);
    for (const Scene& s : scenes) out << scene_to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// categories.json

inline void emit_categories(const std::vector<CategoryInfo>& infos, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& ci : infos)
        arr.push_back({{"category", ci.category},
                       {"num_parts", ci.num_parts},
                       {"part_names", ci.part_names}});
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << arr.dump(2) << '\n';
}

inline std::vector<CategoryInfo> load_categories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    nlohmann::json arr = nlohmann::json::parse(in, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) throw DataError("malformed " + path);
    std::vector<CategoryInfo> infos;
    for (const auto& j : arr) {
        CategoryInfo ci;
        ci.category = j.at("category").get<std::string>();
        ci.num_parts = j.at("num_parts").get<int>();
        ci.part_names = j.at("part_names").get<std::vector<std::string>>();
        infos.push_back(std::move(ci));
    }
    return infos;
}

inline int num_parts_for(const std::vector<CategoryInfo>& infos, Category c) {
    for (const auto& ci : infos)
        if (ci.category == category_name(c)) return ci.num_parts;
    throw DataError("category " + category_name(c) + " missing from categories.json");
}

// ---------------------------------------------------------------------------
// resampling and batching

// Fixed-size stratified resample: every component keeps at least one point.
// Remaining quota is drawn without replacement when the scene is large
// enough, with replacement otherwise.
inline Scene resample_scene(const Scene& scene, std::size_t n_points, Rng& rng) {
    const std::size_t n = scene.n_points();
    std::map<int, std::vector<std::size_t>> by_comp;
    for (std::size_t i = 0; i < n; ++i) by_comp[scene.component_ids[i]].push_back(i);
    if (n_points < by_comp.size())
        throw DataError("resample capacity: " + std::to_string(n_points) +
                        " points for " + std::to_string(by_comp.size()) +
                        " components in scene " + scene.scene_id);

    std::vector<std::size_t> chosen;
    chosen.reserve(n_points);
    std::vector<bool> taken(n, false);
    for (auto& [comp, idxs] : by_comp) {
        const std::size_t pick = idxs[rng.index(idxs.size())];
        chosen.push_back(pick);
        taken[pick] = true;
    }
    const std::size_t quota = n_points - chosen.size();
    if (n >= n_points) {
        std::vector<std::size_t> rest;
        rest.reserve(n - chosen.size());
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i]) rest.push_back(i);
        std::shuffle(rest.begin(), rest.end(), rng.engine());
        chosen.insert(chosen.end(), rest.begin(), rest.begin() + quota);
    } else {
        for (std::size_t q = 0; q < quota; ++q) chosen.push_back(rng.index(n));
    }

    Scene out;
    out.scene_id = scene.scene_id;
    out.category = scene.category;
    out.points = Tensor({n_points, 3});
    out.component_ids.resize(n_points);
    if (scene.has_labels()) out.labels.resize(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        const std::size_t src = chosen[i];
        for (std::size_t d = 0; d < 3; ++d) out.points.at(i, d) = scene.points.at(src, d);
        out.component_ids[i] = scene.component_ids[src];
        if (scene.has_labels()) out.labels[i] = scene.labels[src];
    }
    return out;
}

// Shuffled epoch order chunked into batches of scene indices; the last batch
// may be smaller.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n_scenes,
                                                          std::size_t scenes_per_batch,
                                                          Rng& rng) {
    if (scenes_per_batch < 1) throw ParamError("scenes_per_batch must be >= 1");
    std::vector<std::size_t> order(n_scenes);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n_scenes; i += scenes_per_batch) {
        const std::size_t end = std::min(i + scenes_per_batch, n_scenes);
        batches.emplace_back(order.begin() + i, order.begin() + end);
    }
    return batches;
}

// ---------------------------------------------------------------------------
// synthetic scenes

namespace synth {

struct Primitive {
    bool ellipsoid = false;
    std::array<double, 3> center;
    std::array<double, 3> half;  // half extents / semi-axes
};

// One labeled part: one connected component made of one or more primitives.
struct PartSpec {
    std::string name;
    std::vector<Primitive> prims;
};

inline std::vector<PartSpec> part_layout(Category c) {
    using P = Primitive;
    switch (c) {
        case Category::kChair:
            return {{"legs", {P{false, {0.35, 0.35, 0.25}, {0.05, 0.05, 0.25}},
                              P{false, {-0.35, 0.35, 0.25}, {0.05, 0.05, 0.25}},
                              P{false, {0.35, -0.35, 0.25}, {0.05, 0.05, 0.25}},
                              P{false, {-0.35, -0.35, 0.25}, {0.05, 0.05, 0.25}}}},
                    {"seat", {P{false, {0.0, 0.0, 0.57}, {0.45, 0.45, 0.05}}}},
                    {"back", {P{false, {0.0, -0.42, 1.0}, {0.45, 0.04, 0.35}}}},
                    {"arms", {P{false, {0.48, 0.0, 0.78}, {0.04, 0.4, 0.04}},
                              P{false, {-0.48, 0.0, 0.78}, {0.04, 0.4, 0.04}}}}};
        case Category::kBed:
            return {{"base", {P{false, {0.0, 0.0, 0.15}, {0.9, 0.6, 0.15}}}},
                    {"mattress", {P{false, {0.0, 0.0, 0.55}, {0.85, 0.55, 0.1}}}},
                    {"headboard", {P{false, {0.0, -0.62, 0.85}, {0.85, 0.04, 0.35}}}}};
        case Category::kLamp:
            return {{"base", {P{false, {0.0, 0.0, 0.05}, {0.3, 0.3, 0.05}}}},
                    {"pole", {P{false, {0.0, 0.0, 0.6}, {0.04, 0.04, 0.45}}}},
                    {"shade", {P{true, {0.0, 0.0, 1.25}, {0.35, 0.35, 0.15}}}}};
        case Category::kStorageFurniture:
            return {{"body", {P{false, {0.0, 0.0, 0.6}, {0.5, 0.3, 0.45}}}},
                    {"doors", {P{false, {0.0, 0.38, 0.6}, {0.45, 0.03, 0.4}}}},
                    {"legs", {P{false, {0.4, 0.25, 0.05}, {0.04, 0.04, 0.05}},
                              P{false, {-0.4, 0.25, 0.05}, {0.04, 0.04, 0.05}},
                              P{false, {0.4, -0.25, 0.05}, {0.04, 0.04, 0.05}},
                              P{false, {-0.4, -0.25, 0.05}, {0.04, 0.04, 0.05}}}},
                    {"top", {P{false, {0.0, 0.0, 1.12}, {0.55, 0.35, 0.04}}}}};
        case Category::kTable:
            return {{"top", {P{false, {0.0, 0.0, 0.72}, {0.7, 0.5, 0.04}}}},
                    {"legs", {P{false, {0.6, 0.4, 0.32}, {0.05, 0.05, 0.32}},
                              P{false, {-0.6, 0.4, 0.32}, {0.05, 0.05, 0.32}},
                              P{false, {0.6, -0.4, 0.32}, {0.05, 0.05, 0.32}},
                              P{false, {-0.6, -0.4, 0.32}, {0.05, 0.05, 0.32}}}},
                    {"apron", {P{false, {0.0, 0.0, 0.6}, {0.5, 0.3, 0.03}}}}};
    }
    throw ParamError("bad category enum");
}

inline std::array<double, 3> sample_point(const Primitive& p, Rng& rng) {
    std::array<double, 3> out;
    if (p.ellipsoid) {
        // rejection sampling inside the unit ball
        double u[3];
        do {
            for (double& v : u) v = rng.uniform(-1.0, 1.0);
        } while (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] > 1.0);
        for (std::size_t d = 0; d < 3; ++d) out[d] = p.center[d] + u[d] * p.half[d];
    } else {
        for (std::size_t d = 0; d < 3; ++d)
            out[d] = p.center[d] + rng.uniform(-p.half[d], p.half[d]);
    }
    return out;
}

}  // namespace synth

inline int synth_num_parts(Category c) {
    return static_cast<int>(synth::part_layout(c).size());
}

inline CategoryInfo synth_category_info(Category c) {
    CategoryInfo ci;
    ci.category = category_name(c);
    auto layout = synth::part_layout(c);
    ci.num_parts = static_cast<int>(layout.size());
    for (const auto& part : layout) ci.part_names.push_back(part.name);
    return ci;
}

// Desk-scale synthetic stand-in dataset: each scene is a handful of
// box/ellipsoid parts, one component per part, with per-scene random scale
// and offset so labels follow shape rather than memorized coordinates.
inline std::vector<Scene> synth_generate(Category category, std::size_t n_scenes,
                                         std::size_t points_per_scene, std::uint64_t seed) {
    const auto layout = synth::part_layout(category);
    const std::size_t parts = layout.size();
    if (points_per_scene < 4 * parts)
        throw DataError("synth_generate needs at least " + std::to_string(4 * parts) +
                        " points per scene for " + category_name(category));
    Rng rng(seed);
    std::vector<Scene> scenes;
    scenes.reserve(n_scenes);
    for (std::size_t si = 0; si < n_scenes; ++si) {
        Scene s;
        s.scene_id = category_name(category) + "_" + std::to_string(seed) + "_" +
                     std::to_string(si);
        s.category = category;
        s.points = Tensor({points_per_scene, 3});
        s.component_ids.resize(points_per_scene);
        s.labels.resize(points_per_scene);

        // per-scene geometry variation
        std::array<double, 3> scale, offset;
        for (std::size_t d = 0; d < 3; ++d) {
            scale[d] = rng.uniform(0.85, 1.15);
            offset[d] = rng.uniform(-0.1, 0.1);
        }

        // points divided as evenly as possible across parts
        const std::size_t base = points_per_scene / parts;
        const std::size_t extra = points_per_scene % parts;
        std::size_t row = 0;
        for (std::size_t part = 0; part < parts; ++part) {
            const std::size_t count = base + (part < extra ? 1 : 0);
            const auto& prims = layout[part].prims;
            for (std::size_t p = 0; p < count; ++p) {
                const auto& prim = prims[p % prims.size()];
                auto pt = synth::sample_point(prim, rng);
                for (std::size_t d = 0; d < 3; ++d) {
                    s.points.at(row, d) =
                        pt[d] * scale[d] + offset[d] + rng.gaussian(0.0, 0.01);
                }
                s.component_ids[row] = static_cast<int>(part);
                s.labels[row] = static_cast<int>(part);
                ++row;
            }
        }
        validate_scene(s, "synth:" + s.scene_id);
        scenes.push_back(std::move(s));
    }
    return scenes;
}

}  // namespace convseg
