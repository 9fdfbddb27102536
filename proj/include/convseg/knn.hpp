#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "convseg/errors.hpp"
#include "convseg/tensor.hpp"

namespace convseg {

// Per-point neighbor index lists, N x k. No self-loops, indices distinct
// within a row, ties broken by ascending point index.
struct KnnGraph {
    std::size_t n_points = 0;
    std::size_t k = 0;
    std::vector<std::uint32_t> neighbors;  // flat N x k

    std::uint32_t at(std::size_t i, std::size_t s) const { return neighbors[i * k + s]; }
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

// Candidate ordering: nearer first, ties by lower index.
struct Cand {
    double dist;
    std::uint32_t idx;
    bool operator<(const Cand& o) const {
        return dist != o.dist ? dist < o.dist : idx < o.idx;
    }
};

}  // namespace detail

inline void validate_knn_args(const Tensor& points, std::size_t k) {
    if (points.shape.size() != 2)
        throw ShapeError("knn expects N x D points, got " + points.shape_str());
    const std::size_t n = points.shape[0];
    if (k < 1 || k >= n)
        throw ShapeError("knn requires 1 <= k <= N-1, got k=" + std::to_string(k) +
                         " with N=" + std::to_string(n));
}

// Exact k nearest neighbors by squared Euclidean distance.
inline KnnGraph knn_brute_force(const Tensor& points, std::size_t k) {
    validate_knn_args(points, k);
    const std::size_t n = points.shape[0], d = points.shape[1];
    KnnGraph g{n, k, std::vector<std::uint32_t>(n * k)};
    std::vector<detail::Cand> cands(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double* pi = points.data.data() + i * d;
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            cands[m++] = {detail::sq_dist(pi, points.data.data() + j * d, d),
                          static_cast<std::uint32_t>(j)};
        }
        std::partial_sort(cands.begin(), cands.begin() + k, cands.end());
        for (std::size_t s = 0; s < k; ++s) g.neighbors[i * k + s] = cands[s].idx;
    }
    return g;
}

// Balanced kd-tree, split axis cycling by depth, lower-median split.
// Queries reproduce knn_brute_force exactly, including duplicate-point ties.
class KdTree {
public:
    explicit KdTree(const Tensor& points) : points_(&points) {
        if (points.shape.size() != 2 || points.shape[0] == 0 || points.shape[1] == 0)
            throw ShapeError("kd_tree expects non-empty N x D points, got " +
                             points.shape_str());
        n_ = points.shape[0];
        d_ = points.shape[1];
        nodes_.reserve(n_);
        std::vector<std::uint32_t> order(n_);
        std::iota(order.begin(), order.end(), 0);
        root_ = build(order.begin(), order.end(), 0);
    }

    // k nearest to points[query], excluding query itself. Ties by index.
    std::vector<std::uint32_t> query(std::size_t query_idx, std::size_t k) const {
        if (k < 1 || k >= n_)
            throw ShapeError("kd query requires 1 <= k <= N-1");
        // heap keeps the current k best, worst on top
        std::vector<detail::Cand> heap;
        heap.reserve(k + 1);
        const double* q = points_->data.data() + query_idx * d_;
        search(root_, q, static_cast<std::uint32_t>(query_idx), k, heap);
        std::sort_heap(heap.begin(), heap.end(), worse_first);
        std::vector<std::uint32_t> out(k);
        for (std::size_t s = 0; s < k; ++s) out[s] = heap[s].idx;
        return out;
    }

    KnnGraph query_all(std::size_t k) const {
        KnnGraph g{n_, k, std::vector<std::uint32_t>(n_ * k)};
        for (std::size_t i = 0; i < n_; ++i) {
            auto nb = query(i, k);
            std::copy(nb.begin(), nb.end(), g.neighbors.begin() + i * k);
        }
        return g;
    }

private:
    struct Node {
        std::uint32_t point;
        std::int32_t left = -1, right = -1;
    };

    static bool worse_first(const detail::Cand& a, const detail::Cand& b) { return a < b; }

    using Iter = std::vector<std::uint32_t>::iterator;

    std::int32_t build(Iter begin, Iter end, std::size_t depth) {
        if (begin == end) return -1;
        const std::size_t axis = depth % d_;
        const std::size_t count = static_cast<std::size_t>(end - begin);
        Iter mid = begin + (count - 1) / 2;  // lower median
        std::nth_element(begin, mid, end, [&](std::uint32_t a, std::uint32_t b) {
            const double ca = points_->at(a, axis), cb = points_->at(b, axis);
            return ca != cb ? ca < cb : a < b;
        });
        const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back({*mid, -1, -1});
        const std::int32_t left = build(begin, mid, depth + 1);
        const std::int32_t right = build(mid + 1, end, depth + 1);
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    static void heap_push(std::vector<detail::Cand>& heap, std::size_t k, detail::Cand c) {
        if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end(), worse_first);
        } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end(), worse_first);
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end(), worse_first);
        }
    }

    void search(std::int32_t node_id, const double* q, std::uint32_t skip, std::size_t k,
                std::vector<detail::Cand>& heap) const {
        std::size_t depth = depth_of(node_id);
        search_rec(node_id, q, skip, k, heap, depth);
    }

    std::size_t depth_of(std::int32_t) const { return 0; }  // root only

    void search_rec(std::int32_t node_id, const double* q, std::uint32_t skip,
                    std::size_t k, std::vector<detail::Cand>& heap, std::size_t depth) const {
        if (node_id < 0) return;
        const Node& node = nodes_[node_id];
        const std::size_t axis = depth % d_;
        const double* p = points_->data.data() + node.point * d_;
        if (node.point != skip)
            heap_push(heap, k, {detail::sq_dist(q, p, d_), node.point});
        const double delta = q[axis] - p[axis];
        const std::int32_t near = delta < 0.0 ? node.left : node.right;
        const std::int32_t far = delta < 0.0 ? node.right : node.left;
        search_rec(near, q, skip, k, heap, depth + 1);
        // equal axis distance can still hide an equal-distance lower index,
        // so prune only on strict inequality
        if (heap.size() < k || delta * delta <= heap.front().dist)
            search_rec(far, q, skip, k, heap, depth + 1);
    }

    const Tensor* points_;
    std::size_t n_ = 0, d_ = 0;
    std::int32_t root_ = -1;
    std::vector<Node> nodes_;
};

// Neighbor graph in the current feature space. kd-tree below the dimension
// cutoff where it still wins, brute force above it.
inline KnnGraph dynamic_graph(const Tensor& features, std::size_t k) {
    validate_knn_args(features, k);
    if (features.shape[1] <= 16) return KdTree(features).query_all(k);
    return knn_brute_force(features, k);
}

}  // namespace convseg
