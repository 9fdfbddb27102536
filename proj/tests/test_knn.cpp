#include <gtest/gtest.h>

#include <set>

#include "convseg/knn.hpp"
#include "convseg/rng.hpp"

using namespace convseg;

TEST(KnnBruteForce, HandDistances1D) {
    Tensor pts({3, 1}, {0, 1, 3});
    KnnGraph g = knn_brute_force(pts, 1);
    EXPECT_EQ(g.at(0, 0), 1u);
    EXPECT_EQ(g.at(1, 0), 0u);
    EXPECT_EQ(g.at(2, 0), 1u);
}

TEST(KnnBruteForce, CompleteGraphAtKMax) {
    Rng rng(4);
    Tensor pts = Tensor::gaussian({6, 3}, 0, 1, rng);
    KnnGraph g = knn_brute_force(pts, 5);
    for (std::size_t i = 0; i < 6; ++i) {
        std::set<std::uint32_t> row;
        for (std::size_t s = 0; s < 5; ++s) row.insert(g.at(i, s));
        EXPECT_EQ(row.size(), 5u);
        EXPECT_EQ(row.count(static_cast<std::uint32_t>(i)), 0u);
    }
}

TEST(KnnBruteForce, TieBrokenByIndex) {
    Tensor pts({3, 1}, {0, 1, -1});
    KnnGraph g = knn_brute_force(pts, 1);
    EXPECT_EQ(g.at(0, 0), 1u);  // points 1 and 2 both at distance 1
}

TEST(KnnBruteForce, KTooLargeRejected) {
    Tensor pts({3, 2});
    EXPECT_THROW(knn_brute_force(pts, 3), ShapeError);
    EXPECT_THROW(knn_brute_force(pts, 0), ShapeError);
}

TEST(KdTree, SinglePointBuilds) {
    Tensor pts({1, 3}, {1, 2, 3});
    KdTree tree(pts);  // no queries possible with N=1, building must succeed
    SUCCEED();
}

TEST(KdTree, AllDuplicatePointsReturnLowestIndices) {
    Tensor pts({5, 2});
    for (std::size_t i = 0; i < 5; ++i) {
        pts.at(i, 0) = 1.0;
        pts.at(i, 1) = 2.0;
    }
    KdTree tree(pts);
    auto nb = tree.query(3, 2);
    EXPECT_EQ(nb[0], 0u);
    EXPECT_EQ(nb[1], 1u);
}

// the acceptance oracle, in smaller form: kd-tree == brute force exactly
TEST(KdTree, MatchesBruteForceRandomized) {
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t d = std::vector<std::size_t>{1, 3, 16}[trial % 3];
        const std::size_t n = 2 + rng.index(120);
        const std::size_t k = std::min<std::size_t>(n - 1, 1 + rng.index(20));
        Tensor pts({n, d});
        // quantized coordinates to force duplicate points and distance ties
        for (double& v : pts.data) v = std::floor(rng.uniform(-3.0, 3.0) * 2.0) / 2.0;
        KnnGraph brute = knn_brute_force(pts, k);
        KnnGraph kd = KdTree(pts).query_all(k);
        ASSERT_EQ(kd.neighbors, brute.neighbors) << "trial " << trial;
    }
}

TEST(DynamicGraph, MatchesBruteForceInHighDim) {
    Rng rng(17);
    Tensor feats = Tensor::gaussian({120, 64}, 0, 1, rng);
    KnnGraph a = dynamic_graph(feats, 10);
    KnnGraph b = knn_brute_force(feats, 10);
    EXPECT_EQ(a.neighbors, b.neighbors);
}

TEST(DynamicGraph, ScaleAndTranslationInvariance) {
    Rng rng(23);
    Tensor pts = Tensor::gaussian({80, 3}, 0, 1, rng);
    KnnGraph base = dynamic_graph(pts, 7);
    Tensor scaled = pts;
    for (double& v : scaled.data) v = v * 2.0;
    EXPECT_EQ(dynamic_graph(scaled, 7).neighbors, base.neighbors);
    Tensor shifted = pts;
    for (std::size_t i = 0; i < 80; ++i)
        for (std::size_t j = 0; j < 3; ++j) shifted.at(i, j) += 5.0;
    EXPECT_EQ(dynamic_graph(shifted, 7).neighbors, base.neighbors);
}

TEST(DynamicGraph, RowsHaveDistinctEntriesNoSelfLoops) {
    Rng rng(31);
    Tensor pts = Tensor::gaussian({60, 3}, 0, 1, rng);
    KnnGraph g = dynamic_graph(pts, 12);
    for (std::size_t i = 0; i < 60; ++i) {
        std::set<std::uint32_t> row;
        for (std::size_t s = 0; s < 12; ++s) {
            EXPECT_NE(g.at(i, s), static_cast<std::uint32_t>(i));
            row.insert(g.at(i, s));
        }
        EXPECT_EQ(row.size(), 12u);
    }
}
