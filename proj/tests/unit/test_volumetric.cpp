#include <gtest/gtest.h>

#include <random>

#include "ordinal/io.hpp"
#include "ordinal/volumetric.hpp"
#include "support/oracles.hpp"

using namespace ordinal;
using oracle::LD;

namespace {

VolumeScores<double> random_scores(std::mt19937_64& rng, GridShape s, int n, double sigma = 2.0) {
    std::normal_distribution<double> d(0, sigma);
    VolumeScores<double> v{s, Mat<double>(s.voxels(), n), uniform_axis(-1.0, 1.0, s.depth)};
    for (Eigen::Index k = 0; k < v.grid.size(); ++k)
        v.grid.data()[k] = d(rng);
    return v;
}

} // namespace

TEST(Softmax, UniformScores) {
    GridShape s{4, 4, 4};
    VolumeScores<double> v{s, Mat<double>::Constant(64, 2, 3.0), uniform_axis(0.0, 1.0, 4)};
    const auto p = volume_softmax(v);
    EXPECT_LT((p.p.array() - 1.0 / 64).abs().maxCoeff(), 1e-15);
    const Mat<double> m2 = marginal_2d(p);
    EXPECT_LT((m2.array() - 1.0 / 16).abs().maxCoeff(), 1e-15);
    const Mat<double> md = marginal_depth(p);
    EXPECT_LT((md.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Softmax, Saturation) {
    GridShape s{3, 3, 3};
    VolumeScores<double> v{s, Mat<double>::Zero(27, 1), uniform_axis(0.0, 1.0, 3)};
    v.grid(13, 0) = 1e3;
    const auto p = volume_softmax(v);
    EXPECT_GE(p.p(13, 0), 1.0 - 1e-9);
}

TEST(Softmax, MatchesExtendedPrecision) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const auto v = random_scores(rng, {3, 3, 3}, 2);
        const auto p = volume_softmax(v);
        for (int n = 0; n < 2; ++n) {
            LD total = 0;
            for (int k = 0; k < 27; ++k)
                total += std::exp(LD(v.grid(k, n)));
            for (int k = 0; k < 27; ++k)
                EXPECT_NEAR(p.p(k, n), double(std::exp(LD(v.grid(k, n))) / total), 1e-12);
        }
    }
}

TEST(Softmax, ShiftInvariance) {
    std::mt19937_64 rng(2);
    auto v = random_scores(rng, {4, 3, 5}, 3);
    const auto a = volume_softmax(v);
    v.grid.array() += 17.25;
    const auto b = volume_softmax(v);
    EXPECT_LT((a.p - b.p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Softmax, RejectsBadScores) {
    GridShape s{2, 2, 2};
    VolumeScores<double> v{s, Mat<double>::Zero(8, 1), uniform_axis(0.0, 1.0, 2)};
    v.grid(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(volume_softmax(v), InvalidInput);
    v.grid(0, 0) = 0;
    v.axis_coords << 1.0, 0.0;
    EXPECT_THROW(volume_softmax(v), InvalidInput);
    v.axis_coords = Vec<double>::Zero(3);
    EXPECT_THROW(volume_softmax(v), DimensionError);
}

TEST(Marginals, OneHot) {
    GridShape s{3, 4, 5};
    ProbVolume<double> p{s, Mat<double>::Zero(s.voxels(), 1)};
    p.p(s.index(2, 1, 3), 0) = 1.0;
    const Mat<double> m2 = marginal_2d(p);
    const Mat<double> md = marginal_depth(p);
    EXPECT_EQ(m2(2 + 3 * 1, 0), 1.0);
    EXPECT_EQ(m2.sum(), 1.0);
    EXPECT_EQ(md(3, 0), 1.0);
    EXPECT_EQ(md.sum(), 1.0);
}

TEST(Marginals, MatchTripleLoopsUpTo8) {
    std::mt19937_64 rng(3);
    for (int w = 1; w <= 8; ++w)
        for (int h = 1; h <= 8; h += 3)
            for (int d = 1; d <= 8; d += 2) {
                const auto v = random_scores(rng, {w, h, d}, 2);
                const auto p = volume_softmax(v);
                const Mat<double> m2 = marginal_2d(p);
                const Mat<double> md = marginal_depth(p);
                for (int n = 0; n < 2; ++n) {
                    const auto ref2 = oracle::loop_marginal_2d(p.p.col(n).data(), w, h, d);
                    const auto refd = oracle::loop_marginal_depth(p.p.col(n).data(), w, h, d);
                    for (int k = 0; k < w * h; ++k)
                        ASSERT_NEAR(m2(k, n), ref2[k], 1e-12);
                    for (int k = 0; k < d; ++k)
                        ASSERT_NEAR(md(k, n), refd[k], 1e-12);
                    EXPECT_NEAR(m2.col(n).sum(), 1.0, 1e-9);
                    EXPECT_NEAR(md.col(n).sum(), 1.0, 1e-9);
                }
            }
}

TEST(SoftDepth, Examples) {
    Vec<double> axis = uniform_axis(0.0, 5.0, 5);
    Vec<double> p(5);
    p << 0.1, 0.2, 0.4, 0.2, 0.1;
    EXPECT_NEAR(soft_depth(p, axis), axis(2), 1e-12);
    p << 0, 0, 0, 1, 0;
    EXPECT_EQ(soft_depth(p, axis), axis(3));
    p << 0.5, 0.5, 0.5, 0, 0;
    EXPECT_THROW(soft_depth(p, axis), ContractViolation);
    p << 1.5, -0.5, 0, 0, 0;
    EXPECT_THROW(soft_depth(p, axis), ContractViolation);
    EXPECT_THROW(soft_depth(Vec<double>(Vec<double>::Ones(3) / 3), axis), DimensionError);
}

TEST(SoftDepth, MatchesLoop) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 100; ++t) {
        const int d = 1 + int(rng() % 16);
        Vec<double> p(d), axis = uniform_axis(-3.0, 7.0, d);
        for (int k = 0; k < d; ++k)
            p(k) = u(rng);
        p /= p.sum();
        LD e = 0;
        for (int k = 0; k < d; ++k)
            e += LD(p(k)) * LD(axis(k));
        EXPECT_NEAR(soft_depth(p, axis), double(e), 1e-12);
    }
}

TEST(HeatmapTargets, PeakAtCenter) {
    Pose2D c(2, 2);
    c << 3, 4, 0.2, 6.7;
    const auto t = make_heatmap_targets(c, GridShape{8, 8, 4}, 1.0);
    Eigen::Index idx;
    t.map.col(0).maxCoeff(&idx);
    EXPECT_EQ(idx, 3 + 8 * 4);
    EXPECT_DOUBLE_EQ(t.map.col(0).maxCoeff(), 1.0);
    t.map.col(1).maxCoeff(&idx);
    EXPECT_EQ(idx, 0 + 8 * 7);
    EXPECT_TRUE((t.map.array() >= 0).all());
    EXPECT_THROW(make_heatmap_targets(c, GridShape{8, 8, 4}, 0.0), InvalidInput);
}

TEST(HeatmapLoss, Examples) {
    GridShape s{2, 2, 1};
    HeatmapTarget<double> zero{s, Mat<double>::Zero(4, 1), 1.0};
    Mat<double> pred = Mat<double>::Constant(4, 1, 0.25);
    EXPECT_NEAR(heatmap_loss(pred, zero).loss, 0.25, 1e-15);
    HeatmapTarget<double> same{s, pred, 1.0};
    EXPECT_EQ(heatmap_loss(pred, same).loss, 0.0);
    EXPECT_THROW(heatmap_loss(Mat<double>(Mat<double>::Zero(3, 1)), zero), DimensionError);
}

TEST(VolumetricWeakLoss, ZeroWhenPerfect) {
    GridShape s{3, 3, 3};
    VolumeScores<double> v{s, Mat<double>::Zero(27, 2), uniform_axis(0.0, 1.0, 3)};
    const auto p = volume_softmax(v);
    HeatmapTarget<double> t{s, marginal_2d(p), 1.0};
    EXPECT_NEAR(volumetric_weak_loss(v, RelationSet{}, t).loss, 0.0, 1e-24);
}

TEST(VolumetricWeakLoss, LambdaZeroIsRankingOnSoftDepths) {
    std::mt19937_64 rng(5);
    const auto v = random_scores(rng, {3, 4, 5}, 3);
    RelationSet set;
    set.relations = {{0, 1, 1}, {1, 2, 0}, {0, 2, -1}};
    Pose2D c = Pose2D::Ones(3, 2);
    const auto t = make_heatmap_targets(c, v.shape);
    const auto z = soft_depths(marginal_depth(volume_softmax(v)), v.axis_coords);
    EXPECT_NEAR(volumetric_weak_loss(v, set, t, 0.0).loss, rank_loss(z, set).loss, 1e-14);
}

namespace {

template <typename F>
void fd_check_scores(const VolumeScores<double>& v, const Mat<double>& analytic, F&& loss,
                     double tol) {
    const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(analytic.data(), analytic.size());
    const auto g = oracle::numeric_gradient(
        [&](const oracle::VecL& x) {
            VolumeScores<LD> s{v.shape, Eigen::Map<const Mat<LD>>(x.data(), v.grid.rows(), v.grid.cols()),
                               v.axis_coords.cast<LD>()};
            return loss(s);
        },
        Eigen::Map<const Eigen::VectorXd>(v.grid.data(), v.grid.size()).cast<LD>());
    EXPECT_LE(oracle::relative_error(a, g), tol);
}

} // namespace

TEST(VolumetricGradients, FiniteDifferences) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 25; ++t) {
        GridShape s{2 + int(rng() % 3), 2 + int(rng() % 3), 2 + int(rng() % 4)};
        const int n = 2 + int(rng() % 3);
        const auto v = random_scores(rng, s, n, 1.0);
        Pose2D c(n, 2);
        for (int k = 0; k < n; ++k)
            c.row(k) << double(rng() % s.width), double(rng() % s.height);
        const auto targets = make_heatmap_targets(c, s, 1.0);
        const HeatmapTarget<LD> targets_ld{s, targets.map.cast<LD>(), 1.0L};
        RelationSet set;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                set.relations.push_back({i, j, int(rng() % 3) - 1});
        Vec<double> depth_target(n);
        for (int k = 0; k < n; ++k)
            depth_target(k) = 0.1 * double(k) - 0.2;

        fd_check_scores(v, heatmap_loss(v, targets).grad,
                        [&](const VolumeScores<LD>& s2) { return heatmap_loss(s2, targets_ld).loss; },
                        1e-6);
        fd_check_scores(v, volumetric_weak_loss(v, set, targets, 3.0).grad,
                        [&](const VolumeScores<LD>& s2) {
                            return volumetric_weak_loss(s2, set, targets_ld, LD(3)).loss;
                        },
                        1e-5);
        fd_check_scores(v, volumetric_full_loss(v, depth_target, targets, 3.0).grad,
                        [&](const VolumeScores<LD>& s2) {
                            return volumetric_full_loss(s2, Vec<LD>(depth_target.cast<LD>()),
                                                        targets_ld, LD(3))
                                .loss;
                        },
                        1e-5);
    }
}

TEST(VolumeDump, RoundTrip) {
    std::mt19937_64 rng(7);
    const auto v = random_scores(rng, {3, 2, 4}, 2);
    const auto path = std::filesystem::temp_directory_path() / "ordinal_volume_test.bin";
    save_volume(path, v);
    const auto back = load_volume(path);
    EXPECT_EQ(back.shape, v.shape);
    EXPECT_EQ(back.grid, v.grid);
    EXPECT_EQ(back.axis_coords, v.axis_coords);
    std::filesystem::remove(path);
}
