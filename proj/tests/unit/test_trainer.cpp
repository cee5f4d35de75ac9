#include <gtest/gtest.h>

#include <random>

#include "ordinal/trainer.hpp"
#include "support/oracles.hpp"

using namespace ordinal;
using oracle::LD;

namespace {

ExperimentConfig smoke_config(Task task) {
    ExperimentConfig cfg;
    cfg.task = task;
    cfg.seed = 17;
    cfg.pose_count = 40;
    cfg.iterations = 20;
    cfg.log_every = 5;
    cfg.hidden = 16;
    cfg.blocks = 1;
    cfg.grid = GridShape{6, 6, 6};
    cfg.recon_poses = 200;
    cfg.recon.iterations = 20;
    cfg.recon.hidden = 16;
    cfg.recon.log_every = 5;
    return cfg;
}

const std::vector<Task>& all_tasks() {
    static const std::vector<Task> tasks{Task::depth_ordinal, Task::depth_regression,
                                         Task::coords_weak,   Task::coords_full,
                                         Task::volume_weak,   Task::volume_full,
                                         Task::mixed,         Task::end_to_end};
    return tasks;
}

Vec<double> random_vec(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> d(0, 1);
    Vec<double> v(n);
    for (Eigen::Index k = 0; k < n; ++k)
        v(k) = d(rng);
    return v;
}

} // namespace

TEST(Task, StringRoundTrip) {
    for (Task t : all_tasks())
        EXPECT_EQ(task_from_string(to_string(t)), t);
    EXPECT_THROW(task_from_string("depth"), InvalidInput);
    for (auto r : {Representation::depth, Representation::coords, Representation::volume})
        EXPECT_EQ(representation_from_string(to_string(r)), r);
}

TEST(Config, JsonRoundTripAndValidation) {
    ExperimentConfig cfg = smoke_config(Task::mixed);
    cfg.full_fraction = 0.4;
    cfg.noise.jitter_sigma_frac = 0.07;
    const ExperimentConfig back = config_from_json(config_to_json(cfg));
    EXPECT_EQ(config_to_json(back), config_to_json(cfg));
    json j = config_to_json(cfg);
    j["no_such_key"] = 1;
    EXPECT_THROW(config_from_json(j), DataError);
    EXPECT_EQ(config_from_json(json::object()).iterations, ExperimentConfig{}.iterations);
    cfg.pose_count = 1;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    cfg = smoke_config(Task::mixed);
    cfg.holdout_fraction = 1.0;
    EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(Metrics, SpearmanMatchesReference) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        Vec<double> a = random_vec(rng, 14), b = random_vec(rng, 14);
        if (t % 5 == 0)
            b(3) = b(7);
        if (t % 7 == 0)
            a = a.array().round();
        const std::vector<double> va(a.data(), a.data() + 14), vb(b.data(), b.data() + 14);
        EXPECT_NEAR(spearman(a, b), oracle::spearman_ref(va, vb), 1e-12);
    }
    Vec<double> v(4);
    v << 1, 2, 3, 4;
    EXPECT_NEAR(spearman(v, v), 1.0, 1e-15);
    EXPECT_NEAR(spearman(v, Vec<double>(-v)), -1.0, 1e-15);
    EXPECT_EQ(spearman(v, Vec<double>::Constant(4, 2.0)), 0.0);
}

TEST(Metrics, OrdinalAgreement) {
    Vec<double> gt(4), pred(4);
    gt << 0, 1, 2, 10;
    pred << 0, 2, 1, 10;
    const auto all = ordinal_agreement(pred, gt, 0.0);
    EXPECT_EQ(all.total, 6);
    EXPECT_EQ(all.correct, 5);
    const auto wide = ordinal_agreement(pred, gt, 1.5);
    EXPECT_EQ(wide.total, 4);
    EXPECT_EQ(wide.correct, 4);
    // (0, 1) becomes a predicted tie and (1, 2) is now ordered correctly.
    pred(1) = pred(0);
    EXPECT_EQ(ordinal_agreement(pred, gt, 0.0).correct, 5);
    pred << 3, 3, 3, 3;
    EXPECT_EQ(ordinal_agreement(pred, gt, 0.0).correct, 0);
}

TEST(MixedBatchLoss, DepthRepresentation) {
    std::mt19937_64 rng(2);
    const Pose3D pose = sample_pose(default_distribution(), 3);
    const TrainSample s = make_sample(pose, default_camera(), 1, 100.0);
    ASSERT_TRUE(s.depths && s.relations);
    LossSettings settings;
    settings.representation = Representation::depth;
    const Vec<double> out = random_vec(rng, 14);

    const auto weak = mixed_batch_loss(out, s, SupervisionMode::weak, settings);
    LD want = 0;
    for (const auto& r : s.relations->relations)
        want += oracle::pair_loss_ld(out(r.i), out(r.j), r.r);
    EXPECT_NEAR(weak.loss, double(want), 1e-9 * double(want));

    const auto full = mixed_batch_loss(out, s, SupervisionMode::full, settings);
    EXPECT_NEAR(full.loss, (out - *s.depths).squaredNorm(), 1e-12);

    TrainSample bare = s;
    bare.depths.reset();
    EXPECT_THROW(mixed_batch_loss(out, bare, SupervisionMode::full, settings), DataError);
    bare = s;
    bare.relations.reset();
    EXPECT_THROW(mixed_batch_loss(out, bare, SupervisionMode::weak, settings), DataError);
    EXPECT_THROW(mixed_batch_loss(Vec<double>(out.head(5)), s, SupervisionMode::full, settings),
                 DimensionError);
}

TEST(MixedBatchLoss, CoordsRepresentation) {
    std::mt19937_64 rng(3);
    const Pose3D pose = sample_pose(default_distribution(), 4);
    const TrainSample s = make_sample(pose, default_camera(), 1, 100.0);
    LossSettings settings;
    settings.representation = Representation::coords;
    const Vec<double> out = random_vec(rng, 42);

    LD rank = 0, keyp = 0, l3d = 0;
    for (const auto& r : s.relations->relations)
        rank += oracle::pair_loss_ld(out(28 + r.i), out(28 + r.j), r.r);
    for (int n = 0; n < 14; ++n) {
        const LD dx = out(2 * n) - s.keypoints(n, 0), dy = out(2 * n + 1) - s.keypoints(n, 1);
        const LD dz = out(28 + n) - (*s.depths)(n);
        keyp += dx * dx + dy * dy;
        l3d += dx * dx + dy * dy + dz * dz;
    }
    const auto weak = mixed_batch_loss(out, s, SupervisionMode::weak, settings);
    EXPECT_NEAR(weak.loss, double(rank + 100 * keyp), 1e-9 * double(rank + 100 * keyp));
    const auto full = mixed_batch_loss(out, s, SupervisionMode::full, settings);
    EXPECT_NEAR(full.loss, double(l3d), 1e-9 * double(l3d));
}

TEST(MixedBatchLoss, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(4);
    const Pose3D pose = sample_pose(default_distribution(), 5);
    const TrainSample s = make_sample(pose, default_camera(), 1, 100.0);
    for (auto rep : {Representation::depth, Representation::coords})
        for (auto mode : {SupervisionMode::weak, SupervisionMode::full}) {
            LossSettings settings;
            settings.representation = rep;
            const Vec<double> out = random_vec(rng, rep == Representation::depth ? 14 : 42);
            const auto l = mixed_batch_loss(out, s, mode, settings);
            const auto num = oracle::numeric_gradient(
                [&](const oracle::VecL& v) {
                    return LD(mixed_batch_loss(Vec<double>(v.cast<double>()), s, mode, settings).loss);
                },
                out.cast<LD>(), 1e-4L);
            EXPECT_LE(oracle::relative_error(l.grad, num), 1e-6);
        }
}

TEST(Dataset, DeterministicAndConsistent) {
    const auto cfg = smoke_config(Task::mixed);
    const Dataset a = build_dataset(cfg), b = build_dataset(cfg);
    EXPECT_EQ(a.train_poses, b.train_poses);
    EXPECT_EQ(a.test_poses, b.test_poses);
    EXPECT_EQ(a.train_modes, b.train_modes);
    EXPECT_EQ(a.train.size() + a.test.size(), std::size_t(cfg.pose_count));
    EXPECT_EQ(a.test.size(), std::size_t(std::lround(cfg.holdout_fraction * cfg.pose_count)));
    long full = 0;
    for (auto m : a.train_modes)
        full += m == SupervisionMode::full;
    EXPECT_GT(full, 0);
    EXPECT_LT(full, long(a.train_modes.size()));
    for (std::size_t k = 0; k < a.train.size(); ++k) {
        const auto& s = a.train[k];
        if (a.train_modes[k] == SupervisionMode::full) {
            EXPECT_TRUE(s.depths.has_value());
            continue;
        }
        ASSERT_TRUE(s.relations.has_value());
        EXPECT_EQ(s.relations->size(), 91u);
        EXPECT_NO_THROW(s.relations->validate(14));
    }
}

TEST(Experiment, EveryTaskRunsAndIsDeterministic) {
    for (Task t : all_tasks()) {
        const auto cfg = smoke_config(t);
        const auto a = run_experiment_full(cfg);
        const auto b = run_experiment_full(cfg);
        EXPECT_EQ(report_to_json(a.report), report_to_json(b.report)) << to_string(t);
        EXPECT_EQ(a.model.net.params(), b.model.net.params()) << to_string(t);
        EXPECT_EQ(a.report.task, to_string(t));
        EXPECT_TRUE(std::isfinite(a.report.mpjpe) && std::isfinite(a.report.procrustes_error));
        EXPECT_GE(a.report.ordinal_accuracy, 0.0);
        EXPECT_LE(a.report.ordinal_accuracy, 1.0);
        EXPECT_FALSE(a.report.loss_log.empty());
        EXPECT_EQ(a.recon.has_value(), t == Task::end_to_end);
        if (t == Task::end_to_end) {
            EXPECT_TRUE(a.report.procrustes_without_reconstruction.has_value());
            EXPECT_TRUE(a.report.reconstruction_loss_log.has_value());
        }
    }
}

TEST(Experiment, EvaluationFromCheckpointIsBitwiseStable) {
    for (Task t : {Task::depth_ordinal, Task::volume_weak, Task::coords_weak}) {
        const auto cfg = smoke_config(t);
        const auto run = run_experiment_full(cfg);
        const Dataset data = build_dataset(cfg);
        const TrainedModel back = model_from_checkpoint(model_checkpoint(run.model, cfg.iterations));
        const EvalReport r1 = evaluate(back, data, cfg);
        const EvalReport r2 = evaluate(back, data, cfg);
        EXPECT_EQ(report_to_json(r1), report_to_json(r2));
        EXPECT_EQ(r1.ordinal_accuracy, run.report.ordinal_accuracy);
        EXPECT_EQ(r1.mpjpe, run.report.mpjpe);
    }
}

TEST(Report, JsonAndCsv) {
    const auto r = run_experiment(smoke_config(Task::depth_ordinal));
    const EvalReport back = report_from_json(report_to_json(r));
    EXPECT_EQ(report_to_json(back), report_to_json(r));
    const std::string header = report_csv_header(), row = report_csv_row(r);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}
