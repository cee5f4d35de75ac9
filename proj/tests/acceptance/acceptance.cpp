// Acceptance gate. One PASS/FAIL line per criterion; exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ordinal/geometry.hpp"
#include "ordinal/gradcheck.hpp"
#include "ordinal/reconstruction.hpp"
#include "ordinal/supervision.hpp"
#include "ordinal/synth.hpp"
#include "ordinal/trainer.hpp"
#include "ordinal/volumetric.hpp"
#include "support/oracles.hpp"

using namespace ordinal;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradient_suite() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const auto suites = run_gradcheck("all", 100, kSeed);
    const double secs = seconds_since(t0);
    const std::vector<std::pair<std::string, double>> required{
        {"pair_rank_loss", 1e-6}, {"rank_loss", 1e-6},     {"keypoint_loss", 1e-6},
        {"combined_weak_loss", 1e-6}, {"heatmap_loss", 1e-6}, {"volumetric_weak_loss", 1e-5},
        {"l3d_loss", 1e-6}};
    for (const auto& [name, tol] : required) {
        const auto it = std::find_if(suites.begin(), suites.end(),
                                     [&](const GradcheckSuite& s) { return s.name == name; });
        o.require(it != suites.end(), name + " present");
        if (it == suites.end())
            continue;
        o.require(it->configurations >= 100, name + " configurations >= 100");
        o.require(it->tolerance <= tol, name + " tolerance");
        o.require(it->passed(), name + " error " + fmt("%.2e", it->worst_relative_error));
    }
    double worst = 0;
    for (const auto& s : suites) {
        o.require(s.passed(), s.name);
        worst = std::max(worst, s.worst_relative_error);
    }
    o.require(secs < 120.0, "runtime < 120 s");
    o.note(std::to_string(suites.size()) + " suites x 100 configs, worst " + fmt("%.2e", worst) +
           ", " + fmt("%.1f s", secs));
    return o;
}

Outcome marginalization() {
    Outcome o;
    std::mt19937_64 rng(kSeed);
    std::normal_distribution<double> normal(0.0, 3.0);
    double worst_marg = 0, worst_norm = 0;
    long tensors = 0;
    for (int w = 1; w <= 8; ++w)
        for (int h = 1; h <= 8; ++h)
            for (int d = 1; d <= 8; ++d)
                for (int t = 0; t < 50; ++t) {
                    VolumeScores<double> v;
                    v.shape = GridShape{w, h, d};
                    v.grid.resize(v.shape.voxels(), 1);
                    for (Eigen::Index k = 0; k < v.grid.size(); ++k)
                        v.grid.data()[k] = normal(rng);
                    v.axis_coords = uniform_axis(-1.0, 1.0, d);
                    const auto p = volume_softmax(v);
                    const Mat<double> m2 = marginal_2d(p);
                    const Mat<double> md = marginal_depth(p);
                    const auto ref2 = oracle::loop_marginal_2d(p.p.col(0).data(), w, h, d);
                    const auto refd = oracle::loop_marginal_depth(p.p.col(0).data(), w, h, d);
                    for (int k = 0; k < w * h; ++k)
                        worst_marg = std::max(worst_marg, std::fabs(m2(k, 0) - ref2[k]));
                    for (int k = 0; k < d; ++k)
                        worst_marg = std::max(worst_marg, std::fabs(md(k, 0) - refd[k]));
                    worst_norm = std::max(worst_norm, std::fabs(p.p.col(0).sum() - 1.0));
                    worst_norm = std::max(worst_norm, std::fabs(m2.col(0).sum() - 1.0));
                    worst_norm = std::max(worst_norm, std::fabs(md.col(0).sum() - 1.0));
                    ++tensors;
                }
    o.require(worst_marg <= 1e-12, "marginals within 1e-12");
    o.require(worst_norm <= 1e-9, "normalization within 1e-9");
    o.note(std::to_string(tensors) + " tensors on all 512 grids up to 8x8x8, marginal diff " +
           fmt("%.1e", worst_marg) + ", normalization " + fmt("%.1e", worst_norm));
    return o;
}

Outcome ranking_algebra() {
    Outcome o;
    std::mt19937_64 rng(kSeed);
    std::normal_distribution<double> normal(0.0, 5.0);
    long checks = 0;
    for (int t = 0; t < 10000; ++t) {
        const double a = normal(rng), b = normal(rng), c = normal(rng);
        const auto p = pair_rank_loss(a, b, 1), q = pair_rank_loss(b, a, -1);
        o.require(p.loss == q.loss && p.d_zi == q.d_zj && p.d_zj == q.d_zi, "antisymmetry");
        const auto tie_ab = pair_rank_loss(a, b, 0), tie_ba = pair_rank_loss(b, a, 0);
        o.require(tie_ab.loss == tie_ba.loss, "tie symmetry");
        o.require(p.d_zi + p.d_zj == 0.0, "pair gradient sums to zero");
        // Strict monotonicity in the margin z_i - z_j.
        const double lo = std::min(a, c), hi = std::max(a, c);
        if (hi - lo > 1e-6)
            o.require(pair_rank_loss(lo, b, 1).loss < pair_rank_loss(hi, b, 1).loss &&
                          pair_rank_loss(lo, b, 1).d_zi > 0.0,
                      "monotonicity");
        // Inconsistent pair at a common depth: 2 ln 2 with cancelling gradients.
        RelationSet bad;
        bad.relations = {{0, 1, 1}, {1, 0, 1}};
        Eigen::VectorXd z(2);
        z << a, a;
        const auto inc = rank_loss(z, bad);
        o.require(std::fabs(inc.loss - 2.0 * std::log(2.0)) <= 1e-15 && inc.grad.isZero(0),
                  "inconsistent pair");
        checks += 5;
    }
    for (int t = 0; t < 500; ++t) {
        const int n = 2 + int(rng() % 13);
        Eigen::VectorXd z(n);
        for (int k = 0; k < n; ++k)
            z(k) = normal(rng);
        const RelationSet rs = relations_from_depths(z, 1.0);
        const double shift = normal(rng) * 10.0;
        const auto base = rank_loss(z, rs);
        const auto moved = rank_loss(Eigen::VectorXd(z.array() + shift), rs);
        o.require(std::fabs(base.loss - moved.loss) <= 1e-12 * std::max(1.0, base.loss),
                  "shift invariance");
        o.require((base.grad - moved.grad).cwiseAbs().maxCoeff() <= 1e-12, "shift invariant gradient");
        o.require(std::fabs(base.grad.sum()) <= 1e-12 * std::max(1.0, base.grad.cwiseAbs().sum()),
                  "gradient sums to zero");
        ++checks;
    }
    o.note(std::to_string(checks) + " checks");
    return o;
}

ExperimentConfig default_run(Task t) {
    ExperimentConfig cfg;
    cfg.task = t;
    cfg.seed = kSeed;
    return cfg;
}

Outcome table1() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    const EvalReport ord = run_experiment(default_run(Task::depth_ordinal));
    const double t_ord = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const EvalReport reg = run_experiment(default_run(Task::depth_regression));
    const double t_reg = seconds_since(t0);
    o.require(ord.ordinal_accuracy >= 0.90, "ordinal accuracy >= 0.90");
    o.require(ord.spearman_rho >= 0.90, "spearman >= 0.90");
    o.require(reg.ordinal_accuracy - ord.ordinal_accuracy <= 0.05, "within 0.05 of regression");
    o.require(t_ord < 600 && t_reg < 600, "runtime < 600 s per run");
    o.note("ordinal acc " + fmt("%.4f", ord.ordinal_accuracy) + " rho " + fmt("%.4f", ord.spearman_rho) +
           " (" + fmt("%.1f s", t_ord) + "); regression acc " + fmt("%.4f", reg.ordinal_accuracy) +
           " rho " + fmt("%.4f", reg.spearman_rho) + " (" + fmt("%.1f s", t_reg) + ")");
    return o;
}

Outcome table2() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    const EvalReport weak = run_experiment(default_run(Task::coords_weak));
    const double t_weak = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const EvalReport mixed = run_experiment(default_run(Task::mixed));
    const double t_mixed = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const EvalReport e2e = run_experiment(default_run(Task::end_to_end));
    const double t_e2e = seconds_since(t0);
    o.require(mixed.mpjpe < weak.mpjpe, "mixed MPJPE below ordinal-only");
    o.require(e2e.procrustes_without_reconstruction.has_value(), "baseline reported");
    const double without = e2e.procrustes_without_reconstruction.value_or(0.0);
    const double reduction = without > 0 ? 1.0 - e2e.procrustes_error / without : 0.0;
    o.require(reduction >= 0.15, "reconstruction reduces Procrustes error >= 15%");
    o.require(t_weak < 900 && t_mixed < 900 && t_e2e < 900, "runtime < 900 s per run");
    o.note("MPJPE ordinal-only " + fmt("%.1f", weak.mpjpe) + " mm, mixed " + fmt("%.1f", mixed.mpjpe) +
           " mm; Procrustes " + fmt("%.1f", without) + " -> " + fmt("%.1f", e2e.procrustes_error) +
           " mm (" + fmt("%.1f%%", 100 * reduction) + " lower); runs " + fmt("%.0f", t_weak) + "/" +
           fmt("%.0f", t_mixed) + "/" + fmt("%.0f s", t_e2e));
    return o;
}

Outcome reconstruction() {
    Outcome o;
    const ExperimentConfig cfg = default_run(Task::end_to_end);
    const auto dist = default_distribution();
    const auto train = sample_poses(dist, cfg.recon_poses, mix_seed({kSeed, 501}));
    const auto test = sample_poses(dist, 2000, mix_seed({kSeed, 502}));
    const Camera cam = default_camera();
    const int root = dist.skeleton.root();
    ReconHyper hyper = cfg.recon;
    hyper.seed = kSeed;
    const auto t0 = std::chrono::steady_clock::now();
    const auto trained = train_reconstruction(train, root, cam, cfg.noise, hyper);
    const double secs = seconds_since(t0);
    double model_err = 0, naive_err = 0;
    for (std::size_t k = 0; k < test.size(); ++k) {
        const Pose2D kp = project(test[k], cam);
        const DepthVector noisy = simulate_noisy_depths(test[k].col(2), cfg.noise, mix_seed({kSeed, 503, k}));
        const Pose3D gt = root_relative(test[k], root);
        model_err += mpjpe(reconstruct(trained.model, normalize_input(kp, noisy).first), gt);
        naive_err += mpjpe(input_as_answer(kp, noisy, cam, root), gt);
    }
    model_err /= double(test.size());
    naive_err /= double(test.size());
    o.require(train.size() >= 1000, ">= 1000 training poses");
    o.require(model_err <= 0.75 * naive_err, "MPJPE >= 25% below input-as-answer");

    // Monte Carlo over 10k poses.
    const auto mc = sample_poses(dist, 10000, mix_seed({kSeed, 504}));
    NoiseConfig no_jitter = cfg.noise;
    no_jitter.jitter_sigma_frac = 0.0;
    double min_zero = 1.0, sum = 0, sum_sq = 0;
    for (std::size_t k = 0; k < mc.size(); ++k) {
        const DepthVector z = mc[k].col(2);
        min_zero = std::min(min_zero, preserved_fraction(z, simulate_noisy_depths(z, no_jitter, k), 0.0));
        const double f = preserved_fraction(z, simulate_noisy_depths(z, cfg.noise, k), 0.0);
        sum += f;
        sum_sq += f * f;
    }
    const double n = double(mc.size());
    const double mean = sum / n;
    const double half_width = 1.96 * std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n);
    o.require(min_zero == 1.0, "jitter 0 preserves every strict relation");
    o.require(mean >= 0.80, "default noise preserves >= 80%");
    o.require(half_width <= 0.01, "Monte Carlo half-width <= 1%");
    o.note("MPJPE " + fmt("%.1f", model_err) + " vs " + fmt("%.1f", naive_err) + " mm (" +
           fmt("%.1f%%", 100 * (1 - model_err / naive_err)) + " lower, " + std::to_string(train.size()) +
           " poses, " + fmt("%.0f s", secs) + "); preserved " + fmt("%.4f", mean) + " +/- " +
           fmt("%.4f", half_width) + " (jitter 0: " + fmt("%.4f", min_zero) + ")");
    return o;
}

oracle::RelationTable table_of(const RelationSet& rs, int n) {
    oracle::RelationTable t(n);
    for (const auto& r : rs.relations)
        t.set(r.i, r.j, r.r);
    return t;
}

Outcome annotation() {
    Outcome o;
    long small_runs = 0, small_exact = 0;
    bool transitive = true;
    for (int n = 1; n <= 5; ++n)
        for (const auto& rank : oracle::weak_orders(n)) {
            std::vector<int> ins(static_cast<std::size_t>(n));
            std::iota(ins.begin(), ins.end(), 0);
            do {
                AnnotationSession s = make_session("x", n, ins);
                while (const auto q = next_question(s)) {
                    const int a = rank[q->i], b = rank[q->j];
                    s = submit_answer(std::move(s), a == b ? Answer::same : (a < b ? Answer::closer : Answer::farther));
                }
                const Ordering got = final_ordering(s);
                std::vector<int> got_rank(static_cast<std::size_t>(n));
                for (std::size_t k = 0; k < got.size(); ++k)
                    for (int m : got[k].members)
                        got_rank[m] = int(k);
                small_exact += got_rank == rank;
                const auto rs = ordering_to_relations(got);
                transitive = transitive && oracle::transitive(table_of(rs, n));
                ++small_runs;
            } while (std::next_permutation(ins.begin(), ins.end()));
        }
    o.require(small_exact == small_runs, "exact recovery for every weak order with N <= 5");

    const auto poses = sample_poses(default_distribution(), 10000, mix_seed({kSeed, 601}));
    const SimulatedAnnotator perfect;
    long exact = 0, transitive_truth = 0, truth_matches = 0, total_q = 0;
    int max_q = 0;
    for (std::size_t k = 0; k < poses.size(); ++k) {
        const auto s = simulate_session(perfect, poses[k], "pose-" + std::to_string(k), mix_seed({kSeed, 602, k}));
        const Ordering got = final_ordering(s);
        exact += got == depth_classes(poses[k].col(2), perfect.tie_threshold_mm);
        total_q += s.question_count;
        max_q = std::max(max_q, s.question_count);
        const auto rs = ordering_to_relations(got);
        transitive = transitive && oracle::transitive(table_of(rs, 14));
        const RelationSet direct = relations_from_depths(poses[k].col(2), perfect.tie_threshold_mm);
        if (oracle::transitive(table_of(direct, 14))) {
            ++transitive_truth;
            truth_matches += direct == rs;
        }
    }
    SimulatedAnnotator noisy;
    noisy.error_rate = 0.1;
    noisy.ambiguous_rate = 0.1;
    for (std::size_t k = 0; k < 1000; ++k) {
        const auto s = simulate_session(noisy, poses[k], "pose-" + std::to_string(k), mix_seed({kSeed, 603, k}));
        transitive = transitive && oracle::transitive(table_of(ordering_to_relations(final_ordering(s)), 14));
    }
    const double mean_q = double(total_q) / double(poses.size());
    o.require(exact == long(poses.size()), "exact recovery on all 10k N=14 poses");
    o.require(truth_matches == transitive_truth, "matches thresholded relations when those are transitive");
    o.require(mean_q <= 30.0 && mean_q < 91.0, "mean questions <= 30 and < 91");
    o.require(transitive, "exported relation sets transitive");
    o.note(std::to_string(small_exact) + "/" + std::to_string(small_runs) + " small sessions exact; " +
           std::to_string(exact) + "/10000 N=14 exact; mean questions " + fmt("%.2f", mean_q) +
           " (reference 17, exhaustive 91, max " + std::to_string(max_q) + ", bound " +
           std::to_string(binary_insertion_bound(14)) + ")");
    return o;
}

Outcome procrustes() {
    Outcome o;
    std::mt19937_64 rng(kSeed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.2, 5.0);
    const auto poses = sample_poses(default_distribution(), 200, mix_seed({kSeed, 701}));
    double worst_copy = 0;
    for (const auto& gt : poses) {
        const Eigen::Matrix3d r =
            Eigen::Quaterniond(normal(rng), normal(rng), normal(rng), normal(rng)).normalized().toRotationMatrix();
        Pose3D pred = u(rng) * gt * r.transpose();
        pred.rowwise() += Eigen::RowVector3d(1000 * normal(rng), 1000 * normal(rng), 1000 * normal(rng));
        worst_copy = std::max(worst_copy, procrustes_align(pred, gt).error);
    }
    double worst_gap = 0;
    for (int t = 0; t < 10; ++t) {
        const Pose3D& gt = poses[t];
        Pose3D pred = gt;
        const Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
        pred.row(t % 14) += 12.0 * dir.normalized().transpose();
        const double closed = procrustes_align(pred, gt).error;
        const double numeric = double(oracle::similarity_fit_mpjpe(pred, gt, 20, 800 + t));
        worst_gap = std::max(worst_gap, std::fabs(closed - numeric));
    }
    o.require(worst_copy <= 1e-9, "similarity copies within 1e-9");
    o.require(worst_gap <= 1e-6, "displaced joint within 1e-6 of numerical minimizer");
    o.note("copies worst " + fmt("%.1e", worst_copy) + " mm; displaced-joint gap " + fmt("%.1e", worst_gap) + " mm");
    return o;
}

Outcome determinism() {
    Outcome o;
    for (Task t : {Task::depth_ordinal, Task::depth_regression, Task::coords_weak, Task::coords_full,
                   Task::volume_weak, Task::volume_full, Task::mixed, Task::end_to_end}) {
        ExperimentConfig cfg = default_run(t);
        cfg.pose_count = 200;
        cfg.iterations = 300;
        cfg.grid = GridShape{8, 8, 8};
        cfg.recon_poses = 1000;
        cfg.recon.iterations = 300;
        const auto a = run_experiment_full(cfg);
        const auto b = run_experiment_full(cfg);
        o.require(report_to_json(a.report).dump() == report_to_json(b.report).dump(), to_string(t) + " train report");
        o.require(a.model.net.params() == b.model.net.params(), to_string(t) + " parameters");
        if (t != Task::end_to_end) {
            const Dataset data = build_dataset(cfg);
            const TrainedModel back = model_from_checkpoint(model_checkpoint(a.model, cfg.iterations));
            const auto e1 = report_to_json(evaluate(back, data, cfg)).dump();
            const auto e2 = report_to_json(evaluate(back, data, cfg)).dump();
            o.require(e1 == e2, to_string(t) + " eval");
        }
    }
    SimulatedAnnotator noisy;
    noisy.error_rate = 0.05;
    noisy.ambiguous_rate = 0.05;
    const auto poses = sample_poses(default_distribution(), 200, 9);
    o.require(poses == sample_poses(default_distribution(), 200, 9), "pose sampling");
    for (std::size_t k = 0; k < poses.size(); ++k)
        o.require(session_to_json(simulate_session(noisy, poses[k], "p", k)) ==
                      session_to_json(simulate_session(noisy, poses[k], "p", k)),
                  "annotation simulation");
    const auto g1 = run_gradcheck("all", 3, 5), g2 = run_gradcheck("all", 3, 5);
    for (std::size_t k = 0; k < g1.size(); ++k)
        o.require(g1[k].worst_relative_error == g2[k].worst_relative_error, "gradcheck " + g1[k].name);
    o.note("8 tasks train+eval, 200 annotation sessions, gradcheck: identical on double run");
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient-suite", gradient_suite},
        {"marginalization-oracle", marginalization},
        {"ranking-loss-algebra", ranking_algebra},
        {"ordinal-vs-full-supervision", table1},
        {"mixed-supervision-and-reconstruction", table2},
        {"reconstruction-component", reconstruction},
        {"annotation-protocol", annotation},
        {"procrustes-metric", procrustes},
        {"determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome out;
        try {
            out = run();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        failed += !out.pass;
        std::printf("%s %s: %s\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
