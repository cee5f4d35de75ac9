#include "ordinal/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ordinal/random.hpp"
#include "ordinal/reconstruction.hpp"
#include "ordinal/supervision.hpp"
#include "ordinal/volumetric.hpp"

namespace ordinal {

namespace {

using LD = long double;
using Objective = std::function<LD(const Vec<LD>&)>;

constexpr double kLossTolerance = 1e-6;
constexpr double kChainTolerance = 1e-5;

Vec<LD> central_difference(const Objective& f, const Vec<double>& at,
                           const std::vector<Eigen::Index>& coords) {
    Vec<LD> x = at.cast<LD>();
    Vec<LD> g(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t c = 0; c < coords.size(); ++c) {
        const Eigen::Index k = coords[c];
        const LD h = 1e-5L * std::max<LD>(1.0L, std::fabs(x(k)));
        const LD keep = x(k);
        x(k) = keep + h;
        const LD up = f(x);
        x(k) = keep - h;
        const LD down = f(x);
        x(k) = keep;
        g(static_cast<Eigen::Index>(c)) = (up - down) / (2.0L * h);
    }
    return g;
}

Vec<LD> central_difference(const Objective& f, const Vec<double>& at) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(at.size()));
    for (Eigen::Index k = 0; k < at.size(); ++k)
        all[static_cast<std::size_t>(k)] = k;
    return central_difference(f, at, all);
}

template <typename Scalar>
Vec<Scalar> flatten(const Mat<Scalar>& m) {
    return Eigen::Map<const Vec<Scalar>>(m.data(), m.size());
}

template <typename Scalar, int Cols>
Eigen::Matrix<Scalar, Eigen::Dynamic, Cols> unflatten(const Vec<Scalar>& v, Eigen::Index rows,
                                                      Eigen::Index offset = 0) {
    const Eigen::Index cols = Cols == Eigen::Dynamic ? (v.size() - offset) / rows : Cols;
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Cols>>(v.data() + offset, rows,
                                                                         cols);
}

Vec<double> random_vec(Rng& rng, Eigen::Index n, double sigma) {
    Vec<double> v(n);
    for (Eigen::Index k = 0; k < n; ++k)
        v(k) = sigma * standard_normal(rng);
    return v;
}

int random_int(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

RelationSet random_relations(Rng& rng, int n) {
    RelationSet set;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (uniform01(rng) < 0.7)
                set.relations.push_back({i, j, random_int(rng, -1, 1)});
    return set;
}

Visibility random_visibility(Rng& rng, int n) {
    if (uniform01(rng) < 0.5)
        return {};
    Visibility v(n);
    for (int k = 0; k < n; ++k)
        v(k) = uniform01(rng) < 0.8;
    return v;
}

struct Tracker {
    GradcheckSuite suite;
    void add(const Vec<double>& analytic, const Vec<LD>& numeric) {
        suite.worst_relative_error =
            std::max(suite.worst_relative_error, gradient_relative_error(analytic, numeric));
        ++suite.configurations;
    }
};

GradcheckSuite check_pair_rank(int configs, Rng& rng) {
    Tracker t{{"pair_rank_loss", "ranking", 0, 0.0, kLossTolerance}};
    for (int c = 0; c < configs; ++c) {
        const int r = random_int(rng, -1, 1);
        const Vec<double> z = random_vec(rng, 2, 3.0);
        const auto pl = pair_rank_loss(z(0), z(1), r);
        Vec<double> analytic(2);
        analytic << pl.d_zi, pl.d_zj;
        t.add(analytic, central_difference(
                            [&](const Vec<LD>& x) { return pair_rank_loss(x(0), x(1), r).loss; }, z));
    }
    return t.suite;
}

GradcheckSuite check_rank(int configs, Rng& rng) {
    Tracker t{{"rank_loss", "ranking", 0, 0.0, kLossTolerance}};
    for (int c = 0; c < configs; ++c) {
        const int n = random_int(rng, 2, 14);
        const RelationSet pairs = random_relations(rng, n);
        const Reduction red = uniform01(rng) < 0.5 ? Reduction::sum : Reduction::mean;
        const Vec<double> z = random_vec(rng, n, 2.0);
        t.add(rank_loss(z, pairs, red).grad,
              central_difference([&](const Vec<LD>& x) { return rank_loss(x, pairs, red).loss; },
                                 z));
    }
    return t.suite;
}

GradcheckSuite check_keypoint(int configs, Rng& rng) {
    Tracker t{{"keypoint_loss", "keypoint", 0, 0.0, kLossTolerance}};
    for (int c = 0; c < configs; ++c) {
        const int n = random_int(rng, 1, 14);
        const Visibility vis = random_visibility(rng, n);
        const Pose2D gt = unflatten<double, 2>(random_vec(rng, 2 * n, 1.0), n);
        const Vec<double> pred = random_vec(rng, 2 * n, 1.0);
        const Pose2<LD> gt_ld = gt.cast<LD>();
        const auto kl = keypoint_loss(Pose2D(unflatten<double, 2>(pred, n)), gt, vis);
        t.add(flatten<double>(kl.grad), central_difference(
                                            [&](const Vec<LD>& x) {
                                                return keypoint_loss(Pose2<LD>(unflatten<LD, 2>(x, n)),
                                                                     gt_ld, vis)
                                                    .loss;
                                            },
                                            pred));
    }
    return t.suite;
}

GradcheckSuite check_combined(int configs, Rng& rng) {
    Tracker t{{"combined_weak_loss", "keypoint", 0, 0.0, kLossTolerance}};
    for (int c = 0; c < configs; ++c) {
        const int n = random_int(rng, 2, 14);
        const RelationSet pairs = random_relations(rng, n);
        const Visibility vis = random_visibility(rng, n);
        const double lambda = uniform(rng, 0.1, 100.0);
        const Reduction red = uniform01(rng) < 0.5 ? Reduction::sum : Reduction::mean;
        const Pose2D gt = unflatten<double, 2>(random_vec(rng, 2 * n, 1.0), n);
        const Pose2<LD> gt_ld = gt.cast<LD>();
        // x = [z (n), keypoints (2n, column-major)]
        const Vec<double> x = random_vec(rng, 3 * n, 1.0);
        const auto wl = combined_weak_loss(Vec<double>(x.head(n)), pairs,
                                           Pose2D(unflatten<double, 2>(x, n, n)), gt, vis, lambda,
                                           red);
        Vec<double> analytic(3 * n);
        analytic << wl.grad_depth, flatten<double>(wl.grad_keypoints);
        t.add(analytic, central_difference(
                            [&](const Vec<LD>& v) {
                                return combined_weak_loss(Vec<LD>(v.head(n)), pairs,
                                                          Pose2<LD>(unflatten<LD, 2>(v, n, n)),
                                                          gt_ld, vis, LD(lambda), red)
                                    .loss;
                            },
                            x));
    }
    return t.suite;
}

struct VolumeCase {
    VolumeScores<double> scores;
    HeatmapTarget<double> targets;
    RelationSet pairs;
    Vec<double> target_depths;
    double lambda = 1.0;
};

VolumeCase random_volume_case(Rng& rng) {
    VolumeCase vc;
    GridShape shape{random_int(rng, 2, 5), random_int(rng, 2, 5), random_int(rng, 2, 5)};
    const int n = random_int(rng, 2, 4);
    vc.scores.shape = shape;
    vc.scores.grid = unflatten<double, Eigen::Dynamic>(random_vec(rng, shape.voxels() * n, 1.5),
                                                       shape.voxels());
    vc.scores.axis_coords = uniform_axis(-1.0, 1.0, shape.depth);
    Pose2D centers(n, 2);
    for (int k = 0; k < n; ++k)
        centers.row(k) << uniform(rng, 0.0, shape.width - 1.0), uniform(rng, 0.0, shape.height - 1.0);
    vc.targets = make_heatmap_targets(centers, shape, uniform(rng, 0.5, 2.0));
    vc.pairs = random_relations(rng, n);
    vc.target_depths = random_vec(rng, n, 0.5);
    vc.lambda = uniform(rng, 0.1, 10.0);
    return vc;
}

VolumeScores<LD> scores_at(const VolumeCase& vc, const Vec<LD>& x) {
    return {vc.scores.shape, unflatten<LD, Eigen::Dynamic>(x, vc.scores.shape.voxels()),
            vc.scores.axis_coords.cast<LD>()};
}

HeatmapTarget<LD> targets_ld(const VolumeCase& vc) {
    return {vc.targets.shape, vc.targets.map.cast<LD>(), LD(vc.targets.sigma_px)};
}

GradcheckSuite check_heatmap(int configs, Rng& rng) {
    Tracker t{{"heatmap_loss", "volumetric", 0, 0.0, kLossTolerance}};
    for (int c = 0; c < configs; ++c) {
        const VolumeCase vc = random_volume_case(rng);
        const auto tl = targets_ld(vc);
        t.add(flatten<double>(heatmap_loss(vc.scores, vc.targets).grad),
              central_difference(
                  [&](const Vec<LD>& x) { return heatmap_loss(scores_at(vc, x), tl).loss; },
                  flatten<double>(vc.scores.grid)));
    }
    return t.suite;
}

GradcheckSuite check_volumetric_weak(int configs, Rng& rng) {
    Tracker t{{"volumetric_weak_loss", "volumetric", 0, 0.0, kChainTolerance}};
    for (int c = 0; c < configs; ++c) {
        const VolumeCase vc = random_volume_case(rng);
        const auto tl = targets_ld(vc);
        t.add(flatten<double>(volumetric_weak_loss(vc.scores, vc.pairs, vc.targets, vc.lambda).grad),
              central_difference(
                  [&](const Vec<LD>& x) {
                      return volumetric_weak_loss(scores_at(vc, x), vc.pairs, tl, LD(vc.lambda)).loss;
                  },
                  flatten<double>(vc.scores.grid)));
    }
    return t.suite;
}

GradcheckSuite check_volumetric_full(int configs, Rng& rng) {
    Tracker t{{"volumetric_full_loss", "volumetric", 0, 0.0, kChainTolerance}};
    for (int c = 0; c < configs; ++c) {
        const VolumeCase vc = random_volume_case(rng);
        const auto tl = targets_ld(vc);
        const Vec<LD> td = vc.target_depths.cast<LD>();
        t.add(flatten<double>(
                  volumetric_full_loss(vc.scores, vc.target_depths, vc.targets, vc.lambda).grad),
              central_difference(
                  [&](const Vec<LD>& x) {
                      return volumetric_full_loss(scores_at(vc, x), td, tl, LD(vc.lambda)).loss;
                  },
                  flatten<double>(vc.scores.grid)));
    }
    return t.suite;
}

GradcheckSuite check_l3d(int configs, Rng& rng) {
    Tracker t{{"l3d_loss", "reconstruction", 0, 0.0, kLossTolerance}};
    for (int c = 0; c < configs; ++c) {
        const int n = random_int(rng, 1, 14);
        const Pose3D gt = unflatten<double, 3>(random_vec(rng, 3 * n, 1.0), n);
        const Pose3<LD> gt_ld = gt.cast<LD>();
        const Vec<double> pred = random_vec(rng, 3 * n, 1.0);
        t.add(flatten<double>(l3d_loss(Pose3D(unflatten<double, 3>(pred, n)), gt).grad),
              central_difference(
                  [&](const Vec<LD>& x) {
                      return l3d_loss(Pose3<LD>(unflatten<LD, 3>(x, n)), gt_ld).loss;
                  },
                  pred));
    }
    return t.suite;
}

// 0.5 * sum (net(x) - y)^2 at one random batch; checks parameter and input
// gradients together, on at most max_coords randomly chosen coordinates.
void add_network_case(Tracker& t, const Network<double>& net, Rng& rng,
                      Eigen::Index max_coords = 1 << 30) {
    const int batch = 3;
    const Mat<double> x =
        unflatten<double, Eigen::Dynamic>(random_vec(rng, net.input_dim() * batch, 1.0),
                                          net.input_dim());
    const Mat<double> y =
        unflatten<double, Eigen::Dynamic>(random_vec(rng, net.output_dim() * batch, 1.0),
                                          net.output_dim());
    Network<double>::Cache cache;
    const Mat<double> out = net.forward(x, &cache);
    const auto grads = net.backward(cache, out - y);
    Vec<double> analytic(grads.params.size() + grads.input.size());
    analytic << grads.params, flatten<double>(grads.input);

    Network<LD> ld(net.spec());
    const Eigen::Index np = net.param_count();
    const Mat<LD> y_ld = y.cast<LD>();
    Vec<double> at(analytic.size());
    at << net.params(), flatten<double>(x);
    std::vector<Eigen::Index> coords;
    for (Eigen::Index k = 0; k < at.size(); ++k)
        coords.push_back(k);
    if (at.size() > max_coords) {
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(static_cast<std::size_t>(max_coords));
        std::sort(coords.begin(), coords.end());
    }
    Vec<double> picked(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t c = 0; c < coords.size(); ++c)
        picked(static_cast<Eigen::Index>(c)) = analytic(coords[c]);
    t.add(picked, central_difference(
                        [&](const Vec<LD>& v) {
                            ld.mutable_params() = v.head(np);
                            const Mat<LD> xin = unflatten<LD, Eigen::Dynamic>(
                                Vec<LD>(v.tail(v.size() - np)), net.input_dim());
                            return LD(0.5) * (ld.forward(xin) - y_ld).squaredNorm();
                        },
                        at, coords));
}

GradcheckSuite check_random_networks(int configs, Rng& rng) {
    Tracker t{{"network_backprop", "network", 0, 0.0, kChainTolerance}};
    for (int c = 0; c < configs; ++c) {
        const auto spec = residual_mlp(random_int(rng, 2, 6), random_int(rng, 3, 8),
                                       random_int(rng, 1, 4), random_int(rng, 1, 2), 0.0);
        auto net = Network<double>::initialized(spec, rng());
        for (Eigen::Index k = 0; k < net.param_count(); ++k)
            net.mutable_params()(k) += 0.1 * standard_normal(rng);
        add_network_case(t, net, rng);
    }
    return t.suite;
}

} // namespace

double gradient_relative_error(const Vec<double>& analytic, const Vec<long double>& numeric) {
    if (analytic.size() != numeric.size())
        throw DimensionError("gradient_relative_error: sizes differ");
    if (analytic.size() == 0)
        return 0.0;
    const Vec<LD> a = analytic.cast<LD>();
    const LD scale = std::max(a.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
    if (scale == 0.0L)
        return 0.0;
    return static_cast<double>((a - numeric).cwiseAbs().maxCoeff() / scale);
}

const std::vector<std::string>& gradcheck_scopes() {
    static const std::vector<std::string> scopes{"all",          "ranking",       "keypoint",
                                                 "volumetric",   "reconstruction", "network"};
    return scopes;
}

std::vector<GradcheckSuite> run_gradcheck(const std::string& scope, int configurations,
                                          std::uint64_t seed) {
    if (std::find(gradcheck_scopes().begin(), gradcheck_scopes().end(), scope) ==
        gradcheck_scopes().end())
        throw InvalidInput("gradcheck: unknown scope '" + scope + "'");
    if (configurations < 1)
        throw InvalidInput("gradcheck: need at least one configuration");
    using Check = GradcheckSuite (*)(int, Rng&);
    const std::vector<std::pair<std::string, Check>> checks{
        {"ranking", check_pair_rank},          {"ranking", check_rank},
        {"keypoint", check_keypoint},          {"keypoint", check_combined},
        {"volumetric", check_heatmap},         {"volumetric", check_volumetric_weak},
        {"volumetric", check_volumetric_full}, {"reconstruction", check_l3d},
        {"network", check_random_networks}};
    std::vector<GradcheckSuite> out;
    for (std::size_t k = 0; k < checks.size(); ++k) {
        if (scope != "all" && scope != checks[k].first)
            continue;
        Rng rng(mix_seed({seed, k}));
        out.push_back(checks[k].second(configurations, rng));
    }
    return out;
}

GradcheckSuite check_network(const Network<double>& net, int configurations, std::uint64_t seed) {
    if (configurations < 1)
        throw InvalidInput("gradcheck: need at least one configuration");
    Tracker t{{"network_backprop", "network", 0, 0.0, kChainTolerance}};
    Rng rng(seed);
    for (int c = 0; c < configurations; ++c)
        add_network_case(t, net, rng, 400);
    return t.suite;
}

} // namespace ordinal
