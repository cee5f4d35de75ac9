#include "ordinal/reconstruction.hpp"

#include <algorithm>
#include <cmath>

#include "ordinal/random.hpp"

namespace ordinal {

namespace {

Vec<double> flatten(const Pose3D& pose) {
    Vec<double> v(pose.rows() * 3);
    for (Eigen::Index n = 0; n < pose.rows(); ++n)
        for (int c = 0; c < 3; ++c)
            v(3 * n + c) = pose(n, c);
    return v;
}

Pose3D unflatten(const Eigen::Ref<const Vec<double>>& v) {
    Pose3D pose(v.size() / 3, 3);
    for (Eigen::Index n = 0; n < pose.rows(); ++n)
        for (int c = 0; c < 3; ++c)
            pose(n, c) = v(3 * n + c);
    return pose;
}

json pair_to_json(const std::pair<double, double>& p) { return json::array({p.first, p.second}); }

std::pair<double, double> pair_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2)
        throw DataError("expected a [lo, hi] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

json vec_to_json(const Vec<double>& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vec<double> vec_from_json(const json& j) {
    const auto raw = j.get<std::vector<double>>();
    return Eigen::Map<const Vec<double>>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

struct Sample {
    Pose2D keypoints;
    DepthVector depths;
    Vec<double> target;  // flattened root-relative pose
};

Sample make_sample(const Pose3D& pose, int root, const Camera& cam) {
    return {project(pose, cam), pose.col(2), flatten(root_relative(pose, root))};
}

Mat<double> noisy_inputs(const std::vector<Sample>& data, const std::vector<std::size_t>& idx,
                         const NoiseConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    const auto n = data.front().keypoints.rows();
    Mat<double> x(3 * n, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& s = data[idx[k]];
        const auto noisy = simulate_noisy_depths(s.depths, cfg, seeds[k]);
        x.col(static_cast<Eigen::Index>(k)) = input_features(normalize_input(s.keypoints, noisy).first);
    }
    return x;
}

double batch_l3d(const ReconModel& model, const Mat<double>& out, const Mat<double>& targets) {
    const Mat<double> pose =
        (out.array().colwise() * model.output_std.array()).colwise() + model.output_mean.array();
    return (pose - targets).squaredNorm() / static_cast<double>(out.cols());
}

} // namespace

void NoiseConfig::validate() const {
    if (!(global_scale_range.first > 0.0 && global_scale_range.first <= global_scale_range.second))
        throw InvalidInput("noise: global scale range must be a nonempty interval of positive reals");
    if (!(global_offset_range.first <= global_offset_range.second))
        throw InvalidInput("noise: global offset range is empty");
    if (!(jitter_sigma_frac >= 0.0 && jitter_sigma_frac < 1.0))
        throw InvalidInput("noise: jitter_sigma_frac must lie in [0, 1)");
}

json noise_to_json(const NoiseConfig& cfg) {
    return {{"global_scale_range", pair_to_json(cfg.global_scale_range)},
            {"global_offset_range", pair_to_json(cfg.global_offset_range)},
            {"jitter_sigma_frac", cfg.jitter_sigma_frac}};
}

NoiseConfig noise_from_json(const json& j) {
    NoiseConfig cfg;
    try {
        if (j.contains("global_scale_range"))
            cfg.global_scale_range = pair_from_json(j["global_scale_range"]);
        if (j.contains("global_offset_range"))
            cfg.global_offset_range = pair_from_json(j["global_offset_range"]);
        cfg.jitter_sigma_frac = j.value("jitter_sigma_frac", cfg.jitter_sigma_frac);
    } catch (const json::exception& e) {
        throw DataError(std::string("noise config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

DepthVector simulate_noisy_depths(const DepthVector& gt_depths, const NoiseConfig& cfg,
                                  std::uint64_t seed) {
    cfg.validate();
    if (gt_depths.size() == 0)
        return gt_depths;
    if (!gt_depths.allFinite())
        throw InvalidInput("simulate_noisy_depths: non-finite depth");
    Rng rng(seed);
    const double range = gt_depths.maxCoeff() - gt_depths.minCoeff();
    const double a = uniform(rng, cfg.global_scale_range.first, cfg.global_scale_range.second);
    const double b =
        range * uniform(rng, cfg.global_offset_range.first, cfg.global_offset_range.second);
    const double sigma = cfg.jitter_sigma_frac * range;
    DepthVector out(gt_depths.size());
    for (Eigen::Index n = 0; n < out.size(); ++n) {
        const double eta = sigma > 0.0 ? sigma * standard_normal(rng) : 0.0;
        out(n) = a * gt_depths(n) + b + eta;
    }
    return out;
}

double preserved_fraction(const DepthVector& gt, const DepthVector& noisy, double threshold_mm) {
    if (gt.size() != noisy.size())
        throw DimensionError("preserved_fraction: sizes differ");
    long strict = 0;
    long kept = 0;
    for (Eigen::Index i = 0; i < gt.size(); ++i)
        for (Eigen::Index j = i + 1; j < gt.size(); ++j) {
            const double d = gt(i) - gt(j);
            if (d == 0.0 || std::abs(d) < threshold_mm)
                continue;
            ++strict;
            const double dn = noisy(i) - noisy(j);
            if ((d < 0.0 && dn < 0.0) || (d > 0.0 && dn > 0.0))
                ++kept;
        }
    return strict == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(strict);
}

std::pair<ReconInput, InputNormalization> normalize_input(const Pose2D& keypoints,
                                                          const DepthVector& depths) {
    if (keypoints.rows() != depths.size())
        throw DimensionError("normalize_input: keypoint and depth counts differ");
    if (keypoints.rows() == 0 || !keypoints.allFinite() || !depths.allFinite())
        throw InvalidInput("normalize_input: empty or non-finite input");
    InputNormalization norm;
    norm.center = keypoints.colwise().mean().transpose();
    const Eigen::Vector2d extent =
        (keypoints.colwise().maxCoeff() - keypoints.colwise().minCoeff()).transpose();
    norm.diagonal = extent.norm();
    if (!(norm.diagonal > 0.0))
        throw InvalidInput("normalize_input: keypoints collapse to a point");
    norm.depth_mean = depths.mean();
    const double var = (depths.array() - norm.depth_mean).square().mean();
    norm.depth_std = var > 0.0 ? std::sqrt(var) : 1.0;

    ReconInput in;
    in.keypoints = (keypoints.rowwise() - norm.center.transpose()) / norm.diagonal;
    in.depths = (depths.array() - norm.depth_mean) / norm.depth_std;
    in.normalized = true;
    return {std::move(in), norm};
}

ReconInput denormalize_input(const ReconInput& in, const InputNormalization& norm) {
    if (!in.normalized)
        throw ContractViolation("denormalize_input: input is not normalized");
    ReconInput out;
    out.keypoints = (in.keypoints * norm.diagonal).rowwise() + norm.center.transpose();
    out.depths = (in.depths.array() * norm.depth_std + norm.depth_mean).matrix();
    out.normalized = false;
    return out;
}

Vec<double> input_features(const ReconInput& in) {
    const auto n = in.keypoints.rows();
    Vec<double> f(3 * n);
    for (Eigen::Index j = 0; j < n; ++j) {
        f(2 * j) = in.keypoints(j, 0);
        f(2 * j + 1) = in.keypoints(j, 1);
    }
    f.tail(n) = in.depths;
    return f;
}

json recon_hyper_to_json(const ReconHyper& h) {
    return {{"iterations", h.iterations},
            {"batch_size", h.batch_size},
            {"hidden", h.hidden},
            {"blocks", h.blocks},
            {"dropout", h.dropout},
            {"learning_rate", h.optimizer.learning_rate},
            {"smoothing", h.optimizer.smoothing},
            {"epsilon", h.optimizer.epsilon},
            {"seed", h.seed},
            {"log_every", h.log_every}};
}

ReconHyper recon_hyper_from_json(const json& j) {
    ReconHyper h;
    try {
        h.iterations = j.value("iterations", h.iterations);
        h.batch_size = j.value("batch_size", h.batch_size);
        h.hidden = j.value("hidden", h.hidden);
        h.blocks = j.value("blocks", h.blocks);
        h.dropout = j.value("dropout", h.dropout);
        h.optimizer.learning_rate = j.value("learning_rate", h.optimizer.learning_rate);
        h.optimizer.smoothing = j.value("smoothing", h.optimizer.smoothing);
        h.optimizer.epsilon = j.value("epsilon", h.optimizer.epsilon);
        h.seed = j.value("seed", h.seed);
        h.log_every = j.value("log_every", h.log_every);
    } catch (const json::exception& e) {
        throw DataError(std::string("reconstruction hyperparameters: ") + e.what());
    }
    if (h.iterations < 0 || h.batch_size < 1 || h.hidden < 1 || h.blocks < 0 || h.log_every < 1)
        throw InvalidInput("reconstruction hyperparameters out of range");
    return h;
}

ReconModel untrained_recon_model(const std::vector<Pose3D>& poses, int root, int hidden,
                                 int blocks, double dropout, std::uint64_t seed) {
    if (poses.empty())
        throw DataError("reconstruction: empty pose set");
    const auto n = poses.front().rows();
    if (root < 0 || root >= n)
        throw IndexError("reconstruction: root joint out of range");
    Mat<double> all(3 * n, static_cast<Eigen::Index>(poses.size()));
    for (std::size_t k = 0; k < poses.size(); ++k) {
        if (poses[k].rows() != n)
            throw DataError("reconstruction: poses differ in joint count");
        all.col(static_cast<Eigen::Index>(k)) = flatten(root_relative(poses[k], root));
    }
    ReconModel model;
    model.root = root;
    model.output_mean = all.rowwise().mean();
    const Mat<double> centered = all.colwise() - model.output_mean;
    model.output_std =
        (centered.array().square().rowwise().sum() / static_cast<double>(all.cols())).sqrt();
    for (Eigen::Index k = 0; k < model.output_std.size(); ++k)
        if (!(model.output_std(k) > 1e-9))
            model.output_std(k) = 1.0;
    const int dim = static_cast<int>(3 * n);
    model.net = Network<double>(residual_mlp(dim, hidden, dim, blocks, dropout));
    model.net.set_seed(seed);
    return model;
}

ReconTraining train_reconstruction(const std::vector<Pose3D>& mocap, int root, const Camera& cam,
                                   const NoiseConfig& cfg, const ReconHyper& hyper) {
    cfg.validate();
    if (hyper.batch_size < 1 || hyper.iterations < 0 || hyper.log_every < 1)
        throw InvalidInput("train_reconstruction: bad hyperparameters");
    ReconTraining result;
    result.model = untrained_recon_model(mocap, root, hyper.hidden, hyper.blocks, hyper.dropout,
                                         hyper.seed);
    ReconModel& model = result.model;
    const std::uint64_t net_seed = mix_seed({hyper.seed, 0});
    model.net = Network<double>::initialized(model.net.spec(), net_seed);

    std::vector<Sample> data;
    data.reserve(mocap.size());
    for (const auto& p : mocap)
        data.push_back(make_sample(p, root, cam));

    // Fixed monitor batch with fixed noise, evaluated without dropout.
    const std::size_t monitor_size = std::min<std::size_t>(256, data.size());
    std::vector<std::size_t> monitor_idx(monitor_size);
    std::vector<std::uint64_t> monitor_seeds(monitor_size);
    Mat<double> monitor_targets(data.front().target.size(), static_cast<Eigen::Index>(monitor_size));
    for (std::size_t k = 0; k < monitor_size; ++k) {
        monitor_idx[k] = k;
        monitor_seeds[k] = mix_seed({hyper.seed, 4, k});
        monitor_targets.col(static_cast<Eigen::Index>(k)) = data[k].target;
    }
    const Mat<double> monitor_x = noisy_inputs(data, monitor_idx, cfg, monitor_seeds);
    auto monitor = [&](long step) {
        const double loss = batch_l3d(model, model.net.forward(monitor_x), monitor_targets);
        if (!std::isfinite(loss))
            throw TrainingError("reconstruction training diverged", step);
        result.loss_log.push_back({step, loss});
    };

    Rng batch_rng(mix_seed({hyper.seed, 1}));
    Rng dropout_rng(mix_seed({hyper.seed, 3}));
    OptimizerState<double> opt{hyper.optimizer, {}, 0};
    const auto b = static_cast<std::size_t>(hyper.batch_size);
    std::vector<std::size_t> idx(b);
    std::vector<std::uint64_t> seeds(b);
    Mat<double> targets(data.front().target.size(), hyper.batch_size);
    Network<double>::Cache cache;

    monitor(0);
    for (long step = 0; step < hyper.iterations; ++step) {
        for (std::size_t k = 0; k < b; ++k) {
            idx[k] = static_cast<std::size_t>(uniform_index(batch_rng, data.size()));
            seeds[k] = mix_seed({hyper.seed, 2, static_cast<std::uint64_t>(step), k});
            targets.col(static_cast<Eigen::Index>(k)) = data[idx[k]].target;
        }
        const Mat<double> x = noisy_inputs(data, idx, cfg, seeds);
        const Mat<double> out = model.net.forward(x, &cache, &dropout_rng);
        const Mat<double> pose =
            (out.array().colwise() * model.output_std.array()).colwise() +
            model.output_mean.array();
        const Mat<double> diff = pose - targets;
        if (!diff.allFinite())
            throw TrainingError("reconstruction training produced a non-finite loss", step);
        const Mat<double> grad_out = (2.0 / static_cast<double>(b)) *
                                     (diff.array().colwise() * model.output_std.array()).matrix();
        const auto grads = model.net.backward(cache, grad_out);
        rmsprop_step(opt, model.net.mutable_params(), grads.params);
        if ((step + 1) % hyper.log_every == 0 || step + 1 == hyper.iterations)
            monitor(step + 1);
    }
    return result;
}

Pose3D reconstruct(const ReconModel& model, const ReconInput& input) {
    return reconstruct_batch(model, {input}).front();
}

std::vector<Pose3D> reconstruct_batch(const ReconModel& model, const std::vector<ReconInput>& inputs) {
    const auto n = model.joint_count();
    Mat<double> x(3 * n, static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& in = inputs[k];
        if (!in.normalized)
            throw ContractViolation("reconstruct: input is not normalized");
        if (in.keypoints.rows() != n || in.depths.size() != n)
            throw DimensionError("reconstruct: joint count does not match the model");
        // The flag alone is not trusted; the statistics must match too.
        const Eigen::Vector2d extent =
            (in.keypoints.colwise().maxCoeff() - in.keypoints.colwise().minCoeff()).transpose();
        const double var = in.depths.array().square().mean();
        if (in.keypoints.colwise().mean().norm() > 1e-6 || std::abs(extent.norm() - 1.0) > 1e-6 ||
            std::abs(in.depths.mean()) > 1e-6 || (var > 1e-12 && std::abs(var - 1.0) > 1e-6))
            throw ContractViolation("reconstruct: input statistics are not normalized");
        x.col(static_cast<Eigen::Index>(k)) = input_features(in);
    }
    const Mat<double> out = model.net.forward(x);
    std::vector<Pose3D> poses;
    poses.reserve(inputs.size());
    for (Eigen::Index k = 0; k < out.cols(); ++k)
        poses.push_back(unflatten(
            (out.col(k).array() * model.output_std.array() + model.output_mean.array()).matrix()));
    return poses;
}

Pose3D input_as_answer(const Pose2D& keypoints, const DepthVector& noisy_depths, const Camera& cam,
                       int root) {
    return root_relative(back_project(keypoints, noisy_depths, cam), root);
}

Checkpoint recon_checkpoint(const ReconModel& model, long step) {
    return make_checkpoint(model.net, step,
                           {{"kind", "reconstruction"},
                            {"root", model.root},
                            {"output_mean", vec_to_json(model.output_mean)},
                            {"output_std", vec_to_json(model.output_std)}});
}

ReconModel recon_model_from_checkpoint(const Checkpoint& ckpt) {
    ReconModel model;
    try {
        if (ckpt.extra.value("kind", "") != "reconstruction")
            throw DataError("checkpoint does not hold a reconstruction model");
        model.root = ckpt.extra.at("root").get<int>();
        model.output_mean = vec_from_json(ckpt.extra.at("output_mean"));
        model.output_std = vec_from_json(ckpt.extra.at("output_std"));
    } catch (const json::exception& e) {
        throw DataError(std::string("reconstruction checkpoint: ") + e.what());
    }
    model.net = network_from_checkpoint(ckpt);
    if (model.output_mean.size() != model.net.output_dim() ||
        model.output_std.size() != model.net.output_dim() ||
        model.net.input_dim() != model.net.output_dim())
        throw DataError("reconstruction checkpoint: statistics do not match the network");
    return model;
}

} // namespace ordinal
