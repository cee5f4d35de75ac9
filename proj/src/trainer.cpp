#include "ordinal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "ordinal/random.hpp"

namespace ordinal {

namespace {

struct TaskName {
    Task task;
    const char* name;
};

constexpr TaskName kTaskNames[] = {
    {Task::depth_ordinal, "depth-ordinal"}, {Task::depth_regression, "depth-regression"},
    {Task::coords_weak, "coords-weak"},     {Task::coords_full, "coords-full"},
    {Task::volume_weak, "volume-weak"},     {Task::volume_full, "volume-full"},
    {Task::mixed, "mixed"},                 {Task::end_to_end, "end-to-end"},
};

bool is_weak(Task t) {
    return t == Task::depth_ordinal || t == Task::coords_weak || t == Task::volume_weak;
}

int output_dim(Representation r, int joints, const GridShape& grid) {
    switch (r) {
    case Representation::depth:
        return joints;
    case Representation::coords:
        return 3 * joints;
    case Representation::volume:
        return grid.voxels() * joints;
    }
    return 0;
}

Pose2D keypoints_from_flat(const Eigen::Ref<const Vec<double>>& v, Eigen::Index joints) {
    Pose2D kp(joints, 2);
    for (Eigen::Index n = 0; n < joints; ++n) {
        kp(n, 0) = v(2 * n);
        kp(n, 1) = v(2 * n + 1);
    }
    return kp;
}

void keypoints_to_flat(const Pose2D& kp, Eigen::Ref<Vec<double>> v) {
    for (Eigen::Index n = 0; n < kp.rows(); ++n) {
        v(2 * n) = kp(n, 0);
        v(2 * n + 1) = kp(n, 1);
    }
}

struct Normalization2D {
    Eigen::Vector2d center;
    double diagonal;
};

Normalization2D normalization_of(const Pose2D& px) {
    const Eigen::Vector2d extent = (px.colwise().maxCoeff() - px.colwise().minCoeff()).transpose();
    const double diag = extent.norm();
    if (!(diag > 0.0))
        throw DataError("sample keypoints collapse to a point");
    return {px.colwise().mean().transpose(), diag};
}

VolumeScores<double> scores_view(const Vec<double>& output, const VolumeLayout& layout,
                                 Eigen::Index joints) {
    VolumeScores<double> s;
    s.shape = layout.shape;
    s.grid = Eigen::Map<const Mat<double>>(output.data(), layout.shape.voxels(), joints);
    s.axis_coords = layout.axis_coords;
    return s;
}

PoseDistribution distribution_for(const ExperimentConfig& cfg) {
    PoseDistribution dist = default_distribution();
    dist.perturbation_sigma_deg = cfg.perturbation_sigma_deg;
    dist.global_rotation_range = cfg.yaw_range_deg;
    return dist;
}

std::vector<double> average_ranks(const DepthVector& v) {
    std::vector<int> idx(static_cast<std::size_t>(v.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a) < v(b); });
    std::vector<double> ranks(idx.size());
    std::size_t k = 0;
    while (k < idx.size()) {
        std::size_t e = k;
        while (e + 1 < idx.size() && v(idx[e + 1]) == v(idx[k]))
            ++e;
        const double r = 0.5 * static_cast<double>(k + e);
        for (std::size_t m = k; m <= e; ++m)
            ranks[static_cast<std::size_t>(idx[m])] = r;
        k = e + 1;
    }
    return ranks;
}

json log_to_json(const std::vector<LossLogEntry>& log) {
    json out = json::array();
    for (const auto& e : log)
        out.push_back({e.step, e.loss});
    return out;
}

std::vector<LossLogEntry> log_from_json(const json& j) {
    std::vector<LossLogEntry> out;
    for (const auto& e : j)
        out.push_back({e.at(0).get<long>(), e.at(1).get<double>()});
    return out;
}

std::string reduction_name(Reduction r) { return r == Reduction::sum ? "sum" : "mean"; }

Reduction reduction_from_string(const std::string& s) {
    if (s == "sum")
        return Reduction::sum;
    if (s == "mean")
        return Reduction::mean;
    throw InvalidInput("reduction must be 'sum' or 'mean', got '" + s + "'");
}

json layout_to_json(const VolumeLayout& l) {
    return {{"grid", {l.shape.width, l.shape.height, l.shape.depth}},
            {"extent", l.extent},
            {"sigma_bins", l.sigma_bins},
            {"axis_coords", std::vector<double>(l.axis_coords.data(),
                                                l.axis_coords.data() + l.axis_coords.size())}};
}

VolumeLayout layout_from_json(const json& j) {
    VolumeLayout l;
    const auto g = j.at("grid").get<std::vector<int>>();
    if (g.size() != 3)
        throw DataError("volume layout: grid needs three dimensions");
    l.shape = {g[0], g[1], g[2]};
    l.extent = j.at("extent").get<double>();
    l.sigma_bins = j.at("sigma_bins").get<double>();
    const auto axis = j.at("axis_coords").get<std::vector<double>>();
    l.axis_coords = Eigen::Map<const Vec<double>>(axis.data(), static_cast<Eigen::Index>(axis.size()));
    return l;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

std::string to_string(Task t) {
    for (const auto& tn : kTaskNames)
        if (tn.task == t)
            return tn.name;
    return "?";
}

Task task_from_string(const std::string& s) {
    for (const auto& tn : kTaskNames)
        if (s == tn.name)
            return tn.task;
    throw InvalidInput("unknown task '" + s + "'");
}

std::string to_string(Representation r) {
    switch (r) {
    case Representation::depth:
        return "depth";
    case Representation::coords:
        return "coords";
    case Representation::volume:
        return "volume";
    }
    return "?";
}

Representation representation_from_string(const std::string& s) {
    if (s == "depth")
        return Representation::depth;
    if (s == "coords")
        return Representation::coords;
    if (s == "volume")
        return Representation::volume;
    throw InvalidInput("unknown representation '" + s + "'");
}

Pose2D VolumeLayout::to_bins(const Pose2D& normalized) const {
    Pose2D b(normalized.rows(), 2);
    b.col(0) = ((normalized.col(0).array() + extent) / (2.0 * extent) * shape.width - 0.5).matrix();
    b.col(1) = ((normalized.col(1).array() + extent) / (2.0 * extent) * shape.height - 0.5).matrix();
    return b;
}

Pose2D VolumeLayout::from_bins(const Pose2D& bins) const {
    Pose2D n(bins.rows(), 2);
    n.col(0) = ((bins.col(0).array() + 0.5) / shape.width * (2.0 * extent) - extent).matrix();
    n.col(1) = ((bins.col(1).array() + 0.5) / shape.height * (2.0 * extent) - extent).matrix();
    return n;
}

SampleLoss mixed_batch_loss(const Vec<double>& output, const TrainSample& sample,
                            SupervisionMode mode, const LossSettings& settings) {
    const Eigen::Index n = sample.keypoints.rows();
    if (mode == SupervisionMode::full && !sample.depths)
        throw DataError("full supervision needs metric depth targets");
    if (mode == SupervisionMode::weak && !sample.relations)
        throw DataError("weak supervision needs a relation set");
    const auto expected = output_dim(settings.representation, static_cast<int>(n),
                                     settings.volume.shape);
    if (output.size() != expected)
        throw DimensionError("mixed_batch_loss: output has " + std::to_string(output.size()) +
                             " entries, expected " + std::to_string(expected));

    SampleLoss out;
    switch (settings.representation) {
    case Representation::depth: {
        if (mode == SupervisionMode::weak) {
            auto r = rank_loss(output, *sample.relations, settings.reduction);
            out.loss = r.loss;
            out.grad = std::move(r.grad);
        } else {
            const Vec<double> d = output - *sample.depths;
            out.loss = d.squaredNorm();
            out.grad = 2.0 * d;
        }
        break;
    }
    case Representation::coords: {
        const Pose2D pred2d = keypoints_from_flat(output.head(2 * n), n);
        const Vec<double> z = output.tail(n);
        out.grad.resize(output.size());
        if (mode == SupervisionMode::weak) {
            auto w = combined_weak_loss(z, *sample.relations, pred2d, sample.keypoints, {},
                                        settings.lambda, settings.reduction);
            out.loss = w.loss;
            keypoints_to_flat(w.grad_keypoints, out.grad.head(2 * n));
            out.grad.tail(n) = w.grad_depth;
        } else {
            Pose3D pred(n, 3), gt(n, 3);
            pred << pred2d, z;
            gt << sample.keypoints, *sample.depths;
            auto l = l3d_loss(pred, gt);
            out.loss = l.loss;
            keypoints_to_flat(l.grad.leftCols<2>(), out.grad.head(2 * n));
            out.grad.tail(n) = l.grad.col(2);
        }
        break;
    }
    case Representation::volume: {
        const auto& layout = settings.volume;
        const auto scores = scores_view(output, layout, n);
        const auto targets = make_heatmap_targets<double>(layout.to_bins(sample.keypoints),
                                                          layout.shape, layout.sigma_bins);
        auto l = mode == SupervisionMode::weak
                     ? volumetric_weak_loss(scores, *sample.relations, targets, settings.lambda,
                                            settings.reduction)
                     : volumetric_full_loss(scores, *sample.depths, targets, settings.lambda);
        out.loss = l.loss;
        out.grad = Eigen::Map<const Vec<double>>(l.grad.data(), l.grad.size());
        break;
    }
    }
    return out;
}

void ExperimentConfig::validate() const {
    if (pose_count < 2)
        throw InvalidInput("config: pose_count must be at least 2");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw InvalidInput("config: holdout_fraction must lie in (0, 1)");
    const auto n_test = static_cast<int>(std::lround(holdout_fraction * pose_count));
    if (n_test < 1 || n_test >= pose_count)
        throw InvalidInput("config: holdout leaves an empty train or test split");
    if (!(perturbation_sigma_deg >= 0.0) || !(yaw_range_deg.first <= yaw_range_deg.second))
        throw InvalidInput("config: bad pose distribution parameters");
    if (hidden < 1 || blocks < 0 || !(dropout >= 0.0 && dropout < 1.0))
        throw InvalidInput("config: bad network shape");
    if (batch_size < 1 || iterations < 0 || log_every < 1)
        throw InvalidInput("config: batch_size >= 1, iterations >= 0, log_every >= 1 required");
    if (!(optimizer.learning_rate > 0.0) || !(optimizer.smoothing >= 0.0 && optimizer.smoothing < 1.0) ||
        !(optimizer.epsilon > 0.0))
        throw InvalidInput("config: bad optimizer settings");
    if (!(tie_threshold_mm >= 0.0) || !(lambda >= 0.0))
        throw InvalidInput("config: tie threshold and lambda must be non-negative");
    if (grid.width < 1 || grid.height < 1 || grid.depth < 1 || !(heatmap_sigma > 0.0))
        throw InvalidInput("config: bad volume grid");
    if (!(full_fraction >= 0.0 && full_fraction <= 1.0))
        throw InvalidInput("config: full_fraction must lie in [0, 1]");
    if (depth_task == Task::mixed || depth_task == Task::end_to_end)
        throw InvalidInput("config: depth_task must be a single-supervision task");
    if (recon_poses < 1)
        throw InvalidInput("config: recon_poses must be positive");
    noise.validate();
}

json config_to_json(const ExperimentConfig& c) {
    return {{"task", to_string(c.task)},
            {"seed", c.seed},
            {"pose_count", c.pose_count},
            {"holdout_fraction", c.holdout_fraction},
            {"perturbation_sigma_deg", c.perturbation_sigma_deg},
            {"yaw_range_deg", {c.yaw_range_deg.first, c.yaw_range_deg.second}},
            {"hidden", c.hidden},
            {"blocks", c.blocks},
            {"dropout", c.dropout},
            {"learning_rate", c.optimizer.learning_rate},
            {"smoothing", c.optimizer.smoothing},
            {"epsilon", c.optimizer.epsilon},
            {"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"log_every", c.log_every},
            {"tie_threshold_mm", c.tie_threshold_mm},
            {"lambda", c.lambda},
            {"reduction", reduction_name(c.reduction)},
            {"grid", {c.grid.width, c.grid.height, c.grid.depth}},
            {"heatmap_sigma", c.heatmap_sigma},
            {"full_fraction", c.full_fraction},
            {"mixed_representation", to_string(c.mixed_representation)},
            {"depth_task", to_string(c.depth_task)},
            {"recon_poses", c.recon_poses},
            {"recon", recon_hyper_to_json(c.recon)},
            {"noise", noise_to_json(c.noise)}};
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object())
        throw DataError("experiment config must be a JSON object");
    static const std::set<std::string> known = {
        "task",          "seed",         "pose_count",      "holdout_fraction",
        "perturbation_sigma_deg",        "yaw_range_deg",   "hidden",
        "blocks",        "dropout",      "learning_rate",   "smoothing",
        "epsilon",       "batch_size",   "iterations",      "log_every",
        "tie_threshold_mm",              "lambda",          "reduction",
        "grid",          "heatmap_sigma", "full_fraction",  "mixed_representation",
        "depth_task",    "recon_poses",  "recon",           "noise"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw DataError("experiment config: unknown key '" + key + "'");
    ExperimentConfig c;
    try {
        if (j.contains("task"))
            c.task = task_from_string(j["task"].get<std::string>());
        c.seed = j.value("seed", c.seed);
        c.pose_count = j.value("pose_count", c.pose_count);
        c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
        c.perturbation_sigma_deg = j.value("perturbation_sigma_deg", c.perturbation_sigma_deg);
        if (j.contains("yaw_range_deg")) {
            const auto y = j["yaw_range_deg"].get<std::vector<double>>();
            if (y.size() != 2)
                throw DataError("experiment config: yaw_range_deg needs two values");
            c.yaw_range_deg = {y[0], y[1]};
        }
        c.hidden = j.value("hidden", c.hidden);
        c.blocks = j.value("blocks", c.blocks);
        c.dropout = j.value("dropout", c.dropout);
        c.optimizer.learning_rate = j.value("learning_rate", c.optimizer.learning_rate);
        c.optimizer.smoothing = j.value("smoothing", c.optimizer.smoothing);
        c.optimizer.epsilon = j.value("epsilon", c.optimizer.epsilon);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.iterations = j.value("iterations", c.iterations);
        c.log_every = j.value("log_every", c.log_every);
        c.tie_threshold_mm = j.value("tie_threshold_mm", c.tie_threshold_mm);
        c.lambda = j.value("lambda", c.lambda);
        if (j.contains("reduction"))
            c.reduction = reduction_from_string(j["reduction"].get<std::string>());
        if (j.contains("grid")) {
            const auto g = j["grid"].get<std::vector<int>>();
            if (g.size() != 3)
                throw DataError("experiment config: grid needs three dimensions");
            c.grid = {g[0], g[1], g[2]};
        }
        c.heatmap_sigma = j.value("heatmap_sigma", c.heatmap_sigma);
        c.full_fraction = j.value("full_fraction", c.full_fraction);
        if (j.contains("mixed_representation"))
            c.mixed_representation =
                representation_from_string(j["mixed_representation"].get<std::string>());
        if (j.contains("depth_task"))
            c.depth_task = task_from_string(j["depth_task"].get<std::string>());
        c.recon_poses = j.value("recon_poses", c.recon_poses);
        if (j.contains("recon"))
            c.recon = recon_hyper_from_json(j["recon"]);
        if (j.contains("noise"))
            c.noise = noise_from_json(j["noise"]);
    } catch (const json::exception& e) {
        throw DataError(std::string("experiment config: ") + e.what());
    } catch (const InvalidInput& e) {
        throw DataError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

Representation representation_of(const ExperimentConfig& cfg) {
    switch (cfg.task) {
    case Task::depth_ordinal:
    case Task::depth_regression:
        return Representation::depth;
    case Task::coords_weak:
    case Task::coords_full:
        return Representation::coords;
    case Task::volume_weak:
    case Task::volume_full:
        return Representation::volume;
    case Task::mixed:
        return cfg.mixed_representation;
    case Task::end_to_end: {
        ExperimentConfig inner = cfg;
        inner.task = cfg.depth_task;
        return representation_of(inner);
    }
    }
    return Representation::depth;
}

TrainSample make_sample(const Pose3D& pose, const Camera& cam, int root, double tie_threshold_mm) {
    const Pose2D px = project(pose, cam);
    const auto norm = normalization_of(px);
    TrainSample s;
    s.keypoints = (px.rowwise() - norm.center.transpose()) / norm.diagonal;
    s.input.resize(2 * pose.rows());
    keypoints_to_flat(s.keypoints, s.input);
    s.depths = ((pose.col(2).array() - pose(root, 2)) * (cam.scale / norm.diagonal)).matrix();
    s.relations = relations_from_depths(pose.col(2), tie_threshold_mm);
    return s;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
    cfg.validate();
    const PoseDistribution dist = distribution_for(cfg);
    const Camera cam = default_camera();
    const int root = dist.skeleton.root();
    auto poses = sample_poses(dist, cfg.pose_count, mix_seed({cfg.seed, 11}));
    const auto n_test = static_cast<std::size_t>(std::lround(cfg.holdout_fraction * cfg.pose_count));
    Dataset d;
    d.train_poses.assign(poses.begin(), poses.end() - static_cast<std::ptrdiff_t>(n_test));
    d.test_poses.assign(poses.end() - static_cast<std::ptrdiff_t>(n_test), poses.end());
    for (const auto& p : d.train_poses)
        d.train.push_back(make_sample(p, cam, root, cfg.tie_threshold_mm));
    for (const auto& p : d.test_poses)
        d.test.push_back(make_sample(p, cam, root, cfg.tie_threshold_mm));

    const Task task = cfg.task == Task::end_to_end ? cfg.depth_task : cfg.task;
    d.train_modes.assign(d.train.size(), is_weak(task) ? SupervisionMode::weak : SupervisionMode::full);
    if (task == Task::mixed) {
        std::vector<std::size_t> order(d.train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed({cfg.seed, 12}));
        for (std::size_t k = order.size(); k > 1; --k)
            std::swap(order[k - 1], order[uniform_index(rng, k)]);
        const auto n_full = static_cast<std::size_t>(
            std::lround(cfg.full_fraction * static_cast<double>(order.size())));
        std::fill(d.train_modes.begin(), d.train_modes.end(), SupervisionMode::weak);
        for (std::size_t k = 0; k < n_full; ++k)
            d.train_modes[order[k]] = SupervisionMode::full;
    }
    // Training samples carry only the supervision their mode allows.
    for (std::size_t k = 0; k < d.train.size(); ++k) {
        if (d.train_modes[k] == SupervisionMode::weak)
            d.train[k].depths.reset();
        else
            d.train[k].relations.reset();
    }
    return d;
}

Checkpoint model_checkpoint(const TrainedModel& model, long step) {
    json extra = {{"kind", "experiment"},
                  {"task", to_string(model.task)},
                  {"representation", to_string(model.settings.representation)},
                  {"lambda", model.settings.lambda},
                  {"reduction", reduction_name(model.settings.reduction)}};
    if (model.settings.representation == Representation::volume)
        extra["volume"] = layout_to_json(model.settings.volume);
    return make_checkpoint(model.net, step, std::move(extra));
}

TrainedModel model_from_checkpoint(const Checkpoint& ckpt) {
    TrainedModel m;
    try {
        if (ckpt.extra.value("kind", "") != "experiment")
            throw DataError("checkpoint does not hold an experiment model");
        m.task = task_from_string(ckpt.extra.at("task").get<std::string>());
        m.settings.representation =
            representation_from_string(ckpt.extra.at("representation").get<std::string>());
        m.settings.lambda = ckpt.extra.at("lambda").get<double>();
        m.settings.reduction = reduction_from_string(ckpt.extra.at("reduction").get<std::string>());
        if (m.settings.representation == Representation::volume)
            m.settings.volume = layout_from_json(ckpt.extra.at("volume"));
    } catch (const json::exception& e) {
        throw DataError(std::string("experiment checkpoint: ") + e.what());
    } catch (const InvalidInput& e) {
        throw DataError(std::string("experiment checkpoint: ") + e.what());
    }
    m.net = network_from_checkpoint(ckpt);
    return m;
}

Prediction predict(const TrainedModel& model, const TrainSample& sample) {
    const Eigen::Index n = sample.keypoints.rows();
    const Vec<double> out = model.net.forward(sample.input);
    Prediction p;
    switch (model.settings.representation) {
    case Representation::depth:
        p.depths = out;
        p.keypoints = sample.keypoints;
        break;
    case Representation::coords:
        p.keypoints = keypoints_from_flat(out.head(2 * n), n);
        p.depths = out.tail(n);
        break;
    case Representation::volume: {
        const auto& layout = model.settings.volume;
        const auto vol = volume_softmax(scores_view(out, layout, n));
        p.depths = soft_depths(marginal_depth(vol), layout.axis_coords);
        const Mat<double> m2 = marginal_2d(vol);
        Pose2D bins(n, 2);
        for (Eigen::Index j = 0; j < n; ++j) {
            double ex = 0.0, ey = 0.0;
            for (int y = 0; y < layout.shape.height; ++y)
                for (int x = 0; x < layout.shape.width; ++x) {
                    const double w = m2(x + layout.shape.width * y, j);
                    ex += w * x;
                    ey += w * y;
                }
            bins(j, 0) = ex;
            bins(j, 1) = ey;
        }
        p.keypoints = layout.from_bins(bins);
        break;
    }
    }
    return p;
}

PairCount ordinal_agreement(const DepthVector& pred, const DepthVector& gt, double threshold) {
    if (pred.size() != gt.size())
        throw DimensionError("ordinal_agreement: sizes differ");
    PairCount c;
    for (Eigen::Index i = 0; i < gt.size(); ++i)
        for (Eigen::Index j = i + 1; j < gt.size(); ++j) {
            const double d = gt(i) - gt(j);
            if (d == 0.0 || std::abs(d) < threshold)
                continue;
            ++c.total;
            const double dp = pred(i) - pred(j);
            if ((d < 0.0 && dp < 0.0) || (d > 0.0 && dp > 0.0))
                ++c.correct;
        }
    return c;
}

double spearman(const DepthVector& a, const DepthVector& b) {
    if (a.size() != b.size())
        throw DimensionError("spearman: sizes differ");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(ra.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < ra.size(); ++k) {
        sab += (ra[k] - ma) * (rb[k] - mb);
        saa += (ra[k] - ma) * (ra[k] - ma);
        sbb += (rb[k] - mb) * (rb[k] - mb);
    }
    if (saa == 0.0 || sbb == 0.0)
        return 0.0;
    return sab / std::sqrt(saa * sbb);
}

Pose3D metric_pose(const Prediction& pred, const Pose3D& pose, const Camera& cam, int root,
                   bool use_predicted_keypoints) {
    const Pose2D px = project(pose, cam);
    const auto norm = normalization_of(px);
    const Pose2D kp_px = use_predicted_keypoints
                             ? Pose2D((pred.keypoints * norm.diagonal).rowwise() +
                                      norm.center.transpose())
                             : px;
    const DepthVector z = pred.depths * (norm.diagonal / cam.scale);
    return root_relative(back_project(kp_px, z, cam), root);
}

EvalReport evaluate(const TrainedModel& model, const Dataset& data, const ExperimentConfig& cfg) {
    const Camera cam = default_camera();
    const int root = default_skeleton().root();
    const bool own_keypoints = model.settings.representation != Representation::depth;
    EvalReport r;
    r.task = to_string(cfg.task);
    r.seed = cfg.seed;
    r.config = config_to_json(cfg);
    r.metric_supervision = !is_weak(model.task);
    PairCount pc;
    double rho = 0.0, err = 0.0, perr = 0.0;
    for (std::size_t k = 0; k < data.test.size(); ++k) {
        const Pose3D& pose = data.test_poses[k];
        const Prediction p = predict(model, data.test[k]);
        const auto c = ordinal_agreement(p.depths, pose.col(2), cfg.tie_threshold_mm);
        pc.correct += c.correct;
        pc.total += c.total;
        rho += spearman(p.depths, pose.col(2));
        const Pose3D est = metric_pose(p, pose, cam, root, own_keypoints);
        const Pose3D gt = root_relative(pose, root);
        err += mpjpe(est, gt);
        perr += procrustes_align(est, gt).error;
    }
    const auto n = static_cast<double>(data.test.size());
    r.ordinal_accuracy = pc.total ? static_cast<double>(pc.correct) / static_cast<double>(pc.total) : 1.0;
    r.spearman_rho = rho / n;
    r.mpjpe = err / n;
    r.procrustes_error = perr / n;
    if (!r.metric_supervision)
        r.note = "ordinal supervision fixes depth only up to shift and scale; mpjpe and "
                 "procrustes_error are not comparable with metric-supervised runs";
    return r;
}

TrainResult train_model(const ExperimentConfig& cfg, const Dataset& data) {
    if (data.train.empty())
        throw DataError("train_model: empty training split");
    const auto joints = static_cast<int>(data.train.front().keypoints.rows());
    TrainResult res;
    TrainedModel& model = res.model;
    model.task = cfg.task == Task::end_to_end ? cfg.depth_task : cfg.task;
    model.settings.lambda = cfg.lambda;
    model.settings.reduction = cfg.reduction;
    model.settings.representation = representation_of(cfg);
    if (model.settings.representation == Representation::volume) {
        double lo = 0.0, hi = 0.0;
        bool first = true;
        for (const auto& p : data.train_poses) {
            const Pose2D px = project(p, default_camera());
            const double f = default_camera().scale / normalization_of(px).diagonal;
            const double root_z = p(default_skeleton().root(), 2);
            for (Eigen::Index j = 0; j < p.rows(); ++j) {
                const double t = (p(j, 2) - root_z) * f;
                lo = first ? t : std::min(lo, t);
                hi = first ? t : std::max(hi, t);
                first = false;
            }
        }
        const double pad = 0.1 * (hi - lo);
        model.settings.volume.shape = cfg.grid;
        model.settings.volume.sigma_bins = cfg.heatmap_sigma;
        model.settings.volume.axis_coords = uniform_axis(lo - pad, hi + pad, cfg.grid.depth);
    }
    const int out_dim = output_dim(model.settings.representation, joints, cfg.grid);
    model.net = Network<double>::initialized(
        residual_mlp(2 * joints, cfg.hidden, out_dim, cfg.blocks, cfg.dropout),
        mix_seed({cfg.seed, 21}));

    const std::size_t monitor_size = std::min<std::size_t>(64, data.train.size());
    Mat<double> monitor_x(2 * joints, static_cast<Eigen::Index>(monitor_size));
    for (std::size_t k = 0; k < monitor_size; ++k)
        monitor_x.col(static_cast<Eigen::Index>(k)) = data.train[k].input;
    auto monitor = [&](long step) {
        const Mat<double> out = model.net.forward(monitor_x);
        double total = 0.0;
        for (std::size_t k = 0; k < monitor_size; ++k)
            total += mixed_batch_loss(out.col(static_cast<Eigen::Index>(k)), data.train[k],
                                      data.train_modes[k], model.settings)
                         .loss;
        const double loss = total / static_cast<double>(monitor_size);
        if (!std::isfinite(loss))
            throw TrainingError("training loss is not finite", step);
        res.loss_log.push_back({step, loss});
    };

    Rng batch_rng(mix_seed({cfg.seed, 22}));
    Rng dropout_rng(mix_seed({cfg.seed, 23}));
    OptimizerState<double> opt{cfg.optimizer, {}, 0};
    Network<double>::Cache cache;
    const auto b = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> idx(b);
    Mat<double> x(2 * joints, cfg.batch_size);
    Mat<double> grad(out_dim, cfg.batch_size);

    monitor(0);
    for (long step = 0; step < cfg.iterations; ++step) {
        for (std::size_t k = 0; k < b; ++k) {
            idx[k] = static_cast<std::size_t>(uniform_index(batch_rng, data.train.size()));
            x.col(static_cast<Eigen::Index>(k)) = data.train[idx[k]].input;
        }
        const Mat<double> out = model.net.forward(x, &cache, &dropout_rng);
        for (std::size_t k = 0; k < b; ++k) {
            const auto c = static_cast<Eigen::Index>(k);
            auto sl = mixed_batch_loss(out.col(c), data.train[idx[k]], data.train_modes[idx[k]],
                                       model.settings);
            if (!std::isfinite(sl.loss))
                throw TrainingError("training loss is not finite", step);
            grad.col(c) = sl.grad / static_cast<double>(b);
        }
        const auto g = model.net.backward(cache, grad);
        rmsprop_step(opt, model.net.mutable_params(), g.params);
        if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.iterations)
            monitor(step + 1);
    }
    return res;
}

EvalReport end_to_end_eval(const TrainedModel& depth_model, const ReconModel& recon,
                           const std::vector<Pose3D>& testset, const ExperimentConfig& cfg) {
    if (testset.empty())
        throw DataError("end_to_end_eval: empty test set");
    const auto joints = testset.front().rows();
    if (recon.joint_count() != joints || depth_model.net.input_dim() != 2 * joints)
        throw DataError("end_to_end_eval: checkpoint joint count does not match the skeleton");
    const Camera cam = default_camera();
    const int root = default_skeleton().root();
    const bool own_keypoints = depth_model.settings.representation != Representation::depth;

    EvalReport r;
    r.task = to_string(Task::end_to_end);
    r.seed = cfg.seed;
    r.config = config_to_json(cfg);
    r.metric_supervision = !is_weak(depth_model.task);
    PairCount pc;
    double rho = 0.0, e_with = 0.0, e_without = 0.0, p_with = 0.0, p_without = 0.0;
    for (const auto& pose : testset) {
        const TrainSample s = make_sample(pose, cam, root, cfg.tie_threshold_mm);
        const Prediction p = predict(depth_model, s);
        const auto c = ordinal_agreement(p.depths, pose.col(2), cfg.tie_threshold_mm);
        pc.correct += c.correct;
        pc.total += c.total;
        rho += spearman(p.depths, pose.col(2));

        const Pose3D gt = root_relative(pose, root);
        const Pose3D without = metric_pose(p, pose, cam, root, own_keypoints);
        const auto norm = normalization_of(project(pose, cam));
        const Pose2D kp_px = own_keypoints ? Pose2D((p.keypoints * norm.diagonal).rowwise() +
                                                    norm.center.transpose())
                                           : project(pose, cam);
        const Pose3D with = reconstruct(recon, normalize_input(kp_px, p.depths).first);
        e_without += mpjpe(without, gt);
        e_with += mpjpe(with, gt);
        p_without += procrustes_align(without, gt).error;
        p_with += procrustes_align(with, gt).error;
    }
    const auto n = static_cast<double>(testset.size());
    r.ordinal_accuracy = pc.total ? static_cast<double>(pc.correct) / static_cast<double>(pc.total) : 1.0;
    r.spearman_rho = rho / n;
    r.mpjpe = e_with / n;
    r.procrustes_error = p_with / n;
    r.mpjpe_without_reconstruction = e_without / n;
    r.procrustes_without_reconstruction = p_without / n;
    r.note = "mpjpe and procrustes_error include the reconstruction stage; the *_without_"
             "reconstruction fields back-project the depth network's outputs directly";
    return r;
}

ExperimentArtifacts run_experiment_full(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset data = build_dataset(cfg);
    TrainResult trained = train_model(cfg, data);
    if (cfg.task != Task::end_to_end) {
        EvalReport r = evaluate(trained.model, data, cfg);
        r.loss_log = std::move(trained.loss_log);
        return {std::move(r), std::move(trained.model), std::nullopt};
    }
    const PoseDistribution dist = distribution_for(cfg);
    const auto mocap = sample_poses(dist, cfg.recon_poses, mix_seed({cfg.seed, 31}));
    ReconHyper hyper = cfg.recon;
    hyper.seed = mix_seed({cfg.seed, 32, cfg.recon.seed});
    ReconTraining recon =
        train_reconstruction(mocap, dist.skeleton.root(), default_camera(), cfg.noise, hyper);
    EvalReport r = end_to_end_eval(trained.model, recon.model, data.test_poses, cfg);
    r.loss_log = std::move(trained.loss_log);
    r.reconstruction_loss_log = std::move(recon.loss_log);
    return {std::move(r), std::move(trained.model), std::move(recon.model)};
}

EvalReport run_experiment(const ExperimentConfig& cfg) { return run_experiment_full(cfg).report; }

json report_to_json(const EvalReport& r) {
    json j = {{"task", r.task},
              {"seed", r.seed},
              {"ordinal_accuracy", r.ordinal_accuracy},
              {"spearman_rho", r.spearman_rho},
              {"mpjpe", r.mpjpe},
              {"procrustes_error", r.procrustes_error},
              {"metric_supervision", r.metric_supervision},
              {"loss_log", log_to_json(r.loss_log)},
              {"note", r.note},
              {"config", r.config}};
    if (r.mpjpe_without_reconstruction)
        j["mpjpe_without_reconstruction"] = *r.mpjpe_without_reconstruction;
    if (r.procrustes_without_reconstruction)
        j["procrustes_without_reconstruction"] = *r.procrustes_without_reconstruction;
    if (r.reconstruction_loss_log)
        j["reconstruction_loss_log"] = log_to_json(*r.reconstruction_loss_log);
    return j;
}

EvalReport report_from_json(const json& j) {
    EvalReport r;
    try {
        r.task = j.at("task").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.ordinal_accuracy = j.at("ordinal_accuracy").get<double>();
        r.spearman_rho = j.at("spearman_rho").get<double>();
        r.mpjpe = j.at("mpjpe").get<double>();
        r.procrustes_error = j.at("procrustes_error").get<double>();
        r.metric_supervision = j.at("metric_supervision").get<bool>();
        r.loss_log = log_from_json(j.at("loss_log"));
        r.note = j.value("note", "");
        r.config = j.value("config", json::object());
        if (j.contains("mpjpe_without_reconstruction"))
            r.mpjpe_without_reconstruction = j["mpjpe_without_reconstruction"].get<double>();
        if (j.contains("procrustes_without_reconstruction"))
            r.procrustes_without_reconstruction = j["procrustes_without_reconstruction"].get<double>();
        if (j.contains("reconstruction_loss_log"))
            r.reconstruction_loss_log = log_from_json(j["reconstruction_loss_log"]);
    } catch (const json::exception& e) {
        throw DataError(std::string("report JSON: ") + e.what());
    }
    if (!(r.ordinal_accuracy >= 0.0 && r.ordinal_accuracy <= 1.0) ||
        !(r.spearman_rho >= -1.0 && r.spearman_rho <= 1.0))
        throw DataError("report JSON: metric out of range");
    return r;
}

std::string report_csv_header() {
    return "task,seed,ordinal_accuracy,spearman_rho,mpjpe,procrustes_error,"
           "mpjpe_without_reconstruction,procrustes_without_reconstruction,final_loss";
}

std::string report_csv_row(const EvalReport& r) {
    std::string row = r.task + "," + std::to_string(r.seed) + "," + fmt(r.ordinal_accuracy) + "," +
                      fmt(r.spearman_rho) + "," + fmt(r.mpjpe) + "," + fmt(r.procrustes_error) + ",";
    row += (r.mpjpe_without_reconstruction ? fmt(*r.mpjpe_without_reconstruction) : "") + ",";
    row += (r.procrustes_without_reconstruction ? fmt(*r.procrustes_without_reconstruction) : "") + ",";
    row += r.loss_log.empty() ? "" : fmt(r.loss_log.back().loss);
    return row;
}

} // namespace ordinal
