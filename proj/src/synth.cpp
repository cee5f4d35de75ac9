#include "ordinal/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "ordinal/random.hpp"

namespace ordinal {

namespace {

constexpr double kPi = 3.14159265358979323846;

enum Joint : int {
    head,
    neck,
    r_shoulder,
    r_elbow,
    r_wrist,
    l_shoulder,
    l_elbow,
    l_wrist,
    r_hip,
    r_knee,
    r_ankle,
    l_hip,
    l_knee,
    l_ankle,
    joint_total
};

Skeleton make_lsp14() {
    Skeleton s;
    s.id = kDefaultSkeletonId;
    s.joint_names = {"head",    "neck",    "r_shoulder", "r_elbow", "r_wrist",
                     "l_shoulder", "l_elbow", "l_wrist", "r_hip",   "r_knee",
                     "r_ankle", "l_hip",   "l_knee",     "l_ankle"};
    s.parent = {neck,    neck,    neck,  r_shoulder, r_elbow, neck,  l_shoulder,
                l_elbow, neck,    r_hip, r_knee,     neck,    l_hip, l_knee};
    // Adult anthropometry (mm): head top above neck, neck to acromion, upper
    // arm, forearm, neck to hip joint, thigh, shank. Listed per non-root joint.
    s.bone_lengths = {230.0, 170.0, 290.0, 260.0, 170.0, 290.0, 260.0,
                      520.0, 430.0, 420.0, 520.0, 430.0, 420.0};
    s.validate();
    return s;
}

using Dirs = std::vector<Eigen::Vector3d>;

// Body frame while facing the camera: x toward the subject's left (image
// right), y down, z away from the camera, so the body's front is -z.
Dirs base_directions() {
    Dirs d(joint_total, Eigen::Vector3d::Zero());
    d[head] = {0.0, -1.0, -0.1};
    d[r_shoulder] = {-1.0, 0.15, 0.0};
    d[l_shoulder] = {1.0, 0.15, 0.0};
    d[r_elbow] = {-0.1, 1.0, 0.05};
    d[l_elbow] = {0.1, 1.0, 0.05};
    d[r_wrist] = {0.0, 1.0, -0.35};
    d[l_wrist] = {0.0, 1.0, -0.35};
    d[r_hip] = {-0.2, 1.0, 0.0};
    d[l_hip] = {0.2, 1.0, 0.0};
    d[r_knee] = {0.0, 1.0, -0.08};
    d[l_knee] = {0.0, 1.0, -0.08};
    d[r_ankle] = {0.0, 1.0, 0.12};
    d[l_ankle] = {0.0, 1.0, 0.12};
    return d;
}

Dirs standing() { return base_directions(); }

Dirs sitting() {
    Dirs d = base_directions();
    d[head] = {0.0, -1.0, -0.15};
    d[r_elbow] = {-0.1, 1.0, -0.2};
    d[l_elbow] = {0.1, 1.0, -0.2};
    d[r_wrist] = {0.0, 0.2, -1.0};
    d[l_wrist] = {0.0, 0.2, -1.0};
    d[r_hip] = {-0.2, 1.0, 0.1};
    d[l_hip] = {0.2, 1.0, 0.1};
    d[r_knee] = {0.0, 0.05, -1.0};
    d[l_knee] = {0.0, 0.05, -1.0};
    d[r_ankle] = {0.0, 1.0, 0.1};
    d[l_ankle] = {0.0, 1.0, 0.1};
    return d;
}

Dirs walking() {
    Dirs d = base_directions();
    d[head] = {0.0, -1.0, -0.15};
    d[r_elbow] = {-0.1, 1.0, 0.4};
    d[r_wrist] = {0.0, 1.0, -0.2};
    d[l_elbow] = {0.1, 1.0, -0.4};
    d[l_wrist] = {0.0, 0.8, -0.6};
    d[r_knee] = {0.0, 1.0, -0.45};
    d[r_ankle] = {0.0, 1.0, 0.1};
    d[l_knee] = {0.0, 1.0, 0.4};
    d[l_ankle] = {0.0, 0.8, 0.6};
    return d;
}

Dirs arms_raised() {
    Dirs d = base_directions();
    d[head] = {0.0, -1.0, 0.0};
    d[r_elbow] = {-0.35, -1.0, -0.1};
    d[l_elbow] = {0.35, -1.0, -0.1};
    d[r_wrist] = {-0.1, -1.0, 0.05};
    d[l_wrist] = {0.1, -1.0, 0.05};
    return d;
}

Eigen::Matrix3d yaw_rotation(double radians) {
    return Eigen::AngleAxisd(radians, Eigen::Vector3d::UnitY()).toRotationMatrix();
}

Eigen::Matrix3d random_small_rotation(Rng& rng, double sigma_rad) {
    const Eigen::Vector3d w(sigma_rad * standard_normal(rng), sigma_rad * standard_normal(rng),
                            sigma_rad * standard_normal(rng));
    const double angle = w.norm();
    if (angle == 0.0)
        return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

std::uint64_t hash_pose(const Pose3D& pose) {
    std::uint64_t h = static_cast<std::uint64_t>(pose.rows());
    for (Eigen::Index r = 0; r < pose.rows(); ++r)
        for (Eigen::Index c = 0; c < 3; ++c)
            h = splitmix64(h ^ std::bit_cast<std::uint64_t>(pose(r, c)));
    return h;
}

} // namespace

const Skeleton& default_skeleton() {
    static const Skeleton skel = make_lsp14();
    return skel;
}

const Skeleton& find_skeleton(const std::string& id) {
    if (id == kDefaultSkeletonId)
        return default_skeleton();
    throw NotFound("unknown skeleton '" + id + "'");
}

Camera default_camera() {
    Camera cam;
    cam.scale = 200.0 / 1700.0;
    cam.principal_offset = {128.0, 128.0};
    return cam;
}

Pose3D pose_from_directions(const Skeleton& skel, const std::vector<Eigen::Vector3d>& directions,
                            const Eigen::Vector3d& root_position) {
    if (static_cast<int>(directions.size()) != skel.joint_count())
        throw DimensionError("pose_from_directions: one direction per joint required");
    Pose3D pose(skel.joint_count(), 3);
    const int root = skel.root();
    pose.row(root) = root_position.transpose();
    for (int j : skel.breadth_first_order()) {
        if (j == root)
            continue;
        const Eigen::Vector3d dir = directions[static_cast<std::size_t>(j)].normalized();
        pose.row(j) = pose.row(skel.parent[static_cast<std::size_t>(j)]) +
                      skel.bone_length(j) * dir.transpose();
    }
    return pose;
}

void PoseDistribution::validate() const {
    skeleton.validate();
    if (template_poses.empty())
        throw InvalidInput("pose distribution has no templates");
    if (!(perturbation_sigma_deg >= 0.0))
        throw InvalidInput("perturbation sigma must be non-negative");
    if (!(global_rotation_range.first <= global_rotation_range.second))
        throw InvalidInput("global rotation range is empty");
    for (const auto& t : template_poses) {
        if (t.rows() != skeleton.joint_count() || !t.allFinite())
            throw InvalidInput("template pose does not match the skeleton");
        for (const auto& [p, c] : skeleton.edges()) {
            const double len = (t.row(c) - t.row(p)).norm();
            if (std::abs(len - skeleton.bone_length(c)) > 1e-6 * skeleton.bone_length(c))
                throw InvalidInput("template bone length differs from the skeleton");
        }
    }
}

PoseDistribution default_distribution() {
    PoseDistribution dist;
    dist.skeleton = default_skeleton();
    const Eigen::Vector3d root(0.0, -500.0, 4000.0);
    for (const auto& dirs : {standing(), sitting(), walking(), arms_raised()})
        dist.template_poses.push_back(pose_from_directions(dist.skeleton, dirs, root));
    return dist;
}

Pose3D sample_pose(const PoseDistribution& dist, std::uint64_t seed) {
    const Skeleton& skel = dist.skeleton;
    Rng rng(seed);
    const auto& tmpl =
        dist.template_poses[uniform_index(rng, dist.template_poses.size())];
    const double sigma = dist.perturbation_sigma_deg * kPi / 180.0;
    const double yaw =
        uniform(rng, dist.global_rotation_range.first, dist.global_rotation_range.second) * kPi /
        180.0;

    const int n = skel.joint_count();
    const int root = skel.root();
    std::vector<Eigen::Matrix3d> jitter(static_cast<std::size_t>(n));
    for (auto& r : jitter)
        r = random_small_rotation(rng, sigma);

    // Each bone keeps its template direction, rotated by the jitter
    // accumulated from the root down to it.
    std::vector<Eigen::Matrix3d> acc(static_cast<std::size_t>(n), Eigen::Matrix3d::Identity());
    Pose3D pose(n, 3);
    pose.row(root) = tmpl.row(root);
    for (int j : skel.breadth_first_order()) {
        const auto ju = static_cast<std::size_t>(j);
        if (j == root) {
            acc[ju] = jitter[ju];
            continue;
        }
        const int p = skel.parent[ju];
        acc[ju] = acc[static_cast<std::size_t>(p)] * jitter[ju];
        const Eigen::Vector3d dir = (tmpl.row(j) - tmpl.row(p)).transpose().normalized();
        pose.row(j) = pose.row(p) + skel.bone_length(j) * (acc[ju] * dir).transpose();
    }
    const Eigen::RowVector3d origin = pose.row(root);
    const Eigen::Matrix3d rot = yaw_rotation(yaw);
    Pose3D out = (pose.rowwise() - origin) * rot.transpose();
    out.rowwise() += origin;
    return out;
}

std::vector<Pose3D> sample_poses(const PoseDistribution& dist, int count, std::uint64_t seed) {
    dist.validate();
    std::vector<Pose3D> poses;
    poses.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int k = 0; k < count; ++k)
        poses.push_back(sample_pose(dist, mix_seed({seed, static_cast<std::uint64_t>(k)})));
    return poses;
}

Ordering depth_classes(const Eigen::Ref<const Eigen::VectorXd>& depths, double threshold_mm) {
    if (!(threshold_mm >= 0.0))
        throw InvalidInput("depth_classes: threshold must be non-negative");
    std::vector<int> idx(static_cast<std::size_t>(depths.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return depths(a) < depths(b); });
    Ordering out;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const bool tied = k > 0 && (depths(idx[k]) - depths(idx[k - 1]) < threshold_mm ||
                                    depths(idx[k]) == depths(idx[k - 1]));
        if (!tied)
            out.emplace_back();
        out.back().members.push_back(idx[k]);
    }
    for (auto& c : out)
        std::sort(c.members.begin(), c.members.end());
    return out;
}

void SimulatedAnnotator::validate() const {
    if (!(tie_threshold_mm >= 0.0))
        throw InvalidInput("annotator: tie threshold must be non-negative");
    if (!(error_rate >= 0.0 && error_rate < 0.5))
        throw InvalidInput("annotator: error rate must lie in [0, 0.5)");
    if (!(ambiguous_rate >= 0.0 && ambiguous_rate < 1.0))
        throw InvalidInput("annotator: ambiguous rate must lie in [0, 1)");
}

Answer annotate(const SimulatedAnnotator& annotator, const Pose3D& pose, int i, int j,
                std::uint64_t seed) {
    annotator.validate();
    const auto n = static_cast<int>(pose.rows());
    if (i < 0 || i >= n || j < 0 || j >= n)
        throw IndexError("annotate: joint index out of range");
    if (i == j)
        throw ContractViolation("annotate: a joint cannot be compared with itself");

    const Ordering classes = depth_classes(pose.col(2), annotator.tie_threshold_mm);
    int ci = -1, cj = -1;
    for (std::size_t k = 0; k < classes.size(); ++k)
        for (int m : classes[k].members) {
            if (m == i)
                ci = static_cast<int>(k);
            if (m == j)
                cj = static_cast<int>(k);
        }
    Answer truth = ci == cj ? Answer::same : (ci < cj ? Answer::closer : Answer::farther);

    // Noise depends on the unordered pair, so (i, j) and (j, i) stay mirror images.
    Rng rng(mix_seed({seed, static_cast<std::uint64_t>(std::min(i, j)),
                      static_cast<std::uint64_t>(std::max(i, j)), hash_pose(pose)}));
    const double u_ambiguous = uniform01(rng);
    const double u_flip = uniform01(rng);
    if (u_ambiguous < annotator.ambiguous_rate)
        return Answer::ambiguous;
    if (truth != Answer::same && u_flip < annotator.error_rate)
        truth = truth == Answer::closer ? Answer::farther : Answer::closer;
    return truth;
}

AnnotationSession simulate_session(const SimulatedAnnotator& annotator, const Pose3D& pose,
                                   std::string item_id, std::uint64_t seed) {
    annotator.validate();
    AnnotationSession s = make_session(std::move(item_id), static_cast<int>(pose.rows()));
    while (const auto q = next_question(s))
        s = submit_answer(std::move(s), annotate(annotator, pose, q->i, q->j, seed));
    return s;
}

double ordering_accuracy(const Ordering& ordering, const Ordering& truth) {
    const RelationSet got = ordering_to_relations(ordering, true);
    const RelationSet want = ordering_to_relations(truth, true);
    if (got.size() != want.size())
        throw DimensionError("ordering_accuracy: orderings cover different joint counts");
    if (want.empty())
        return 1.0;
    long agree = 0;
    for (const auto& rel : want.relations)
        if (lookup_relation(got, rel.i, rel.j) == rel.r)
            ++agree;
    return static_cast<double>(agree) / static_cast<double>(want.size());
}

} // namespace ordinal
