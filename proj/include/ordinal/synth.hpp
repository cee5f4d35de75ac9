#ifndef ORDINAL_SYNTH_HPP
#define ORDINAL_SYNTH_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ordinal/annotation.hpp"
#include "ordinal/geometry.hpp"

namespace ordinal {

inline constexpr const char* kDefaultSkeletonId = "lsp14";
inline constexpr double kDefaultTieThresholdMm = 100.0;

// 14 joints: head, neck, then (shoulder, elbow, wrist) right and left, then
// (hip, knee, ankle) right and left. Rooted at the neck.
const Skeleton& default_skeleton();
// Looks up a built-in skeleton by id; throws NotFound.
const Skeleton& find_skeleton(const std::string& id);

// Camera used for all synthetic projections: a 1700 mm figure spans about
// 200 px, centered in a 256 px image.
Camera default_camera();

// Forward kinematics from per-joint bone directions (unit vectors, one per
// joint; the root entry is ignored) and a root position.
Pose3D pose_from_directions(const Skeleton& skel, const std::vector<Eigen::Vector3d>& directions,
                            const Eigen::Vector3d& root_position);

struct PoseDistribution {
    Skeleton skeleton;
    std::vector<Pose3D> template_poses;  // camera frame, mm
    double perturbation_sigma_deg = 2.0;
    // Yaw about the vertical axis through the root, degrees.
    std::pair<double, double> global_rotation_range{0.0, 180.0};

    // Throws InvalidInput when a template violates the skeleton's bone lengths.
    void validate() const;
};

// Standing, sitting, walking stride and arms raised, facing the camera with
// the root 4 m away.
PoseDistribution default_distribution();

Pose3D sample_pose(const PoseDistribution& dist, std::uint64_t seed);
std::vector<Pose3D> sample_poses(const PoseDistribution& dist, int count, std::uint64_t seed);

// Depth classes of a pose: joints sorted by depth, with a new class started
// wherever the gap between depth-adjacent joints reaches the threshold.
// Front class is closest.
Ordering depth_classes(const Eigen::Ref<const Eigen::VectorXd>& depths, double threshold_mm);

struct SimulatedAnnotator {
    double tie_threshold_mm = kDefaultTieThresholdMm;
    double error_rate = 0.0;      // closer <-> farther flip probability
    double ambiguous_rate = 0.0;  // probability of answering "ambiguous"

    void validate() const;
};

// Answer for joint i relative to j. Ties follow depth_classes of the whole
// pose, so a noise-free annotator is consistent with one total preorder.
Answer annotate(const SimulatedAnnotator& annotator, const Pose3D& pose, int i, int j,
                std::uint64_t seed);

// Drives a fresh session for `pose` to completion with the simulated
// annotator, the answer to (i, j) drawn from annotate(..., seed).
AnnotationSession simulate_session(const SimulatedAnnotator& annotator, const Pose3D& pose,
                                   std::string item_id, std::uint64_t seed);

// Fraction of the C(N,2) pairs whose relation in `ordering` (soft ties
// included) matches the relation implied by `truth`.
double ordering_accuracy(const Ordering& ordering, const Ordering& truth);

} // namespace ordinal

#endif // ORDINAL_SYNTH_HPP
