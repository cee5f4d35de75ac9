#ifndef ORDINAL_RECONSTRUCTION_HPP
#define ORDINAL_RECONSTRUCTION_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ordinal/geometry.hpp"
#include "ordinal/io.hpp"
#include "ordinal/network.hpp"

namespace ordinal {

// z~ = a z + b + eta with a from global_scale_range, b from
// global_offset_range times the pose's depth range, and eta Gaussian with
// sigma = jitter_sigma_frac times the depth range.
struct NoiseConfig {
    std::pair<double, double> global_scale_range{0.8, 1.2};
    std::pair<double, double> global_offset_range{-0.2, 0.2};
    double jitter_sigma_frac = 0.1;

    void validate() const;
};

json noise_to_json(const NoiseConfig& cfg);
NoiseConfig noise_from_json(const json& j);

DepthVector simulate_noisy_depths(const DepthVector& gt_depths, const NoiseConfig& cfg,
                                  std::uint64_t seed);

// Fraction of strict pairs (|z_i - z_j| >= threshold, nonzero gap) whose
// order survives in `noisy`. Returns 1 when there are no strict pairs.
double preserved_fraction(const DepthVector& gt, const DepthVector& noisy, double threshold_mm);

template <typename Scalar>
struct PoseLoss {
    Scalar loss;
    Pose3<Scalar> grad;
};

// sum_n |S_n - S^_n|^2
template <typename Scalar>
PoseLoss<Scalar> l3d_loss(const Pose3<Scalar>& pred, const Pose3<Scalar>& gt) {
    if (pred.rows() != gt.rows())
        throw DimensionError("l3d_loss: joint counts differ");
    const Pose3<Scalar> diff = pred - gt;
    return {diff.squaredNorm(), Scalar(2) * diff};
}

// Per-sample normalization: keypoints centered on their mean and divided by
// the bounding-box diagonal; depths shifted to zero mean and unit variance.
struct InputNormalization {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double diagonal = 1.0;
    double depth_mean = 0.0;
    double depth_std = 1.0;
};

struct ReconInput {
    Pose2D keypoints;
    DepthVector depths;
    bool normalized = false;
};

std::pair<ReconInput, InputNormalization> normalize_input(const Pose2D& keypoints,
                                                          const DepthVector& depths);
ReconInput denormalize_input(const ReconInput& in, const InputNormalization& norm);

// Feature column for the network: x_0, y_0, ..., x_{N-1}, y_{N-1}, z_0, ..., z_{N-1}.
Vec<double> input_features(const ReconInput& in);

// The reconstruction network predicts root-relative poses (mm) in units of
// a per-coordinate standardization fitted on the training set.
struct ReconModel {
    Network<double> net;
    Vec<double> output_mean;  // 3N, joint-major (x, y, z per joint)
    Vec<double> output_std;   // 3N
    int root = 0;

    int joint_count() const { return static_cast<int>(output_mean.size() / 3); }
};

struct ReconHyper {
    long iterations = 20000;
    int batch_size = 64;
    int hidden = 128;
    int blocks = 2;
    double dropout = 0.0;
    RmsPropConfig optimizer;
    std::uint64_t seed = 0;
    long log_every = 100;
};

json recon_hyper_to_json(const ReconHyper& h);
ReconHyper recon_hyper_from_json(const json& j);

struct LossLogEntry {
    long step = 0;
    double loss = 0.0;
};

struct ReconTraining {
    ReconModel model;
    std::vector<LossLogEntry> loss_log;  // mean L_3D on a fixed monitor batch
};

// Zero-weight network around the output statistics of `poses`.
ReconModel untrained_recon_model(const std::vector<Pose3D>& poses, int root, int hidden,
                                 int blocks, double dropout, std::uint64_t seed);

// Trains on (project(pose), simulate_noisy_depths(depths)) -> root-relative
// pose, drawing fresh noise for every draw of a pose. Throws TrainingError
// with the step index on a non-finite loss.
ReconTraining train_reconstruction(const std::vector<Pose3D>& mocap, int root, const Camera& cam,
                                   const NoiseConfig& cfg, const ReconHyper& hyper);

// Root-relative pose in mm. Throws ContractViolation unless `input` carries
// the normalization produced by normalize_input.
Pose3D reconstruct(const ReconModel& model, const ReconInput& input);
std::vector<Pose3D> reconstruct_batch(const ReconModel& model, const std::vector<ReconInput>& inputs);

// Naive answer: back-projected keypoints with the noisy depths taken as z,
// made root-relative.
Pose3D input_as_answer(const Pose2D& keypoints, const DepthVector& noisy_depths, const Camera& cam,
                       int root);

Checkpoint recon_checkpoint(const ReconModel& model, long step);
ReconModel recon_model_from_checkpoint(const Checkpoint& ckpt);

} // namespace ordinal

#endif // ORDINAL_RECONSTRUCTION_HPP
