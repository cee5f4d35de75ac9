#ifndef ORDINAL_TRAINER_HPP
#define ORDINAL_TRAINER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ordinal/io.hpp"
#include "ordinal/network.hpp"
#include "ordinal/reconstruction.hpp"
#include "ordinal/supervision.hpp"
#include "ordinal/synth.hpp"
#include "ordinal/volumetric.hpp"

namespace ordinal {

enum class Task {
    depth_ordinal,
    depth_regression,
    coords_weak,
    coords_full,
    volume_weak,
    volume_full,
    mixed,
    end_to_end
};

std::string to_string(Task t);
Task task_from_string(const std::string& s);

// Output representation of the toy prediction network.
//   depth:  N depths
//   coords: 2N keypoints (x_0, y_0, ...) followed by N depths
//   volume: one W*H*D score block per joint
enum class Representation { depth, coords, volume };

std::string to_string(Representation r);
Representation representation_from_string(const std::string& s);

enum class SupervisionMode { full, weak };

// Geometry shared by all samples of a volumetric experiment. Normalized
// keypoints in [-extent, extent] map onto the W x H pixel bins.
struct VolumeLayout {
    GridShape shape;
    double extent = 0.75;
    double sigma_bins = 1.0;
    Vec<double> axis_coords;

    Pose2D to_bins(const Pose2D& normalized) const;
    Pose2D from_bins(const Pose2D& bins) const;
};

struct LossSettings {
    Representation representation = Representation::depth;
    double lambda = kDefaultKeypointWeight;
    Reduction reduction = Reduction::sum;
    VolumeLayout volume;
};

// One training example. Inputs are normalized 2D keypoints; depth targets
// are root-relative depths in the same units as the normalized keypoints.
struct TrainSample {
    Vec<double> input;                    // 2N
    Pose2D keypoints;                     // normalized 2D targets
    std::optional<DepthVector> depths;    // full supervision
    std::optional<RelationSet> relations; // weak supervision
};

struct SampleLoss {
    double loss = 0.0;
    Vec<double> grad;  // with respect to the network output
};

// Full mode uses the metric targets, weak mode the ordinal relations plus
// 2D keypoints. Throws DataError when the sample lacks what `mode` needs.
SampleLoss mixed_batch_loss(const Vec<double>& output, const TrainSample& sample,
                            SupervisionMode mode, const LossSettings& settings);

struct ExperimentConfig {
    Task task = Task::depth_ordinal;
    std::uint64_t seed = 0;

    int pose_count = 5000;
    double holdout_fraction = 0.2;
    double perturbation_sigma_deg = 2.0;
    std::pair<double, double> yaw_range_deg{0.0, 180.0};

    int hidden = 128;
    int blocks = 2;
    double dropout = 0.2;
    RmsPropConfig optimizer;
    int batch_size = 4;
    long iterations = 20000;
    long log_every = 100;

    double tie_threshold_mm = kDefaultTieThresholdMm;
    double lambda = kDefaultKeypointWeight;
    Reduction reduction = Reduction::sum;

    GridShape grid;
    double heatmap_sigma = 1.0;

    // mixed
    double full_fraction = 0.3;
    Representation mixed_representation = Representation::coords;

    // end-to-end
    Task depth_task = Task::coords_weak;
    int recon_poses = 20000;
    ReconHyper recon;
    NoiseConfig noise;

    void validate() const;
};

json config_to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const json& j);

Representation representation_of(const ExperimentConfig& cfg);

struct Dataset {
    std::vector<Pose3D> train_poses;
    std::vector<Pose3D> test_poses;
    std::vector<TrainSample> train;
    std::vector<TrainSample> test;
    std::vector<SupervisionMode> train_modes;
};

// Deterministic data for a config: poses, normalized samples, relations at
// the tie threshold, and the per-sample supervision mode.
Dataset build_dataset(const ExperimentConfig& cfg);

TrainSample make_sample(const Pose3D& pose, const Camera& cam, int root, double tie_threshold_mm);

struct TrainedModel {
    Task task = Task::depth_ordinal;
    LossSettings settings;
    Network<double> net;
};

Checkpoint model_checkpoint(const TrainedModel& model, long step);
TrainedModel model_from_checkpoint(const Checkpoint& ckpt);

struct Prediction {
    DepthVector depths;  // normalized root-relative units
    Pose2D keypoints;    // normalized
};

Prediction predict(const TrainedModel& model, const TrainSample& sample);

struct EvalReport {
    std::string task;
    std::uint64_t seed = 0;
    double ordinal_accuracy = 0.0;
    double spearman_rho = 0.0;
    double mpjpe = 0.0;
    double procrustes_error = 0.0;
    bool metric_supervision = false;
    std::optional<double> mpjpe_without_reconstruction;
    std::optional<double> procrustes_without_reconstruction;
    std::vector<LossLogEntry> loss_log;
    std::optional<std::vector<LossLogEntry>> reconstruction_loss_log;
    std::string note;
    json config;
};

json report_to_json(const EvalReport& r);
EvalReport report_from_json(const json& j);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);

// Fraction of pairs with |gt_i - gt_j| >= threshold (and a nonzero gap)
// whose predicted order agrees. Predicted ties count as wrong.
struct PairCount {
    long correct = 0;
    long total = 0;
};
PairCount ordinal_agreement(const DepthVector& pred, const DepthVector& gt, double threshold);

// Spearman rank correlation with average ranks for ties; 0 when either side
// is constant.
double spearman(const DepthVector& a, const DepthVector& b);

// Metric 3D estimate (root-relative, mm) from a prediction for `pose`.
Pose3D metric_pose(const Prediction& pred, const Pose3D& pose, const Camera& cam, int root,
                   bool use_predicted_keypoints);

EvalReport evaluate(const TrainedModel& model, const Dataset& data, const ExperimentConfig& cfg);

struct TrainResult {
    TrainedModel model;
    std::vector<LossLogEntry> loss_log;
};

TrainResult train_model(const ExperimentConfig& cfg, const Dataset& data);

// Pipes the depth network's outputs through the reconstruction component and
// reports Procrustes error with and without that stage.
EvalReport end_to_end_eval(const TrainedModel& depth_model, const ReconModel& recon,
                           const std::vector<Pose3D>& testset, const ExperimentConfig& cfg);

struct ExperimentArtifacts {
    EvalReport report;
    TrainedModel model;
    std::optional<ReconModel> recon;
};

ExperimentArtifacts run_experiment_full(const ExperimentConfig& cfg);
EvalReport run_experiment(const ExperimentConfig& cfg);

} // namespace ordinal

#endif // ORDINAL_TRAINER_HPP
