#ifndef ORDINAL_GEOMETRY_HPP
#define ORDINAL_GEOMETRY_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ordinal/error.hpp"

namespace ordinal {

// Poses are row-per-joint dense matrices. 3D coordinates are in mm in the
// camera frame with z as depth (larger = farther); 2D coordinates are pixels.
template <typename Scalar>
using Pose3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
template <typename Scalar>
using Pose2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Pose3D = Pose3<double>;
using Pose2D = Pose2<double>;
using DepthVector = Vec<double>;

// Kinematic tree. parent[root] == root; bone_lengths holds one entry per
// non-root joint in increasing joint index order.
struct Skeleton {
    std::string id;
    std::vector<std::string> joint_names;
    std::vector<int> parent;
    std::vector<double> bone_lengths;

    int joint_count() const { return static_cast<int>(parent.size()); }
    int root() const;
    // Length of the bone ending at `joint`; joint must not be the root.
    double bone_length(int joint) const;
    // (parent, child) pairs, one per bone.
    std::vector<std::pair<int, int>> edges() const;
    // Joints ordered root outward (breadth first, children by index).
    std::vector<int> breadth_first_order() const;
    // Throws InvalidInput unless the parent array is a single rooted tree
    // and every bone length is positive.
    void validate() const;
};

template <typename Scalar>
struct WeakPerspectiveCamera {
    Scalar scale{1};
    Eigen::Matrix<Scalar, 2, 1> principal_offset{Eigen::Matrix<Scalar, 2, 1>::Zero()};
};

using Camera = WeakPerspectiveCamera<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

template <typename Scalar>
Pose2<Scalar> project(const Pose3<Scalar>& pose, const WeakPerspectiveCamera<Scalar>& cam) {
    if (!pose.allFinite())
        throw InvalidInput("project: non-finite pose coordinates");
    if (!(cam.scale > Scalar(0)) || !cam.principal_offset.allFinite())
        throw InvalidInput("project: camera scale must be positive and finite");
    Pose2<Scalar> out = cam.scale * pose.template leftCols<2>();
    out.rowwise() += cam.principal_offset.transpose();
    return out;
}

// Inverse of `project` for the image-plane coordinates, with depth supplied.
template <typename Scalar>
Pose3<Scalar> back_project(const Pose2<Scalar>& keypoints, const Vec<Scalar>& depth,
                           const WeakPerspectiveCamera<Scalar>& cam) {
    if (keypoints.rows() != depth.size())
        throw DimensionError("back_project: keypoint and depth counts differ");
    Pose3<Scalar> out(keypoints.rows(), 3);
    out.template leftCols<2>() =
        (keypoints.rowwise() - cam.principal_offset.transpose()) / cam.scale;
    out.col(2) = depth;
    return out;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mpjpe(const Eigen::MatrixBase<DerivedA>& pred,
                                const Eigen::MatrixBase<DerivedB>& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
        throw DimensionError("mpjpe: pose shapes differ");
    if (pred.rows() == 0)
        throw DimensionError("mpjpe: empty pose");
    return (pred - gt).rowwise().norm().mean();
}

// Subtracts the root joint from every joint.
template <typename Scalar>
Pose3<Scalar> root_relative(const Pose3<Scalar>& pose, int root) {
    Pose3<Scalar> out = pose;
    out.rowwise() -= pose.row(root);
    return out;
}

enum class AlignmentMode { similarity, rigid };

template <typename Scalar>
struct SimilarityTransform {
    Eigen::Matrix<Scalar, 3, 3> rotation{Eigen::Matrix<Scalar, 3, 3>::Identity()};
    Scalar scale{1};
    Eigen::Matrix<Scalar, 3, 1> translation{Eigen::Matrix<Scalar, 3, 1>::Zero()};

    Pose3<Scalar> apply(const Pose3<Scalar>& pose) const {
        Pose3<Scalar> out = scale * pose * rotation.transpose();
        out.rowwise() += translation.transpose();
        return out;
    }
};

template <typename Scalar>
struct Alignment {
    Pose3<Scalar> aligned;
    Scalar error;
    SimilarityTransform<Scalar> transform;
};

// Least-squares alignment of `pred` onto `gt` (orthogonal Procrustes on the
// centered point sets, proper rotations only). The returned error is the
// mpjpe of the aligned prediction.
template <typename Scalar>
Alignment<Scalar> procrustes_align(const Pose3<Scalar>& pred, const Pose3<Scalar>& gt,
                                   AlignmentMode mode = AlignmentMode::similarity) {
    using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
    using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
    if (pred.rows() != gt.rows())
        throw DimensionError("procrustes_align: joint counts differ");
    if (gt.rows() < 3)
        throw DimensionError("procrustes_align: need at least 3 joints");
    if (!pred.allFinite() || !gt.allFinite())
        throw InvalidInput("procrustes_align: non-finite coordinates");

    const Vec3 mu_pred = pred.colwise().mean().transpose();
    const Vec3 mu_gt = gt.colwise().mean().transpose();
    const Pose3<Scalar> x = pred.rowwise() - mu_pred.transpose();
    const Pose3<Scalar> y = gt.rowwise() - mu_gt.transpose();

    // A gt that collapses to a point or a line leaves the rotation about that
    // line undetermined.
    Eigen::JacobiSVD<Pose3<Scalar>> gt_svd(y);
    const auto& sv = gt_svd.singularValues();
    if (!(sv(0) > Scalar(0)) || sv(1) <= sv(0) * Scalar(1e-12))
        throw DegenerateConfiguration("procrustes_align: ground truth is rank deficient");

    const Mat3 h = x.transpose() * y;
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    Vec3 d = Vec3::Ones();
    if ((v * u.transpose()).determinant() < Scalar(0))
        d(2) = Scalar(-1);

    SimilarityTransform<Scalar> tf;
    tf.rotation = v * d.asDiagonal() * u.transpose();
    if (mode == AlignmentMode::similarity) {
        const Scalar denom = x.squaredNorm();
        tf.scale = denom > Scalar(0) ? d.dot(svd.singularValues()) / denom : Scalar(0);
    }
    tf.translation = mu_gt - tf.scale * tf.rotation * mu_pred;

    Alignment<Scalar> out{tf.apply(pred), Scalar(0), tf};
    out.error = mpjpe(out.aligned, gt);
    return out;
}

} // namespace ordinal

#endif // ORDINAL_GEOMETRY_HPP
