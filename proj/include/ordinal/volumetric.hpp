#ifndef ORDINAL_VOLUMETRIC_HPP
#define ORDINAL_VOLUMETRIC_HPP

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ordinal/error.hpp"
#include "ordinal/geometry.hpp"
#include "ordinal/supervision.hpp"

namespace ordinal {

// Volumes store one column per joint. Within a column voxel (x, y, z) sits at
// x + W * (y + H * z), so a column reshaped to (W*H) x D has one depth slice
// per matrix column.
struct GridShape {
    int width = 16;
    int height = 16;
    int depth = 16;

    int pixels() const { return width * height; }
    int voxels() const { return width * height * depth; }
    Eigen::Index index(int x, int y, int z) const {
        return x + static_cast<Eigen::Index>(width) * (y + static_cast<Eigen::Index>(height) * z);
    }

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

template <typename Scalar>
struct VolumeScores {
    GridShape shape;
    Mat<Scalar> grid;         // voxels x N
    Vec<Scalar> axis_coords;  // depth bin centers, strictly increasing

    int joints() const { return static_cast<int>(grid.cols()); }

    void validate() const {
        if (shape.width < 1 || shape.height < 1 || shape.depth < 1)
            throw InvalidInput("volume: grid dimensions must be positive");
        if (grid.rows() != shape.voxels())
            throw DimensionError("volume: grid rows do not match W*H*D");
        if (axis_coords.size() != shape.depth)
            throw DimensionError("volume: axis_coords must have D entries");
        if (!grid.allFinite())
            throw InvalidInput("volume: non-finite scores");
        for (Eigen::Index k = 1; k < axis_coords.size(); ++k)
            if (!(axis_coords(k) > axis_coords(k - 1)))
                throw InvalidInput("volume: axis_coords must be strictly increasing");
    }
};

template <typename Scalar>
struct ProbVolume {
    GridShape shape;
    Mat<Scalar> p;  // voxels x N, each column sums to one
};

template <typename Scalar>
ProbVolume<Scalar> volume_softmax(const VolumeScores<Scalar>& scores) {
    scores.validate();
    ProbVolume<Scalar> out{scores.shape, Mat<Scalar>(scores.grid.rows(), scores.grid.cols())};
    for (Eigen::Index n = 0; n < scores.grid.cols(); ++n) {
        const Scalar top = scores.grid.col(n).maxCoeff();
        out.p.col(n) = (scores.grid.col(n).array() - top).exp().matrix();
        out.p.col(n) /= out.p.col(n).sum();
    }
    return out;
}

namespace detail {

template <typename Scalar>
auto slices(const Mat<Scalar>& p, const GridShape& shape, Eigen::Index joint) {
    return Eigen::Map<const Mat<Scalar>>(p.col(joint).data(), shape.pixels(), shape.depth);
}

}  // namespace detail

// p(x, y | n): sum-pooling over depth slices; (W*H) x N.
template <typename Scalar>
Mat<Scalar> marginal_2d(const ProbVolume<Scalar>& vol) {
    Mat<Scalar> out(vol.shape.pixels(), vol.p.cols());
    for (Eigen::Index n = 0; n < vol.p.cols(); ++n)
        out.col(n) = detail::slices(vol.p, vol.shape, n).rowwise().sum();
    return out;
}

// p(z | n): sum-pooling over the pixels of each slice; D x N.
template <typename Scalar>
Mat<Scalar> marginal_depth(const ProbVolume<Scalar>& vol) {
    Mat<Scalar> out(vol.shape.depth, vol.p.cols());
    for (Eigen::Index n = 0; n < vol.p.cols(); ++n)
        out.col(n) = detail::slices(vol.p, vol.shape, n).colwise().sum().transpose();
    return out;
}

// Expected depth coordinate under a depth marginal.
template <typename DerivedP, typename DerivedC>
typename DerivedP::Scalar soft_depth(const Eigen::MatrixBase<DerivedP>& p_z,
                                     const Eigen::MatrixBase<DerivedC>& axis_coords) {
    using Scalar = typename DerivedP::Scalar;
    using std::abs;
    if (p_z.size() != axis_coords.size())
        throw DimensionError("soft_depth: distribution and axis sizes differ");
    if ((p_z.array() < Scalar(0)).any() || abs(p_z.sum() - Scalar(1)) > Scalar(1e-6))
        throw ContractViolation("soft_depth: p_z must be a normalized distribution");
    return p_z.dot(axis_coords);
}

template <typename Scalar>
Vec<Scalar> soft_depths(const Mat<Scalar>& depth_marginals, const Vec<Scalar>& axis_coords) {
    Vec<Scalar> z(depth_marginals.cols());
    for (Eigen::Index n = 0; n < depth_marginals.cols(); ++n)
        z(n) = soft_depth(depth_marginals.col(n), axis_coords);
    return z;
}

template <typename Scalar>
struct HeatmapTarget {
    GridShape shape;
    Mat<Scalar> map;  // (W*H) x N
    Scalar sigma_px;
};

// Gaussian heatmaps centered on continuous grid positions (in bin units,
// bin k centered at k), rescaled so the peak cell equals one.
template <typename Scalar>
HeatmapTarget<Scalar> make_heatmap_targets(const Pose2<Scalar>& centers_bins,
                                           const GridShape& shape, Scalar sigma_px = Scalar(1)) {
    using std::exp;
    if (!(sigma_px > Scalar(0)))
        throw InvalidInput("heatmap: sigma must be positive");
    if (!centers_bins.allFinite())
        throw InvalidInput("heatmap: non-finite center");
    HeatmapTarget<Scalar> out{shape, Mat<Scalar>(shape.pixels(), centers_bins.rows()), sigma_px};
    for (Eigen::Index n = 0; n < centers_bins.rows(); ++n) {
        for (int y = 0; y < shape.height; ++y)
            for (int x = 0; x < shape.width; ++x) {
                const Scalar dx = Scalar(x) - centers_bins(n, 0);
                const Scalar dy = Scalar(y) - centers_bins(n, 1);
                out.map(x + shape.width * y, n) =
                    exp(-(dx * dx + dy * dy) / (Scalar(2) * sigma_px * sigma_px));
            }
        const Scalar peak = out.map.col(n).maxCoeff();
        if (peak > Scalar(0))
            out.map.col(n) /= peak;
    }
    return out;
}

template <typename Scalar>
struct MapLoss {
    Scalar loss;
    Mat<Scalar> grad;
};

// Squared L2 between predicted 2D marginals and targets; grad w.r.t. the maps.
template <typename Scalar>
MapLoss<Scalar> heatmap_loss(const Mat<Scalar>& pred_maps, const HeatmapTarget<Scalar>& targets) {
    if (pred_maps.rows() != targets.map.rows() || pred_maps.cols() != targets.map.cols())
        throw DimensionError("heatmap_loss: map shapes differ");
    const Mat<Scalar> diff = pred_maps - targets.map;
    return {diff.squaredNorm(), Scalar(2) * diff};
}

// Pulls gradients on the 2D and depth marginals back onto the probability
// volume and then through the softmax onto the scores.
template <typename Scalar>
Mat<Scalar> backprop_marginals(const ProbVolume<Scalar>& vol, const Mat<Scalar>& grad_2d,
                               const Mat<Scalar>& grad_depth) {
    const GridShape& s = vol.shape;
    Mat<Scalar> grad(vol.p.rows(), vol.p.cols());
    for (Eigen::Index n = 0; n < vol.p.cols(); ++n) {
        Eigen::Map<Mat<Scalar>> g(grad.col(n).data(), s.pixels(), s.depth);
        g.colwise() = grad_2d.col(n);
        g.rowwise() += grad_depth.col(n).transpose();
        const Scalar mean = vol.p.col(n).dot(grad.col(n));
        grad.col(n) = (vol.p.col(n).array() * (grad.col(n).array() - mean)).matrix();
    }
    return grad;
}

template <typename Scalar>
MapLoss<Scalar> heatmap_loss(const VolumeScores<Scalar>& scores,
                             const HeatmapTarget<Scalar>& targets) {
    const auto vol = volume_softmax(scores);
    auto heat = heatmap_loss(marginal_2d(vol), targets);
    Mat<Scalar> zero_depth = Mat<Scalar>::Zero(scores.shape.depth, scores.grid.cols());
    return {heat.loss, backprop_marginals(vol, heat.grad, zero_depth)};
}

// L = L_rank(soft depths) + lambda * L_heat, with the gradient on the scores.
template <typename Scalar>
MapLoss<Scalar> volumetric_weak_loss(const VolumeScores<Scalar>& scores, const RelationSet& pairs,
                                     const HeatmapTarget<Scalar>& targets,
                                     Scalar lambda = Scalar(kDefaultKeypointWeight),
                                     Reduction reduction = Reduction::sum) {
    const auto vol = volume_softmax(scores);
    const Mat<Scalar> pz = marginal_depth(vol);
    const Vec<Scalar> z = soft_depths(pz, scores.axis_coords);
    const auto rank = rank_loss(z, pairs, reduction);
    const auto heat = heatmap_loss(marginal_2d(vol), targets);
    // d z_n / d p(z|n) = axis_coords(z)
    const Mat<Scalar> grad_depth = scores.axis_coords * rank.grad.transpose();
    return {rank.loss + lambda * heat.loss,
            backprop_marginals(vol, Mat<Scalar>(lambda * heat.grad), grad_depth)};
}

// Fully supervised counterpart: squared error between soft depths and metric
// target depths replaces the ranking term.
template <typename Scalar>
MapLoss<Scalar> volumetric_full_loss(const VolumeScores<Scalar>& scores,
                                     const Vec<Scalar>& target_depths,
                                     const HeatmapTarget<Scalar>& targets,
                                     Scalar lambda = Scalar(kDefaultKeypointWeight)) {
    if (target_depths.size() != scores.grid.cols())
        throw DimensionError("volumetric_full_loss: target depth count mismatch");
    const auto vol = volume_softmax(scores);
    const Vec<Scalar> z = soft_depths(marginal_depth(vol), scores.axis_coords);
    const Vec<Scalar> dz = z - target_depths;
    const auto heat = heatmap_loss(marginal_2d(vol), targets);
    const Mat<Scalar> grad_depth = scores.axis_coords * (Scalar(2) * dz).transpose();
    return {dz.squaredNorm() + lambda * heat.loss,
            backprop_marginals(vol, Mat<Scalar>(lambda * heat.grad), grad_depth)};
}

// Uniform bin centers spanning [lo, hi].
template <typename Scalar>
Vec<Scalar> uniform_axis(Scalar lo, Scalar hi, int bins) {
    if (bins < 1 || !(hi > lo))
        throw InvalidInput("uniform_axis: need bins >= 1 and hi > lo");
    const Scalar step = (hi - lo) / Scalar(bins);
    Vec<Scalar> c(bins);
    for (int k = 0; k < bins; ++k)
        c(k) = lo + (Scalar(k) + Scalar(0.5)) * step;
    return c;
}

} // namespace ordinal

#endif // ORDINAL_VOLUMETRIC_HPP
