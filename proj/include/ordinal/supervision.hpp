#ifndef ORDINAL_SUPERVISION_HPP
#define ORDINAL_SUPERVISION_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ordinal/error.hpp"
#include "ordinal/geometry.hpp"

namespace ordinal {

// r = +1: joint i is closer than j; r = -1: j is closer; r = 0: same depth.
struct OrdinalRelation {
    int i = 0;
    int j = 0;
    int r = 0;

    friend bool operator==(const OrdinalRelation&, const OrdinalRelation&) = default;
};

inline bool valid_relation_value(int r) { return r == 1 || r == -1 || r == 0; }

// The annotated subset of joint pairs. Relations need not be globally
// consistent, but an unordered pair appears at most once.
struct RelationSet {
    std::vector<OrdinalRelation> relations;

    std::size_t size() const { return relations.size(); }
    bool empty() const { return relations.empty(); }
    // Throws IndexError / ContractViolation on a bad entry or duplicate pair.
    void validate(int joint_count) const;

    friend bool operator==(const RelationSet&, const RelationSet&) = default;
};

using Visibility = Eigen::Array<bool, Eigen::Dynamic, 1>;

enum class Reduction { sum, mean };

// log(1 + exp(t)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar t) {
    using std::abs;
    using std::exp;
    using std::log1p;
    return (t > Scalar(0) ? t : Scalar(0)) + log1p(exp(-abs(t)));
}

template <typename Scalar>
Scalar sigmoid(Scalar t) {
    using std::exp;
    if (t >= Scalar(0))
        return Scalar(1) / (Scalar(1) + exp(-t));
    const Scalar e = exp(t);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
struct PairLoss {
    Scalar loss;
    Scalar d_zi;
    Scalar d_zj;
};

template <typename Scalar>
PairLoss<Scalar> pair_rank_loss(Scalar zi, Scalar zj, int r) {
    const Scalar diff = zi - zj;
    switch (r) {
    case 1: {
        const Scalar s = sigmoid(diff);
        return {softplus(diff), s, -s};
    }
    case -1: {
        const Scalar s = sigmoid(-diff);
        return {softplus(-diff), -s, s};
    }
    case 0:
        return {diff * diff, Scalar(2) * diff, Scalar(-2) * diff};
    default:
        throw ContractViolation("pair_rank_loss: relation must be +1, -1 or 0, got " +
                                std::to_string(r));
    }
}

template <typename Scalar>
struct DepthLoss {
    Scalar loss;
    Vec<Scalar> grad;
};

template <typename Derived>
DepthLoss<typename Derived::Scalar> rank_loss(const Eigen::MatrixBase<Derived>& z,
                                              const RelationSet& pairs,
                                              Reduction reduction = Reduction::sum) {
    using Scalar = typename Derived::Scalar;
    const auto n = static_cast<int>(z.size());
    DepthLoss<Scalar> out{Scalar(0), Vec<Scalar>::Zero(n)};
    for (const auto& rel : pairs.relations) {
        if (rel.i < 0 || rel.i >= n || rel.j < 0 || rel.j >= n)
            throw IndexError("rank_loss: joint index out of range");
        const auto pl = pair_rank_loss<Scalar>(z(rel.i), z(rel.j), rel.r);
        out.loss += pl.loss;
        out.grad(rel.i) += pl.d_zi;
        out.grad(rel.j) += pl.d_zj;
    }
    if (reduction == Reduction::mean && !pairs.empty()) {
        const auto count = static_cast<Scalar>(pairs.size());
        out.loss /= count;
        out.grad /= count;
    }
    return out;
}

template <typename Scalar>
struct KeypointLoss {
    Scalar loss;
    Pose2<Scalar> grad;
};

// Squared L2 over visible joints. An empty visibility mask means all visible.
template <typename Scalar>
KeypointLoss<Scalar> keypoint_loss(const Pose2<Scalar>& pred, const Pose2<Scalar>& gt,
                                   const Visibility& visibility = {}) {
    if (pred.rows() != gt.rows())
        throw DimensionError("keypoint_loss: joint counts differ");
    if (visibility.size() != 0 && visibility.size() != pred.rows())
        throw DimensionError("keypoint_loss: visibility mask size mismatch");
    Pose2<Scalar> diff = pred - gt;
    if (visibility.size() != 0)
        for (Eigen::Index n = 0; n < diff.rows(); ++n)
            if (!visibility(n))
                diff.row(n).setZero();
    return {diff.squaredNorm(), Scalar(2) * diff};
}

template <typename Scalar>
struct WeakLoss {
    Scalar loss;
    Vec<Scalar> grad_depth;
    Pose2<Scalar> grad_keypoints;
};

inline constexpr double kDefaultKeypointWeight = 100.0;

// rank_loss(z) + lambda * keypoint_loss.
template <typename Scalar>
WeakLoss<Scalar> combined_weak_loss(const Vec<Scalar>& z, const RelationSet& pairs,
                                    const Pose2<Scalar>& pred2d, const Pose2<Scalar>& gt2d,
                                    const Visibility& visibility = {},
                                    Scalar lambda = Scalar(kDefaultKeypointWeight),
                                    Reduction reduction = Reduction::sum) {
    if (z.size() != pred2d.rows())
        throw DimensionError("combined_weak_loss: depth and keypoint counts differ");
    auto rank = rank_loss(z, pairs, reduction);
    auto keyp = keypoint_loss(pred2d, gt2d, visibility);
    return {rank.loss + lambda * keyp.loss, std::move(rank.grad), lambda * keyp.grad};
}

// All C(N,2) pairs (i < j): ties when |z_i - z_j| < threshold_mm, otherwise
// +1 when i is closer.
template <typename Derived>
RelationSet relations_from_depths(const Eigen::MatrixBase<Derived>& z, double threshold_mm) {
    if (!(threshold_mm >= 0.0))
        throw InvalidInput("relations_from_depths: threshold must be non-negative");
    if (!z.allFinite())
        throw InvalidInput("relations_from_depths: non-finite depth");
    const auto n = static_cast<int>(z.size());
    RelationSet out;
    out.relations.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double zi = static_cast<double>(z(i));
            const double zj = static_cast<double>(z(j));
            int r = 0;
            if (!(std::abs(zi - zj) < threshold_mm) && zi != zj)
                r = zi < zj ? 1 : -1;
            out.relations.push_back({i, j, r});
        }
    return out;
}

// Relation of (a, b) looked up in either orientation; nullopt when absent.
std::optional<int> lookup_relation(const RelationSet& set, int a, int b);

// Brute force over every fully annotated triple: returns the first triple
// whose three relations admit no total preorder, or nullopt.
std::optional<std::array<int, 3>> find_contradiction(const RelationSet& set, int joint_count);

} // namespace ordinal

#endif // ORDINAL_SUPERVISION_HPP
