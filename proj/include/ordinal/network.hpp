#ifndef ORDINAL_NETWORK_HPP
#define ORDINAL_NETWORK_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ordinal/error.hpp"
#include "ordinal/random.hpp"
#include "ordinal/geometry.hpp"

namespace ordinal {

enum class LayerKind { linear, relu, residual_block };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// A residual block keeps its width (in_dim == out_dim) and holds two
// linear + ReLU stages followed by the skip connection. Dropout applies after
// each ReLU, for `relu` layers and inside residual blocks.
struct LayerSpec {
    LayerKind kind = LayerKind::linear;
    int in_dim = 1;
    int out_dim = 1;
    double dropout_rate = 0.0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using NetworkSpec = std::vector<LayerSpec>;

// linear(in -> hidden), relu, `blocks` residual blocks, linear(hidden -> out).
NetworkSpec residual_mlp(int in_dim, int hidden, int out_dim, int blocks, double dropout);

void validate_spec(const NetworkSpec& spec);

inline Eigen::Index layer_param_count(const LayerSpec& l) {
    switch (l.kind) {
    case LayerKind::linear:
        return static_cast<Eigen::Index>(l.out_dim) * (l.in_dim + 1);
    case LayerKind::relu:
        return 0;
    case LayerKind::residual_block:
        return 2 * static_cast<Eigen::Index>(l.out_dim) * (l.in_dim + 1);
    }
    return 0;
}

// Feedforward network over column batches (features x batch) with all
// parameters in one flat vector. Each linear map stores its weight matrix
// (out x in, column major) followed by its bias.
template <typename Scalar>
class Network {
public:
    using Matrix = Mat<Scalar>;
    using Vector = Vec<Scalar>;

    struct LayerCache {
        Matrix input;
        Matrix hidden_pre;   // residual: first pre-activation
        Matrix hidden_post;  // residual: first post-activation (after dropout)
        Matrix output_pre;   // residual: second pre-activation
        Matrix mask_a;       // dropout masks, empty when dropout is off
        Matrix mask_b;
    };

    struct Cache {
        std::vector<LayerCache> layers;
        std::uint64_t version = 0;
        const Network* owner = nullptr;
    };

    struct Gradients {
        Vector params;
        Matrix input;
    };

    Network() = default;

    explicit Network(NetworkSpec spec) : spec_(std::move(spec)) {
        validate_spec(spec_);
        offsets_.reserve(spec_.size());
        Eigen::Index total = 0;
        for (const auto& l : spec_) {
            offsets_.push_back(total);
            total += layer_param_count(l);
        }
        params_ = Vector::Zero(total);
    }

    // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    static Network initialized(NetworkSpec spec, std::uint64_t seed) {
        Network net(std::move(spec));
        Rng rng(seed);
        for (std::size_t k = 0; k < net.spec_.size(); ++k) {
            const auto& l = net.spec_[k];
            const int stages = l.kind == LayerKind::linear ? 1
                               : l.kind == LayerKind::residual_block ? 2 : 0;
            Eigen::Index at = net.offsets_[k];
            for (int s = 0; s < stages; ++s) {
                const double limit = std::sqrt(6.0 / (l.in_dim + l.out_dim));
                const Eigen::Index w = static_cast<Eigen::Index>(l.out_dim) * l.in_dim;
                for (Eigen::Index i = 0; i < w; ++i)
                    net.params_(at + i) = Scalar(uniform(rng, -limit, limit));
                at += w + l.out_dim;
            }
        }
        net.seed_ = seed;
        return net;
    }

    const NetworkSpec& spec() const { return spec_; }
    int input_dim() const { return spec_.front().in_dim; }
    int output_dim() const { return spec_.back().out_dim; }
    Eigen::Index param_count() const { return params_.size(); }
    std::uint64_t seed() const { return seed_; }
    void set_seed(std::uint64_t seed) { seed_ = seed; }

    const Vector& params() const { return params_; }
    // Any mutable access invalidates caches produced by earlier forward passes.
    Vector& mutable_params() {
        ++version_;
        return params_;
    }

    // Inference pass (dropout off) when `dropout` is null; with a generator,
    // dropout masks are drawn from it in layer order.
    Matrix forward(const Matrix& input, Cache* cache = nullptr, Rng* dropout = nullptr) const {
        if (input.rows() != input_dim())
            throw DimensionError("forward: input has " + std::to_string(input.rows()) +
                                 " rows, network expects " + std::to_string(input_dim()));
        if (cache) {
            cache->layers.assign(spec_.size(), LayerCache{});
            cache->version = version_;
            cache->owner = this;
        }
        Matrix x = input;
        for (std::size_t k = 0; k < spec_.size(); ++k) {
            const auto& l = spec_[k];
            LayerCache* lc = cache ? &cache->layers[k] : nullptr;
            if (lc)
                lc->input = x;
            switch (l.kind) {
            case LayerKind::linear: {
                x = apply_linear(offsets_[k], l.in_dim, l.out_dim, x);
                break;
            }
            case LayerKind::relu: {
                Matrix mask = dropout_mask(l.dropout_rate, x.rows(), x.cols(), dropout);
                x = x.cwiseMax(Scalar(0));
                if (mask.size())
                    x.array() *= mask.array();
                if (lc)
                    lc->mask_a = std::move(mask);
                break;
            }
            case LayerKind::residual_block: {
                const int w = l.out_dim;
                const Eigen::Index second = offsets_[k] + static_cast<Eigen::Index>(w) * (w + 1);
                Matrix h1 = apply_linear(offsets_[k], w, w, x);
                Matrix mask_a = dropout_mask(l.dropout_rate, h1.rows(), h1.cols(), dropout);
                Matrix a1 = h1.cwiseMax(Scalar(0));
                if (mask_a.size())
                    a1.array() *= mask_a.array();
                Matrix h2 = apply_linear(second, w, w, a1);
                Matrix mask_b = dropout_mask(l.dropout_rate, h2.rows(), h2.cols(), dropout);
                Matrix a2 = h2.cwiseMax(Scalar(0));
                if (mask_b.size())
                    a2.array() *= mask_b.array();
                x += a2;
                if (lc) {
                    lc->hidden_pre = std::move(h1);
                    lc->hidden_post = std::move(a1);
                    lc->output_pre = std::move(h2);
                    lc->mask_a = std::move(mask_a);
                    lc->mask_b = std::move(mask_b);
                }
                break;
            }
            }
        }
        return x;
    }

    Gradients backward(const Cache& cache, const Matrix& output_grad) const {
        if (cache.owner != this || cache.version != version_ ||
            cache.layers.size() != spec_.size())
            throw ContractViolation("backward: cache does not belong to the current parameters");
        if (output_grad.rows() != output_dim() ||
            output_grad.cols() != cache.layers.front().input.cols())
            throw DimensionError("backward: output gradient shape mismatch");
        Gradients out{Vector::Zero(params_.size()), Matrix()};
        Matrix g = output_grad;
        for (std::size_t k = spec_.size(); k-- > 0;) {
            const auto& l = spec_[k];
            const LayerCache& lc = cache.layers[k];
            switch (l.kind) {
            case LayerKind::linear:
                g = linear_backward(offsets_[k], l.in_dim, l.out_dim, lc.input, g, out.params);
                break;
            case LayerKind::relu: {
                Matrix d = (lc.input.array() > Scalar(0)).template cast<Scalar>().matrix();
                if (lc.mask_a.size())
                    d.array() *= lc.mask_a.array();
                g = g.cwiseProduct(d);
                break;
            }
            case LayerKind::residual_block: {
                const int w = l.out_dim;
                const Eigen::Index second = offsets_[k] + static_cast<Eigen::Index>(w) * (w + 1);
                Matrix d2 = (lc.output_pre.array() > Scalar(0)).template cast<Scalar>().matrix();
                if (lc.mask_b.size())
                    d2.array() *= lc.mask_b.array();
                Matrix gh2 = g.cwiseProduct(d2);
                Matrix ga1 = linear_backward(second, w, w, lc.hidden_post, gh2, out.params);
                Matrix d1 = (lc.hidden_pre.array() > Scalar(0)).template cast<Scalar>().matrix();
                if (lc.mask_a.size())
                    d1.array() *= lc.mask_a.array();
                Matrix gh1 = ga1.cwiseProduct(d1);
                g += linear_backward(offsets_[k], w, w, lc.input, gh1, out.params);
                break;
            }
            }
        }
        out.input = std::move(g);
        return out;
    }

private:
    Matrix apply_linear(Eigen::Index at, int in, int out, const Matrix& x) const {
        Eigen::Map<const Matrix> w(params_.data() + at, out, in);
        Eigen::Map<const Vector> b(params_.data() + at + static_cast<Eigen::Index>(out) * in, out);
        Matrix y = w * x;
        y.colwise() += b;
        return y;
    }

    Matrix linear_backward(Eigen::Index at, int in, int out, const Matrix& x, const Matrix& g,
                           Vector& grads) const {
        Eigen::Map<const Matrix> w(params_.data() + at, out, in);
        Eigen::Map<Matrix> gw(grads.data() + at, out, in);
        Eigen::Map<Vector> gb(grads.data() + at + static_cast<Eigen::Index>(out) * in, out);
        gw.noalias() += g * x.transpose();
        gb += g.rowwise().sum();
        return w.transpose() * g;
    }

    static Matrix dropout_mask(double rate, Eigen::Index rows, Eigen::Index cols, Rng* rng) {
        if (!rng || rate <= 0.0)
            return Matrix();
        const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
        Matrix mask(rows, cols);
        for (Eigen::Index i = 0; i < mask.size(); ++i)
            mask.data()[i] = uniform01(*rng) < rate ? Scalar(0) : keep_scale;
        return mask;
    }

    NetworkSpec spec_;
    std::vector<Eigen::Index> offsets_;
    Vector params_;
    std::uint64_t seed_ = 0;
    std::uint64_t version_ = 0;
};

struct RmsPropConfig {
    double learning_rate = 2.5e-4;
    double smoothing = 0.99;
    double epsilon = 1e-8;
};

template <typename Scalar>
struct OptimizerState {
    RmsPropConfig config;
    Vec<Scalar> mean_square;
    long step = 0;
};

// v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)
template <typename Scalar>
void rmsprop_step(OptimizerState<Scalar>& state, Vec<Scalar>& params, const Vec<Scalar>& grads) {
    if (grads.size() != params.size())
        throw DimensionError("rmsprop_step: gradient and parameter sizes differ");
    if (!grads.allFinite())
        throw TrainingError("rmsprop_step: non-finite gradient", state.step);
    if (state.mean_square.size() == 0)
        state.mean_square = Vec<Scalar>::Zero(params.size());
    if (state.mean_square.size() != params.size())
        throw DimensionError("rmsprop_step: optimizer state size mismatch");
    const auto rho = Scalar(state.config.smoothing);
    state.mean_square = rho * state.mean_square + (Scalar(1) - rho) * grads.cwiseAbs2();
    params.array() -= Scalar(state.config.learning_rate) * grads.array() /
                      (state.mean_square.array().sqrt() + Scalar(state.config.epsilon));
    ++state.step;
}

} // namespace ordinal

#endif // ORDINAL_NETWORK_HPP
