#include "ordinal/network.hpp"

namespace ordinal {

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::linear:
        return "linear";
    case LayerKind::relu:
        return "relu";
    case LayerKind::residual_block:
        return "residual-block";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
    if (name == "linear")
        return LayerKind::linear;
    if (name == "relu")
        return LayerKind::relu;
    if (name == "residual-block")
        return LayerKind::residual_block;
    throw InvalidInput("unknown layer kind '" + name + "'");
}

NetworkSpec residual_mlp(int in_dim, int hidden, int out_dim, int blocks, double dropout) {
    NetworkSpec spec;
    spec.push_back({LayerKind::linear, in_dim, hidden, 0.0});
    spec.push_back({LayerKind::relu, hidden, hidden, dropout});
    for (int b = 0; b < blocks; ++b)
        spec.push_back({LayerKind::residual_block, hidden, hidden, dropout});
    spec.push_back({LayerKind::linear, hidden, out_dim, 0.0});
    return spec;
}

void validate_spec(const NetworkSpec& spec) {
    if (spec.empty())
        throw InvalidInput("network spec has no layers");
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const auto& l = spec[k];
        const std::string where = "layer " + std::to_string(k) + " (" + to_string(l.kind) + ")";
        if (l.in_dim < 1 || l.out_dim < 1)
            throw InvalidInput(where + ": dimensions must be positive");
        if (!(l.dropout_rate >= 0.0 && l.dropout_rate < 1.0))
            throw InvalidInput(where + ": dropout rate must lie in [0, 1)");
        if (l.kind != LayerKind::linear && l.in_dim != l.out_dim)
            throw InvalidInput(where + ": must preserve width");
        if (l.kind == LayerKind::linear && l.dropout_rate != 0.0)
            throw InvalidInput(where + ": linear layers take no dropout");
        if (k > 0 && spec[k - 1].out_dim != l.in_dim)
            throw InvalidInput(where + ": input width does not match previous layer");
    }
}

} // namespace ordinal
