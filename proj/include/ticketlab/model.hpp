#pragma once

// Model description, the flat parameter vector and its layout map. The layout
// partitions parameter indices into phi (everything outside normalization
// layers) and psi (normalization scale/bias), which the rest of the library
// leans on: pruning acts on weight segments, sign transfer treats phi and psi
// differently, and the interpolation hook applies to psi only.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ticketlab/errors.hpp"
#include "ticketlab/rng.hpp"

namespace ticketlab {

enum class NormKind { batch_norm, layer_norm, none };

inline std::string to_string(NormKind k) {
    switch (k) {
        case NormKind::batch_norm: return "batch_norm";
        case NormKind::layer_norm: return "layer_norm";
        case NormKind::none: return "none";
    }
    return "?";
}

struct ModelSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int output_dim = 0;
    NormKind norm_kind = NormKind::batch_norm;
    double norm_eps = 1e-5;
    double bn_momentum = 0.1;

    void validate() const {
        if (input_dim < 1) throw ConfigError("ModelSpec: input_dim must be >= 1");
        if (hidden_dims.empty()) throw ConfigError("ModelSpec: at least one hidden layer required");
        for (int h : hidden_dims)
            if (h < 1) throw ConfigError("ModelSpec: hidden dims must be >= 1");
        if (output_dim < 2) throw ConfigError("ModelSpec: output_dim must be >= 2 classes");
        if (!(norm_eps > 0.0)) throw ConfigError("ModelSpec: norm_eps must be positive");
        if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
            throw ConfigError("ModelSpec: bn_momentum must be in (0,1]");
    }

    bool operator==(const ModelSpec&) const = default;
};

enum class ParamRole { weight, bias, norm_scale, norm_bias };

inline std::string to_string(ParamRole r) {
    switch (r) {
        case ParamRole::weight: return "weight";
        case ParamRole::bias: return "bias";
        case ParamRole::norm_scale: return "norm_scale";
        case ParamRole::norm_bias: return "norm_bias";
    }
    return "?";
}

struct Segment {
    int layer = 0;  // 0..H-1 hidden, H = output layer
    ParamRole role = ParamRole::weight;
    std::size_t offset = 0;
    std::size_t length = 0;
};

// Per-layer offsets into the flat vector, resolved once at build time.
struct LayerOffsets {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t norm_scale = 0;  // meaningful only when has_norm
    std::size_t norm_bias = 0;
    bool has_norm = false;
};

struct ParamLayout {
    ModelSpec spec;
    std::vector<Segment> segments;
    std::vector<LayerOffsets> layers;  // hidden layers then output layer
    std::vector<std::size_t> phi_indices;
    std::vector<std::size_t> psi_indices;
    std::size_t d = 0;

    std::size_t num_hidden() const { return spec.hidden_dims.size(); }

    // FNV-1a over the structural description; used in mismatch diagnostics.
    std::uint64_t digest() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](std::uint64_t x) {
            for (int i = 0; i < 8; ++i) {
                h ^= (x >> (8 * i)) & 0xff;
                h *= 0x100000001b3ull;
            }
        };
        mix(static_cast<std::uint64_t>(spec.input_dim));
        for (int hd : spec.hidden_dims) mix(static_cast<std::uint64_t>(hd));
        mix(static_cast<std::uint64_t>(spec.output_dim));
        mix(static_cast<std::uint64_t>(spec.norm_kind));
        mix(d);
        return h;
    }
};

inline std::shared_ptr<const ParamLayout> build_layout(const ModelSpec& spec) {
    spec.validate();
    auto layout = std::make_shared<ParamLayout>();
    layout->spec = spec;
    const bool norm = spec.norm_kind != NormKind::none;
    std::size_t off = 0;
    auto push = [&](int layer, ParamRole role, std::size_t len) {
        layout->segments.push_back({layer, role, off, len});
        const bool psi = role == ParamRole::norm_scale || role == ParamRole::norm_bias;
        auto& idx = psi ? layout->psi_indices : layout->phi_indices;
        for (std::size_t i = 0; i < len; ++i) idx.push_back(off + i);
        off += len;
    };

    std::size_t in_dim = static_cast<std::size_t>(spec.input_dim);
    for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
        const std::size_t out_dim = static_cast<std::size_t>(spec.hidden_dims[l]);
        LayerOffsets lo;
        lo.in_dim = in_dim;
        lo.out_dim = out_dim;
        lo.weight = off;
        push(static_cast<int>(l), ParamRole::weight, in_dim * out_dim);
        lo.bias = off;
        push(static_cast<int>(l), ParamRole::bias, out_dim);
        if (norm) {
            lo.norm_scale = off;
            push(static_cast<int>(l), ParamRole::norm_scale, out_dim);
            lo.norm_bias = off;
            push(static_cast<int>(l), ParamRole::norm_bias, out_dim);
            lo.has_norm = true;
        }
        layout->layers.push_back(lo);
        in_dim = out_dim;
    }
    const std::size_t out_dim = static_cast<std::size_t>(spec.output_dim);
    LayerOffsets lo;
    lo.in_dim = in_dim;
    lo.out_dim = out_dim;
    lo.weight = off;
    push(static_cast<int>(spec.hidden_dims.size()), ParamRole::weight, in_dim * out_dim);
    lo.bias = off;
    push(static_cast<int>(spec.hidden_dims.size()), ParamRole::bias, out_dim);
    layout->layers.push_back(lo);
    layout->d = off;
    return layout;
}

struct ParamVector {
    std::vector<double> values;
    std::shared_ptr<const ParamLayout> layout;

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    // psi entries in layout order (norm_scale then norm_bias per layer).
    std::vector<double> extract_psi() const {
        std::vector<double> out;
        out.reserve(layout->psi_indices.size());
        for (std::size_t i : layout->psi_indices) out.push_back(values[i]);
        return out;
    }
};

inline bool same_layout(const ParamVector& a, const ParamVector& b) {
    return a.layout && b.layout && a.layout->spec == b.layout->spec &&
           a.layout->d == b.layout->d && a.values.size() == b.values.size();
}

inline void require_same_layout(const ParamVector& a, const ParamVector& b,
                                const char* what) {
    if (!same_layout(a, b))
        throw ShapeError(std::string(what) + ": parameter layouts differ");
}

// Running statistics for batch-norm layers; empty for layer_norm/none.
struct NormBuffers {
    std::vector<std::vector<double>> running_mean;
    std::vector<std::vector<double>> running_var;

    bool empty() const { return running_mean.empty(); }
};

inline NormBuffers fresh_buffers(const ParamLayout& layout) {
    NormBuffers b;
    if (layout.spec.norm_kind != NormKind::batch_norm) return b;
    for (std::size_t l = 0; l < layout.num_hidden(); ++l) {
        const std::size_t n = layout.layers[l].out_dim;
        b.running_mean.emplace_back(n, 0.0);
        b.running_var.emplace_back(n, 1.0);
    }
    return b;
}

struct BuiltModel {
    ParamVector params;
    NormBuffers buffers;
};

// Deterministic initialization: weights from a fan-in-scaled uniform
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, norm_scale 1, norm_bias 0.
inline BuiltModel build(const ModelSpec& spec, std::uint64_t init_seed) {
    auto layout = build_layout(spec);
    ParamVector p;
    p.layout = layout;
    p.values.assign(layout->d, 0.0);
    Rng rng(seed_mix(init_seed, 0x74636b62ull /* "tckb" */));
    for (const Segment& seg : layout->segments) {
        switch (seg.role) {
            case ParamRole::weight: {
                const std::size_t fan_in = layout->layers[seg.layer].in_dim;
                const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
                for (std::size_t i = 0; i < seg.length; ++i)
                    p.values[seg.offset + i] = rng.uniform(-bound, bound);
                break;
            }
            case ParamRole::bias:
            case ParamRole::norm_bias:
                break;  // already zero
            case ParamRole::norm_scale:
                for (std::size_t i = 0; i < seg.length; ++i)
                    p.values[seg.offset + i] = 1.0;
                break;
        }
    }
    return {std::move(p), fresh_buffers(*layout)};
}

}  // namespace ticketlab
