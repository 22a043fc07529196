#pragma once

// Binary/signed mask algebra. Masks are flat vectors aligned with a
// ParamVector. The prunable set is the linear-layer weight matrices; biases
// and normalization parameters are never pruned and their mask bits are
// pinned to 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ticketlab/errors.hpp"
#include "ticketlab/model.hpp"

namespace ticketlab {

struct BinaryMask {
    std::vector<std::uint8_t> bits;      // {0,1}
    std::vector<std::uint8_t> prunable;  // entries eligible for pruning

    std::size_t size() const { return bits.size(); }

    std::size_t surviving_prunable() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (prunable[i] && bits[i]) ++n;
        return n;
    }

    std::size_t total_prunable() const {
        std::size_t n = 0;
        for (std::uint8_t p : prunable) n += p;
        return n;
    }
};

struct SignedMask {
    std::vector<std::int8_t> signs;  // {-1, 0, +1}

    std::size_t size() const { return signs.size(); }
};

struct TransferMode {
    enum Kind { subnetwork, mask_only, signed_init, signed_keep_norm, signed_init_bias_const };
    Kind kind = subnetwork;
    double bias_const = 0.0;  // signed_init_bias_const only

    static TransferMode bias_const_mode(double c) {
        if (!std::isfinite(c)) throw ConfigError("TransferMode: bias constant must be finite");
        return {signed_init_bias_const, c};
    }
};

inline std::string to_string(TransferMode::Kind k) {
    switch (k) {
        case TransferMode::subnetwork: return "subnetwork";
        case TransferMode::mask_only: return "mask_only";
        case TransferMode::signed_init: return "signed_init";
        case TransferMode::signed_keep_norm: return "signed_keep_norm";
        case TransferMode::signed_init_bias_const: return "signed_init_bias_const";
    }
    return "?";
}

inline BinaryMask dense_mask(const ParamLayout& layout) {
    BinaryMask m;
    m.bits.assign(layout.d, 1);
    m.prunable.assign(layout.d, 0);
    for (const Segment& seg : layout.segments)
        if (seg.role == ParamRole::weight)
            std::fill(m.prunable.begin() + seg.offset,
                      m.prunable.begin() + seg.offset + seg.length, std::uint8_t{1});
    return m;
}

inline std::int8_t sign0_of(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

inline SignedMask sign0(const std::vector<double>& values) {
    SignedMask s;
    s.signs.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw NumericError("sign0: non-finite entry at index " + std::to_string(i));
        s.signs[i] = sign0_of(values[i]);
    }
    return s;
}

inline std::vector<double> masked_values(const ParamVector& params, const BinaryMask& mask) {
    std::vector<double> out(params.values);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!mask.bits[i]) out[i] = 0.0;
    return out;
}

inline void apply_mask(std::vector<double>& values, const BinaryMask& mask) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!mask.bits[i]) values[i] = 0.0;
}

enum class PruneScope { global, per_layer };

// One magnitude-pruning step: of the surviving prunable entries, the
// round(rate * count) with smallest |value| get mask 0. Ties break toward the
// lower index so the result is deterministic and oracle-checkable. Scope
// global pools all weight segments into one ranking; per_layer ranks each
// weight segment separately.
inline BinaryMask prune_step(const ParamVector& params, const BinaryMask& mask, double rate,
                             PruneScope scope = PruneScope::global) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("prune_step: rate must lie in [0, 1)");
    if (mask.size() != params.size())
        throw ShapeError("prune_step: mask length does not match parameter count");
    BinaryMask out = mask;
    auto prune_range = [&](std::vector<std::size_t>& surviving) {
        const auto k = static_cast<std::size_t>(
            std::llround(rate * static_cast<double>(surviving.size())));
        if (k == 0) return;
        std::sort(surviving.begin(), surviving.end(), [&](std::size_t a, std::size_t b) {
            const double ma = std::abs(params.values[a]);
            const double mb = std::abs(params.values[b]);
            return ma != mb ? ma < mb : a < b;
        });
        for (std::size_t i = 0; i < k; ++i) out.bits[surviving[i]] = 0;
    };

    if (scope == PruneScope::global) {
        std::vector<std::size_t> surviving;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask.prunable[i] && mask.bits[i]) surviving.push_back(i);
        prune_range(surviving);
    } else {
        for (const Segment& seg : params.layout->segments) {
            if (seg.role != ParamRole::weight) continue;
            std::vector<std::size_t> surviving;
            for (std::size_t i = seg.offset; i < seg.offset + seg.length; ++i)
                if (mask.prunable[i] && mask.bits[i]) surviving.push_back(i);
            prune_range(surviving);
        }
    }
    return out;
}

inline double remaining_ratio(const BinaryMask& mask) {
    const std::size_t total = mask.total_prunable();
    if (total == 0) throw ConfigError("remaining_ratio: mask has no prunable entries");
    return static_cast<double>(mask.surviving_prunable()) / static_cast<double>(total);
}

// Start-point construction for final training. theta_init supplies fresh
// magnitudes, theta_sub the trained subnetwork, signs its signed mask.
inline ParamVector transfer(const ParamVector& theta_init, const ParamVector& theta_sub,
                            const BinaryMask& mask, const SignedMask& signs, TransferMode mode) {
    require_same_layout(theta_init, theta_sub, "transfer");
    if (mask.size() != theta_init.size() || signs.size() != theta_init.size())
        throw ShapeError("transfer: mask/sign length does not match parameter count");
    const ParamLayout& layout = *theta_init.layout;
    ParamVector out = theta_init;

    switch (mode.kind) {
        case TransferMode::subnetwork:
            out.values = theta_sub.values;
            apply_mask(out.values, mask);
            break;
        case TransferMode::mask_only:
            apply_mask(out.values, mask);
            break;
        case TransferMode::signed_init:
            for (std::size_t i = 0; i < out.size(); ++i)
                out.values[i] = std::abs(theta_init.values[i]) * signs.signs[i];
            break;
        case TransferMode::signed_keep_norm:
            for (std::size_t i = 0; i < out.size(); ++i)
                out.values[i] = std::abs(theta_init.values[i]) * signs.signs[i];
            for (std::size_t i : layout.psi_indices) out.values[i] = theta_sub.values[i];
            break;
        case TransferMode::signed_init_bias_const:
            for (std::size_t i = 0; i < out.size(); ++i)
                out.values[i] = std::abs(theta_init.values[i]) * signs.signs[i];
            for (const Segment& seg : layout.segments)
                if (seg.role == ParamRole::norm_bias)
                    for (std::size_t i = seg.offset; i < seg.offset + seg.length; ++i)
                        out.values[i] = std::abs(mode.bias_const) * signs.signs[i];
            break;
    }
    return out;
}

// Binary mask induced by a signed mask: support of the signs on prunable
// entries, pinned 1 elsewhere.
inline BinaryMask support_mask(const SignedMask& signs, const ParamLayout& layout) {
    BinaryMask m = dense_mask(layout);
    if (signs.size() != layout.d)
        throw ShapeError("support_mask: sign length does not match layout");
    for (std::size_t i = 0; i < layout.d; ++i)
        if (m.prunable[i]) m.bits[i] = signs.signs[i] != 0 ? 1 : 0;
    return m;
}

}  // namespace ticketlab
