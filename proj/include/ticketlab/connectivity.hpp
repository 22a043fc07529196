#pragma once

// Interpolated-error analysis. For two parameter vectors the curve samples
// err(w_a*theta_a + w_b*theta_b) over a symmetric alpha grid and reports
// barrier values err_alpha - (err(theta_a) + err(theta_b))/2. Grid weights
// are paired as (grid[i], grid[G-1-i]) so swapping the endpoints reproduces
// the mirrored curve bitwise, and the endpoint barriers are computed as
// +-(err_0 - err_1)/2, which makes barrier(0) + barrier(1) cancel exactly.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "ticketlab/engine.hpp"
#include "ticketlab/errors.hpp"
#include "ticketlab/masking.hpp"
#include "ticketlab/model.hpp"
#include "ticketlab/training.hpp"

namespace ticketlab {

struct BarrierCurve {
    std::vector<double> alphas;
    std::vector<double> errors;    // error at alpha*theta_a + (1-alpha)*theta_b
    double error_a = 0.0;          // endpoint alpha = 1
    double error_b = 0.0;          // endpoint alpha = 0
    std::vector<double> barriers;  // errors - (error_a + error_b)/2
    double sup_barrier = 0.0;
    double argmax_alpha = 0.0;
};

struct LmcVerdict {
    double sup_barrier = 0.0;
    double epsilon = 0.0;
    bool connected = false;
};

enum class StatPolicy { recompute, keep };

inline std::string to_string(StatPolicy p) {
    return p == StatPolicy::recompute ? "recompute" : "keep";
}

// Fraction of misclassified examples, deterministic.
inline double eval_error(const ParamVector& params, const NormBuffers& buffers,
                         const LabeledSet& set) {
    return 1.0 - evaluate_accuracy(params, buffers, set);
}

namespace detail {

// Weighted combination with explicit endpoint branches: weight pairs (1,0)
// and (0,1) return the endpoint bitwise.
inline ParamVector combine(const ParamVector& a, const ParamVector& b, double wa, double wb) {
    ParamVector out = a;
    if (wa == 1.0 && wb == 0.0) return out;
    if (wa == 0.0 && wb == 1.0) {
        out.values = b.values;
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] = wa * a.values[i] + wb * b.values[i];
    return out;
}

inline NormBuffers combine_buffers(const NormBuffers& a, const NormBuffers& b, double wa,
                                   double wb) {
    NormBuffers out = a;
    if (wa == 1.0 && wb == 0.0) return out;
    if (wa == 0.0 && wb == 1.0) return b;
    for (std::size_t l = 0; l < out.running_mean.size(); ++l)
        for (std::size_t j = 0; j < out.running_mean[l].size(); ++j) {
            out.running_mean[l][j] = wa * a.running_mean[l][j] + wb * b.running_mean[l][j];
            out.running_var[l][j] = wa * a.running_var[l][j] + wb * b.running_var[l][j];
        }
    return out;
}

}  // namespace detail

struct BarrierOptions {
    int grid_size = 21;
    StatPolicy stat_policy = StatPolicy::recompute;
    int stat_batches = 0;   // 0: one full pass over the training split
    int stat_batch_size = 128;
};

inline BarrierCurve barrier_curve(const ParamVector& theta_a, const NormBuffers& buffers_a,
                                  const ParamVector& theta_b, const NormBuffers& buffers_b,
                                  const Dataset& data, const BarrierOptions& opt = {}) {
    require_same_layout(theta_a, theta_b, "barrier_curve");
    if (opt.grid_size < 3) throw ConfigError("barrier_curve: grid size must be >= 3");
    if (data.test.size() == 0) throw ConfigError("barrier_curve: empty evaluation set");
    const bool needs_stats = theta_a.layout->spec.norm_kind == NormKind::batch_norm;
    const bool recompute = needs_stats && opt.stat_policy == StatPolicy::recompute;
    int stat_batches = opt.stat_batches;
    if (recompute && stat_batches <= 0)
        stat_batches = static_cast<int>(
            (data.train.size() + opt.stat_batch_size - 1) / opt.stat_batch_size);

    const int G = opt.grid_size;
    BarrierCurve curve;
    curve.alphas.resize(G);
    curve.errors.resize(G);
    for (int i = 0; i < G; ++i)
        curve.alphas[i] = static_cast<double>(i) / static_cast<double>(G - 1);

    for (int i = 0; i < G; ++i) {
        const double wa = curve.alphas[i];
        const double wb = curve.alphas[G - 1 - i];  // symmetric partner weight
        const ParamVector theta = detail::combine(theta_a, theta_b, wa, wb);
        NormBuffers buffers;
        if (needs_stats)
            buffers = recompute ? recompute_norm_stats(theta, data, stat_batches, opt.stat_batch_size)
                                : detail::combine_buffers(buffers_a, buffers_b, wa, wb);
        curve.errors[i] = eval_error(theta, buffers, data.test);
    }

    curve.error_b = curve.errors.front();  // alpha = 0 is theta_b
    curve.error_a = curve.errors.back();
    const double mean = 0.5 * (curve.error_a + curve.error_b);
    const double half_gap = 0.5 * (curve.errors.front() - curve.errors.back());
    curve.barriers.resize(G);
    curve.barriers.front() = half_gap;  // equals errors[0] - mean, with exact cancellation
    curve.barriers.back() = -half_gap;
    for (int i = 1; i + 1 < G; ++i) curve.barriers[i] = curve.errors[i] - mean;

    curve.sup_barrier = curve.barriers[0];
    curve.argmax_alpha = curve.alphas[0];
    for (int i = 1; i < G; ++i)
        if (curve.barriers[i] > curve.sup_barrier) {
            curve.sup_barrier = curve.barriers[i];
            curve.argmax_alpha = curve.alphas[i];
        }
    return curve;
}

inline LmcVerdict is_lmc(const ParamVector& theta_a, const NormBuffers& buffers_a,
                         const ParamVector& theta_b, const NormBuffers& buffers_b,
                         const Dataset& data, double epsilon, const BarrierOptions& opt = {}) {
    if (!(epsilon > 0.0)) throw ConfigError("is_lmc: epsilon must be positive");
    const BarrierCurve curve = barrier_curve(theta_a, buffers_a, theta_b, buffers_b, data, opt);
    return {curve.sup_barrier, epsilon, curve.sup_barrier < epsilon};
}

// Trains two copies from the identical start under different SGD seeds and
// returns the barrier curve between the two solutions.
inline BarrierCurve stability_test(const ParamVector& start_params, const NormBuffers& buffers,
                                   const BinaryMask& mask, const TrainPlan& plan,
                                   std::uint64_t u1, std::uint64_t u2, const Dataset& data,
                                   const BarrierOptions& opt = {}) {
    const std::vector<double> psi_init = start_params.extract_psi();
    TrainPlan plan_a = plan;
    plan_a.sgd_seed = u1;
    TrainPlan plan_b = plan;
    plan_b.sgd_seed = u2;
    const TrainResult a = train(start_params, buffers, mask, psi_init, data, plan_a);
    const TrainResult b = train(start_params, buffers, mask, psi_init, data, plan_b);
    return barrier_curve(a.params, a.buffers, b.params, b.buffers, data, opt);
}

// Epsilon convention: sample standard deviation of test errors across
// independent dense trainings.
inline double epsilon_from_errors(const std::vector<double>& errors) {
    if (errors.size() < 2) throw ConfigError("epsilon_from_errors: need at least two runs");
    double mean = 0.0;
    for (double e : errors) mean += e;
    mean /= static_cast<double>(errors.size());
    double ss = 0.0;
    for (double e : errors) ss += (e - mean) * (e - mean);
    return std::sqrt(ss / static_cast<double>(errors.size() - 1));
}

}  // namespace ticketlab
