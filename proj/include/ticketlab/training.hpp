#pragma once

// The learning algorithm A(theta, u): seeded SGD with momentum and weight
// decay over mini-batches. The SGD randomness u controls exactly two things,
// the per-epoch data order and the per-step interpolation draws; everything
// else is a pure function of the inputs, so identical inputs give bitwise
// identical outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ticketlab/dataset.hpp"
#include "ticketlab/engine.hpp"
#include "ticketlab/errors.hpp"
#include "ticketlab/masking.hpp"
#include "ticketlab/model.hpp"
#include "ticketlab/rng.hpp"

namespace ticketlab {

struct LrSchedule {
    enum Kind { constant, step, cosine };
    Kind kind = constant;
    std::vector<int> milestones;  // strictly increasing epoch indices (step)
    double factor = 0.1;
};

struct TrainPlan {
    int epochs = 10;
    int batch_size = 128;
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    LrSchedule schedule;
    std::uint64_t sgd_seed = 0;
    bool aws_interpolation = false;

    void validate() const {
        if (epochs < 0) throw ConfigError("TrainPlan: epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("TrainPlan: batch_size must be >= 1");
        if (!(lr0 >= 0.0)) throw ConfigError("TrainPlan: lr0 must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw ConfigError("TrainPlan: momentum must lie in [0,1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("TrainPlan: weight_decay must be >= 0");
        if (schedule.kind == LrSchedule::step) {
            int prev = -1;
            for (int m : schedule.milestones) {
                if (m <= prev) throw ConfigError("TrainPlan: milestones must be strictly increasing");
                if (m >= epochs) throw ConfigError("TrainPlan: milestones must be < epochs");
                prev = m;
            }
        }
    }
};

inline double lr_at(const TrainPlan& plan, int epoch) {
    switch (plan.schedule.kind) {
        case LrSchedule::constant:
            return plan.lr0;
        case LrSchedule::step: {
            double lr = plan.lr0;
            for (int m : plan.schedule.milestones)
                if (epoch >= m) lr *= plan.schedule.factor;
            return lr;
        }
        case LrSchedule::cosine:
            return plan.lr0 * 0.5 *
                   (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                   static_cast<double>(plan.epochs)));
    }
    return plan.lr0;
}

struct SgdState {
    std::vector<double> velocity;
    int epoch = 0;
    std::uint64_t step = 0;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = std::numeric_limits<double>::quiet_NaN();
};

using MetricsLog = std::vector<EpochMetrics>;

struct TrainResult {
    ParamVector params;
    NormBuffers buffers;
    MetricsLog metrics;
};

// Invoked after each epoch with the current state; used for snapshots.
using EpochHook = std::function<void(int epoch, const ParamVector&, const NormBuffers&)>;

inline double evaluate_accuracy(const ParamVector& params, const NormBuffers& buffers,
                                const LabeledSet& set, std::size_t eval_batch = 256);

inline TrainResult train(const ParamVector& start_params, const NormBuffers& start_buffers,
                         const BinaryMask& mask, const std::vector<double>& psi_init,
                         const Dataset& data, const TrainPlan& plan,
                         const EpochHook& hook = {}) {
    plan.validate();
    if (mask.size() != start_params.size())
        throw ShapeError("train: mask length does not match parameter count");
    if (data.train.size() == 0) throw ConfigError("train: empty training set");

    TrainResult result;
    result.params = start_params;
    result.buffers = start_buffers;
    apply_mask(result.params.values, mask);

    const std::size_t d = result.params.size();
    const std::size_t n = data.train.size();
    SgdState state;
    state.velocity.assign(d, 0.0);
    std::vector<double>& velocity = state.velocity;

    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        state.epoch = epoch;
        Rng rng(seed_mix(plan.sgd_seed, static_cast<std::uint64_t>(epoch)));
        const std::vector<std::size_t> order = rng.permutation(n);
        const double lr = lr_at(plan, epoch);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t pos = 0; pos < n; pos += static_cast<std::size_t>(plan.batch_size)) {
            const std::size_t bsz = std::min<std::size_t>(plan.batch_size, n - pos);
            Batch batch;
            batch.inputs = Matrix(bsz, data.train.inputs.cols);
            batch.labels.resize(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const std::size_t src = order[pos + i];
                for (std::size_t j = 0; j < data.train.inputs.cols; ++j)
                    batch.inputs(i, j) = data.train.inputs(src, j);
                batch.labels[i] = data.train.labels[src];
            }

            ForwardMode mode = train_mode();
            if (plan.aws_interpolation) mode.aws_alpha = rng.uniform();  // fresh per mini-batch

            BackwardResult step;
            try {
                step = backward_full(result.params, result.buffers, psi_init, batch, mode);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " step " +
                                   std::to_string(pos / plan.batch_size) + ": " + e.what());
            }
            result.buffers = std::move(step.buffers);

            loss_sum += step.loss * static_cast<double>(bsz);
            for (std::size_t i = 0; i < bsz; ++i)
                if (argmax_row(step.logits, i) == static_cast<std::size_t>(batch.labels[i]))
                    ++correct;

            // v <- momentum*v + g + wd*theta;  theta <- theta - lr*v; then
            // re-mask both so pruned entries can never revive.
            for (std::size_t i = 0; i < d; ++i) {
                velocity[i] = plan.momentum * velocity[i] + step.grads[i] +
                              plan.weight_decay * result.params.values[i];
                result.params.values[i] -= lr * velocity[i];
                if (!mask.bits[i]) {
                    result.params.values[i] = 0.0;
                    velocity[i] = 0.0;
                }
            }
            ++state.step;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(n);
        m.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        if (data.test.size() > 0)
            m.test_acc = evaluate_accuracy(result.params, result.buffers, data.test);
        result.metrics.push_back(m);
        if (hook) hook(epoch, result.params, result.buffers);
    }
    return result;
}

inline double evaluate_accuracy(const ParamVector& params, const NormBuffers& buffers,
                                const LabeledSet& set, std::size_t eval_batch) {
    if (set.size() == 0) throw ConfigError("evaluate_accuracy: empty set");
    std::size_t correct = 0;
    const std::vector<double> no_psi;
    for (std::size_t pos = 0; pos < set.size(); pos += eval_batch) {
        const std::size_t bsz = std::min(eval_batch, set.size() - pos);
        Batch batch;
        batch.inputs = Matrix(bsz, set.inputs.cols);
        batch.labels.assign(set.labels.begin() + pos, set.labels.begin() + pos + bsz);
        for (std::size_t i = 0; i < bsz; ++i)
            for (std::size_t j = 0; j < set.inputs.cols; ++j)
                batch.inputs(i, j) = set.inputs(pos + i, j);
        const ForwardResult fwd = forward(params, buffers, no_psi, batch, eval_mode());
        for (std::size_t i = 0; i < bsz; ++i)
            if (argmax_row(fwd.logits, i) == static_cast<std::size_t>(batch.labels[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

// Re-estimates batch-norm running statistics for a parameter vector: runs
// stat_batches train-phase forwards (no updates, data order seeded by 0) and
// stores the plain average of the per-batch statistics. Needed to evaluate
// interpolated networks, whose blended buffers are statistically meaningless.
inline NormBuffers recompute_norm_stats(const ParamVector& params, const Dataset& data,
                                        int stat_batches, int batch_size = 128) {
    const ParamLayout& layout = *params.layout;
    if (layout.spec.norm_kind != NormKind::batch_norm)
        throw ConfigError("recompute_norm_stats: model has no batch-norm buffers");
    if (data.train.size() == 0) throw ConfigError("recompute_norm_stats: empty dataset");
    if (stat_batches < 1) throw ConfigError("recompute_norm_stats: need stat_batches >= 1");

    NormBuffers acc = fresh_buffers(layout);
    for (auto& v : acc.running_mean) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : acc.running_var) std::fill(v.begin(), v.end(), 0.0);

    Rng rng(seed_mix(0, 0x73746174ull /* "stat" */));
    const std::vector<std::size_t> order = rng.permutation(data.train.size());
    const NormBuffers scratch = fresh_buffers(layout);
    const std::vector<double> no_psi;
    const std::size_t n = data.train.size();

    std::size_t pos = 0;
    for (int b = 0; b < stat_batches; ++b) {
        const std::size_t bsz = std::min<std::size_t>(batch_size, n);
        Batch batch;
        batch.inputs = Matrix(bsz, data.train.inputs.cols);
        batch.labels.resize(bsz);
        for (std::size_t i = 0; i < bsz; ++i) {
            const std::size_t src = order[(pos + i) % n];  // wraps for long passes
            for (std::size_t j = 0; j < data.train.inputs.cols; ++j)
                batch.inputs(i, j) = data.train.inputs(src, j);
            batch.labels[i] = data.train.labels[src];
        }
        pos = (pos + bsz) % n;

        ForwardTrace trace;
        detail::forward_internal(params, scratch, no_psi, batch, train_mode(), &trace);
        for (std::size_t l = 0; l < layout.num_hidden(); ++l)
            for (std::size_t j = 0; j < layout.layers[l].out_dim; ++j) {
                acc.running_mean[l][j] += trace.layers[l].mean[j];
                acc.running_var[l][j] += trace.layers[l].var[j];
            }
    }
    const double inv = 1.0 / static_cast<double>(stat_batches);
    for (auto& v : acc.running_mean)
        for (double& x : v) x *= inv;
    for (auto& v : acc.running_var)
        for (double& x : v) x = std::max(x * inv, 1e-12);  // keep strictly positive
    return acc;
}

}  // namespace ticketlab
