#pragma once

// The four iterative pruning procedures. Each iteration trains under the
// iteration plan, prunes by global magnitude, then rewinds according to the
// kind: imp rewinds parameters to initialization, wr to a warm-up snapshot,
// lrr/aws keep parameters and only restart the learning-rate schedule (which
// happens naturally because each iteration gets a fresh plan). aws is lrr
// with interpolated normalization parameters during iteration forwards.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ticketlab/engine.hpp"
#include "ticketlab/errors.hpp"
#include "ticketlab/masking.hpp"
#include "ticketlab/model.hpp"
#include "ticketlab/training.hpp"

namespace ticketlab {

enum class PipelineKind { imp, wr, lrr, aws };

inline std::string to_string(PipelineKind k) {
    switch (k) {
        case PipelineKind::imp: return "imp";
        case PipelineKind::wr: return "wr";
        case PipelineKind::lrr: return "lrr";
        case PipelineKind::aws: return "aws";
    }
    return "?";
}

struct PipelineConfig {
    PipelineKind kind = PipelineKind::lrr;
    int iterations = 8;
    double prune_rate = 0.2;
    TrainPlan warmup_plan;
    TrainPlan iteration_plan;
    TrainPlan final_plan;
    int wr_rewind_point = -1;  // wr only; -1 means end of warm-up
    PruneScope prune_scope = PruneScope::global;

    void validate() const {
        if (iterations < 1) throw ConfigError("PipelineConfig: iterations must be >= 1");
        if (!(prune_rate >= 0.0 && prune_rate < 1.0))
            throw ConfigError("PipelineConfig: prune_rate must lie in [0,1)");
        warmup_plan.validate();
        iteration_plan.validate();
        final_plan.validate();
        const bool needs_aws = kind == PipelineKind::aws;
        if (iteration_plan.aws_interpolation != needs_aws)
            throw ConfigError("PipelineConfig: iteration_plan.aws_interpolation must be " +
                              std::string(needs_aws ? "true" : "false") + " for kind " +
                              to_string(kind));
        if (final_plan.aws_interpolation)
            throw ConfigError("PipelineConfig: final_plan must not interpolate");
        if (kind == PipelineKind::wr && wr_rewind_point > warmup_plan.epochs)
            throw ConfigError("PipelineConfig: wr_rewind_point exceeds warm-up epochs");
    }
};

struct IterationRecord {
    int iteration = 0;
    double remaining = 1.0;
    double post_prune_test_error = 0.0;  // error of theta_t (.) m_t before the next training
    MetricsLog metrics;
};

struct PipelineResult {
    ModelSpec spec;
    std::uint64_t init_seed = 0;
    ParamVector theta0;
    std::vector<double> psi_init;
    ParamVector final_params;   // theta_T (unmasked storage; masked on use)
    NormBuffers final_buffers;
    BinaryMask final_mask;      // m_T
    SignedMask signed_mask;     // s_T = sign0(theta_T (.) m_T)
    MetricsLog warmup_metrics;
    std::vector<IterationRecord> iterations;
};

inline PipelineResult run_pipeline(const PipelineConfig& config, const ModelSpec& spec,
                                   const Dataset& data, std::uint64_t init_seed) {
    config.validate();
    spec.validate();

    PipelineResult result;
    result.spec = spec;
    result.init_seed = init_seed;
    auto [theta0, buffers0] = build(spec, init_seed);
    result.theta0 = theta0;
    result.psi_init = theta0.extract_psi();

    BinaryMask mask = dense_mask(*theta0.layout);

    // Warm-up; for wr also capture the rewind snapshot.
    const int rewind_epoch =
        config.wr_rewind_point >= 0 ? config.wr_rewind_point : config.warmup_plan.epochs;
    ParamVector rewind_params = theta0;
    NormBuffers rewind_buffers = buffers0;
    EpochHook warmup_hook;
    if (config.kind == PipelineKind::wr && rewind_epoch > 0)
        warmup_hook = [&](int epoch, const ParamVector& p, const NormBuffers& b) {
            if (epoch + 1 == rewind_epoch) {
                rewind_params = p;
                rewind_buffers = b;
            }
        };
    TrainResult state{theta0, buffers0, {}};
    if (config.warmup_plan.epochs > 0) {
        state = train(theta0, buffers0, mask, result.psi_init, data, config.warmup_plan,
                      warmup_hook);
        result.warmup_metrics = state.metrics;
    }

    for (int t = 1; t <= config.iterations; ++t) {
        TrainPlan plan = config.iteration_plan;
        plan.sgd_seed = seed_mix(config.iteration_plan.sgd_seed, static_cast<std::uint64_t>(t));
        TrainResult trained;
        try {
            trained = train(state.params, state.buffers, mask, result.psi_init, data, plan);
        } catch (const NumericError& e) {
            throw NumericError("pipeline iteration " + std::to_string(t) + ": " + e.what());
        }

        mask = prune_step(trained.params, mask, config.prune_rate, config.prune_scope);

        IterationRecord rec;
        rec.iteration = t;
        rec.remaining = remaining_ratio(mask);
        rec.metrics = trained.metrics;

        switch (config.kind) {
            case PipelineKind::imp:
                state.params = result.theta0;
                state.buffers = fresh_buffers(*theta0.layout);
                break;
            case PipelineKind::wr:
                state.params = rewind_params;
                state.buffers = rewind_buffers;
                break;
            case PipelineKind::lrr:
            case PipelineKind::aws:
                state.params = std::move(trained.params);
                state.buffers = std::move(trained.buffers);
                break;
        }
        apply_mask(state.params.values, mask);
        if (data.test.size() > 0)
            rec.post_prune_test_error =
                1.0 - evaluate_accuracy(state.params, state.buffers, data.test);
        result.iterations.push_back(std::move(rec));
    }

    result.final_params = state.params;
    result.final_buffers = state.buffers;
    result.final_mask = mask;
    result.signed_mask = sign0(masked_values(result.final_params, mask));
    return result;
}

struct FinalStart {
    enum Kind { subnetwork, transfer };
    Kind kind = subnetwork;
    TransferMode mode;          // transfer only
    std::uint64_t fresh_seed = 0;  // transfer only
};

struct FinalTrainResult {
    ParamVector params;
    NormBuffers buffers;
    MetricsLog metrics;
    ParamVector start_point;
    BinaryMask mask;
};

// Trains from the requested start with the mask fixed: the subnetwork start
// is theta_T (.) m_T under m_T; transfer starts are built by masking::transfer
// from a fresh initialization, with support(s_T) as the mask for signed modes.
inline FinalTrainResult final_train(const PipelineResult& result, const FinalStart& start,
                                    const Dataset& data, const TrainPlan& final_plan) {
    FinalTrainResult out;
    const ParamLayout& layout = *result.final_params.layout;
    if (start.kind == FinalStart::subnetwork) {
        out.start_point = result.final_params;
        apply_mask(out.start_point.values, result.final_mask);
        out.mask = result.final_mask;
    } else {
        auto [theta_init, ignored] = build(result.spec, start.fresh_seed);
        out.start_point = transfer(theta_init, result.final_params, result.final_mask,
                                   result.signed_mask, start.mode);
        const bool signed_mode = start.mode.kind != TransferMode::subnetwork &&
                                 start.mode.kind != TransferMode::mask_only;
        out.mask = signed_mode ? support_mask(result.signed_mask, layout) : result.final_mask;
    }
    TrainResult trained = train(out.start_point, fresh_buffers(layout), out.mask,
                                result.psi_init, data, final_plan);
    out.params = std::move(trained.params);
    out.buffers = std::move(trained.buffers);
    out.metrics = std::move(trained.metrics);
    return out;
}

}  // namespace ticketlab
