#include <catch2/catch.hpp>

#include <cmath>

#include "ticketlab/pipelines.hpp"

using namespace ticketlab;

namespace {

PipelineConfig small_config(PipelineKind kind, int iterations) {
    PipelineConfig cfg;
    cfg.kind = kind;
    cfg.iterations = iterations;
    cfg.prune_rate = 0.2;
    cfg.warmup_plan = {2, 32, 0.1, 0.9, 0.0, {}, 11, false};
    cfg.iteration_plan = {2, 32, 0.1, 0.9, 0.0, {}, 12, kind == PipelineKind::aws};
    cfg.final_plan = {2, 32, 0.1, 0.9, 0.0, {}, 13, false};
    return cfg;
}

const Dataset& blob_data() {
    static const Dataset data = make_blobs(160, 1.0, 21);
    return data;
}

const ModelSpec kSpec{2, {8}, 2, NormKind::batch_norm};

}  // namespace

TEST_CASE("three iterations at rate 0.2 land near 0.512 remaining") {
    const auto result = run_pipeline(small_config(PipelineKind::lrr, 3), kSpec, blob_data(), 5);
    REQUIRE(result.iterations.size() == 3);
    const double total = double(result.final_mask.total_prunable());
    REQUIRE(remaining_ratio(result.final_mask) == Approx(0.512).margin(3.0 / total + 1e-12));
}

TEST_CASE("masks are nested and ratios decrease across iterations") {
    const auto result = run_pipeline(small_config(PipelineKind::aws, 4), kSpec, blob_data(), 6);
    double prev = 1.0;
    for (const auto& rec : result.iterations) {
        REQUIRE(rec.remaining < prev);
        prev = rec.remaining;
    }
}

TEST_CASE("imp with T = 1 returns theta0 under the first mask") {
    const auto result = run_pipeline(small_config(PipelineKind::imp, 1), kSpec, blob_data(), 7);
    for (std::size_t i = 0; i < result.final_params.size(); ++i) {
        const double expect = result.final_mask.bits[i] ? result.theta0.values[i] : 0.0;
        REQUIRE(result.final_params.values[i] == expect);
    }
}

TEST_CASE("wr rewinds to the warm-up snapshot") {
    PipelineConfig cfg = small_config(PipelineKind::wr, 1);
    cfg.wr_rewind_point = cfg.warmup_plan.epochs;  // end of warm-up (the default)
    const auto result = run_pipeline(cfg, kSpec, blob_data(), 8);

    // Recompute the warm-up endpoint independently.
    auto [theta0, buffers0] = build(kSpec, 8);
    const BinaryMask dense = dense_mask(*theta0.layout);
    const TrainResult warm =
        train(theta0, buffers0, dense, theta0.extract_psi(), blob_data(), cfg.warmup_plan);
    for (std::size_t i = 0; i < result.final_params.size(); ++i) {
        const double expect = result.final_mask.bits[i] ? warm.params.values[i] : 0.0;
        REQUIRE(result.final_params.values[i] == expect);
    }
}

TEST_CASE("lrr and aws coincide when the model has no normalization layers") {
    // Eq. 2 has nothing to interpolate without psi, so the two kinds produce
    // bitwise identical results.
    const ModelSpec plain{2, {8}, 2, NormKind::none};
    const auto lrr = run_pipeline(small_config(PipelineKind::lrr, 2), plain, blob_data(), 9);
    const auto aws = run_pipeline(small_config(PipelineKind::aws, 2), plain, blob_data(), 9);
    REQUIRE(lrr.final_params.values == aws.final_params.values);
    REQUIRE(lrr.final_mask.bits == aws.final_mask.bits);
}

TEST_CASE("lrr keeps parameters across iterations (no rewind)") {
    // Run 1 iteration, then extend the same config to 2 iterations; the mask
    // after iteration 1 must be identical, which it can only be if iteration
    // 2 started from iteration 1's parameters.
    const auto one = run_pipeline(small_config(PipelineKind::lrr, 1), kSpec, blob_data(), 10);
    const auto two = run_pipeline(small_config(PipelineKind::lrr, 2), kSpec, blob_data(), 10);
    REQUIRE(one.iterations[0].remaining == two.iterations[0].remaining);
    REQUIRE(two.iterations[1].remaining < two.iterations[0].remaining);
}

TEST_CASE("signed mask has the support of the mask restricted to nonzero params") {
    const auto result = run_pipeline(small_config(PipelineKind::lrr, 2), kSpec, blob_data(), 11);
    REQUIRE(result.signed_mask.size() == result.final_mask.size());
    for (std::size_t i = 0; i < result.signed_mask.size(); ++i) {
        if (!result.final_mask.bits[i]) {
            REQUIRE(result.signed_mask.signs[i] == 0);
        } else if (result.final_params.values[i] != 0.0) {
            REQUIRE(result.signed_mask.signs[i] != 0);
        }
    }
}

TEST_CASE("pipelines are deterministic end to end") {
    const auto a = run_pipeline(small_config(PipelineKind::aws, 2), kSpec, blob_data(), 12);
    const auto b = run_pipeline(small_config(PipelineKind::aws, 2), kSpec, blob_data(), 12);
    REQUIRE(a.final_params.values == b.final_params.values);
    REQUIRE(a.signed_mask.signs == b.signed_mask.signs);
    REQUIRE(a.iterations.back().remaining == b.iterations.back().remaining);
}

TEST_CASE("pipeline config validation") {
    PipelineConfig cfg = small_config(PipelineKind::lrr, 0);
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);

    cfg = small_config(PipelineKind::lrr, 2);
    cfg.iteration_plan.aws_interpolation = true;  // only aws may interpolate
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);

    cfg = small_config(PipelineKind::aws, 2);
    cfg.final_plan.aws_interpolation = true;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);

    cfg = small_config(PipelineKind::aws, 2);
    cfg.prune_rate = 1.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("final_train start points") {
    const auto result = run_pipeline(small_config(PipelineKind::lrr, 2), kSpec, blob_data(), 13);
    const TrainPlan plan{1, 32, 0.05, 0.9, 0.0, {}, 19, false};

    SECTION("subnetwork start has the signed mask's sign pattern") {
        const auto out = final_train(result, {FinalStart::subnetwork, {}, 0}, blob_data(), plan);
        const auto start_signs = sign0(out.start_point.values);
        REQUIRE(start_signs.signs == result.signed_mask.signs);
    }
    SECTION("signed_init start composes build and transfer") {
        const FinalStart start{FinalStart::transfer, {TransferMode::signed_init}, 99};
        const auto out = final_train(result, start, blob_data(), plan);
        const auto fresh = build(kSpec, 99);
        for (std::size_t i = 0; i < out.start_point.size(); ++i)
            REQUIRE(out.start_point.values[i] ==
                    std::abs(fresh.params.values[i]) * result.signed_mask.signs[i]);
        // Mask support never revives: the solution vanishes off-support.
        for (std::size_t i = 0; i < out.params.size(); ++i)
            if (!out.mask.bits[i]) REQUIRE(out.params.values[i] == 0.0);
    }
    SECTION("mask_only start is zero on masked-out indices") {
        const FinalStart start{FinalStart::transfer, {TransferMode::mask_only}, 99};
        const auto out = final_train(result, start, blob_data(), plan);
        for (std::size_t i = 0; i < out.start_point.size(); ++i)
            if (!result.final_mask.bits[i]) REQUIRE(out.start_point.values[i] == 0.0);
    }
}
