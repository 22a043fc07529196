#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "ticketlab/training.hpp"

using namespace ticketlab;

namespace {

TrainPlan quick_plan(int epochs, std::uint64_t seed = 3) {
    TrainPlan p;
    p.epochs = epochs;
    p.batch_size = 32;
    p.lr0 = 0.1;
    p.momentum = 0.9;
    p.weight_decay = 0.0;
    p.sgd_seed = seed;
    return p;
}

}  // namespace

TEST_CASE("lr_at: paper step schedule and cosine endpoints") {
    TrainPlan plan = quick_plan(100);
    plan.lr0 = 0.1;
    plan.schedule = {LrSchedule::step, {50, 75}, 0.1};
    REQUIRE(lr_at(plan, 0) == Approx(0.1));
    REQUIRE(lr_at(plan, 49) == Approx(0.1));
    REQUIRE(lr_at(plan, 60) == Approx(0.01));
    REQUIRE(lr_at(plan, 80) == Approx(0.001));

    plan.schedule = {LrSchedule::cosine, {}, 0.0};
    REQUIRE(lr_at(plan, 0) == plan.lr0);
    REQUIRE(lr_at(plan, 50) == Approx(0.05));

    plan.schedule = {LrSchedule::constant, {}, 0.0};
    for (int e : {0, 13, 99}) REQUIRE(lr_at(plan, e) == plan.lr0);
}

TEST_CASE("lr_at matches the brute-force schedule table") {
    for (auto kind : {LrSchedule::constant, LrSchedule::step, LrSchedule::cosine}) {
        TrainPlan plan = quick_plan(60);
        plan.schedule.kind = kind;
        if (kind == LrSchedule::step) plan.schedule = {LrSchedule::step, {10, 25, 40}, 0.5};
        const auto table = oracles::schedule_table(plan);
        for (int e = 0; e < plan.epochs; ++e) REQUIRE(lr_at(plan, e) == table[e]);
    }
}

TEST_CASE("plan validation") {
    TrainPlan plan = quick_plan(10);
    plan.schedule = {LrSchedule::step, {4, 4}, 0.1};
    REQUIRE_THROWS_AS(plan.validate(), ConfigError);
    plan.schedule = {LrSchedule::step, {4, 12}, 0.1};
    REQUIRE_THROWS_AS(plan.validate(), ConfigError);
    plan.schedule = {LrSchedule::step, {4, 8}, 0.1};
    REQUIRE_NOTHROW(plan.validate());
    plan.momentum = 1.0;
    REQUIRE_THROWS_AS(plan.validate(), ConfigError);
}

TEST_CASE("training is bitwise deterministic") {
    const Dataset data = make_blobs(128, 1.0, 5);
    ModelSpec spec{2, {8}, 2, NormKind::batch_norm};
    auto [params, buffers] = build(spec, 2);
    const BinaryMask mask = dense_mask(*params.layout);
    const auto psi_init = params.extract_psi();

    const TrainPlan plan = quick_plan(3);
    const TrainResult a = train(params, buffers, mask, psi_init, data, plan);
    const TrainResult b = train(params, buffers, mask, psi_init, data, plan);
    REQUIRE(a.params.values == b.params.values);
    REQUIRE(a.buffers.running_mean == b.buffers.running_mean);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        REQUIRE(a.metrics[i].train_loss == b.metrics[i].train_loss);
        REQUIRE(a.metrics[i].test_acc == b.metrics[i].test_acc);
    }

    TrainPlan other = plan;
    other.sgd_seed = plan.sgd_seed + 1;
    const TrainResult c = train(params, buffers, mask, psi_init, data, other);
    REQUIRE(a.params.values != c.params.values);
}

TEST_CASE("masked entries stay zero with zero velocity") {
    const Dataset data = make_blobs(96, 1.0, 6);
    ModelSpec spec{2, {6}, 2, NormKind::layer_norm};
    auto [params, buffers] = build(spec, 4);
    BinaryMask mask = dense_mask(*params.layout);
    Rng rng(8);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask.prunable[i] && rng.uniform() < 0.5) mask.bits[i] = 0;

    const auto psi_init = params.extract_psi();
    const TrainResult out = train(params, buffers, mask, psi_init, data, quick_plan(4));
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask.bits[i]) REQUIRE(out.params.values[i] == 0.0);
}

TEST_CASE("lr 0 and weight decay 0 leave parameters unchanged") {
    const Dataset data = make_blobs(64, 1.0, 9);
    ModelSpec spec{2, {4}, 2, NormKind::none};
    auto [params, buffers] = build(spec, 12);
    const BinaryMask mask = dense_mask(*params.layout);
    TrainPlan plan = quick_plan(3);
    plan.lr0 = 0.0;
    plan.weight_decay = 0.0;
    const TrainResult out = train(params, buffers, mask, {}, data, plan);
    REQUIRE(out.params.values == params.values);
}

TEST_CASE("interpolation degenerates when there are no psi parameters") {
    // With norm none the blend has nothing to act on and the alpha draws do
    // not perturb the data order (the permutation is drawn first), so the
    // trajectory is bitwise identical with interpolation on or off.
    const Dataset data = make_blobs(128, 1.0, 10);
    ModelSpec spec{2, {8}, 2, NormKind::none};
    auto [params, buffers] = build(spec, 3);
    const BinaryMask mask = dense_mask(*params.layout);
    TrainPlan with = quick_plan(3);
    with.aws_interpolation = true;
    const TrainPlan without = quick_plan(3);
    const TrainResult a = train(params, buffers, mask, {}, data, with);
    const TrainResult b = train(params, buffers, mask, {}, data, without);
    REQUIRE(a.params.values == b.params.values);
}

TEST_CASE("with psi_init equal to psi the blended forward point is the same") {
    // The forward point coincides (up to blend rounding), while psi gradients
    // carry the alpha chain-rule factor, so the loss agrees tightly even
    // though the update to psi is deliberately alpha-scaled.
    const Dataset data = make_blobs(64, 1.0, 10);
    ModelSpec spec{2, {8}, 2, NormKind::batch_norm};
    auto [params, buffers] = build(spec, 3);
    Rng rng(44);
    for (double& v : params.values) v += 0.2 * rng.gaussian();
    const auto psi_init = params.extract_psi();

    Batch batch = oracles::random_batch(rng, 16, 2, 2);
    const double plain = forward(params, buffers, psi_init, batch, train_mode()).loss;
    for (double alpha : {0.25, 0.5, 0.75}) {
        const double blended = forward(params, buffers, psi_init, batch, aws_mode(alpha)).loss;
        REQUIRE(blended == Approx(plain).epsilon(1e-12));
    }
}

TEST_CASE("blobs reference run reaches 0.99 train accuracy") {
    const Dataset data = make_blobs(400, 1.0, 7);
    ModelSpec spec{2, {16}, 2, NormKind::batch_norm};
    auto [params, buffers] = build(spec, 1);
    const BinaryMask mask = dense_mask(*params.layout);
    TrainPlan plan = quick_plan(100, 77);
    plan.batch_size = 64;
    const TrainResult out = train(params, buffers, mask, params.extract_psi(), data, plan);
    REQUIRE(out.metrics.back().train_acc >= 0.99);
    REQUIRE(out.metrics.back().test_acc >= 0.95);
}

TEST_CASE("recompute_norm_stats") {
    const Dataset data = make_blobs(256, 1.0, 13);
    ModelSpec spec{2, {8}, 2, NormKind::batch_norm};
    auto [params, buffers] = build(spec, 6);

    SECTION("deterministic") {
        const NormBuffers a = recompute_norm_stats(params, data, 4);
        const NormBuffers b = recompute_norm_stats(params, data, 4);
        REQUIRE(a.running_mean == b.running_mean);
        REQUIRE(a.running_var == b.running_var);
    }
    SECTION("standard-normal pre-activations give mean near 0 and var near 1") {
        // Identity-ish first layer fed by standard normal inputs: weight rows
        // are unit axis vectors, so pre-norm activations are the inputs.
        ModelSpec idspec{8, {8}, 2, NormKind::batch_norm};
        auto [idparams, idbuffers] = build(idspec, 1);
        const auto& lo = idparams.layout->layers[0];
        for (std::size_t j = 0; j < 8; ++j)
            for (std::size_t k = 0; k < 8; ++k)
                idparams.values[lo.weight + j * 8 + k] = (j == k) ? 1.0 : 0.0;

        Dataset gauss;
        Rng rng(123);
        gauss.train.inputs = Matrix(512, 8);
        for (double& v : gauss.train.inputs.v) v = rng.gaussian();
        gauss.train.labels.assign(512, 0);
        gauss.input_dim = 8;
        gauss.num_classes = 2;

        const NormBuffers stats = recompute_norm_stats(idparams, gauss, 4);
        for (double m : stats.running_mean[0]) REQUIRE(std::abs(m) <= 0.1);
        for (double v : stats.running_var[0]) REQUIRE(v == Approx(1.0).margin(0.25));
    }
    SECTION("layer_norm model is rejected") {
        ModelSpec ln{2, {8}, 2, NormKind::layer_norm};
        auto built = build(ln, 2);
        REQUIRE_THROWS_AS(recompute_norm_stats(built.params, data, 2), ConfigError);
    }
    SECTION("empty data is rejected") {
        Dataset empty;
        REQUIRE_THROWS_AS(recompute_norm_stats(params, empty, 2), ConfigError);
    }
}
