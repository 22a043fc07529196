#include <catch2/catch.hpp>

#include "ticketlab/connectivity.hpp"
#include "ticketlab/pipelines.hpp"

using namespace ticketlab;

namespace {

const Dataset& blob_data() {
    static const Dataset data = make_blobs(200, 1.0, 31);
    return data;
}

struct Net {
    ParamVector params;
    NormBuffers buffers;
};

Net perturbed_net(const ModelSpec& spec, std::uint64_t seed) {
    auto [params, buffers] = build(spec, seed);
    Rng rng(seed_mix(seed, 0xabc));
    for (double& v : params.values) v += 0.4 * rng.gaussian();
    return {std::move(params), std::move(buffers)};
}

const ModelSpec kSpec{2, {6}, 2, NormKind::layer_norm};

}  // namespace

TEST_CASE("eval_error basics") {
    SECTION("constant logits on a balanced set give error 0.5") {
        auto [params, buffers] = build(kSpec, 1);
        // Zero the head entirely: logits are constant, argmax picks class 0.
        const auto& head = params.layout->layers.back();
        for (std::size_t i = head.weight; i < params.layout->d; ++i) params.values[i] = 0.0;
        Dataset balanced;
        balanced.test.inputs = Matrix(10, 2);
        Rng rng(3);
        for (double& v : balanced.test.inputs.v) v = rng.gaussian();
        balanced.test.labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
        REQUIRE(eval_error(params, buffers, balanced.test) == 0.5);
    }
    SECTION("self-predicted labels give error 0") {
        Net net = perturbed_net(kSpec, 4);
        LabeledSet set;
        set.inputs = Matrix(12, 2);
        Rng rng(5);
        for (double& v : set.inputs.v) v = rng.gaussian();
        set.labels.assign(12, 0);
        Batch batch{set.inputs, set.labels};
        const auto fwd = forward(net.params, net.buffers, {}, batch, eval_mode());
        for (std::size_t i = 0; i < 12; ++i)
            set.labels[i] = static_cast<int>(argmax_row(fwd.logits, i));
        REQUIRE(eval_error(net.params, net.buffers, set) == 0.0);
    }
    SECTION("hand-computed misclassification count on ten examples") {
        Net net = perturbed_net(kSpec, 6);
        LabeledSet set;
        set.inputs = Matrix(10, 2);
        Rng rng(7);
        for (double& v : set.inputs.v) v = rng.gaussian();
        set.labels.assign(10, 0);
        Batch batch{set.inputs, set.labels};
        const auto fwd = forward(net.params, net.buffers, {}, batch, eval_mode());
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < 10; ++i)
            if (argmax_row(fwd.logits, i) != 0) ++wrong;
        REQUIRE(eval_error(net.params, net.buffers, set) ==
                static_cast<double>(wrong) / 10.0);
    }
    SECTION("empty dataset is rejected") {
        Net net = perturbed_net(kSpec, 8);
        LabeledSet empty;
        REQUIRE_THROWS_AS(eval_error(net.params, net.buffers, empty), ConfigError);
    }
}

TEST_CASE("barrier curve identities") {
    Net a = perturbed_net(kSpec, 11);
    Net b = perturbed_net(kSpec, 12);

    SECTION("identical endpoints give a zero curve") {
        const auto curve =
            barrier_curve(a.params, a.buffers, a.params, a.buffers, blob_data());
        for (double e : curve.barriers) REQUIRE(e == 0.0);
        REQUIRE(curve.sup_barrier == 0.0);
    }
    SECTION("endpoint barriers cancel exactly") {
        const auto curve =
            barrier_curve(a.params, a.buffers, b.params, b.buffers, blob_data());
        REQUIRE(curve.barriers.front() + curve.barriers.back() == 0.0);
        REQUIRE(curve.barriers.front() ==
                Approx(curve.errors.front() - 0.5 * (curve.error_a + curve.error_b))
                    .margin(1e-15));
    }
    SECTION("endpoint errors reproduce eval_error bitwise") {
        const auto curve =
            barrier_curve(a.params, a.buffers, b.params, b.buffers, blob_data());
        REQUIRE(curve.error_a == eval_error(a.params, a.buffers, blob_data().test));
        REQUIRE(curve.error_b == eval_error(b.params, b.buffers, blob_data().test));
    }
    SECTION("symmetry: swapping endpoints mirrors the curve bitwise") {
        BarrierOptions opt;
        opt.grid_size = 11;
        const auto ab = barrier_curve(a.params, a.buffers, b.params, b.buffers, blob_data(), opt);
        const auto ba = barrier_curve(b.params, b.buffers, a.params, a.buffers, blob_data(), opt);
        for (int i = 0; i < 11; ++i) {
            REQUIRE(ab.errors[i] == ba.errors[10 - i]);
            REQUIRE(ab.barriers[i] == ba.barriers[10 - i]);
        }
        REQUIRE(ab.sup_barrier == ba.sup_barrier);
    }
    SECTION("coarse grids are nested in fine grids") {
        BarrierOptions coarse, fine;
        coarse.grid_size = 21;
        fine.grid_size = 101;
        const auto c = barrier_curve(a.params, a.buffers, b.params, b.buffers, blob_data(), coarse);
        const auto f = barrier_curve(a.params, a.buffers, b.params, b.buffers, blob_data(), fine);
        for (int i = 0; i < 21; ++i) {
            REQUIRE(c.alphas[i] == f.alphas[5 * i]);
            REQUIRE(c.errors[i] == f.errors[5 * i]);
        }
        REQUIRE(c.sup_barrier <= f.sup_barrier);
    }
    SECTION("layout mismatch is rejected") {
        const ModelSpec other{2, {7}, 2, NormKind::layer_norm};
        Net c = perturbed_net(other, 1);
        REQUIRE_THROWS_AS(
            barrier_curve(a.params, a.buffers, c.params, c.buffers, blob_data()), ShapeError);
    }
    SECTION("batch-norm keep policy reproduces endpoint errors bitwise") {
        const ModelSpec bn{2, {6}, 2, NormKind::batch_norm};
        Net na = perturbed_net(bn, 51);
        Net nb = perturbed_net(bn, 52);
        na.buffers = recompute_norm_stats(na.params, blob_data(), 2);
        nb.buffers = recompute_norm_stats(nb.params, blob_data(), 2);
        BarrierOptions opt;
        opt.stat_policy = StatPolicy::keep;
        const auto curve =
            barrier_curve(na.params, na.buffers, nb.params, nb.buffers, blob_data(), opt);
        REQUIRE(curve.error_a == eval_error(na.params, na.buffers, blob_data().test));
        REQUIRE(curve.error_b == eval_error(nb.params, nb.buffers, blob_data().test));
    }
}

TEST_CASE("rigged endpoint errors produce the +-gap/2 endpoints") {
    // Dataset labeled so that net A errs on exactly 30% and net B on 50%:
    // label by A's prediction, then flip labels against both nets on chosen rows.
    Net a = perturbed_net(kSpec, 21);
    Net b = perturbed_net(kSpec, 22);
    LabeledSet set;
    const std::size_t n = 10;
    set.inputs = Matrix(n, 2);
    Rng rng(23);
    for (double& v : set.inputs.v) v = rng.gaussian();
    set.labels.assign(n, 0);
    Batch batch{set.inputs, set.labels};
    const auto fa = forward(a.params, a.buffers, {}, batch, eval_mode());
    for (std::size_t i = 0; i < n; ++i)
        set.labels[i] = static_cast<int>(argmax_row(fa.logits, i));
    // A errs where labels flip; flip 3 rows for A. For B just measure whatever
    // results and verify the algebra rather than a fixed value.
    for (std::size_t i = 0; i < 3; ++i) set.labels[i] = 1 - set.labels[i];

    Dataset rigged;
    rigged.train = blob_data().train;
    rigged.test = set;

    const double ea = eval_error(a.params, a.buffers, set);
    const double eb = eval_error(b.params, b.buffers, set);
    REQUIRE(ea == Approx(0.3));

    const auto curve = barrier_curve(a.params, a.buffers, b.params, b.buffers, rigged);
    REQUIRE(curve.barriers.back() == Approx((ea - eb) / 2.0));   // alpha = 1 endpoint
    REQUIRE(curve.barriers.front() == Approx((eb - ea) / 2.0));  // alpha = 0 endpoint
}

TEST_CASE("is_lmc verdicts") {
    Net a = perturbed_net(kSpec, 31);
    SECTION("identical endpoints are connected for any epsilon") {
        const auto v = is_lmc(a.params, a.buffers, a.params, a.buffers, blob_data(), 1e-9);
        REQUIRE(v.connected);
        REQUIRE(v.sup_barrier == 0.0);
    }
    SECTION("verdict follows the strict comparison") {
        const LmcVerdict fail{0.07, 0.05, 0.07 < 0.05};
        REQUIRE_FALSE(fail.connected);
        REQUIRE_THROWS_AS(
            is_lmc(a.params, a.buffers, a.params, a.buffers, blob_data(), 0.0), ConfigError);
    }
}

TEST_CASE("stability_test sanity") {
    const ModelSpec spec{2, {8}, 2, NormKind::batch_norm};
    auto [params, buffers] = build(spec, 41);
    const BinaryMask mask = dense_mask(*params.layout);
    TrainPlan plan{2, 32, 0.05, 0.9, 0.0, {}, 0, false};

    SECTION("equal seeds give identical trajectories and zero barrier") {
        plan.sgd_seed = 0;
        const auto curve = stability_test(params, buffers, mask, plan, 5, 5, blob_data());
        REQUIRE(curve.sup_barrier == 0.0);
        for (double e : curve.barriers) REQUIRE(e == 0.0);
    }
    SECTION("zero epochs leave both endpoints at the start") {
        plan.epochs = 0;
        const auto curve = stability_test(params, buffers, mask, plan, 5, 6, blob_data());
        REQUIRE(curve.sup_barrier == 0.0);
    }
}
