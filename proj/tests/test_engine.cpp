#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "ticketlab/engine.hpp"

using namespace ticketlab;

namespace {

struct Fixture {
    ModelSpec spec;
    ParamVector params;
    NormBuffers buffers;
    std::vector<double> psi_init;
    Batch batch;

    explicit Fixture(NormKind norm, std::uint64_t seed = 11, std::size_t batch_size = 6) {
        spec = ModelSpec{3, {5, 4}, 3, norm};
        auto built = build(spec, seed);
        params = std::move(built.params);
        buffers = std::move(built.buffers);
        Rng rng(seed_mix(seed, 99));
        // Perturb everything so norm scales/biases are not at their init.
        for (double& v : params.values) v += 0.3 * rng.gaussian();
        psi_init = params.extract_psi();
        for (double& v : psi_init) v += 0.5 * rng.gaussian();
        batch = oracles::random_batch(rng, batch_size, spec.input_dim, spec.output_dim);
    }
};

}  // namespace

TEST_CASE("alpha = 1 forward is bitwise equal to the plain forward") {
    for (NormKind norm : {NormKind::batch_norm, NormKind::layer_norm}) {
        Fixture f(norm);
        const auto plain = forward(f.params, f.buffers, f.psi_init, f.batch, train_mode());
        const auto interp = forward(f.params, f.buffers, f.psi_init, f.batch, aws_mode(1.0));
        REQUIRE(plain.logits.v == interp.logits.v);
        REQUIRE(plain.loss == interp.loss);
        REQUIRE(plain.buffers.running_mean == interp.buffers.running_mean);
    }
}

TEST_CASE("alpha = 0 forward equals forward of psi replaced by psi_init") {
    for (NormKind norm : {NormKind::batch_norm, NormKind::layer_norm}) {
        Fixture f(norm);
        ParamVector swapped = f.params;
        const auto& psi_idx = f.params.layout->psi_indices;
        for (std::size_t k = 0; k < psi_idx.size(); ++k)
            swapped.values[psi_idx[k]] = f.psi_init[k];
        const auto base = forward(swapped, f.buffers, f.psi_init, f.batch, train_mode());
        const auto interp = forward(f.params, f.buffers, f.psi_init, f.batch, aws_mode(0.0));
        REQUIRE(base.logits.v == interp.logits.v);
        REQUIRE(base.loss == interp.loss);
    }
}

TEST_CASE("interpolation is the elementwise linear blend") {
    // psi = [2.0, -0.4], psi_init = [1.0, 0.0], alpha = 0.5 -> [1.5, -0.2]
    ModelSpec spec{2, {1}, 2, NormKind::layer_norm};
    auto [params, buffers] = build(spec, 5);
    const auto& layout = *params.layout;
    params.values[layout.layers[0].norm_scale] = 2.0;
    params.values[layout.layers[0].norm_bias] = -0.4;
    std::vector<double> psi_init = {1.0, 0.0};

    ParamVector manual = params;
    manual.values[layout.layers[0].norm_scale] = 1.5;
    manual.values[layout.layers[0].norm_bias] = -0.2;

    Rng rng(3);
    Batch batch = oracles::random_batch(rng, 4, spec.input_dim, spec.output_dim);
    const auto blended = forward(params, buffers, psi_init, batch, aws_mode(0.5));
    const auto direct = forward(manual, buffers, psi_init, batch, train_mode());
    REQUIRE(blended.logits.v == direct.logits.v);
}

TEST_CASE("batch norm normalizes the batch before the affine transform") {
    ModelSpec spec{3, {8}, 2, NormKind::batch_norm};
    spec.norm_eps = 1e-12;  // variance of zhat is var/(var+eps)
    auto [params, buffers] = build(spec, 21);
    Rng rng(17);
    for (double& v : params.values) v += 0.2 * rng.gaussian();
    Batch batch = oracles::random_batch(rng, 32, spec.input_dim, spec.output_dim);

    ForwardTrace trace;
    std::vector<double> psi_init;
    detail::forward_internal(params, buffers, psi_init, batch, train_mode(), &trace);

    const auto& zhat = trace.layers[0].zhat;
    for (std::size_t j = 0; j < zhat.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < zhat.rows; ++i) mean += zhat(i, j);
        mean /= double(zhat.rows);
        double var = 0.0;
        for (std::size_t i = 0; i < zhat.rows; ++i)
            var += (zhat(i, j) - mean) * (zhat(i, j) - mean);
        var /= double(zhat.rows);
        REQUIRE(std::abs(mean) <= 1e-10);
        REQUIRE(std::abs(var - 1.0) <= 1e-8);
    }
}

TEST_CASE("train phase updates running buffers with momentum, eval phase does not") {
    Fixture f(NormKind::batch_norm);
    const auto tr = forward(f.params, f.buffers, f.psi_init, f.batch, train_mode());
    REQUIRE(tr.buffers.running_mean != f.buffers.running_mean);

    const auto ev = forward(f.params, tr.buffers, f.psi_init, f.batch, eval_mode());
    REQUIRE(ev.buffers.running_mean == tr.buffers.running_mean);
    REQUIRE(ev.buffers.running_var == tr.buffers.running_var);

    // One step from fresh buffers (mean 0, var 1): new = 0.9*old + 0.1*batch.
    ForwardTrace trace;
    detail::forward_internal(f.params, f.buffers, f.psi_init, f.batch, train_mode(), &trace);
    for (std::size_t j = 0; j < trace.layers[0].mean.size(); ++j) {
        const double expect = 0.9 * f.buffers.running_mean[0][j] + 0.1 * trace.layers[0].mean[j];
        REQUIRE(tr.buffers.running_mean[0][j] == Approx(expect).margin(0.0));
    }
}

TEST_CASE("train and eval phases differ for batch norm but not layer norm") {
    {
        Fixture f(NormKind::batch_norm);
        const auto tr = forward(f.params, f.buffers, f.psi_init, f.batch, train_mode());
        const auto ev = forward(f.params, f.buffers, f.psi_init, f.batch, eval_mode());
        REQUIRE(tr.logits.v != ev.logits.v);
    }
    {
        Fixture f(NormKind::layer_norm);
        const auto tr = forward(f.params, f.buffers, f.psi_init, f.batch, train_mode());
        const auto ev = forward(f.params, f.buffers, f.psi_init, f.batch, eval_mode());
        REQUIRE(tr.logits.v == ev.logits.v);
    }
}

TEST_CASE("forward is deterministic") {
    Fixture f(NormKind::batch_norm);
    const auto a = forward(f.params, f.buffers, f.psi_init, f.batch, train_mode());
    const auto b = forward(f.params, f.buffers, f.psi_init, f.batch, train_mode());
    REQUIRE(a.logits.v == b.logits.v);
    REQUIRE(a.loss == b.loss);
}

TEST_CASE("forward validates its inputs") {
    Fixture f(NormKind::batch_norm);

    SECTION("input dim mismatch") {
        Batch bad = f.batch;
        bad.inputs = Matrix(4, 7);
        bad.labels.assign(4, 0);
        REQUIRE_THROWS_AS(forward(f.params, f.buffers, f.psi_init, bad, train_mode()), ShapeError);
    }
    SECTION("label out of range") {
        Batch bad = f.batch;
        bad.labels[0] = f.spec.output_dim;
        REQUIRE_THROWS_AS(forward(f.params, f.buffers, f.psi_init, bad, train_mode()), ShapeError);
    }
    SECTION("alpha outside train phase") {
        ForwardMode mode{Phase::eval, 0.5};
        REQUIRE_THROWS_AS(forward(f.params, f.buffers, f.psi_init, f.batch, mode), ConfigError);
    }
    SECTION("psi_init length mismatch") {
        std::vector<double> short_psi(3, 0.0);
        REQUIRE_THROWS_AS(forward(f.params, f.buffers, short_psi, f.batch, aws_mode(0.5)),
                          ShapeError);
    }
    SECTION("non-finite parameters raise a numeric error naming the layer") {
        ParamVector bad = f.params;
        bad.values[0] = std::numeric_limits<double>::infinity();
        try {
            forward(bad, f.buffers, f.psi_init, f.batch, train_mode());
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            REQUIRE(std::string(e.what()).find("layer 0") != std::string::npos);
        }
    }
}

TEST_CASE("grad_check stays within 1e-5 across norm kinds and modes") {
    for (NormKind norm : {NormKind::batch_norm, NormKind::layer_norm, NormKind::none}) {
        ModelSpec spec{2, {4}, 2, norm};
        REQUIRE(grad_check(spec, 7, train_mode()) <= 1e-5);
        REQUIRE(grad_check(spec, 7, eval_mode()) <= 1e-5);
        if (norm != NormKind::none)
            REQUIRE(grad_check(spec, 7, aws_mode(0.3)) <= 1e-5);
    }
}
