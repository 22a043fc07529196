#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "ticketlab/dataset.hpp"

using namespace ticketlab;

TEST_CASE("blobs: the closed-form linear discriminant reaches 0.99") {
    const Dataset ds = make_blobs(400, 1.0, 7);
    REQUIRE(ds.train.size() + ds.test.size() == 400);
    REQUIRE(oracles::blob_linear_accuracy(ds.test) >= 0.99);
    REQUIRE(oracles::blob_linear_accuracy(ds.train) >= 0.99);
}

TEST_CASE("generation is deterministic in all arguments") {
    const Dataset a = make_spirals(200, 0.1, 3);
    const Dataset b = make_spirals(200, 0.1, 3);
    REQUIRE(a.train.inputs.v == b.train.inputs.v);
    REQUIRE(a.test.inputs.v == b.test.inputs.v);
    REQUIRE(a.train.labels == b.train.labels);

    const Dataset c = make_spirals(200, 0.1, 4);
    REQUIRE(a.train.inputs.v != c.train.inputs.v);
}

TEST_CASE("spirals: exact class balance for even n") {
    const Dataset ds = make_spirals(1000, 0.1, 5);
    std::size_t ones = 0, total = 0;
    for (const LabeledSet* s : {&ds.train, &ds.test}) {
        for (int l : s->labels) ones += static_cast<std::size_t>(l);
        total += s->size();
    }
    REQUIRE(total == 1000);
    REQUIRE(ones == 500);
}

TEST_CASE("split fractions and seeds behave") {
    const Dataset ds = make_blobs(100, 1.0, 1, 4.0, 0.25, 9);
    REQUIRE(ds.test.size() == 25);
    REQUIRE(ds.train.size() == 75);

    const Dataset same = make_blobs(100, 1.0, 1, 4.0, 0.25, 9);
    REQUIRE(ds.train.inputs.v == same.train.inputs.v);
    const Dataset resplit = make_blobs(100, 1.0, 1, 4.0, 0.25, 10);
    REQUIRE(ds.train.inputs.v != resplit.train.inputs.v);
}

TEST_CASE("too-small datasets are rejected") {
    REQUIRE_THROWS_AS(make_blobs(3, 1.0, 1), ConfigError);
    REQUIRE_THROWS_AS(make_spirals(2, 0.1, 1), ConfigError);
}

TEST_CASE("idx round trip and malformed files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ticketlab_idx_test";
    fs::create_directories(dir);
    const std::string prefix = (dir / "toy").string();

    const Dataset ds = make_spirals(64, 0.05, 2);
    save_idx_dataset(ds, prefix);

    SECTION("round trip preserves values bitwise") {
        const Dataset back = load_idx_dataset(prefix + "-features.idx", prefix + "-labels.idx",
                                              0.2, 2);
        REQUIRE(back.train.size() + back.test.size() == 64);
        REQUIRE(back.input_dim == 2);
        REQUIRE(back.num_classes == 2);
        // The pool is identical; re-splitting with the same seed is deterministic.
        const Dataset again = load_idx_dataset(prefix + "-features.idx", prefix + "-labels.idx",
                                               0.2, 2);
        REQUIRE(back.train.inputs.v == again.train.inputs.v);
        REQUIRE(back.test.labels == again.test.labels);
    }
    SECTION("ubyte payloads are normalized to [0,1]") {
        idx::save_u8((dir / "u8.idx").string(), {4, 2}, {0, 51, 102, 255, 255, 0, 51, 102});
        idx::save_u8((dir / "u8lab.idx").string(), {4}, {0, 1, 0, 1});
        const Dataset d = load_idx_dataset((dir / "u8.idx").string(), (dir / "u8lab.idx").string(),
                                           0.25, 1);
        for (const LabeledSet* s : {&d.train, &d.test})
            for (double v : s->inputs.v) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
    }
    SECTION("malformed magic number names the file") {
        const std::string bad = (dir / "bad.idx").string();
        std::ofstream out(bad, std::ios::binary);
        out << "NOPE";
        out.close();
        try {
            idx::load(bad);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            REQUIRE(std::string(e.what()).find("bad.idx") != std::string::npos);
        }
    }
    SECTION("image/label count mismatch is rejected") {
        idx::save_u8((dir / "m.idx").string(), {4, 2}, std::vector<std::uint8_t>(8, 1));
        idx::save_u8((dir / "mlab.idx").string(), {5}, std::vector<std::uint8_t>(5, 0));
        REQUIRE_THROWS_AS(
            load_idx_dataset((dir / "m.idx").string(), (dir / "mlab.idx").string(), 0.25, 1),
            FormatError);
    }
    fs::remove_all(dir);
}
