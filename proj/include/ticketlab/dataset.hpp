#pragma once

// Dataset generation and ingestion: two-Gaussian blobs, interleaved spirals,
// and the IDX binary format (MNIST-style). All generation and splitting is
// seeded; the same arguments always produce the same dataset.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "ticketlab/errors.hpp"
#include "ticketlab/matrix.hpp"
#include "ticketlab/rng.hpp"

namespace ticketlab {

struct LabeledSet {
    Matrix inputs;
    std::vector<int> labels;

    std::size_t size() const { return inputs.rows; }
};

struct Dataset {
    LabeledSet train;
    LabeledSet test;
    std::size_t input_dim = 0;
    int num_classes = 0;
};

enum class DataKind { blobs, spirals, idx_files };

inline std::string to_string(DataKind k) {
    switch (k) {
        case DataKind::blobs: return "blobs";
        case DataKind::spirals: return "spirals";
        case DataKind::idx_files: return "idx_files";
    }
    return "?";
}

namespace detail {

inline Dataset split_pool(Matrix inputs, std::vector<int> labels, int num_classes,
                          double test_fraction, std::uint64_t split_seed) {
    const std::size_t n = inputs.rows;
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    Rng rng(seed_mix(split_seed, 0x73706c74ull /* "splt" */));
    const std::vector<std::size_t> perm = rng.permutation(n);

    Dataset ds;
    ds.input_dim = inputs.cols;
    ds.num_classes = num_classes;
    ds.test.inputs = Matrix(n_test, inputs.cols);
    ds.test.labels.resize(n_test);
    ds.train.inputs = Matrix(n - n_test, inputs.cols);
    ds.train.labels.resize(n - n_test);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = perm[i];
        LabeledSet& dst = i < n_test ? ds.test : ds.train;
        const std::size_t row = i < n_test ? i : i - n_test;
        for (std::size_t j = 0; j < inputs.cols; ++j) dst.inputs(row, j) = inputs(src, j);
        dst.labels[row] = labels[src];
    }
    return ds;
}

}  // namespace detail

// Two isotropic Gaussian clusters in 2-D. `separation` places the class
// means at (-separation*sigma, 0) and (+separation*sigma, 0), i.e. each mean
// sits `separation` standard deviations from the decision boundary, so the
// optimal linear discriminant errs with probability Phi(-separation).
inline Dataset make_blobs(std::size_t n, double noise, std::uint64_t seed,
                          double separation = 4.0, double test_fraction = 0.2,
                          std::uint64_t split_seed = 0) {
    if (n < 4) throw ConfigError("make_blobs: need n >= 4");
    if (!(noise > 0.0)) throw ConfigError("make_blobs: noise must be positive");
    Rng rng(seed_mix(seed, 0x626c6f62ull /* "blob" */));
    Matrix inputs(n, 2);
    std::vector<int> labels(n);
    const double cx = separation * noise;
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        const double mean_x = cls == 0 ? -cx : cx;
        inputs(i, 0) = mean_x + noise * rng.gaussian();
        inputs(i, 1) = noise * rng.gaussian();
        labels[i] = cls;
    }
    return detail::split_pool(std::move(inputs), std::move(labels), 2, test_fraction,
                              split_seed == 0 ? seed : split_seed);
}

// Two interleaved spirals with Gaussian jitter; exactly n/2 points per class
// for even n. Radius grows linearly over `turns` half-revolutions.
inline Dataset make_spirals(std::size_t n, double noise, std::uint64_t seed,
                            double turns = 3.0, double test_fraction = 0.2,
                            std::uint64_t split_seed = 0) {
    if (n < 4) throw ConfigError("make_spirals: need n >= 4");
    Rng rng(seed_mix(seed, 0x73707273ull /* "sprs" */));
    Matrix inputs(n, 2);
    std::vector<int> labels(n);
    std::size_t row = 0;
    for (int cls = 0; cls < 2; ++cls) {
        const std::size_t m = cls == 0 ? n / 2 : n - n / 2;
        for (std::size_t i = 0; i < m; ++i, ++row) {
            const double t = static_cast<double>(i) / static_cast<double>(m);
            const double angle = turns * std::numbers::pi * t + (cls == 1 ? std::numbers::pi : 0.0);
            const double radius = 0.2 + 0.8 * t;
            inputs(row, 0) = radius * std::cos(angle) + noise * rng.gaussian();
            inputs(row, 1) = radius * std::sin(angle) + noise * rng.gaussian();
            labels[row] = cls;
        }
    }
    return detail::split_pool(std::move(inputs), std::move(labels), 2, test_fraction,
                              split_seed == 0 ? seed : split_seed);
}

// ----------------------------------------------------------------------------
// IDX binary format. Magic: two zero bytes, a type code, a dimension count,
// then big-endian 32-bit dimension sizes, then raw payload. Supported type
// codes: 0x08 unsigned byte (pixels, normalized to [0,1] on load), 0x0D
// float32 and 0x0E float64 (used as-is).
// ----------------------------------------------------------------------------

namespace idx {

constexpr std::uint8_t kTypeU8 = 0x08;
constexpr std::uint8_t kTypeF32 = 0x0D;
constexpr std::uint8_t kTypeF64 = 0x0E;

inline std::uint32_t read_be32(std::istream& in, const std::string& file) {
    std::uint8_t b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("idx: truncated header in " + file);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                               std::uint8_t(v >> 8), std::uint8_t(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxArray {
    std::uint8_t type = 0;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;  // flattened, row-major

    std::size_t items() const { return dims.empty() ? 0 : dims[0]; }
    std::size_t item_size() const {
        std::size_t s = 1;
        for (std::size_t i = 1; i < dims.size(); ++i) s *= dims[i];
        return s;
    }
};

inline IdxArray load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("idx: cannot open " + path);
    std::uint8_t magic[4];
    if (!in.read(reinterpret_cast<char*>(magic), 4))
        throw FormatError("idx: truncated magic number in " + path);
    if (magic[0] != 0 || magic[1] != 0)
        throw FormatError("idx: malformed magic number in " + path);
    const std::uint8_t type = magic[2];
    const std::uint8_t ndim = magic[3];
    if (ndim == 0) throw FormatError("idx: zero-dimensional array in " + path);
    IdxArray arr;
    arr.type = type;
    for (std::uint8_t i = 0; i < ndim; ++i) arr.dims.push_back(read_be32(in, path));
    std::size_t count = 1;
    for (std::uint32_t d : arr.dims) count *= d;
    arr.data.resize(count);
    switch (type) {
        case kTypeU8: {
            std::vector<std::uint8_t> raw(count);
            if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count)))
                throw FormatError("idx: truncated payload in " + path);
            for (std::size_t i = 0; i < count; ++i) arr.data[i] = static_cast<double>(raw[i]);
            break;
        }
        case kTypeF32: {
            for (std::size_t i = 0; i < count; ++i) {
                std::uint8_t b[4];
                if (!in.read(reinterpret_cast<char*>(b), 4))
                    throw FormatError("idx: truncated payload in " + path);
                std::uint32_t bits = (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
                                     (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
                float f;
                static_assert(sizeof(f) == 4);
                std::memcpy(&f, &bits, 4);
                arr.data[i] = static_cast<double>(f);
            }
            break;
        }
        case kTypeF64: {
            for (std::size_t i = 0; i < count; ++i) {
                std::uint8_t b[8];
                if (!in.read(reinterpret_cast<char*>(b), 8))
                    throw FormatError("idx: truncated payload in " + path);
                std::uint64_t bits = 0;
                for (int k = 0; k < 8; ++k) bits = (bits << 8) | b[k];
                double f;
                std::memcpy(&f, &bits, 8);
                arr.data[i] = f;
            }
            break;
        }
        default:
            throw FormatError("idx: unsupported type code in " + path);
    }
    return arr;
}

inline void save_f64(const std::string& path, const std::vector<std::uint32_t>& dims,
                     const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("idx: cannot write " + path);
    const std::uint8_t magic[4] = {0, 0, kTypeF64, static_cast<std::uint8_t>(dims.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (std::uint32_t d : dims) write_be32(out, d);
    for (double v : data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        std::uint8_t b[8];
        for (int k = 7; k >= 0; --k) {
            b[k] = static_cast<std::uint8_t>(bits & 0xff);
            bits >>= 8;
        }
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline void save_u8(const std::string& path, const std::vector<std::uint32_t>& dims,
                    const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("idx: cannot write " + path);
    const std::uint8_t magic[4] = {0, 0, kTypeU8, static_cast<std::uint8_t>(dims.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (std::uint32_t d : dims) write_be32(out, d);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace idx

// Loads an IDX image/label pair, flattens images, normalizes u8 pixels to
// [0,1], and splits deterministically.
inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                double test_fraction, std::uint64_t split_seed) {
    idx::IdxArray images = idx::load(images_path);
    idx::IdxArray labels = idx::load(labels_path);
    if (labels.dims.size() != 1)
        throw FormatError("idx: label file must be one-dimensional: " + labels_path);
    if (images.items() != labels.items())
        throw FormatError("idx: image/label count mismatch between " + images_path + " and " +
                          labels_path);
    const std::size_t n = images.items();
    if (n < 4) throw ConfigError("idx: need at least 4 examples");
    const std::size_t dim = images.item_size();
    Matrix inputs(n, dim);
    const double scale = images.type == idx::kTypeU8 ? 1.0 / 255.0 : 1.0;
    for (std::size_t i = 0; i < n * dim; ++i) inputs.v[i] = images.data[i] * scale;
    std::vector<int> lab(n);
    int num_classes = 0;
    for (std::size_t i = 0; i < n; ++i) {
        lab[i] = static_cast<int>(labels.data[i]);
        if (lab[i] < 0) throw FormatError("idx: negative label in " + labels_path);
        num_classes = std::max(num_classes, lab[i] + 1);
    }
    return detail::split_pool(std::move(inputs), std::move(lab), num_classes, test_fraction,
                              split_seed);
}

// Writes a dataset pool (train followed by test) as an IDX pair:
// <prefix>-features.idx (float64) and <prefix>-labels.idx (unsigned byte).
inline void save_idx_dataset(const Dataset& ds, const std::string& prefix) {
    const std::size_t n = ds.train.size() + ds.test.size();
    std::vector<double> features;
    features.reserve(n * ds.input_dim);
    std::vector<std::uint8_t> labels;
    labels.reserve(n);
    for (const LabeledSet* set : {&ds.train, &ds.test}) {
        features.insert(features.end(), set->inputs.v.begin(), set->inputs.v.end());
        for (int l : set->labels) labels.push_back(static_cast<std::uint8_t>(l));
    }
    idx::save_f64(prefix + "-features.idx",
                  {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(ds.input_dim)},
                  features);
    idx::save_u8(prefix + "-labels.idx", {static_cast<std::uint32_t>(n)}, labels);
}

struct DataConfig {
    DataKind kind = DataKind::spirals;
    std::size_t n = 4000;
    double noise = 0.15;
    std::uint64_t seed = 1;
    std::uint64_t split_seed = 1;
    double test_fraction = 0.2;
    double blob_separation = 4.0;
    double spiral_turns = 3.0;
    std::string images_path;
    std::string labels_path;
};

inline Dataset make_dataset(const DataConfig& cfg) {
    switch (cfg.kind) {
        case DataKind::blobs:
            return make_blobs(cfg.n, cfg.noise, cfg.seed, cfg.blob_separation, cfg.test_fraction,
                              cfg.split_seed);
        case DataKind::spirals:
            return make_spirals(cfg.n, cfg.noise, cfg.seed, cfg.spiral_turns, cfg.test_fraction,
                                cfg.split_seed);
        case DataKind::idx_files:
            return load_idx_dataset(cfg.images_path, cfg.labels_path, cfg.test_fraction,
                                    cfg.split_seed);
    }
    throw ConfigError("make_dataset: unknown kind");
}

}  // namespace ticketlab
