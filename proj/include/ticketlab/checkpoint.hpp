#pragma once

// Checkpoint files: a human-readable header (magic line plus one line of
// JSON describing the layout, seed provenance and payload flags) followed by
// raw little-endian float64 payloads for parameters and running statistics,
// one byte per mask bit and one signed byte per sign. Round trips are
// bitwise lossless.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ticketlab/errors.hpp"
#include "ticketlab/fsutil.hpp"
#include "ticketlab/masking.hpp"
#include "ticketlab/model.hpp"

namespace ticketlab {

constexpr const char* kCheckpointMagic = "TICKETLAB-CKPT v1";

struct Checkpoint {
    std::string kind;  // provenance tag: theta0, pipeline, dense, solution, ...
    ParamVector params;
    NormBuffers buffers;
    std::optional<BinaryMask> mask;
    std::optional<SignedMask> signs;
    nlohmann::json seeds = nlohmann::json::object();
};

namespace detail {

inline void append_f64le(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>(bits & 0xff));
        bits >>= 8;
    }
}

inline double read_f64le(const std::string& in, std::size_t& pos) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i)
        bits = (bits << 8) | static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline nlohmann::json spec_to_json(const ModelSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"hidden_dims", spec.hidden_dims},
            {"output_dim", spec.output_dim},
            {"norm_kind", to_string(spec.norm_kind)},
            {"norm_eps", spec.norm_eps},
            {"bn_momentum", spec.bn_momentum}};
}

inline NormKind norm_kind_from_string(const std::string& s) {
    if (s == "batch_norm") return NormKind::batch_norm;
    if (s == "layer_norm") return NormKind::layer_norm;
    if (s == "none") return NormKind::none;
    throw FormatError("unknown norm_kind: " + s);
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    spec.input_dim = j.at("input_dim").get<int>();
    spec.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    spec.output_dim = j.at("output_dim").get<int>();
    spec.norm_kind = norm_kind_from_string(j.at("norm_kind").get<std::string>());
    spec.norm_eps = j.at("norm_eps").get<double>();
    spec.bn_momentum = j.at("bn_momentum").get<double>();
    return spec;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const ParamLayout& layout = *ckpt.params.layout;
    nlohmann::json header;
    header["kind"] = ckpt.kind;
    header["spec"] = detail::spec_to_json(layout.spec);
    header["d"] = layout.d;
    header["dtype"] = "f64le";
    header["seeds"] = ckpt.seeds;
    header["has_mask"] = ckpt.mask.has_value();
    header["has_signs"] = ckpt.signs.has_value();
    nlohmann::json segments = nlohmann::json::array();
    for (const Segment& s : layout.segments)
        segments.push_back({{"layer", s.layer},
                            {"role", to_string(s.role)},
                            {"offset", s.offset},
                            {"length", s.length}});
    header["segments"] = std::move(segments);
    std::vector<std::size_t> bn_widths;
    for (const auto& m : ckpt.buffers.running_mean) bn_widths.push_back(m.size());
    header["bn_widths"] = bn_widths;

    std::string out;
    out += kCheckpointMagic;
    out += '\n';
    out += header.dump();
    out += '\n';
    for (double v : ckpt.params.values) detail::append_f64le(out, v);
    for (std::size_t l = 0; l < ckpt.buffers.running_mean.size(); ++l) {
        for (double v : ckpt.buffers.running_mean[l]) detail::append_f64le(out, v);
        for (double v : ckpt.buffers.running_var[l]) detail::append_f64le(out, v);
    }
    if (ckpt.mask)
        for (std::uint8_t b : ckpt.mask->bits) out.push_back(static_cast<char>(b));
    if (ckpt.signs)
        for (std::int8_t s : ckpt.signs->signs) out.push_back(static_cast<char>(s));
    return out;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    atomic_write_file(path, serialize_checkpoint(ckpt));
}

inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& name) {
    const std::size_t magic_end = bytes.find('\n');
    if (magic_end == std::string::npos || bytes.substr(0, magic_end) != kCheckpointMagic)
        throw FormatError("not a ticketlab checkpoint: " + name);
    const std::size_t header_end = bytes.find('\n', magic_end + 1);
    if (header_end == std::string::npos)
        throw FormatError("truncated checkpoint header: " + name);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(magic_end + 1, header_end - magic_end - 1));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint header in " + name + ": " + e.what());
    }

    Checkpoint ckpt;
    ckpt.kind = header.value("kind", "");
    ckpt.seeds = header.value("seeds", nlohmann::json::object());
    const ModelSpec spec = detail::spec_from_json(header.at("spec"));
    auto layout = build_layout(spec);
    const auto d = header.at("d").get<std::size_t>();
    if (d != layout->d)
        throw FormatError("checkpoint d=" + std::to_string(d) + " does not match its spec (d=" +
                          std::to_string(layout->d) + "): " + name);
    if (header.at("dtype").get<std::string>() != "f64le")
        throw FormatError("unsupported checkpoint dtype in " + name);

    const auto bn_widths = header.at("bn_widths").get<std::vector<std::size_t>>();
    if (spec.norm_kind == NormKind::batch_norm) {
        if (bn_widths.size() != layout->num_hidden())
            throw FormatError("checkpoint bn layer count mismatch in " + name);
        for (std::size_t l = 0; l < bn_widths.size(); ++l)
            if (bn_widths[l] != layout->layers[l].out_dim)
                throw FormatError("checkpoint bn width mismatch at layer " + std::to_string(l) +
                                  " in " + name);
    } else if (!bn_widths.empty()) {
        throw FormatError("checkpoint carries bn buffers for a non-bn spec: " + name);
    }
    const bool has_mask = header.at("has_mask").get<bool>();
    const bool has_signs = header.at("has_signs").get<bool>();

    std::size_t bn_doubles = 0;
    for (std::size_t w : bn_widths) bn_doubles += 2 * w;
    const std::size_t expected = header_end + 1 + 8 * (d + bn_doubles) +
                                 (has_mask ? d : 0) + (has_signs ? d : 0);
    if (bytes.size() != expected)
        throw FormatError("checkpoint payload length mismatch in " + name + ": expected " +
                          std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));

    std::size_t pos = header_end + 1;
    ckpt.params.layout = layout;
    ckpt.params.values.resize(d);
    for (std::size_t i = 0; i < d; ++i) ckpt.params.values[i] = detail::read_f64le(bytes, pos);
    for (std::size_t w : bn_widths) {
        std::vector<double> mean(w), var(w);
        for (std::size_t i = 0; i < w; ++i) mean[i] = detail::read_f64le(bytes, pos);
        for (std::size_t i = 0; i < w; ++i) {
            var[i] = detail::read_f64le(bytes, pos);
            if (!(var[i] > 0.0))
                throw FormatError("non-positive running variance in " + name);
        }
        ckpt.buffers.running_mean.push_back(std::move(mean));
        ckpt.buffers.running_var.push_back(std::move(var));
    }
    if (has_mask) {
        BinaryMask m = dense_mask(*layout);
        for (std::size_t i = 0; i < d; ++i)
            m.bits[i] = static_cast<std::uint8_t>(bytes[pos + i]);
        pos += d;
        ckpt.mask = std::move(m);
    }
    if (has_signs) {
        SignedMask s;
        s.signs.resize(d);
        for (std::size_t i = 0; i < d; ++i)
            s.signs[i] = static_cast<std::int8_t>(bytes[pos + i]);
        pos += d;
        ckpt.signs = std::move(s);
    }
    return ckpt;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace ticketlab
