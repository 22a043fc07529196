#pragma once

// Experiment configuration: a JSON document with sections model / data /
// pipeline / transfer / analysis / seeds / output. Parsing is strict:
// unknown keys are rejected with the section they appeared in, and every
// field is validated before a run starts.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ticketlab/connectivity.hpp"
#include "ticketlab/dataset.hpp"
#include "ticketlab/errors.hpp"
#include "ticketlab/fsutil.hpp"
#include "ticketlab/masking.hpp"
#include "ticketlab/model.hpp"
#include "ticketlab/pipelines.hpp"

namespace ticketlab {

struct TransferArm {
    std::string name;
    TransferMode mode;
};

struct AnalysisConfig {
    int grid_size = 21;
    enum class EpsilonMode { dense_std, absolute } epsilon_mode = EpsilonMode::dense_std;
    double epsilon_value = 0.0;  // absolute mode only
    StatPolicy stat_policy = StatPolicy::recompute;
    int stat_batches = 0;  // 0: one full pass
};

struct SeedConfig {
    std::uint64_t init = 1;
    std::uint64_t sgd = 1;
    int trials = 3;
};

struct ExperimentConfig {
    ModelSpec model;
    DataConfig data;
    PipelineConfig pipeline;
    std::vector<TransferArm> transfer_arms;
    AnalysisConfig analysis;
    SeedConfig seeds;
    std::string output_dir = "out";
    std::string raw_text;  // exact config bytes, hashed into the manifest
};

namespace cfg_detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& section) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
}

template <typename T>
T field(const json& obj, const std::string& key, const T& fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + key + "' has the wrong type");
    }
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& section) {
    if (!obj.contains(key))
        throw ConfigError("missing required field '" + key + "' in section '" + section + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + section + "." + key + "' has the wrong type");
    }
}

inline LrSchedule parse_schedule(const json& j, const std::string& section) {
    reject_unknown(j, {"kind", "milestones", "factor"}, section);
    LrSchedule s;
    const auto kind = require<std::string>(j, "kind", section);
    if (kind == "constant") {
        s.kind = LrSchedule::constant;
    } else if (kind == "step") {
        s.kind = LrSchedule::step;
        s.milestones = require<std::vector<int>>(j, "milestones", section);
        s.factor = field(j, "factor", 0.1);
    } else if (kind == "cosine") {
        s.kind = LrSchedule::cosine;
    } else {
        throw ConfigError(section + ".kind: unknown schedule '" + kind + "'");
    }
    return s;
}

inline TrainPlan parse_plan(const json& j, const std::string& section) {
    reject_unknown(j, {"epochs", "batch_size", "lr0", "momentum", "weight_decay", "schedule"},
                   section);
    TrainPlan p;
    p.epochs = require<int>(j, "epochs", section);
    p.batch_size = field(j, "batch_size", 128);
    p.lr0 = require<double>(j, "lr0", section);
    p.momentum = field(j, "momentum", 0.9);
    p.weight_decay = field(j, "weight_decay", 0.0);
    if (j.contains("schedule")) p.schedule = parse_schedule(j.at("schedule"), section + ".schedule");
    p.validate();
    return p;
}

inline ModelSpec parse_model(const json& j) {
    reject_unknown(j, {"input_dim", "hidden_dims", "output_dim", "norm_kind", "norm_eps",
                       "bn_momentum"},
                   "model");
    ModelSpec spec;
    spec.input_dim = require<int>(j, "input_dim", "model");
    spec.hidden_dims = require<std::vector<int>>(j, "hidden_dims", "model");
    spec.output_dim = require<int>(j, "output_dim", "model");
    const auto norm = field<std::string>(j, "norm_kind", "batch_norm");
    if (norm == "batch_norm") spec.norm_kind = NormKind::batch_norm;
    else if (norm == "layer_norm") spec.norm_kind = NormKind::layer_norm;
    else if (norm == "none") spec.norm_kind = NormKind::none;
    else throw ConfigError("model.norm_kind: unknown value '" + norm + "'");
    spec.norm_eps = field(j, "norm_eps", 1e-5);
    spec.bn_momentum = field(j, "bn_momentum", 0.1);
    spec.validate();
    return spec;
}

inline DataConfig parse_data(const json& j) {
    reject_unknown(j, {"source", "n", "noise", "seed", "split_seed", "test_fraction",
                       "blob_separation", "spiral_turns", "images", "labels"},
                   "data");
    DataConfig d;
    const auto source = require<std::string>(j, "source", "data");
    if (source == "blobs") d.kind = DataKind::blobs;
    else if (source == "spirals") d.kind = DataKind::spirals;
    else if (source == "idx_files") d.kind = DataKind::idx_files;
    else throw ConfigError("data.source: unknown value '" + source + "'");
    d.n = field<std::uint64_t>(j, "n", 4000);
    d.noise = field(j, "noise", 0.15);
    d.seed = field<std::uint64_t>(j, "seed", 1);
    d.split_seed = field<std::uint64_t>(j, "split_seed", d.seed);
    d.test_fraction = field(j, "test_fraction", 0.2);
    d.blob_separation = field(j, "blob_separation", 4.0);
    d.spiral_turns = field(j, "spiral_turns", 3.0);
    if (d.kind == DataKind::idx_files) {
        d.images_path = require<std::string>(j, "images", "data");
        d.labels_path = require<std::string>(j, "labels", "data");
    }
    if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0))
        throw ConfigError("data.test_fraction must lie in (0,1)");
    return d;
}

inline PipelineConfig parse_pipeline(const json& j) {
    reject_unknown(j, {"kind", "iterations", "prune_rate", "prune_scope", "wr_rewind_point",
                       "warmup", "iteration", "final"},
                   "pipeline");
    PipelineConfig p;
    const auto kind = require<std::string>(j, "kind", "pipeline");
    if (kind == "imp") p.kind = PipelineKind::imp;
    else if (kind == "wr") p.kind = PipelineKind::wr;
    else if (kind == "lrr") p.kind = PipelineKind::lrr;
    else if (kind == "aws") p.kind = PipelineKind::aws;
    else throw ConfigError("pipeline.kind: unknown value '" + kind + "'");
    p.iterations = require<int>(j, "iterations", "pipeline");
    p.prune_rate = field(j, "prune_rate", 0.2);
    const auto scope = field<std::string>(j, "prune_scope", "global");
    if (scope == "global") p.prune_scope = PruneScope::global;
    else if (scope == "per_layer") p.prune_scope = PruneScope::per_layer;
    else throw ConfigError("pipeline.prune_scope: unknown value '" + scope + "'");
    p.wr_rewind_point = field(j, "wr_rewind_point", -1);
    p.warmup_plan = parse_plan(require<json>(j, "warmup", "pipeline"), "pipeline.warmup");
    p.iteration_plan = parse_plan(require<json>(j, "iteration", "pipeline"), "pipeline.iteration");
    p.final_plan = parse_plan(require<json>(j, "final", "pipeline"), "pipeline.final");
    p.iteration_plan.aws_interpolation = p.kind == PipelineKind::aws;
    p.validate();
    return p;
}

inline std::vector<TransferArm> parse_transfer(const json& j) {
    reject_unknown(j, {"arms", "bias_const"}, "transfer");
    const auto arms = require<std::vector<std::string>>(j, "arms", "transfer");
    const double bias_const = field(j, "bias_const", 0.1);
    std::vector<TransferArm> out;
    for (const auto& name : arms) {
        TransferArm arm;
        arm.name = name;
        if (name == "subnetwork") arm.mode.kind = TransferMode::subnetwork;
        else if (name == "mask_only") arm.mode.kind = TransferMode::mask_only;
        else if (name == "signed_init") arm.mode.kind = TransferMode::signed_init;
        else if (name == "signed_keep_norm") arm.mode.kind = TransferMode::signed_keep_norm;
        else if (name == "signed_init_bias_const")
            arm.mode = TransferMode::bias_const_mode(bias_const);
        else throw ConfigError("transfer.arms: unknown arm '" + name + "'");
        out.push_back(std::move(arm));
    }
    return out;
}

inline AnalysisConfig parse_analysis(const json& j) {
    reject_unknown(j, {"grid_size", "epsilon_mode", "epsilon_value", "stat_policy",
                       "stat_batches"},
                   "analysis");
    AnalysisConfig a;
    a.grid_size = field(j, "grid_size", 21);
    if (a.grid_size < 3) throw ConfigError("analysis.grid_size must be >= 3");
    const auto mode = field<std::string>(j, "epsilon_mode", "dense_std");
    if (mode == "dense_std") a.epsilon_mode = AnalysisConfig::EpsilonMode::dense_std;
    else if (mode == "absolute") a.epsilon_mode = AnalysisConfig::EpsilonMode::absolute;
    else throw ConfigError("analysis.epsilon_mode: unknown value '" + mode + "'");
    a.epsilon_value = field(j, "epsilon_value", 0.0);
    if (a.epsilon_mode == AnalysisConfig::EpsilonMode::absolute && !(a.epsilon_value > 0.0))
        throw ConfigError("analysis.epsilon_value must be positive in absolute mode");
    const auto policy = field<std::string>(j, "stat_policy", "recompute");
    if (policy == "recompute") a.stat_policy = StatPolicy::recompute;
    else if (policy == "keep") a.stat_policy = StatPolicy::keep;
    else throw ConfigError("analysis.stat_policy: unknown value '" + policy + "'");
    a.stat_batches = field(j, "stat_batches", 0);
    return a;
}

inline SeedConfig parse_seeds(const json& j) {
    reject_unknown(j, {"init", "sgd", "trials"}, "seeds");
    SeedConfig s;
    s.init = field<std::uint64_t>(j, "init", 1);
    s.sgd = field<std::uint64_t>(j, "sgd", 1);
    s.trials = field(j, "trials", 3);
    if (s.trials < 1) throw ConfigError("seeds.trials must be >= 1");
    return s;
}

}  // namespace cfg_detail

inline ExperimentConfig parse_config_text(const std::string& text) {
    using nlohmann::json;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        // nlohmann messages carry line/column diagnostics.
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    cfg_detail::reject_unknown(
        root, {"model", "data", "pipeline", "transfer", "analysis", "seeds", "output"}, "<root>");

    ExperimentConfig cfg;
    cfg.raw_text = text;
    cfg.model = cfg_detail::parse_model(cfg_detail::require<json>(root, "model", "<root>"));
    cfg.data = cfg_detail::parse_data(cfg_detail::require<json>(root, "data", "<root>"));
    cfg.pipeline =
        cfg_detail::parse_pipeline(cfg_detail::require<json>(root, "pipeline", "<root>"));
    if (root.contains("transfer"))
        cfg.transfer_arms = cfg_detail::parse_transfer(root.at("transfer"));
    if (root.contains("analysis")) cfg.analysis = cfg_detail::parse_analysis(root.at("analysis"));
    if (root.contains("seeds")) cfg.seeds = cfg_detail::parse_seeds(root.at("seeds"));
    if (root.contains("output")) {
        cfg_detail::reject_unknown(root.at("output"), {"dir"}, "output");
        cfg.output_dir = cfg_detail::field<std::string>(root.at("output"), "dir", "out");
    }
    if (cfg.model.input_dim != 2 && cfg.data.kind != DataKind::idx_files)
        throw ConfigError("model.input_dim must be 2 for generated 2-D datasets");
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config_text(read_file_bytes(path));
}

}  // namespace ticketlab
