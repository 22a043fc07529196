#pragma once

// Experiment orchestration: dense baseline, one pruning pipeline, final
// trainings for the subnetwork and every configured transfer arm, barrier
// analysis of each arm against the subnetwork solution, CSV/summary/manifest
// emission. Everything is derived from the config seeds, so a rerun with the
// same config writes byte-identical CSVs.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ticketlab/checkpoint.hpp"
#include "ticketlab/config.hpp"
#include "ticketlab/connectivity.hpp"
#include "ticketlab/csv.hpp"
#include "ticketlab/dataset.hpp"
#include "ticketlab/fsutil.hpp"
#include "ticketlab/pipelines.hpp"

namespace ticketlab {

constexpr const char* kArtifactVersion = "1.0.0";

// Seed stream ids; changing these invalidates recorded runs.
namespace seed_stream {
constexpr std::uint64_t dense_sgd = 0;
constexpr std::uint64_t warmup_sgd = 1;
constexpr std::uint64_t iteration_sgd = 2;
constexpr std::uint64_t subnetwork_sgd = 3;
constexpr std::uint64_t arm_sgd_base = 10;
constexpr std::uint64_t arm_init_base = 100;
}  // namespace seed_stream

struct ArmSummary {
    std::string name;
    double test_acc = 0.0;
    double sup_barrier = std::numeric_limits<double>::quiet_NaN();
    double argmax_alpha = std::numeric_limits<double>::quiet_NaN();
};

struct TrialSummary {
    int trial = 0;
    double dense_acc = 0.0;
    double dense_error = 0.0;
    double remaining = 1.0;
    std::vector<ArmSummary> arms;  // subnetwork first, then transfer arms

    const ArmSummary* arm(const std::string& name) const {
        for (const auto& a : arms)
            if (a.name == name) return &a;
        return nullptr;
    }
};

struct ExperimentSummary {
    std::vector<TrialSummary> trials;
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    double final_remaining = 1.0;

    std::vector<double> arm_accs(const std::string& name) const {
        std::vector<double> out;
        for (const auto& t : trials)
            if (const ArmSummary* a = t.arm(name)) out.push_back(a->test_acc);
        return out;
    }

    std::vector<double> arm_barriers(const std::string& name) const {
        std::vector<double> out;
        for (const auto& t : trials)
            if (const ArmSummary* a = t.arm(name)) out.push_back(a->sup_barrier);
        return out;
    }
};

namespace detail {

inline std::string trial_tag(int trial) { return "trial" + std::to_string(trial); }

inline void metrics_rows(CsvWriter& csv, const std::string& arm, int trial,
                         const MetricsLog& log) {
    for (const auto& m : log)
        csv.row({arm, std::to_string(trial), std::to_string(m.epoch), format_double(m.train_loss),
                 format_double(m.train_acc), format_double(m.test_acc)});
}

inline void barrier_rows(CsvWriter& csv, const std::string& arm, int trial,
                         const BarrierCurve& curve) {
    for (std::size_t i = 0; i < curve.alphas.size(); ++i)
        csv.row({arm, std::to_string(trial), format_double(curve.alphas[i]),
                 format_double(curve.errors[i]), format_double(curve.barriers[i])});
}

}  // namespace detail

inline ExperimentSummary run_experiment(const ExperimentConfig& cfg,
                                        const std::filesystem::path& out_dir,
                                        std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    const auto t_start = std::chrono::steady_clock::now();
    auto note = [&](const std::string& line) {
        if (log) *log << line << "\n" << std::flush;
    };

    const Dataset data = make_dataset(cfg.data);
    if (static_cast<int>(data.num_classes) > cfg.model.output_dim)
        throw ConfigError("dataset has more classes than model.output_dim");

    fs::create_directories(out_dir / "checkpoints");
    CsvWriter metrics_csv(kMetricsHeader);
    CsvWriter barrier_csv(kBarrierHeader);
    CsvWriter sparsity_csv(kSparsityHeader);
    std::vector<fs::path> files;

    BarrierOptions barrier_opt;
    barrier_opt.grid_size = cfg.analysis.grid_size;
    barrier_opt.stat_policy = cfg.analysis.stat_policy;
    barrier_opt.stat_batches = cfg.analysis.stat_batches;

    ExperimentSummary summary;
    std::vector<double> dense_errors;

    for (int trial = 0; trial < cfg.seeds.trials; ++trial) {
        TrialSummary ts;
        ts.trial = trial;
        const std::uint64_t init_seed = seed_mix(cfg.seeds.init, trial, 0);
        const auto ckpt_dir = out_dir / "checkpoints";
        auto seeds_json = [&](std::uint64_t sgd_seed) {
            return nlohmann::json{{"init", init_seed}, {"sgd", sgd_seed}, {"trial", trial}};
        };

        // Dense baseline from the same initialization as the pipeline.
        auto [theta0, buffers0] = build(cfg.model, init_seed);
        {
            Checkpoint c{"theta0", theta0, buffers0, std::nullopt, std::nullopt, seeds_json(0)};
            const fs::path p = ckpt_dir / (detail::trial_tag(trial) + "_theta0.ckpt");
            save_checkpoint(c, p);
            files.push_back(p);
        }

        TrainPlan dense_plan = cfg.pipeline.final_plan;
        dense_plan.sgd_seed = seed_mix(cfg.seeds.sgd, trial, seed_stream::dense_sgd);
        const BinaryMask dense = dense_mask(*theta0.layout);
        const TrainResult dense_run =
            train(theta0, buffers0, dense, theta0.extract_psi(), data, dense_plan);
        detail::metrics_rows(metrics_csv, "dense", trial, dense_run.metrics);
        ts.dense_acc = dense_run.metrics.back().test_acc;
        ts.dense_error = 1.0 - ts.dense_acc;
        dense_errors.push_back(ts.dense_error);
        sparsity_csv.row({"dense", std::to_string(trial), format_double(1.0),
                          format_double(ts.dense_acc)});
        {
            Checkpoint c{"dense", dense_run.params, dense_run.buffers, std::nullopt, std::nullopt,
                         seeds_json(dense_plan.sgd_seed)};
            const fs::path p = ckpt_dir / (detail::trial_tag(trial) + "_dense.ckpt");
            save_checkpoint(c, p);
            files.push_back(p);
        }
        note("[trial " + std::to_string(trial) + "] dense test_acc=" +
             format_fixed(ts.dense_acc, 4));

        // Pipeline.
        PipelineConfig pc = cfg.pipeline;
        pc.warmup_plan.sgd_seed = seed_mix(cfg.seeds.sgd, trial, seed_stream::warmup_sgd);
        pc.iteration_plan.sgd_seed = seed_mix(cfg.seeds.sgd, trial, seed_stream::iteration_sgd);
        const PipelineResult pipeline = run_pipeline(pc, cfg.model, data, init_seed);
        detail::metrics_rows(metrics_csv, "warmup", trial, pipeline.warmup_metrics);
        for (const auto& rec : pipeline.iterations) {
            detail::metrics_rows(metrics_csv, "iteration_" + std::to_string(rec.iteration), trial,
                                 rec.metrics);
            sparsity_csv.row({"pipeline_iter", std::to_string(trial),
                              format_double(rec.remaining),
                              format_double(1.0 - rec.post_prune_test_error)});
        }
        ts.remaining = pipeline.iterations.back().remaining;
        summary.final_remaining = ts.remaining;
        {
            Checkpoint c{"pipeline", pipeline.final_params, pipeline.final_buffers,
                         pipeline.final_mask, pipeline.signed_mask,
                         seeds_json(pc.iteration_plan.sgd_seed)};
            const fs::path p = ckpt_dir / (detail::trial_tag(trial) + "_pipeline.ckpt");
            save_checkpoint(c, p);
            files.push_back(p);
        }
        note("[trial " + std::to_string(trial) + "] " + to_string(pc.kind) +
             " pipeline remaining=" + format_fixed(ts.remaining, 4));

        // Subnetwork final training: the reference solution.
        TrainPlan sub_plan = cfg.pipeline.final_plan;
        sub_plan.sgd_seed = seed_mix(cfg.seeds.sgd, trial, seed_stream::subnetwork_sgd);
        const FinalTrainResult sub =
            final_train(pipeline, {FinalStart::subnetwork, {}, 0}, data, sub_plan);
        detail::metrics_rows(metrics_csv, "subnetwork", trial, sub.metrics);
        ArmSummary sub_arm;
        sub_arm.name = "subnetwork";
        sub_arm.test_acc = sub.metrics.back().test_acc;
        ts.arms.push_back(sub_arm);
        sparsity_csv.row({"subnetwork", std::to_string(trial), format_double(ts.remaining),
                          format_double(sub_arm.test_acc)});
        {
            Checkpoint c{"solution_subnetwork", sub.params, sub.buffers, sub.mask, std::nullopt,
                         seeds_json(sub_plan.sgd_seed)};
            const fs::path p = ckpt_dir / (detail::trial_tag(trial) + "_arm_subnetwork.ckpt");
            save_checkpoint(c, p);
            files.push_back(p);
        }
        note("[trial " + std::to_string(trial) + "] subnetwork test_acc=" +
             format_fixed(sub_arm.test_acc, 4));

        // Transfer arms, each followed by its barrier against the subnetwork
        // solution.
        std::uint64_t arm_index = 0;
        for (const auto& arm : cfg.transfer_arms) {
            ++arm_index;
            if (arm.mode.kind == TransferMode::subnetwork) continue;  // reference arm above
            FinalStart start;
            start.kind = FinalStart::transfer;
            start.mode = arm.mode;
            start.fresh_seed =
                seed_mix(cfg.seeds.init, trial, seed_stream::arm_init_base + arm_index);
            TrainPlan arm_plan = cfg.pipeline.final_plan;
            arm_plan.sgd_seed =
                seed_mix(cfg.seeds.sgd, trial, seed_stream::arm_sgd_base + arm_index);
            const FinalTrainResult solution = final_train(pipeline, start, data, arm_plan);
            detail::metrics_rows(metrics_csv, arm.name, trial, solution.metrics);

            const BarrierCurve curve = barrier_curve(solution.params, solution.buffers, sub.params,
                                                     sub.buffers, data, barrier_opt);
            detail::barrier_rows(barrier_csv, arm.name, trial, curve);

            ArmSummary as;
            as.name = arm.name;
            as.test_acc = solution.metrics.back().test_acc;
            as.sup_barrier = curve.sup_barrier;
            as.argmax_alpha = curve.argmax_alpha;
            ts.arms.push_back(as);
            sparsity_csv.row({arm.name, std::to_string(trial), format_double(ts.remaining),
                              format_double(as.test_acc)});
            {
                Checkpoint c{"solution_" + arm.name, solution.params, solution.buffers,
                             solution.mask, std::nullopt, seeds_json(arm_plan.sgd_seed)};
                const fs::path p =
                    ckpt_dir / (detail::trial_tag(trial) + "_arm_" + arm.name + ".ckpt");
                save_checkpoint(c, p);
                files.push_back(p);
            }
            note("[trial " + std::to_string(trial) + "] " + arm.name + " test_acc=" +
                 format_fixed(as.test_acc, 4) + " sup_barrier=" + format_fixed(as.sup_barrier, 4));
        }
        summary.trials.push_back(std::move(ts));
    }

    if (cfg.analysis.epsilon_mode == AnalysisConfig::EpsilonMode::absolute)
        summary.epsilon = cfg.analysis.epsilon_value;
    else if (dense_errors.size() >= 2)
        summary.epsilon = epsilon_from_errors(dense_errors);

    // CSV outputs.
    const fs::path metrics_path = out_dir / "metrics.csv";
    metrics_csv.save(metrics_path);
    files.push_back(metrics_path);
    const fs::path barrier_path = out_dir / "barrier.csv";
    barrier_csv.save(barrier_path);
    files.push_back(barrier_path);
    const fs::path sparsity_path = out_dir / "accuracy_vs_sparsity.csv";
    sparsity_csv.save(sparsity_path);
    files.push_back(sparsity_path);

    // Summary document.
    nlohmann::json sj;
    sj["version"] = kArtifactVersion;
    sj["final_remaining"] = summary.final_remaining;
    if (std::isfinite(summary.epsilon)) sj["epsilon"] = summary.epsilon;
    sj["trials"] = nlohmann::json::array();
    for (const auto& t : summary.trials) {
        nlohmann::json tj;
        tj["trial"] = t.trial;
        tj["dense_acc"] = t.dense_acc;
        tj["dense_error"] = t.dense_error;
        tj["remaining"] = t.remaining;
        tj["arms"] = nlohmann::json::array();
        for (const auto& a : t.arms) {
            nlohmann::json aj;
            aj["name"] = a.name;
            aj["test_acc"] = a.test_acc;
            if (std::isfinite(a.sup_barrier)) {
                aj["sup_barrier"] = a.sup_barrier;
                aj["argmax_alpha"] = a.argmax_alpha;
                if (std::isfinite(summary.epsilon))
                    aj["connected"] = a.sup_barrier < summary.epsilon;
            }
            tj["arms"].push_back(std::move(aj));
        }
        sj["trials"].push_back(std::move(tj));
    }
    const fs::path summary_path = out_dir / "summary.json";
    atomic_write_file(summary_path, sj.dump(2) + "\n");
    files.push_back(summary_path);

    // Config copy.
    const fs::path config_path = out_dir / "config.json";
    atomic_write_file(config_path, cfg.raw_text);
    files.push_back(config_path);

    // Manifest, assembled last with a checksum per recorded file.
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    nlohmann::json manifest;
    manifest["artifact_version"] = kArtifactVersion;
    manifest["config_fnv1a64"] = fnv1a64_hex(cfg.raw_text);
    manifest["wall_clock_seconds"] = wall;
    manifest["seeds"] = {{"init", cfg.seeds.init}, {"sgd", cfg.seeds.sgd},
                         {"trials", cfg.seeds.trials}};
    manifest["files"] = nlohmann::json::array();
    for (const auto& f : files) {
        const std::string bytes = read_file_bytes(f);
        manifest["files"].push_back({{"path", fs::relative(f, out_dir).generic_string()},
                                     {"bytes", bytes.size()},
                                     {"fnv1a64", fnv1a64_hex(bytes)}});
    }
    atomic_write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

    return summary;
}

}  // namespace ticketlab
