// Command-line harness: run (full experiment from a config), barrier
// (standalone interpolation analysis between two checkpoints), transfer
// (final training from a transferred start), stability (SGD-noise test),
// dataset (IDX pair generation), plot (SVG charts from CSVs).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ticketlab/checkpoint.hpp"
#include "ticketlab/config.hpp"
#include "ticketlab/connectivity.hpp"
#include "ticketlab/experiment.hpp"
#include "ticketlab/pipelines.hpp"
#include "ticketlab/svg.hpp"

namespace fs = std::filesystem;
using namespace ticketlab;

namespace {

struct DataArgs {
    std::string kind = "spirals";
    std::size_t n = 2000;
    double noise = 0.15;
    std::uint64_t seed = 1;
    std::uint64_t split_seed = 0;
    double test_fraction = 0.2;
    double turns = 3.0;
    double separation = 4.0;
    std::string images;
    std::string labels;

    DataConfig to_config() const {
        DataConfig cfg;
        if (kind == "blobs") cfg.kind = DataKind::blobs;
        else if (kind == "spirals") cfg.kind = DataKind::spirals;
        else if (kind == "idx") cfg.kind = DataKind::idx_files;
        else throw ConfigError("unknown dataset kind: " + kind);
        cfg.n = n;
        cfg.noise = noise;
        cfg.seed = seed;
        cfg.split_seed = split_seed == 0 ? seed : split_seed;
        cfg.test_fraction = test_fraction;
        cfg.spiral_turns = turns;
        cfg.blob_separation = separation;
        cfg.images_path = images;
        cfg.labels_path = labels;
        return cfg;
    }
};

void add_data_options(CLI::App* cmd, DataArgs& args) {
    cmd->add_option("--data-kind", args.kind, "blobs | spirals | idx");
    cmd->add_option("--n", args.n, "dataset size");
    cmd->add_option("--noise", args.noise, "noise level");
    cmd->add_option("--data-seed", args.seed, "generation seed");
    cmd->add_option("--split-seed", args.split_seed, "train/test split seed (default: data seed)");
    cmd->add_option("--test-fraction", args.test_fraction, "test split fraction");
    cmd->add_option("--turns", args.turns, "spiral turns");
    cmd->add_option("--separation", args.separation, "blob mean offset in sigmas");
    cmd->add_option("--images", args.images, "IDX feature file");
    cmd->add_option("--labels", args.labels, "IDX label file");
}

struct PlanArgs {
    int epochs = 50;
    int batch_size = 128;
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t sgd_seed = 1;
    std::string schedule = "constant";
    std::vector<int> milestones;
    double factor = 0.1;

    TrainPlan to_plan() const {
        TrainPlan p;
        p.epochs = epochs;
        p.batch_size = batch_size;
        p.lr0 = lr0;
        p.momentum = momentum;
        p.weight_decay = weight_decay;
        p.sgd_seed = sgd_seed;
        if (schedule == "constant") p.schedule.kind = LrSchedule::constant;
        else if (schedule == "step") p.schedule = {LrSchedule::step, milestones, factor};
        else if (schedule == "cosine") p.schedule.kind = LrSchedule::cosine;
        else throw ConfigError("unknown schedule: " + schedule);
        p.validate();
        return p;
    }
};

void add_plan_options(CLI::App* cmd, PlanArgs& args) {
    cmd->add_option("--epochs", args.epochs, "training epochs");
    cmd->add_option("--batch-size", args.batch_size, "mini-batch size");
    cmd->add_option("--lr0", args.lr0, "initial learning rate");
    cmd->add_option("--momentum", args.momentum, "SGD momentum");
    cmd->add_option("--weight-decay", args.weight_decay, "weight decay");
    cmd->add_option("--sgd-seed", args.sgd_seed, "SGD randomness seed");
    cmd->add_option("--schedule", args.schedule, "constant | step | cosine");
    cmd->add_option("--milestones", args.milestones, "step schedule milestones");
    cmd->add_option("--factor", args.factor, "step schedule decay factor");
}

BarrierOptions barrier_options(int grid, const std::string& policy, int stat_batches) {
    BarrierOptions opt;
    opt.grid_size = grid;
    if (policy == "recompute") opt.stat_policy = StatPolicy::recompute;
    else if (policy == "keep") opt.stat_policy = StatPolicy::keep;
    else throw ConfigError("unknown stat policy: " + policy);
    opt.stat_batches = stat_batches;
    return opt;
}

void write_barrier_csv(const BarrierCurve& curve, const std::string& arm,
                       const fs::path& path) {
    CsvWriter csv(kBarrierHeader);
    for (std::size_t i = 0; i < curve.alphas.size(); ++i)
        csv.row({arm, "0", format_double(curve.alphas[i]), format_double(curve.errors[i]),
                 format_double(curve.barriers[i])});
    csv.save(path);
}

void write_metrics_csv(const MetricsLog& log, const std::string& arm, const fs::path& path) {
    CsvWriter csv(kMetricsHeader);
    for (const auto& m : log)
        csv.row({arm, "0", std::to_string(m.epoch), format_double(m.train_loss),
                 format_double(m.train_acc), format_double(m.test_acc)});
    csv.save(path);
}

TransferMode parse_mode(const std::string& mode, double bias_const) {
    if (mode == "subnetwork") return {TransferMode::subnetwork};
    if (mode == "mask_only") return {TransferMode::mask_only};
    if (mode == "signed_init") return {TransferMode::signed_init};
    if (mode == "signed_keep_norm") return {TransferMode::signed_keep_norm};
    if (mode == "signed_init_bias_const") return TransferMode::bias_const_mode(bias_const);
    throw ConfigError("unknown transfer mode: " + mode);
}

int cmd_run(const std::string& config_path, const std::string& out_override) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    fs::path out = cfg.output_dir;
    if (const char* root = std::getenv("TICKETLAB_OUT"); root && *root)
        out = fs::path(root) / cfg.output_dir;
    if (!out_override.empty()) out = out_override;
    try {
        run_experiment(cfg, out, &std::cout);
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote " << (out / "manifest.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale iterative pruning and mode-connectivity laboratory"};
    app.require_subcommand(1);

    // run
    std::string config_path, out_override;
    auto* run = app.add_subcommand("run", "execute an experiment config");
    run->add_option("config", config_path, "config JSON path")->required();
    run->add_option("--out", out_override, "override the output directory");

    // barrier
    std::string ckpt_a, ckpt_b, barrier_out = "barrier.csv", stat_policy = "recompute";
    int grid = 21, stat_batches = 0;
    DataArgs barrier_data;
    auto* barrier = app.add_subcommand("barrier", "error barrier between two checkpoints");
    barrier->add_option("ckpt_a", ckpt_a, "first checkpoint")->required();
    barrier->add_option("ckpt_b", ckpt_b, "second checkpoint")->required();
    barrier->add_option("--grid", grid, "alpha grid size");
    barrier->add_option("--stat-policy", stat_policy, "recompute | keep");
    barrier->add_option("--stat-batches", stat_batches, "batches for stat recompute (0: full pass)");
    barrier->add_option("--out", barrier_out, "output CSV path");
    add_data_options(barrier, barrier_data);

    // transfer
    std::string result_path, mode_name, transfer_prefix = "transfer";
    std::uint64_t fresh_seed = 1;
    double bias_const = 0.1;
    PlanArgs transfer_plan;
    DataArgs transfer_data;
    auto* transfer_cmd = app.add_subcommand("transfer", "final training from a transferred start");
    transfer_cmd->add_option("result", result_path, "pipeline result checkpoint")->required();
    transfer_cmd->add_option("--mode", mode_name, "subnetwork | mask_only | signed_init | "
                                                  "signed_keep_norm | signed_init_bias_const")
        ->required();
    transfer_cmd->add_option("--fresh-seed", fresh_seed, "seed for the fresh initialization");
    transfer_cmd->add_option("--bias-const", bias_const, "norm bias constant");
    transfer_cmd->add_option("--out-prefix", transfer_prefix, "output path prefix");
    add_plan_options(transfer_cmd, transfer_plan);
    add_data_options(transfer_cmd, transfer_data);

    // stability
    std::string start_path, stability_out = "stability.csv", stability_policy = "recompute";
    std::uint64_t u1 = 1, u2 = 2;
    int stability_grid = 21;
    PlanArgs stability_plan;
    DataArgs stability_data;
    auto* stability = app.add_subcommand("stability", "SGD-noise stability of a start point");
    stability->add_option("start", start_path, "start checkpoint")->required();
    stability->add_option("--u1", u1, "first SGD seed")->required();
    stability->add_option("--u2", u2, "second SGD seed")->required();
    stability->add_option("--grid", stability_grid, "alpha grid size");
    stability->add_option("--stat-policy", stability_policy, "recompute | keep");
    stability->add_option("--out", stability_out, "output CSV path");
    add_plan_options(stability, stability_plan);
    add_data_options(stability, stability_data);

    // dataset
    DataArgs dataset_args;
    std::string dataset_prefix = "dataset";
    auto* dataset_cmd = app.add_subcommand("dataset", "generate an IDX dataset pair");
    dataset_cmd->add_option("--out-prefix", dataset_prefix, "output path prefix");
    add_data_options(dataset_cmd, dataset_args);

    // plot
    std::vector<std::string> csv_paths;
    std::string plot_dir = ".";
    auto* plot = app.add_subcommand("plot", "render SVG charts from harness CSVs");
    plot->add_option("csvs", csv_paths, "input CSV files")->required();
    plot->add_option("--out-dir", plot_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, out_override);

        if (*barrier) {
            const Checkpoint a = load_checkpoint(ckpt_a);
            const Checkpoint b = load_checkpoint(ckpt_b);
            if (!same_layout(a.params, b.params)) {
                std::cerr << "layout mismatch: " << ckpt_a << " digest "
                          << a.params.layout->digest() << " vs " << ckpt_b << " digest "
                          << b.params.layout->digest() << "\n";
                return 1;
            }
            const Dataset data = make_dataset(barrier_data.to_config());
            const BarrierCurve curve =
                barrier_curve(a.params, a.buffers, b.params, b.buffers, data,
                              barrier_options(grid, stat_policy, stat_batches));
            write_barrier_csv(curve, "barrier", barrier_out);
            std::cout << "sup_barrier=" << format_double(curve.sup_barrier)
                      << " argmax_alpha=" << format_double(curve.argmax_alpha) << "\n";
            return 0;
        }

        if (*transfer_cmd) {
            const Checkpoint result = load_checkpoint(result_path);
            const TransferMode mode = parse_mode(mode_name, bias_const);
            const bool needs_signs = mode.kind != TransferMode::subnetwork &&
                                     mode.kind != TransferMode::mask_only;
            if (!result.mask) {
                std::cerr << "checkpoint has no mask: " << result_path << "\n";
                return 1;
            }
            if (needs_signs && !result.signs) {
                std::cerr << "signed transfer requested but checkpoint has no signs: "
                          << result_path << "\n";
                return 1;
            }
            PipelineResult pipeline;
            pipeline.spec = result.params.layout->spec;
            pipeline.final_params = result.params;
            pipeline.final_buffers = result.buffers;
            pipeline.final_mask = *result.mask;
            pipeline.signed_mask =
                result.signs ? *result.signs : sign0(masked_values(result.params, *result.mask));
            pipeline.psi_init = result.params.extract_psi();

            const Dataset data = make_dataset(transfer_data.to_config());
            FinalStart start;
            if (mode.kind == TransferMode::subnetwork) {
                start.kind = FinalStart::subnetwork;
            } else {
                start.kind = FinalStart::transfer;
                start.mode = mode;
                start.fresh_seed = fresh_seed;
            }
            const FinalTrainResult solution =
                final_train(pipeline, start, data, transfer_plan.to_plan());
            Checkpoint out{"solution_" + mode_name, solution.params, solution.buffers,
                           solution.mask, std::nullopt,
                           {{"fresh_seed", fresh_seed}, {"sgd", transfer_plan.sgd_seed}}};
            save_checkpoint(out, transfer_prefix + ".ckpt");
            write_metrics_csv(solution.metrics, mode_name, transfer_prefix + "_metrics.csv");
            std::cout << "test_acc=" << format_double(solution.metrics.back().test_acc) << "\n";
            return 0;
        }

        if (*stability) {
            const Checkpoint start = load_checkpoint(start_path);
            const Dataset data = make_dataset(stability_data.to_config());
            const BinaryMask mask =
                start.mask ? *start.mask : dense_mask(*start.params.layout);
            const BarrierCurve curve =
                stability_test(start.params, start.buffers, mask, stability_plan.to_plan(), u1, u2,
                               data, barrier_options(stability_grid, stability_policy, 0));
            write_barrier_csv(curve, "stability", stability_out);
            std::cout << "sup_barrier=" << format_double(curve.sup_barrier)
                      << " argmax_alpha=" << format_double(curve.argmax_alpha) << "\n";
            return 0;
        }

        if (*dataset_cmd) {
            const Dataset data = make_dataset(dataset_args.to_config());
            save_idx_dataset(data, dataset_prefix);
            std::cout << "wrote " << dataset_prefix << "-features.idx and " << dataset_prefix
                      << "-labels.idx (" << (data.train.size() + data.test.size())
                      << " examples)\n";
            return 0;
        }

        if (*plot) {
            std::vector<fs::path> paths(csv_paths.begin(), csv_paths.end());
            const auto written = emit_plots(paths, plot_dir);
            for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
