#include "gatgpt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gatgpt/checkpoint.hpp"
#include "gatgpt/dataset.hpp"
#include "gatgpt/evaluation.hpp"
#include "gatgpt/training.hpp"

namespace gatgpt::cli {

namespace {

namespace fs = std::filesystem;

struct SplitFlags {
    SplitSpec spec;
    void add(CLI::App* app) {
        app->add_option("--train-frac", spec.train_frac, "Leading fraction of steps used for training");
        app->add_option("--val-frac", spec.val_frac, "Following fraction used for validation");
        app->add_option("--test-frac", spec.test_frac, "Trailing fraction used for testing");
    }
};

void add_model_flags(CLI::App* app, ModelConfig& m, bool grid) {
    if (!grid) {
        app->add_option("--layers", m.layers, "Transformer blocks");
        app->add_option("--d-model", m.d_model, "Model dimension");
    }
    app->add_option("--n-heads", m.n_heads, "Self-attention heads per block");
    app->add_option("--gat-heads", m.gat_heads, "Graph attention heads");
    app->add_option("--d-head", m.d_head, "Graph attention head size (0: d-model / gat-heads)");
    app->add_option("--kernel-width", m.kernel_width, "Token embedding kernel width (odd)");
    app->add_option("--leaky-slope", m.leaky_slope, "LeakyReLU slope in attention scores");
}

void add_train_flags(CLI::App* app, TrainConfig& t, std::string& loss) {
    app->add_option("--learning-rate", t.learning_rate, "Adam learning rate");
    app->add_option("--max-epochs", t.max_epochs, "Epoch limit");
    app->add_option("--window", t.window, "Window length in steps");
    app->add_option("--dropedge-p", t.dropedge_p, "DropEdge probability during training");
    app->add_option("--train-mask-ratio", t.train_mask_ratio, "Fraction of visible entries re-masked per epoch");
    app->add_option("--patience", t.patience, "Early stopping patience in epochs");
    app->add_option("--seed", t.seed, "Random seed");
    app->add_option("--loss", loss, "Training loss (mae or mse)");
    app->add_option("--batch-windows", t.batch_windows, "Windows per optimizer step");
}

std::vector<std::size_t> parse_size_list(const std::string& flag, const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const unsigned long v = std::stoul(item, &pos);
            if (pos != item.size())
                throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("invalid " + flag + " entry '" + item + "'");
        }
    }
    if (out.empty())
        throw ConfigError(flag + " must list at least one value");
    return out;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot open " + path.string() + " for writing");
    return out;
}

// Expands `--config <file>` into flags placed before the explicit ones.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::vector<std::string> injected;
    for (std::size_t i = 1; i < args.size();) {
        std::string path;
        if (args[i] == "--config") {
            if (i + 1 >= args.size())
                return args; // let the parser report it
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
            continue;
        }
        const KeyValues kv = load_key_values(path);
        TrainConfig t;
        ModelConfig m;
        apply_key_values(kv, t, m);
        for (const auto& [key, value] : kv) {
            std::string flag = "--" + key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            injected.push_back(flag);
            injected.push_back(value);
        }
    }
    if (!args.empty())
        args.insert(args.begin() + 1, injected.begin(), injected.end());
    return args;
}

} // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatiotemporal imputation with graph attention and a frozen transformer backbone", "gatgpt"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::int64_t step_seconds = 0;
    const auto add_data = [&](CLI::App* sub, std::string& data, bool required) {
        auto* opt = sub->add_option("--data", data, "Data CSV (timestamp,<node>...)");
        if (required)
            opt->required();
        sub->add_option("--step-seconds", step_seconds, "Sampling interval in seconds (0: infer)");
    };
    const auto add_config = [](CLI::App* sub) {
        sub->add_option("--config", "key = value file merged before explicit flags")->default_str("");
    };

    // prepare
    std::string prep_data, prep_distances, prep_out_dir;
    std::optional<double> sigma;
    double threshold = 0.1;
    bool self_loops = true;
    SplitFlags prep_split;
    auto* prepare = app.add_subcommand("prepare", "Build the adjacency matrix and chronological splits");
    add_data(prepare, prep_data, true);
    prepare->add_option("--distances", prep_distances, "Distance CSV (from,to,distance)")->required();
    prepare->add_option("--sigma", sigma, "Gaussian kernel width (default: std of distances)")->default_str("auto");
    prepare->add_option("--threshold", threshold, "Weights at or below this are dropped");
    prepare->add_flag("--self-loops,!--no-self-loops", self_loops, "Keep self-loops on the diagonal");
    prep_split.add(prepare);
    prepare->add_option("--out-dir", prep_out_dir, "Directory for adjacency.csv, train.csv, val.csv, test.csv")
        ->required();

    // mask
    std::string mask_data, mask_pattern = "point", mask_out;
    double ratio = 0.25, point_ratio = 0.05, block_prob = 0.0015, min_hours = 1.0, max_hours = 4.0;
    std::uint64_t mask_seed = 0;
    auto* mask = app.add_subcommand("mask", "Generate an evaluation mask");
    add_data(mask, mask_data, true);
    mask->add_option("--pattern", mask_pattern, "point or block")->check(CLI::IsMember({"point", "block"}));
    mask->add_option("--ratio", ratio, "Point pattern: fraction of observed entries hidden");
    mask->add_option("--point-ratio", point_ratio, "Block pattern: underlying point mask ratio");
    mask->add_option("--block-prob", block_prob, "Block pattern: per-step block start probability");
    mask->add_option("--min-hours", min_hours, "Block pattern: shortest block in hours");
    mask->add_option("--max-hours", max_hours, "Block pattern: longest block in hours");
    mask->add_option("--seed", mask_seed, "Random seed");
    mask->add_option("--out", mask_out, "Mask CSV to write")->required();

    // train
    std::string tr_data, tr_adj, tr_mask, tr_out, tr_history, tr_loss = "mae", tr_report;
    bool verbose = false;
    TrainConfig tr_cfg;
    ModelConfig tr_model;
    SplitFlags tr_split;
    auto* train = app.add_subcommand("train", "Fit a model and write a checkpoint");
    add_config(train);
    add_data(train, tr_data, true);
    train->add_option("--adjacency", tr_adj, "Adjacency CSV from prepare")->required();
    train->add_option("--mask", tr_mask, "Evaluation mask CSV (held out from training)")->required();
    add_model_flags(train, tr_model, false);
    add_train_flags(train, tr_cfg, tr_loss);
    tr_split.add(train);
    train->add_option("--out", tr_out, "Checkpoint file to write")->required();
    train->add_option("--history", tr_history, "Optional per-epoch CSV (epoch,train_loss,val_mae,val_mse)");
    train->add_option("--report", tr_report, "Optional test-segment report CSV (default: output stream)");
    train->add_flag("--verbose", verbose, "Print per-epoch progress to the error stream");

    // impute
    std::string im_data, im_adj, im_ckpt, im_mask, im_out;
    std::size_t im_window = 24;
    auto* imp = app.add_subcommand("impute", "Fill missing entries of a data file");
    add_data(imp, im_data, true);
    imp->add_option("--adjacency", im_adj, "Adjacency CSV")->required();
    imp->add_option("--checkpoint", im_ckpt, "Checkpoint from train")->required();
    imp->add_option("--mask", im_mask, "Optional mask CSV; these entries are hidden before imputing");
    imp->add_option("--window", im_window, "Window length in steps");
    imp->add_option("--out", im_out, "Imputed CSV to write")->required();

    // evaluate
    std::string ev_imputed, ev_truth, ev_mask, ev_adj, ev_method = "gatgpt", ev_tag = "data", ev_pattern = "point",
                                                     ev_out;
    bool baselines = false;
    std::size_t knn_k = 5;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score imputations on evaluation-mask entries");
    evaluate_cmd->add_option("--imputed", ev_imputed, "Imputed CSV to score");
    evaluate_cmd->add_option("--truth", ev_truth, "Ground-truth CSV")->required();
    evaluate_cmd->add_option("--mask", ev_mask, "Evaluation mask CSV")->required();
    evaluate_cmd->add_option("--step-seconds", step_seconds, "Sampling interval in seconds (0: infer)");
    evaluate_cmd->add_option("--method", ev_method, "Method name for the --imputed row");
    evaluate_cmd->add_option("--dataset", ev_tag, "Dataset tag in the report");
    evaluate_cmd->add_option("--pattern", ev_pattern, "Mask pattern in the report")
        ->check(CLI::IsMember({"point", "block"}));
    evaluate_cmd->add_flag("--baselines", baselines, "Also score the mean, daily-average and kNN baselines");
    evaluate_cmd->add_option("--adjacency", ev_adj, "Adjacency CSV (needed for the kNN baseline)");
    evaluate_cmd->add_option("--k", knn_k, "Neighbours for the kNN baseline");
    evaluate_cmd->add_option("--out", ev_out, "Report CSV (default: output stream)");

    // sweep
    std::string sw_data, sw_adj, sw_mask, sw_layers = "2,3", sw_dims = "32,64", sw_loss = "mae", sw_out, sw_tag = "data";
    TrainConfig sw_cfg;
    ModelConfig sw_model;
    SplitFlags sw_split;
    auto* sweep_cmd = app.add_subcommand("sweep", "Train and score a layers x d_model grid");
    add_config(sweep_cmd);
    add_data(sweep_cmd, sw_data, true);
    sweep_cmd->add_option("--adjacency", sw_adj, "Adjacency CSV")->required();
    sweep_cmd->add_option("--mask", sw_mask, "Evaluation mask CSV")->required();
    sweep_cmd->add_option("--layers", sw_layers, "Comma-separated layer counts");
    sweep_cmd->add_option("--d-model", sw_dims, "Comma-separated model dimensions");
    add_model_flags(sweep_cmd, sw_model, true);
    add_train_flags(sweep_cmd, sw_cfg, sw_loss);
    sw_split.add(sweep_cmd);
    sweep_cmd->add_option("--dataset", sw_tag, "Dataset tag");
    sweep_cmd->add_option("--out", sw_out, "Sweep CSV (default: output stream)");

    try {
        std::vector<std::string> args = expand_config(raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Ok : Usage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return DataOrConfig;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return DataOrConfig;
    }

    try {
        if (*prepare) {
            const TimeSeriesTensor data = load_csv(prep_data, step_seconds);
            const auto dist = load_distances(prep_distances, data.node_ids);
            const AdjacencyMatrix a = build_adjacency(dist, data.nodes(), sigma, threshold, self_loops);
            const Splits s = split_chronological(data, prep_split.spec);
            fs::create_directories(prep_out_dir);
            const fs::path dir(prep_out_dir);
            write_adjacency_csv(a, data.node_ids, dir / "adjacency.csv");
            write_csv(s.train, dir / "train.csv");
            write_csv(s.val, dir / "val.csv");
            write_csv(s.test, dir / "test.csv");
            out << "nodes " << data.nodes() << ", edges " << a.off_diagonal_edges() << ", steps " << s.bounds.train_end
                << '/' << s.bounds.val_end - s.bounds.train_end << '/' << s.bounds.total - s.bounds.val_end << '\n';
        } else if (*mask) {
            const TimeSeriesTensor data = load_csv(mask_data, step_seconds);
            EvalMask m;
            if (mask_pattern == "point") {
                m = gen_point_mask(data, ratio, mask_seed);
            } else {
                m = gen_block_mask(
                    data, BlockMaskParams::from_hours(data.step_seconds, min_hours, max_hours, point_ratio, block_prob),
                    mask_seed);
            }
            write_mask_csv(m.hidden, data, fs::path(mask_out));
        } else if (*train) {
            tr_cfg.loss = parse_loss_kind(tr_loss);
            ExperimentInputs in;
            in.data = load_csv(tr_data, step_seconds);
            in.adjacency = load_adjacency_csv(tr_adj, in.data.node_ids);
            in.eval_mask = load_mask_csv(tr_mask, in.data);
            in.split = tr_split.spec;
            std::function<void(const EpochRecord&)> progress;
            if (verbose)
                progress = [&](const EpochRecord& r) {
                    err << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_mae " << r.val_mae << '\n';
                };
            const ExperimentResult r = run_experiment(in, tr_model, tr_cfg, progress);
            save_checkpoint(r.fit.model, tr_out, r.stats);
            if (!tr_history.empty()) {
                auto h = open_out(tr_history);
                write_history_csv(r.fit.history, h);
            }
            if (tr_report.empty()) {
                write_report_csv({r.test}, out);
            } else {
                auto f = open_out(tr_report);
                write_report_csv({r.test}, f);
            }
        } else if (*imp) {
            TimeSeriesTensor data = load_csv(im_data, step_seconds);
            if (!im_mask.empty())
                data = hide(data, load_mask_csv(im_mask, data));
            NormStats stats;
            const ModelParams model = load_checkpoint(im_ckpt, &stats);
            if (stats.mean.empty())
                throw CheckpointError(im_ckpt + ": checkpoint carries no normalization statistics");
            const AdjacencyMatrix a = load_adjacency_csv(im_adj, data.node_ids);
            write_csv(impute(model, data, a, stats, im_window), fs::path(im_out));
        } else if (*evaluate_cmd) {
            const TimeSeriesTensor truth = load_csv(ev_truth, step_seconds);
            const BoolGrid m = load_mask_csv(ev_mask, truth);
            const MaskPattern pattern = parse_mask_pattern(ev_pattern);
            std::vector<MetricsReport> reports;
            const auto add = [&](const TimeSeriesTensor& imputed, const std::string& method) {
                MetricsReport r = evaluate(imputed, truth, m);
                r.method = method;
                r.dataset_tag = ev_tag;
                r.pattern = pattern;
                reports.push_back(r);
            };
            if (ev_imputed.empty() && !baselines)
                throw ConfigError("nothing to score: give --imputed and/or --baselines");
            if (!ev_imputed.empty()) {
                const TimeSeriesTensor imputed = load_csv(ev_imputed, truth.step_seconds);
                if (imputed.node_ids != truth.node_ids || imputed.steps() != truth.steps())
                    throw DataError(ev_imputed + ": nodes or steps differ from " + ev_truth);
                for (std::size_t n = 0; n < truth.nodes(); ++n)
                    for (std::size_t s = 0; s < truth.steps(); ++s)
                        if (m(n, s) && !imputed.observed(n, s))
                            throw DataError(ev_imputed + ": entry (" + truth.node_ids[n] + ", step " +
                                            std::to_string(s) + ") is masked but not imputed");
                add(imputed, ev_method);
            }
            if (baselines) {
                add(baseline_mean(truth, m), "mean");
                add(baseline_da(truth, m), "da");
                if (!ev_adj.empty())
                    add(baseline_knn(truth, load_adjacency_csv(ev_adj, truth.node_ids), m, knn_k), "knn");
                else
                    err << "note: no --adjacency given, kNN baseline skipped\n";
            }
            if (ev_out.empty()) {
                write_report_csv(reports, out);
            } else {
                auto f = open_out(ev_out);
                write_report_csv(reports, f);
            }
        } else if (*sweep_cmd) {
            sw_cfg.loss = parse_loss_kind(sw_loss);
            const auto layers = parse_size_list("--layers", sw_layers);
            const auto dims = parse_size_list("--d-model", sw_dims);
            ExperimentInputs in;
            in.data = load_csv(sw_data, step_seconds);
            in.adjacency = load_adjacency_csv(sw_adj, in.data.node_ids);
            in.eval_mask = load_mask_csv(sw_mask, in.data);
            in.split = sw_split.spec;
            in.dataset_tag = sw_tag;
            const auto cells = sweep(layers, dims, in, sw_model, sw_cfg, [&](const SweepCell& c) {
                if (!c.error.empty())
                    err << "cell layers=" << c.layers << " d_model=" << c.d_model << " failed: " << c.error << '\n';
            });
            if (sw_out.empty()) {
                write_sweep_csv(cells, out);
            } else {
                auto f = open_out(sw_out);
                write_sweep_csv(cells, f);
            }
            if (std::all_of(cells.begin(), cells.end(), [](const SweepCell& c) { return !c.error.empty(); }))
                return Runtime;
        }
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return DataOrConfig;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return DataOrConfig;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << '\n';
        return DataOrConfig;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return DataOrConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return Runtime;
    }
    return Ok;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace gatgpt::cli
