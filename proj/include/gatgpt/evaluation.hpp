#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gatgpt/backbone.hpp"
#include "gatgpt/dataset.hpp"
#include "gatgpt/training.hpp"

namespace gatgpt {

struct MetricsReport {
    double mae = 0.0;
    double mse = 0.0;
    std::size_t n_scored = 0;
    MaskPattern pattern = MaskPattern::Point;
    std::string dataset_tag;
    std::string method;
};

/// MAE / MSE over `eval_mask` entries only (every channel), in the units of
/// the inputs. Entries outside the mask are never read.
MetricsReport evaluate(const TimeSeriesTensor& imputed, const TimeSeriesTensor& truth, const BoolGrid& eval_mask);

// Baselines. "Visible" means observed and not in `eval_mask`. Each returns a
// fully observed tensor: visible entries unchanged, the rest imputed.

/// Per-node mean of visible entries.
TimeSeriesTensor baseline_mean(const TimeSeriesTensor& t, const BoolGrid& eval_mask);

/// Per-node mean of visible entries sharing the time-of-day slot; falls back
/// to the node mean for empty slots. Requires step_seconds to divide 86400.
TimeSeriesTensor baseline_da(const TimeSeriesTensor& t, const BoolGrid& eval_mask);

/// Mean of the visible values, at the same step, of the k neighbours with
/// the largest adjacency weight; falls back to the node mean.
TimeSeriesTensor baseline_knn(const TimeSeriesTensor& t, const AdjacencyMatrix& a, const BoolGrid& eval_mask,
                              std::size_t k = 5);

/// CSV `dataset,pattern,method,mae,mse,n_scored`.
void write_report_csv(const std::vector<MetricsReport>& reports, std::ostream& out);

// ---- end-to-end experiment ------------------------------------------------------

struct ExperimentInputs {
    TimeSeriesTensor data; // original units
    BoolGrid eval_mask;
    AdjacencyMatrix adjacency;
    SplitSpec split;
    MaskPattern pattern = MaskPattern::Point;
    std::string dataset_tag = "data";
};

struct ExperimentResult {
    FitResult fit;
    NormStats stats;
    SplitBounds bounds;
    MetricsReport test; // eval-mask entries of the test segment, original units
};

/// Chronological split, train-only normalization, fit, then impute and score
/// the test segment with its eval-mask entries hidden.
ExperimentResult run_experiment(const ExperimentInputs& in, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Scores a baseline imputation of the whole series on the test segment.
MetricsReport score_test_segment(const TimeSeriesTensor& imputed, const ExperimentInputs& in, const std::string& method);

// ---- parameter sweep --------------------------------------------------------------

struct SweepCell {
    std::size_t layers = 0;
    std::size_t d_model = 0;
    double mae = 0.0;
    double mse = 0.0;
    double seconds = 0.0;
    std::string error; // non-empty if the cell failed
};

/// Trains and evaluates every (layers, d_model) pair with the same seed.
/// Failing cells are recorded and the sweep continues.
std::vector<SweepCell> sweep(const std::vector<std::size_t>& layers, const std::vector<std::size_t>& d_models,
                             const ExperimentInputs& in, const ModelConfig& base, const TrainConfig& train_cfg,
                             const std::function<void(const SweepCell&)>& on_cell = {});

/// CSV `layers,d_model,mae,mse,seconds`.
void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out);

} // namespace gatgpt
