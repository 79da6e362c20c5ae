#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gatgpt/backbone.hpp"
#include "gatgpt/dataset.hpp"

namespace gatgpt {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LossKind { MAE, MSE };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t max_epochs = 300;
    std::size_t window = 24;           // T_w, non-overlapping windows
    double dropedge_p = 0.1;
    double train_mask_ratio = 0.25;    // fresh mask every epoch
    std::size_t patience = 50;         // epochs without validation improvement
    std::uint64_t seed = 0;
    LossKind loss = LossKind::MAE;
    std::size_t batch_windows = 1;     // windows per optimizer step

    void validate() const;
};

/// Mean |pred - target| (MAE) or squared error (MSE) over every channel of
/// the entries selected by `mask`. Throws on an empty mask.
double masked_loss(const Tensor3& pred, const Tensor3& target, const BoolGrid& mask, LossKind kind);

/// dLoss/dpred for masked_loss (sign subgradient for MAE, 0 at ties).
Tensor3 masked_loss_gradient(const Tensor3& pred, const Tensor3& target, const BoolGrid& mask, LossKind kind);

/// Bernoulli(ratio) selection over entries that are observed and not in
/// `eval_mask`. Throws if no entry is eligible.
BoolGrid make_training_mask(const BoolGrid& observed, const BoolGrid& eval_mask, double ratio, std::uint64_t seed);

/// Adam with bias correction; only non-frozen tensors are updated.
class AdamOptimizer {
public:
    explicit AdamOptimizer(const ModelParams& like, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8);

    void step(ModelParams& params, const ModelParams& grads);
    std::size_t steps_taken() const { return steps_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t steps_ = 0;
    ModelParams first_;
    ModelParams second_;
};

/// Inputs to fit(). Tensors are normalized; `*_hidden` are evaluation masks
/// restricted to each segment. Training never reads or targets
/// `train_hidden` entries; validation scores `val_hidden`.
struct TrainingData {
    TimeSeriesTensor train;
    BoolGrid train_hidden;
    TimeSeriesTensor val;
    BoolGrid val_hidden;
    NormStats stats;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0; // original units
    double val_mse = 0.0;
};

struct FitResult {
    ModelParams model; // best-validation parameters
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    std::size_t optimizer_steps = 0;
};

FitResult fit(ModelParams model, const TrainingData& data, const AdjacencyMatrix& a, const TrainConfig& cfg,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Eval-mode forward over consecutive windows of `window` steps; output is
/// in normalized units.
Tensor3 predict(const ModelParams& model, const TimeSeriesTensor& normalized, const AdjacencyMatrix& a,
                std::size_t window);

/// Observed entries keep their values; unobserved entries get denormalized
/// predictions. The result is fully observed.
TimeSeriesTensor impute(const ModelParams& model, const TimeSeriesTensor& data, const AdjacencyMatrix& a,
                        const NormStats& stats, std::size_t window = 24);

void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out);

// ---- key = value configuration ------------------------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// One `key = value` per line; `#` starts a comment; blank lines ignored.
KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>");
KeyValues load_key_values(const std::filesystem::path& path);

/// Applies keys mirroring TrainConfig and ModelConfig fields; unknown keys
/// or unparsable values throw ConfigError.
void apply_key_values(const KeyValues& kv, TrainConfig& train, ModelConfig& model);

} // namespace gatgpt
