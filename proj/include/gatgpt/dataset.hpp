#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gatgpt/tensor.hpp"

namespace gatgpt {

/// Raised for malformed input files and data that violates a module
/// precondition (constant channels, empty segments, ...).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Values [N, T, C] plus the observed mask [N, T]. Unobserved cells hold a
/// sentinel (0) and are only read through the observed mask.
struct TimeSeriesTensor {
    Tensor3 values;
    BoolGrid observed;
    std::vector<std::string> node_ids;
    std::int64_t step_seconds = 3600;
    std::int64_t start_time = 0; // unix seconds of step 0

    std::size_t nodes() const { return values.nodes(); }
    std::size_t steps() const { return values.steps(); }
    std::size_t channels() const { return values.width(); }

    void validate() const;
};

struct AdjacencyMatrix {
    Matrix weights;
    bool self_loops = true;

    std::size_t size() const { return static_cast<std::size_t>(weights.rows()); }
    bool has_edge(std::size_t i, std::size_t j) const {
        return weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0;
    }
    std::size_t off_diagonal_edges() const;
};

enum class MaskPattern { Point, Block };

std::string to_string(MaskPattern pattern);
MaskPattern parse_mask_pattern(const std::string& text);

struct EvalMask {
    BoolGrid hidden;
    MaskPattern pattern = MaskPattern::Point;
    std::uint64_t seed = 0;
};

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;

    void validate() const;
};

/// Step indices: train = [0, train_end), val = [train_end, val_end),
/// test = [val_end, total).
struct SplitBounds {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t total = 0;
};

struct Splits {
    TimeSeriesTensor train;
    TimeSeriesTensor val;
    TimeSeriesTensor test;
    SplitBounds bounds;
};

struct DistanceEntry {
    std::size_t from = 0;
    std::size_t to = 0;
    double distance = 0.0;
};

/// Per-channel mean and standard deviation over observed training entries.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

struct BlockMaskParams {
    double point_ratio = 0.05;
    double block_start_prob = 0.0015;
    std::size_t min_len_steps = 1;
    std::size_t max_len_steps = 4;

    /// Block lengths given in hours, converted with the sampling interval.
    static BlockMaskParams from_hours(std::int64_t step_seconds, double min_hours = 1.0, double max_hours = 4.0,
                                      double point_ratio = 0.05, double block_start_prob = 0.0015);
};

// ---- timestamps -------------------------------------------------------------

/// Parses `YYYY-MM-DD[T| ]HH:MM[:SS][Z]` into unix seconds (UTC).
std::optional<std::int64_t> parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t unix_seconds);

// ---- file formats -----------------------------------------------------------

/// Reads the `timestamp,<node_0>,...` data CSV. Empty cells and `NaN` are
/// missing. `step_seconds <= 0` infers the interval from the first two rows.
TimeSeriesTensor load_csv(const std::filesystem::path& path, std::int64_t step_seconds = 0);
TimeSeriesTensor parse_csv(std::istream& in, std::int64_t step_seconds = 0, const std::string& source = "<stream>");
/// Writes channel 0 of `t`; unobserved cells are left empty.
void write_csv(const TimeSeriesTensor& t, std::ostream& out);
void write_csv(const TimeSeriesTensor& t, const std::filesystem::path& path);

/// Reads `from,to,distance`. Endpoints are node identifiers from `node_ids`
/// or zero-based indices.
std::vector<DistanceEntry> load_distances(const std::filesystem::path& path,
                                          const std::vector<std::string>& node_ids);
std::vector<DistanceEntry> parse_distances(std::istream& in, const std::vector<std::string>& node_ids,
                                           const std::string& source = "<stream>");

/// Mask CSV: same header and timestamps as the data file, cells 0/1.
void write_mask_csv(const BoolGrid& mask, const TimeSeriesTensor& like, std::ostream& out);
void write_mask_csv(const BoolGrid& mask, const TimeSeriesTensor& like, const std::filesystem::path& path);
BoolGrid load_mask_csv(const std::filesystem::path& path, const TimeSeriesTensor& like);
BoolGrid parse_mask_csv(std::istream& in, const TimeSeriesTensor& like, const std::string& source = "<stream>");

/// Adjacency CSV: header `node,<id_0>,...`, then one row per node.
void write_adjacency_csv(const AdjacencyMatrix& a, const std::vector<std::string>& node_ids, std::ostream& out);
void write_adjacency_csv(const AdjacencyMatrix& a, const std::vector<std::string>& node_ids,
                         const std::filesystem::path& path);
/// Rows and columns must list `node_ids` in order. Self-loops are on when
/// every diagonal weight is positive.
AdjacencyMatrix parse_adjacency_csv(std::istream& in, const std::vector<std::string>& node_ids,
                                    const std::string& source = "<stream>");
AdjacencyMatrix load_adjacency_csv(const std::filesystem::path& path, const std::vector<std::string>& node_ids);

// ---- graph ------------------------------------------------------------------

/// Thresholded Gaussian kernel: w = exp(-d^2 / sigma^2) when above
/// `threshold`, else 0. `sigma == nullopt` uses the standard deviation of
/// the listed distances. Asymmetric pairs are symmetrized by min.
AdjacencyMatrix build_adjacency(std::span<const DistanceEntry> distances, std::size_t nodes,
                                std::optional<double> sigma = std::nullopt, double threshold = 0.1,
                                bool self_loops = true);

// ---- masks ------------------------------------------------------------------

EvalMask gen_point_mask(const TimeSeriesTensor& t, double ratio, std::uint64_t seed);
EvalMask gen_block_mask(const TimeSeriesTensor& t, const BlockMaskParams& params, std::uint64_t seed);

/// Converts a duration in hours to a whole number of steps (at least 1).
std::size_t hours_to_steps(double hours, std::int64_t step_seconds);

// ---- splits and normalization -------------------------------------------------

SplitBounds split_bounds(std::size_t steps, const SplitSpec& spec);
Splits split_chronological(const TimeSeriesTensor& t, const SplitSpec& spec);
TimeSeriesTensor slice_steps(const TimeSeriesTensor& t, std::size_t begin, std::size_t end);

enum class Segment : std::uint8_t { Train, Val, Test };

/// Month-wise split: steps in `test_months` are test; the trailing
/// `val_tail_frac` of each run of steps in `val_months` is validation; the
/// rest is training. Months are 1..12 (UTC).
std::vector<Segment> month_split(const TimeSeriesTensor& t, std::span<const int> test_months,
                                 std::span<const int> val_months, double val_tail_frac = 0.1);

NormStats compute_stats(const TimeSeriesTensor& t);
TimeSeriesTensor normalize(const TimeSeriesTensor& t, const NormStats& stats);
TimeSeriesTensor denormalize(const TimeSeriesTensor& t, const NormStats& stats);

/// Copy of `t` with `hidden` entries marked unobserved.
TimeSeriesTensor hide(const TimeSeriesTensor& t, const BoolGrid& hidden);

} // namespace gatgpt
