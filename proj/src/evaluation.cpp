#include "gatgpt/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace gatgpt {

namespace {

void check_mask(const TimeSeriesTensor& t, const BoolGrid& mask) {
    if (mask.nodes() != t.nodes() || mask.steps() != t.steps())
        throw std::invalid_argument("evaluation mask [" + std::to_string(mask.nodes()) + ", " +
                                    std::to_string(mask.steps()) + "] does not match data " + t.values.shape_string());
}

bool visible(const TimeSeriesTensor& t, const BoolGrid& hidden, std::size_t n, std::size_t s) {
    return t.observed(n, s) && !hidden(n, s);
}

// [nodes x channels] mean of visible entries.
Matrix node_means(const TimeSeriesTensor& t, const BoolGrid& hidden) {
    Matrix means = Matrix::Zero(static_cast<Eigen::Index>(t.nodes()), static_cast<Eigen::Index>(t.channels()));
    for (std::size_t n = 0; n < t.nodes(); ++n) {
        std::size_t count = 0;
        for (std::size_t s = 0; s < t.steps(); ++s) {
            if (!visible(t, hidden, n, s))
                continue;
            ++count;
            for (std::size_t c = 0; c < t.channels(); ++c)
                means(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) += t.values(n, s, c);
        }
        if (count == 0) {
            const std::string id = n < t.node_ids.size() ? t.node_ids[n] : std::to_string(n);
            throw DataError("node " + id + " has no visible observed entries");
        }
        means.row(static_cast<Eigen::Index>(n)) /= static_cast<double>(count);
    }
    return means;
}

// Fills every non-visible entry with fill(n, s, c).
template <class Fill>
TimeSeriesTensor fill_hidden(const TimeSeriesTensor& t, const BoolGrid& hidden, Fill fill) {
    TimeSeriesTensor out = t;
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s) {
            if (visible(t, hidden, n, s))
                continue;
            for (std::size_t c = 0; c < t.channels(); ++c)
                out.values(n, s, c) = fill(n, s, c);
            out.observed.set(n, s, true);
        }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

MetricsReport evaluate(const TimeSeriesTensor& imputed, const TimeSeriesTensor& truth, const BoolGrid& eval_mask) {
    if (!imputed.values.same_shape(truth.values))
        throw std::invalid_argument("imputed " + imputed.values.shape_string() + " and truth " +
                                    truth.values.shape_string() + " differ in shape");
    check_mask(truth, eval_mask);
    MetricsReport r;
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t n = 0; n < truth.nodes(); ++n)
        for (std::size_t s = 0; s < truth.steps(); ++s) {
            if (!eval_mask(n, s))
                continue;
            for (std::size_t c = 0; c < truth.channels(); ++c) {
                const double e = imputed.values(n, s, c) - truth.values(n, s, c);
                abs_sum += std::abs(e);
                sq_sum += e * e;
                ++r.n_scored;
            }
        }
    if (r.n_scored == 0)
        throw std::invalid_argument("evaluation mask is empty");
    r.mae = abs_sum / static_cast<double>(r.n_scored);
    r.mse = sq_sum / static_cast<double>(r.n_scored);
    return r;
}

TimeSeriesTensor baseline_mean(const TimeSeriesTensor& t, const BoolGrid& eval_mask) {
    check_mask(t, eval_mask);
    const Matrix means = node_means(t, eval_mask);
    return fill_hidden(t, eval_mask, [&](std::size_t n, std::size_t, std::size_t c) {
        return means(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    });
}

TimeSeriesTensor baseline_da(const TimeSeriesTensor& t, const BoolGrid& eval_mask) {
    check_mask(t, eval_mask);
    if (t.step_seconds <= 0 || 86400 % t.step_seconds != 0)
        throw DataError("daily-average baseline needs a step that divides one day (step is " +
                        std::to_string(t.step_seconds) + " s)");
    const std::size_t slots = static_cast<std::size_t>(86400 / t.step_seconds);
    const auto slot_of = [&](std::size_t s) {
        const std::int64_t tod = ((t.start_time + static_cast<std::int64_t>(s) * t.step_seconds) % 86400 + 86400) % 86400;
        return static_cast<std::size_t>(tod / t.step_seconds);
    };
    const Matrix means = node_means(t, eval_mask);
    const std::size_t width = t.channels();
    std::vector<double> sums(t.nodes() * slots * width, 0.0);
    std::vector<std::size_t> counts(t.nodes() * slots, 0);
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s) {
            if (!visible(t, eval_mask, n, s))
                continue;
            const std::size_t k = n * slots + slot_of(s);
            ++counts[k];
            for (std::size_t c = 0; c < width; ++c)
                sums[k * width + c] += t.values(n, s, c);
        }
    return fill_hidden(t, eval_mask, [&](std::size_t n, std::size_t s, std::size_t c) {
        const std::size_t k = n * slots + slot_of(s);
        if (counts[k] == 0)
            return means(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
        return sums[k * width + c] / static_cast<double>(counts[k]);
    });
}

TimeSeriesTensor baseline_knn(const TimeSeriesTensor& t, const AdjacencyMatrix& a, const BoolGrid& eval_mask,
                              std::size_t k) {
    check_mask(t, eval_mask);
    if (k == 0)
        throw std::invalid_argument("kNN baseline needs k >= 1");
    if (a.size() != t.nodes())
        throw std::invalid_argument("adjacency has " + std::to_string(a.size()) + " nodes, data has " +
                                    std::to_string(t.nodes()));
    const Matrix means = node_means(t, eval_mask);

    // Neighbours by descending weight, ties by index.
    std::vector<std::vector<std::size_t>> ranked(t.nodes());
    for (std::size_t n = 0; n < t.nodes(); ++n) {
        for (std::size_t j = 0; j < t.nodes(); ++j)
            if (j != n && a.has_edge(n, j))
                ranked[n].push_back(j);
        const auto w = [&](std::size_t j) {
            return a.weights(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
        };
        std::stable_sort(ranked[n].begin(), ranked[n].end(), [&](std::size_t x, std::size_t y) { return w(x) > w(y); });
        if (ranked[n].size() > k)
            ranked[n].resize(k);
    }

    TimeSeriesTensor out = t;
    std::vector<double> acc(t.channels());
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s) {
            if (visible(t, eval_mask, n, s))
                continue;
            std::fill(acc.begin(), acc.end(), 0.0);
            std::size_t used = 0;
            for (std::size_t j : ranked[n]) {
                if (!visible(t, eval_mask, j, s))
                    continue;
                ++used;
                for (std::size_t c = 0; c < t.channels(); ++c)
                    acc[c] += t.values(j, s, c);
            }
            for (std::size_t c = 0; c < t.channels(); ++c)
                out.values(n, s, c) = used ? acc[c] / static_cast<double>(used)
                                           : means(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
            out.observed.set(n, s, true);
        }
    return out;
}

void write_report_csv(const std::vector<MetricsReport>& reports, std::ostream& out) {
    out << "dataset,pattern,method,mae,mse,n_scored\n";
    for (const auto& r : reports)
        out << r.dataset_tag << ',' << to_string(r.pattern) << ',' << r.method << ',' << format_double(r.mae) << ','
            << format_double(r.mse) << ',' << r.n_scored << '\n';
}

// ---- experiment ------------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentInputs& in, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                const std::function<void(const EpochRecord&)>& on_epoch) {
    in.data.validate();
    check_mask(in.data, in.eval_mask);
    ModelConfig cfg = model_cfg;
    cfg.in_channels = in.data.channels();
    cfg.out_channels = in.data.channels();
    cfg.validate();

    ExperimentResult result;
    result.bounds = split_bounds(in.data.steps(), in.split);
    const SplitBounds& b = result.bounds;
    const TimeSeriesTensor train_raw = slice_steps(in.data, 0, b.train_end);
    const BoolGrid train_hidden = in.eval_mask.slice_steps(0, b.train_end);
    result.stats = compute_stats(hide(train_raw, train_hidden));

    TrainingData data{
        normalize(train_raw, result.stats),
        train_hidden,
        normalize(slice_steps(in.data, b.train_end, b.val_end), result.stats),
        in.eval_mask.slice_steps(b.train_end, b.val_end),
        result.stats,
    };
    result.fit = fit(init_model(cfg, train_cfg.seed), data, in.adjacency, train_cfg, on_epoch);

    const TimeSeriesTensor test_raw = slice_steps(in.data, b.val_end, b.total);
    const BoolGrid test_hidden = in.eval_mask.slice_steps(b.val_end, b.total);
    const TimeSeriesTensor imputed =
        impute(result.fit.model, hide(test_raw, test_hidden), in.adjacency, result.stats, train_cfg.window);
    result.test = evaluate(imputed, test_raw, test_hidden);
    result.test.pattern = in.pattern;
    result.test.dataset_tag = in.dataset_tag;
    result.test.method = "gatgpt";
    return result;
}

MetricsReport score_test_segment(const TimeSeriesTensor& imputed, const ExperimentInputs& in, const std::string& method) {
    const SplitBounds b = split_bounds(in.data.steps(), in.split);
    MetricsReport r = evaluate(slice_steps(imputed, b.val_end, b.total), slice_steps(in.data, b.val_end, b.total),
                               in.eval_mask.slice_steps(b.val_end, b.total));
    r.pattern = in.pattern;
    r.dataset_tag = in.dataset_tag;
    r.method = method;
    return r;
}

// ---- sweep -----------------------------------------------------------------------

std::vector<SweepCell> sweep(const std::vector<std::size_t>& layers, const std::vector<std::size_t>& d_models,
                             const ExperimentInputs& in, const ModelConfig& base, const TrainConfig& train_cfg,
                             const std::function<void(const SweepCell&)>& on_cell) {
    std::vector<SweepCell> cells;
    for (std::size_t l : layers)
        for (std::size_t d : d_models) {
            SweepCell cell;
            cell.layers = l;
            cell.d_model = d;
            ModelConfig cfg = base;
            cfg.layers = l;
            cfg.d_model = d;
            const auto start = std::chrono::steady_clock::now();
            try {
                const ExperimentResult r = run_experiment(in, cfg, train_cfg);
                cell.mae = r.test.mae;
                cell.mse = r.test.mse;
            } catch (const std::exception& e) {
                cell.error = e.what();
                cell.mae = cell.mse = std::numeric_limits<double>::quiet_NaN();
            }
            cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            cells.push_back(cell);
            if (on_cell)
                on_cell(cells.back());
        }
    return cells;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out) {
    out << "layers,d_model,mae,mse,seconds\n";
    for (const auto& c : cells)
        out << c.layers << ',' << c.d_model << ',' << format_double(c.mae) << ',' << format_double(c.mse) << ','
            << format_double(c.seconds) << '\n';
}

} // namespace gatgpt
