#include "gatgpt/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gatgpt/evaluation.hpp"
#include "gatgpt/model.hpp"

namespace gatgpt {

namespace {

void check_loss_shapes(const Tensor3& pred, const Tensor3& target, const BoolGrid& mask) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("prediction " + pred.shape_string() + " and target " + target.shape_string() +
                                    " differ in shape");
    if (mask.nodes() != pred.nodes() || mask.steps() != pred.steps())
        throw std::invalid_argument("loss mask does not match prediction shape " + pred.shape_string());
}

struct Window {
    std::size_t begin;
    std::size_t end;
};

std::vector<Window> make_windows(std::size_t steps, std::size_t width) {
    std::vector<Window> out;
    for (std::size_t s = 0; s < steps; s += width)
        out.push_back({s, std::min(steps, s + width)});
    return out;
}

// Normalized values and a custom visibility mask for one window.
TimeSeriesTensor window_view(const TimeSeriesTensor& t, const BoolGrid& visible, Window w) {
    TimeSeriesTensor out = slice_steps(t, w.begin, w.end);
    out.observed = visible.slice_steps(w.begin, w.end);
    return out;
}

BoolGrid and_not(const BoolGrid& a, const BoolGrid& b) {
    BoolGrid out(a.nodes(), a.steps());
    for (std::size_t n = 0; n < a.nodes(); ++n)
        for (std::size_t s = 0; s < a.steps(); ++s)
            out.set(n, s, a(n, s) && !b(n, s));
    return out;
}

MetricsReport validation_metrics(const ModelParams& model, const TrainingData& data, const AdjacencyMatrix& a,
                                 std::size_t window) {
    const TimeSeriesTensor raw_val = denormalize(data.val, data.stats);
    const TimeSeriesTensor input = hide(raw_val, data.val_hidden);
    const TimeSeriesTensor imputed = impute(model, input, a, data.stats, window);
    return evaluate(imputed, raw_val, data.val_hidden);
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError("invalid value '" + value + "' for key '" + key + "'");
    return out;
}

} // namespace

std::string to_string(LossKind kind) {
    return kind == LossKind::MAE ? "mae" : "mse";
}

LossKind parse_loss_kind(const std::string& text) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "mae")
        return LossKind::MAE;
    if (lower == "mse")
        return LossKind::MSE;
    throw ConfigError("unknown loss '" + text + "' (expected mae or mse)");
}

void TrainConfig::validate() const {
    const auto fail = [](const std::string& what) { throw ConfigError("invalid training config: " + what); };
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        fail("learning_rate must be a finite nonnegative number");
    if (max_epochs == 0)
        fail("max_epochs must be >= 1");
    if (window == 0)
        fail("window must be >= 1");
    if (!(dropedge_p >= 0.0 && dropedge_p <= 1.0))
        fail("dropedge_p must lie in [0, 1]");
    if (!(train_mask_ratio > 0.0 && train_mask_ratio < 1.0))
        fail("train_mask_ratio must lie in (0, 1)");
    if (patience == 0)
        fail("patience must be >= 1");
    if (batch_windows == 0)
        fail("batch_windows must be >= 1");
}

// ---- loss -------------------------------------------------------------------------

double masked_loss(const Tensor3& pred, const Tensor3& target, const BoolGrid& mask, LossKind kind) {
    check_loss_shapes(pred, target, mask);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < pred.nodes(); ++n)
        for (std::size_t t = 0; t < pred.steps(); ++t) {
            if (!mask(n, t))
                continue;
            for (std::size_t c = 0; c < pred.width(); ++c) {
                const double e = pred(n, t, c) - target(n, t, c);
                total += kind == LossKind::MAE ? std::abs(e) : e * e;
                ++count;
            }
        }
    if (count == 0)
        throw std::invalid_argument("masked loss over an empty mask");
    return total / static_cast<double>(count);
}

Tensor3 masked_loss_gradient(const Tensor3& pred, const Tensor3& target, const BoolGrid& mask, LossKind kind) {
    check_loss_shapes(pred, target, mask);
    const std::size_t count = mask.count() * pred.width();
    if (count == 0)
        throw std::invalid_argument("masked loss over an empty mask");
    const double inv = 1.0 / static_cast<double>(count);
    Tensor3 grad(pred.nodes(), pred.steps(), pred.width());
    for (std::size_t n = 0; n < pred.nodes(); ++n)
        for (std::size_t t = 0; t < pred.steps(); ++t) {
            if (!mask(n, t))
                continue;
            for (std::size_t c = 0; c < pred.width(); ++c) {
                const double e = pred(n, t, c) - target(n, t, c);
                grad(n, t, c) = kind == LossKind::MAE ? inv * static_cast<double>((e > 0.0) - (e < 0.0)) : 2.0 * inv * e;
            }
        }
    return grad;
}

BoolGrid make_training_mask(const BoolGrid& observed, const BoolGrid& eval_mask, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("training mask ratio must lie in (0, 1)");
    if (!observed.same_shape(eval_mask))
        throw std::invalid_argument("observed and evaluation masks differ in shape");
    BoolGrid out(observed.nodes(), observed.steps());
    bool eligible = false;
    Rng rng(seed);
    for (std::size_t n = 0; n < observed.nodes(); ++n)
        for (std::size_t t = 0; t < observed.steps(); ++t) {
            const bool hit = rng.uniform() < ratio;
            if (observed(n, t) && !eval_mask(n, t)) {
                eligible = true;
                out.set(n, t, hit);
            }
        }
    if (!eligible)
        throw std::invalid_argument("no eligible entries for the training mask (all observed entries are held out)");
    return out;
}

// ---- optimizer ----------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const ModelParams& like, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), first_(zeros_like(like)), second_(zeros_like(like)) {}

void AdamOptimizer::step(ModelParams& params, const ModelParams& grads) {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));

    std::vector<Parameter*> p_list, m_list, v_list;
    std::vector<const Parameter*> g_list;
    params.for_each([&](Parameter& p) { p_list.push_back(&p); });
    first_.for_each([&](Parameter& p) { m_list.push_back(&p); });
    second_.for_each([&](Parameter& p) { v_list.push_back(&p); });
    grads.for_each([&](const Parameter& p) { g_list.push_back(&p); });

    for (std::size_t i = 0; i < p_list.size(); ++i) {
        Parameter& p = *p_list[i];
        if (p.frozen)
            continue;
        auto m = m_list[i]->value.array();
        auto v = v_list[i]->value.array();
        const auto g = g_list[i]->value.array();
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.square();
        p.value.array() -= lr_ * (m / c1) / ((v / c2).sqrt() + eps_);
    }
}

// ---- fit ------------------------------------------------------------------------

FitResult fit(ModelParams model, const TrainingData& data, const AdjacencyMatrix& a, const TrainConfig& cfg,
              const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    data.train.validate();
    data.val.validate();
    if (!data.train_hidden.same_shape(data.train.observed) || !data.val_hidden.same_shape(data.val.observed))
        throw std::invalid_argument("evaluation masks do not match the train/val segments");
    if (data.val_hidden.count() == 0)
        throw std::invalid_argument("validation segment has no evaluation-mask entries to score");
    if (cfg.window > data.train.steps())
        throw ConfigError("window (" + std::to_string(cfg.window) + ") exceeds the training segment (" +
                          std::to_string(data.train.steps()) + " steps)");

    FitResult result;
    result.model = model;
    AdamOptimizer optimizer(model, cfg.learning_rate);
    ModelParams grads = zeros_like(model);
    const auto windows = make_windows(data.train.steps(), cfg.window);
    const TimeSeriesTensor& train = data.train;
    const Tensor3 target_full = train.values;

    double best_mae = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::uint64_t epoch_seed = derive_seed(cfg.seed, epoch);
        const BoolGrid loss_mask = make_training_mask(train.observed, data.train_hidden, cfg.train_mask_ratio, epoch_seed);
        const BoolGrid visible = and_not(and_not(train.observed, data.train_hidden), loss_mask);

        std::vector<std::size_t> order(windows.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(epoch_seed, 1));
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

        double loss_sum = 0.0;
        std::size_t loss_windows = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_windows) {
            const std::size_t batch_end = std::min(order.size(), b + cfg.batch_windows);
            std::vector<std::size_t> batch;
            for (std::size_t i = b; i < batch_end; ++i) {
                const Window w = windows[order[i]];
                if (loss_mask.slice_steps(w.begin, w.end).count() > 0)
                    batch.push_back(order[i]);
            }
            if (batch.empty())
                continue;
            grads.for_each([](Parameter& p) { p.value.setZero(); });
            for (std::size_t wi : batch) {
                const Window w = windows[wi];
                const TimeSeriesTensor input = window_view(train, visible, w);
                const BoolGrid targets = loss_mask.slice_steps(w.begin, w.end);
                Tensor3 target(train.nodes(), w.end - w.begin, train.channels());
                for (std::size_t n = 0; n < train.nodes(); ++n)
                    target.node(n) = target_full.node(n).middleRows(static_cast<Eigen::Index>(w.begin),
                                                                    static_cast<Eigen::Index>(w.end - w.begin));
                ForwardOptions opts{Mode::Train, derive_seed(epoch_seed, 2 + wi), cfg.dropedge_p};
                ModelCache cache;
                const Tensor3 pred = model_forward(input, a, model, opts, &cache);
                const double loss = masked_loss(pred, target, targets, cfg.loss);
                if (!std::isfinite(loss))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", optimizer step " +
                                        std::to_string(optimizer.steps_taken() + 1) + " (window starting at step " +
                                        std::to_string(w.begin) + ")");
                Tensor3 g = masked_loss_gradient(pred, target, targets, cfg.loss);
                g.data() /= static_cast<double>(batch.size());
                model_backward(cache, g, model, grads);
                loss_sum += loss;
                ++loss_windows;
            }
            optimizer.step(model, grads);
        }

        const MetricsReport val = validation_metrics(model, data, a, cfg.window);
        if (!std::isfinite(val.mae))
            throw TrainingError("non-finite validation error at epoch " + std::to_string(epoch));
        EpochRecord rec{epoch, loss_windows ? loss_sum / static_cast<double>(loss_windows) : 0.0, val.mae, val.mse};
        result.history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);

        if (val.mae < best_mae) {
            best_mae = val.mae;
            result.model = model;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    result.optimizer_steps = optimizer.steps_taken();
    return result;
}

// ---- inference ------------------------------------------------------------------

Tensor3 predict(const ModelParams& model, const TimeSeriesTensor& normalized, const AdjacencyMatrix& a,
                std::size_t window) {
    if (window == 0)
        throw std::invalid_argument("window must be >= 1");
    Tensor3 out(normalized.nodes(), normalized.steps(), model.config.out_channels);
    for (const Window w : make_windows(normalized.steps(), window)) {
        const Tensor3 pred = model_forward(slice_steps(normalized, w.begin, w.end), a, model);
        for (std::size_t n = 0; n < out.nodes(); ++n)
            out.node(n).middleRows(static_cast<Eigen::Index>(w.begin), static_cast<Eigen::Index>(w.end - w.begin)) =
                pred.node(n);
    }
    return out;
}

TimeSeriesTensor impute(const ModelParams& model, const TimeSeriesTensor& data, const AdjacencyMatrix& a,
                        const NormStats& stats, std::size_t window) {
    data.validate();
    if (model.config.out_channels != data.channels())
        throw std::invalid_argument("model outputs " + std::to_string(model.config.out_channels) +
                                    " channels, data has " + std::to_string(data.channels()));
    TimeSeriesTensor out = data;
    if (data.observed.count() == data.nodes() * data.steps())
        return out;
    const Tensor3 pred = predict(model, normalize(data, stats), a, window);
    for (std::size_t n = 0; n < data.nodes(); ++n)
        for (std::size_t t = 0; t < data.steps(); ++t) {
            if (data.observed(n, t))
                continue;
            for (std::size_t c = 0; c < data.channels(); ++c)
                out.values(n, t, c) = pred(n, t, c) * stats.std[c] + stats.mean[c];
            out.observed.set(n, t, true);
        }
    return out;
}

void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out) {
    out << "epoch,train_loss,val_mae,val_mse\n";
    char buf[128];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.val_mae, r.val_mse);
        out << buf;
    }
}

// ---- configuration file --------------------------------------------------------------

KeyValues parse_key_values(std::istream& in, const std::string& source) {
    KeyValues out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

KeyValues load_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    return parse_key_values(in, path.string());
}

void apply_key_values(const KeyValues& kv, TrainConfig& train, ModelConfig& model) {
    for (const auto& [key, value] : kv) {
        if (key == "learning_rate")
            train.learning_rate = parse_number<double>(key, value);
        else if (key == "max_epochs")
            train.max_epochs = parse_number<std::size_t>(key, value);
        else if (key == "window")
            train.window = parse_number<std::size_t>(key, value);
        else if (key == "dropedge_p")
            train.dropedge_p = parse_number<double>(key, value);
        else if (key == "train_mask_ratio")
            train.train_mask_ratio = parse_number<double>(key, value);
        else if (key == "patience")
            train.patience = parse_number<std::size_t>(key, value);
        else if (key == "seed")
            train.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "loss")
            train.loss = parse_loss_kind(value);
        else if (key == "batch_windows")
            train.batch_windows = parse_number<std::size_t>(key, value);
        else if (key == "layers")
            model.layers = parse_number<std::size_t>(key, value);
        else if (key == "d_model")
            model.d_model = parse_number<std::size_t>(key, value);
        else if (key == "n_heads")
            model.n_heads = parse_number<std::size_t>(key, value);
        else if (key == "gat_heads")
            model.gat_heads = parse_number<std::size_t>(key, value);
        else if (key == "d_head")
            model.d_head = parse_number<std::size_t>(key, value);
        else if (key == "kernel_width")
            model.kernel_width = parse_number<std::size_t>(key, value);
        else if (key == "leaky_slope")
            model.leaky_slope = parse_number<double>(key, value);
        else
            throw ConfigError("unknown config key '" + key + "'");
    }
}

} // namespace gatgpt
