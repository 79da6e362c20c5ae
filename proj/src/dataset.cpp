#include "gatgpt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace gatgpt {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ','))
        out.push_back(field);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line))
        return false;
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    return true;
}

std::string where(const std::string& source, std::size_t line_no) {
    return source + ":" + std::to_string(line_no) + ": ";
}

std::optional<double> parse_double(const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        return std::nullopt;
    return v;
}

bool is_missing_cell(const std::string& cell) {
    if (cell.empty())
        return true;
    std::string lower = cell;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower == "nan";
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    return in;
}

int month_of(std::int64_t unix_seconds) {
    using namespace std::chrono;
    const sys_days day{floor<days>(sys_seconds{seconds{unix_seconds}})};
    return static_cast<int>(static_cast<unsigned>(year_month_day{day}.month()));
}

} // namespace

// ---- types ------------------------------------------------------------------

void TimeSeriesTensor::validate() const {
    if (nodes() == 0 || steps() == 0 || channels() == 0)
        throw DataError("time series must have N, T, C >= 1, got " + values.shape_string());
    if (observed.nodes() != nodes() || observed.steps() != steps())
        throw DataError("observed mask shape does not match values " + values.shape_string());
    if (node_ids.size() != nodes())
        throw DataError("expected " + std::to_string(nodes()) + " node ids, got " + std::to_string(node_ids.size()));
    if (step_seconds <= 0)
        throw DataError("step_seconds must be positive");
}

std::size_t AdjacencyMatrix::off_diagonal_edges() const {
    std::size_t count = 0;
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = 0; j < size(); ++j)
            if (i != j && has_edge(i, j))
                ++count;
    return count;
}

std::string to_string(MaskPattern pattern) {
    return pattern == MaskPattern::Point ? "point" : "block";
}

MaskPattern parse_mask_pattern(const std::string& text) {
    if (text == "point")
        return MaskPattern::Point;
    if (text == "block")
        return MaskPattern::Block;
    throw DataError("unknown mask pattern '" + text + "' (expected point or block)");
}

void SplitSpec::validate() const {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(test_frac > 0.0))
        throw DataError("split fractions must be positive");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw DataError("split fractions must sum to 1");
}

BlockMaskParams BlockMaskParams::from_hours(std::int64_t step_seconds, double min_hours, double max_hours,
                                            double point_ratio, double block_start_prob) {
    BlockMaskParams p;
    p.point_ratio = point_ratio;
    p.block_start_prob = block_start_prob;
    p.min_len_steps = hours_to_steps(min_hours, step_seconds);
    p.max_len_steps = hours_to_steps(max_hours, step_seconds);
    return p;
}

// ---- timestamps -------------------------------------------------------------

std::optional<std::int64_t> parse_iso8601(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    int consumed = 0;
    const std::string t = trim(text);
    if (std::sscanf(t.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed) < 6)
        return std::nullopt;
    if (sep != 'T' && sep != ' ')
        return std::nullopt;
    std::string rest = t.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest[0] == ':') {
        int n = 0;
        if (std::sscanf(rest.c_str(), ":%2d%n", &s, &n) < 1)
            return std::nullopt;
        rest = rest.substr(static_cast<std::size_t>(n));
    }
    if (!rest.empty() && rest != "Z")
        return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59)
        return std::nullopt;
    return sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600LL + mi * 60LL + s;
}

std::string format_iso8601(std::int64_t unix_seconds) {
    using namespace std::chrono;
    const sys_seconds tp{seconds{unix_seconds}};
    const sys_days day = floor<days>(tp);
    const year_month_day ymd{day};
    const hh_mm_ss hms{tp - day};
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long long>(hms.seconds().count()));
    return buf;
}

// ---- data CSV ---------------------------------------------------------------

TimeSeriesTensor parse_csv(std::istream& in, std::int64_t step_seconds, const std::string& source) {
    std::string line;
    std::size_t line_no = 1;
    if (!read_line(in, line))
        throw DataError(where(source, line_no) + "empty file, expected header 'timestamp,<node>,...'");
    auto header = split_fields(line);
    if (header.size() < 2 || trim(header[0]) != "timestamp")
        throw DataError(where(source, line_no) + "malformed header, expected 'timestamp,<node>,...'");
    std::vector<std::string> ids;
    for (std::size_t i = 1; i < header.size(); ++i) {
        auto id = trim(header[i]);
        if (id.empty())
            throw DataError(where(source, line_no) + "malformed header, empty node name in column " +
                            std::to_string(i + 1));
        if (std::find(ids.begin(), ids.end(), id) != ids.end())
            throw DataError(where(source, line_no) + "malformed header, duplicate node '" + id + "'");
        ids.push_back(std::move(id));
    }
    const std::size_t nodes = ids.size();

    std::vector<std::int64_t> stamps;
    std::vector<double> cells;      // row-major [T, N]
    std::vector<std::uint8_t> seen; // row-major [T, N]
    while (read_line(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        auto fields = split_fields(line);
        if (fields.size() != nodes + 1)
            throw DataError(where(source, line_no) + "expected " + std::to_string(nodes + 1) + " columns, got " +
                            std::to_string(fields.size()));
        auto stamp = parse_iso8601(fields[0]);
        if (!stamp)
            throw DataError(where(source, line_no) + "invalid timestamp '" + fields[0] + "'");
        if (!stamps.empty()) {
            if (*stamp <= stamps.back())
                throw DataError(where(source, line_no) + "non-monotone timestamp " + fields[0]);
            const std::int64_t gap = *stamp - stamps.back();
            if (step_seconds <= 0)
                step_seconds = gap;
            else if (gap != step_seconds)
                throw DataError(where(source, line_no) + "gap in timestamps: expected step of " +
                                std::to_string(step_seconds) + "s, got " + std::to_string(gap) + "s");
        }
        stamps.push_back(*stamp);
        for (std::size_t n = 0; n < nodes; ++n) {
            const auto cell = trim(fields[n + 1]);
            if (is_missing_cell(cell)) {
                cells.push_back(0.0);
                seen.push_back(0);
                continue;
            }
            auto v = parse_double(cell);
            if (!v)
                throw DataError(where(source, line_no) + "invalid number '" + cell + "' in column " + ids[n]);
            cells.push_back(*v);
            seen.push_back(1);
        }
    }
    if (stamps.empty())
        throw DataError(where(source, line_no) + "no data rows");
    if (step_seconds <= 0)
        throw DataError(where(source, line_no) + "cannot infer step from a single row; pass step_seconds");

    const std::size_t steps = stamps.size();
    TimeSeriesTensor t;
    t.values = Tensor3(nodes, steps, 1);
    t.observed = BoolGrid(nodes, steps);
    t.node_ids = std::move(ids);
    t.step_seconds = step_seconds;
    t.start_time = stamps.front();
    for (std::size_t s = 0; s < steps; ++s)
        for (std::size_t n = 0; n < nodes; ++n) {
            t.values(n, s, 0) = cells[s * nodes + n];
            t.observed.set(n, s, seen[s * nodes + n] != 0);
        }
    return t;
}

TimeSeriesTensor load_csv(const std::filesystem::path& path, std::int64_t step_seconds) {
    auto in = open_for_read(path);
    return parse_csv(in, step_seconds, path.string());
}

void write_csv(const TimeSeriesTensor& t, std::ostream& out) {
    out << "timestamp";
    for (const auto& id : t.node_ids)
        out << ',' << id;
    out << '\n';
    char buf[64];
    for (std::size_t s = 0; s < t.steps(); ++s) {
        out << format_iso8601(t.start_time + static_cast<std::int64_t>(s) * t.step_seconds);
        for (std::size_t n = 0; n < t.nodes(); ++n) {
            out << ',';
            if (t.observed(n, s)) {
                std::snprintf(buf, sizeof buf, "%.17g", t.values(n, s, 0));
                out << buf;
            }
        }
        out << '\n';
    }
}

void write_csv(const TimeSeriesTensor& t, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_csv(t, out);
}

// ---- distances ----------------------------------------------------------------

std::vector<DistanceEntry> parse_distances(std::istream& in, const std::vector<std::string>& node_ids,
                                           const std::string& source) {
    std::string line;
    std::size_t line_no = 1;
    if (!read_line(in, line))
        throw DataError(where(source, line_no) + "empty file, expected header 'from,to,distance'");
    auto header = split_fields(line);
    if (header.size() != 3 || trim(header[0]) != "from" || trim(header[1]) != "to" || trim(header[2]) != "distance")
        throw DataError(where(source, line_no) + "malformed header, expected 'from,to,distance'");

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < node_ids.size(); ++i)
        index.emplace(node_ids[i], i);
    const auto resolve = [&](const std::string& token) -> std::size_t {
        if (auto it = index.find(token); it != index.end())
            return it->second;
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size() || v >= node_ids.size())
            throw DataError(where(source, line_no) + "unknown node '" + token + "'");
        return v;
    };

    std::vector<DistanceEntry> out;
    while (read_line(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        auto fields = split_fields(line);
        if (fields.size() != 3)
            throw DataError(where(source, line_no) + "expected 3 columns, got " + std::to_string(fields.size()));
        DistanceEntry e;
        e.from = resolve(trim(fields[0]));
        e.to = resolve(trim(fields[1]));
        auto d = parse_double(trim(fields[2]));
        if (!d || !std::isfinite(*d) || *d < 0.0)
            throw DataError(where(source, line_no) + "distance must be a nonnegative number, got '" + fields[2] + "'");
        e.distance = *d;
        out.push_back(e);
    }
    return out;
}

std::vector<DistanceEntry> load_distances(const std::filesystem::path& path,
                                          const std::vector<std::string>& node_ids) {
    auto in = open_for_read(path);
    return parse_distances(in, node_ids, path.string());
}

// ---- mask CSV -----------------------------------------------------------------

void write_mask_csv(const BoolGrid& mask, const TimeSeriesTensor& like, std::ostream& out) {
    if (mask.nodes() != like.nodes() || mask.steps() != like.steps())
        throw DataError("mask shape does not match data");
    out << "timestamp";
    for (const auto& id : like.node_ids)
        out << ',' << id;
    out << '\n';
    for (std::size_t s = 0; s < mask.steps(); ++s) {
        out << format_iso8601(like.start_time + static_cast<std::int64_t>(s) * like.step_seconds);
        for (std::size_t n = 0; n < mask.nodes(); ++n)
            out << ',' << (mask(n, s) ? '1' : '0');
        out << '\n';
    }
}

void write_mask_csv(const BoolGrid& mask, const TimeSeriesTensor& like, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_mask_csv(mask, like, out);
}

BoolGrid parse_mask_csv(std::istream& in, const TimeSeriesTensor& like, const std::string& source) {
    std::string line;
    std::size_t line_no = 1;
    if (!read_line(in, line))
        throw DataError(where(source, line_no) + "empty mask file");
    auto header = split_fields(line);
    if (header.size() != like.nodes() + 1 || trim(header[0]) != "timestamp")
        throw DataError(where(source, line_no) + "mask header does not match data (" +
                        std::to_string(like.nodes()) + " node columns expected)");
    for (std::size_t n = 0; n < like.nodes(); ++n)
        if (trim(header[n + 1]) != like.node_ids[n])
            throw DataError(where(source, line_no) + "mask column '" + header[n + 1] + "' does not match node '" +
                            like.node_ids[n] + "'");
    BoolGrid mask(like.nodes(), like.steps());
    std::size_t s = 0;
    while (read_line(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        if (s >= like.steps())
            throw DataError(where(source, line_no) + "mask has more rows than data (" +
                            std::to_string(like.steps()) + ")");
        auto fields = split_fields(line);
        if (fields.size() != like.nodes() + 1)
            throw DataError(where(source, line_no) + "expected " + std::to_string(like.nodes() + 1) +
                            " columns, got " + std::to_string(fields.size()));
        for (std::size_t n = 0; n < like.nodes(); ++n) {
            const auto cell = trim(fields[n + 1]);
            if (cell != "0" && cell != "1")
                throw DataError(where(source, line_no) + "mask cells must be 0 or 1, got '" + cell + "'");
            mask.set(n, s, cell == "1");
        }
        ++s;
    }
    if (s != like.steps())
        throw DataError(where(source, line_no) + "mask has " + std::to_string(s) + " rows, data has " +
                        std::to_string(like.steps()));
    return mask;
}

BoolGrid load_mask_csv(const std::filesystem::path& path, const TimeSeriesTensor& like) {
    auto in = open_for_read(path);
    return parse_mask_csv(in, like, path.string());
}

void write_adjacency_csv(const AdjacencyMatrix& a, const std::vector<std::string>& node_ids, std::ostream& out) {
    out << "node";
    for (const auto& id : node_ids)
        out << ',' << id;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < a.size(); ++i) {
        out << node_ids[i];
        for (std::size_t j = 0; j < a.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", a.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            out << ',' << buf;
        }
        out << '\n';
    }
}

void write_adjacency_csv(const AdjacencyMatrix& a, const std::vector<std::string>& node_ids,
                         const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_adjacency_csv(a, node_ids, out);
}

AdjacencyMatrix parse_adjacency_csv(std::istream& in, const std::vector<std::string>& node_ids,
                                    const std::string& source) {
    const std::size_t n = node_ids.size();
    std::string line;
    std::size_t line_no = 1;
    if (!read_line(in, line))
        throw DataError(where(source, line_no) + "empty adjacency file");
    auto header = split_fields(line);
    if (header.size() != n + 1 || header[0] != "node")
        throw DataError(where(source, line_no) + "expected header node," + std::to_string(n) + " node ids");
    for (std::size_t j = 0; j < n; ++j)
        if (header[j + 1] != node_ids[j])
            throw DataError(where(source, line_no) + "column " + std::to_string(j + 1) + " is '" + header[j + 1] +
                            "', expected '" + node_ids[j] + "'");
    AdjacencyMatrix a;
    a.weights = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::size_t i = 0;
    while (read_line(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto fields = split_fields(line);
        if (i >= n)
            throw DataError(where(source, line_no) + "more rows than nodes");
        if (fields.size() != n + 1 || fields[0] != node_ids[i])
            throw DataError(where(source, line_no) + "expected row for node '" + node_ids[i] + "' with " +
                            std::to_string(n) + " weights");
        for (std::size_t j = 0; j < n; ++j) {
            const auto v = parse_double(fields[j + 1]);
            if (!v || !(*v >= 0.0) || !std::isfinite(*v))
                throw DataError(where(source, line_no) + "invalid weight '" + fields[j + 1] + "'");
            a.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
        }
        ++i;
    }
    if (i != n)
        throw DataError(where(source, line_no) + "adjacency has " + std::to_string(i) + " rows, expected " +
                        std::to_string(n));
    a.self_loops = (a.weights.diagonal().array() > 0.0).all();
    return a;
}

AdjacencyMatrix load_adjacency_csv(const std::filesystem::path& path, const std::vector<std::string>& node_ids) {
    auto in = open_for_read(path);
    return parse_adjacency_csv(in, node_ids, path.string());
}

// ---- graph ------------------------------------------------------------------

AdjacencyMatrix build_adjacency(std::span<const DistanceEntry> distances, std::size_t nodes,
                                std::optional<double> sigma, double threshold, bool self_loops) {
    if (nodes == 0)
        throw DataError("adjacency needs at least one node");
    if (!(threshold >= 0.0) || threshold >= 1.0)
        throw DataError("threshold must lie in [0, 1), got " + std::to_string(threshold));
    for (const auto& e : distances) {
        if (e.from >= nodes || e.to >= nodes)
            throw DataError("distance entry (" + std::to_string(e.from) + ", " + std::to_string(e.to) +
                            ") out of range for " + std::to_string(nodes) + " nodes");
        if (!(e.distance >= 0.0))
            throw DataError("distances must be nonnegative");
    }
    double scale = 0.0;
    if (sigma) {
        scale = *sigma;
    } else if (!distances.empty()) {
        double mean = 0.0;
        for (const auto& e : distances)
            mean += e.distance;
        mean /= static_cast<double>(distances.size());
        double var = 0.0;
        for (const auto& e : distances)
            var += (e.distance - mean) * (e.distance - mean);
        scale = std::sqrt(var / static_cast<double>(distances.size()));
    }
    if (!(scale > 0.0))
        throw DataError(sigma ? "sigma must be positive" : "automatic sigma is zero (all distances equal or none given)");

    const double inf = std::numeric_limits<double>::infinity();
    Matrix dist = Matrix::Constant(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes), inf);
    for (const auto& e : distances) {
        const auto i = static_cast<Eigen::Index>(e.from);
        const auto j = static_cast<Eigen::Index>(e.to);
        dist(i, j) = std::min(dist(i, j), e.distance);
        dist(j, i) = std::min(dist(j, i), e.distance);
    }

    AdjacencyMatrix a;
    a.self_loops = self_loops;
    a.weights = Matrix::Zero(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes));
    for (Eigen::Index i = 0; i < a.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < a.weights.cols(); ++j) {
            if (i == j && self_loops) {
                a.weights(i, j) = 1.0;
                continue;
            }
            if (dist(i, j) == inf)
                continue;
            const double w = std::exp(-(dist(i, j) * dist(i, j)) / (scale * scale));
            a.weights(i, j) = w > threshold ? w : 0.0;
        }
    return a;
}

// ---- masks ------------------------------------------------------------------

std::size_t hours_to_steps(double hours, std::int64_t step_seconds) {
    if (step_seconds <= 0)
        throw DataError("step_seconds must be positive");
    const double steps = std::round(hours * 3600.0 / static_cast<double>(step_seconds));
    return static_cast<std::size_t>(std::max(1.0, steps));
}

EvalMask gen_point_mask(const TimeSeriesTensor& t, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw DataError("point mask ratio must lie in [0, 1]");
    EvalMask m{BoolGrid(t.nodes(), t.steps()), MaskPattern::Point, seed};
    Rng rng(seed);
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s) {
            const bool hit = rng.uniform() < ratio;
            if (hit && t.observed(n, s))
                m.hidden.set(n, s, true);
        }
    return m;
}

EvalMask gen_block_mask(const TimeSeriesTensor& t, const BlockMaskParams& p, std::uint64_t seed) {
    if (!(p.point_ratio >= 0.0 && p.point_ratio <= 1.0) || !(p.block_start_prob >= 0.0 && p.block_start_prob <= 1.0))
        throw DataError("block mask probabilities must lie in [0, 1]");
    if (p.min_len_steps == 0 || p.min_len_steps > p.max_len_steps || p.max_len_steps > t.steps())
        throw DataError("block lengths must satisfy 0 < min (" + std::to_string(p.min_len_steps) + ") <= max (" +
                        std::to_string(p.max_len_steps) + ") <= T (" + std::to_string(t.steps()) + ")");
    EvalMask m = gen_point_mask(t, p.point_ratio, derive_seed(seed, 0));
    m.pattern = MaskPattern::Block;
    m.seed = seed;
    Rng rng(derive_seed(seed, 1));
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s) {
            if (!(rng.uniform() < p.block_start_prob))
                continue;
            const std::size_t len = rng.uniform_int(p.min_len_steps, p.max_len_steps);
            const std::size_t end = std::min(t.steps(), s + len);
            for (std::size_t k = s; k < end; ++k)
                if (t.observed(n, k))
                    m.hidden.set(n, k, true);
        }
    return m;
}

// ---- splits -----------------------------------------------------------------

SplitBounds split_bounds(std::size_t steps, const SplitSpec& spec) {
    spec.validate();
    // Guard floor() against representation error, e.g. 0.7 * 10.
    const auto whole = [&](double frac) {
        return static_cast<std::size_t>(std::floor(frac * static_cast<double>(steps) + 1e-9));
    };
    SplitBounds b;
    b.total = steps;
    const std::size_t train = whole(spec.train_frac);
    const std::size_t val = whole(spec.val_frac);
    if (train == 0)
        throw DataError("training segment would be empty for T=" + std::to_string(steps));
    if (val == 0)
        throw DataError("validation segment would be empty for T=" + std::to_string(steps));
    if (train + val >= steps)
        throw DataError("test segment would be empty for T=" + std::to_string(steps));
    b.train_end = train;
    b.val_end = train + val;
    return b;
}

TimeSeriesTensor slice_steps(const TimeSeriesTensor& t, std::size_t begin, std::size_t end) {
    if (begin >= end || end > t.steps())
        throw DataError("invalid step range [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
    TimeSeriesTensor out;
    out.values = Tensor3(t.nodes(), end - begin, t.channels());
    for (std::size_t n = 0; n < t.nodes(); ++n)
        out.values.node(n) = t.values.node(n).middleRows(static_cast<Eigen::Index>(begin),
                                                         static_cast<Eigen::Index>(end - begin));
    out.observed = t.observed.slice_steps(begin, end);
    out.node_ids = t.node_ids;
    out.step_seconds = t.step_seconds;
    out.start_time = t.start_time + static_cast<std::int64_t>(begin) * t.step_seconds;
    return out;
}

Splits split_chronological(const TimeSeriesTensor& t, const SplitSpec& spec) {
    Splits s;
    s.bounds = split_bounds(t.steps(), spec);
    s.train = slice_steps(t, 0, s.bounds.train_end);
    s.val = slice_steps(t, s.bounds.train_end, s.bounds.val_end);
    s.test = slice_steps(t, s.bounds.val_end, s.bounds.total);
    return s;
}

std::vector<Segment> month_split(const TimeSeriesTensor& t, std::span<const int> test_months,
                                 std::span<const int> val_months, double val_tail_frac) {
    if (!(val_tail_frac > 0.0 && val_tail_frac < 1.0))
        throw DataError("validation tail fraction must lie in (0, 1)");
    const auto contains = [](std::span<const int> months, int m) {
        return std::find(months.begin(), months.end(), m) != months.end();
    };
    std::vector<Segment> labels(t.steps(), Segment::Train);
    std::vector<int> month(t.steps());
    for (std::size_t s = 0; s < t.steps(); ++s) {
        month[s] = month_of(t.start_time + static_cast<std::int64_t>(s) * t.step_seconds);
        if (contains(test_months, month[s]))
            labels[s] = Segment::Test;
    }
    // Validation takes the tail of every contiguous run inside a validation month.
    std::size_t s = 0;
    while (s < t.steps()) {
        if (!contains(val_months, month[s]) || labels[s] == Segment::Test) {
            ++s;
            continue;
        }
        std::size_t end = s;
        while (end < t.steps() && month[end] == month[s])
            ++end;
        const std::size_t len = end - s;
        const auto tail = static_cast<std::size_t>(std::ceil(val_tail_frac * static_cast<double>(len)));
        for (std::size_t k = end - std::min(tail, len); k < end; ++k)
            labels[k] = Segment::Val;
        s = end;
    }
    return labels;
}

// ---- normalization ------------------------------------------------------------

NormStats compute_stats(const TimeSeriesTensor& t) {
    NormStats stats;
    for (std::size_t c = 0; c < t.channels(); ++c) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t n = 0; n < t.nodes(); ++n)
            for (std::size_t s = 0; s < t.steps(); ++s)
                if (t.observed(n, s)) {
                    sum += t.values(n, s, c);
                    ++count;
                }
        if (count == 0)
            throw DataError("channel " + std::to_string(c) + " has no observed entries");
        const double mean = sum / static_cast<double>(count);
        double var = 0.0;
        for (std::size_t n = 0; n < t.nodes(); ++n)
            for (std::size_t s = 0; s < t.steps(); ++s)
                if (t.observed(n, s))
                    var += (t.values(n, s, c) - mean) * (t.values(n, s, c) - mean);
        const double sd = std::sqrt(var / static_cast<double>(count));
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
            throw DataError("channel " + std::to_string(c) + " is constant (zero standard deviation)");
        stats.mean.push_back(mean);
        stats.std.push_back(sd);
    }
    return stats;
}

TimeSeriesTensor normalize(const TimeSeriesTensor& t, const NormStats& stats) {
    if (stats.mean.size() != t.channels() || stats.std.size() != t.channels())
        throw DataError("normalization stats have " + std::to_string(stats.mean.size()) + " channels, data has " +
                        std::to_string(t.channels()));
    TimeSeriesTensor out = t;
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s)
            for (std::size_t c = 0; c < t.channels(); ++c)
                out.values(n, s, c) = t.observed(n, s) ? (t.values(n, s, c) - stats.mean[c]) / stats.std[c] : 0.0;
    return out;
}

TimeSeriesTensor denormalize(const TimeSeriesTensor& t, const NormStats& stats) {
    if (stats.mean.size() != t.channels() || stats.std.size() != t.channels())
        throw DataError("normalization stats have " + std::to_string(stats.mean.size()) + " channels, data has " +
                        std::to_string(t.channels()));
    TimeSeriesTensor out = t;
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s)
            for (std::size_t c = 0; c < t.channels(); ++c)
                out.values(n, s, c) = t.values(n, s, c) * stats.std[c] + stats.mean[c];
    return out;
}

TimeSeriesTensor hide(const TimeSeriesTensor& t, const BoolGrid& hidden) {
    if (hidden.nodes() != t.nodes() || hidden.steps() != t.steps())
        throw DataError("mask shape does not match data");
    TimeSeriesTensor out = t;
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s)
            if (hidden(n, s)) {
                out.observed.set(n, s, false);
                for (std::size_t c = 0; c < t.channels(); ++c)
                    out.values(n, s, c) = 0.0;
            }
    return out;
}

} // namespace gatgpt
