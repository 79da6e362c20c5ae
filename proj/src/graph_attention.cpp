#include "gatgpt/graph_attention.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gatgpt {

namespace {

double leaky_relu(double v, double slope) { return v > 0.0 ? v : slope * v; }
double elu(double v) { return v > 0.0 ? v : std::expm1(v); }

// Rows n*steps + t of a [N*T, w] matrix, as an [N, w] view.
Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> rows_at(const Matrix& m, std::size_t nodes, std::size_t steps,
                                                          std::size_t t) {
    return {m.data() + t * static_cast<std::size_t>(m.cols()), static_cast<Eigen::Index>(nodes), m.cols(),
            Eigen::OuterStride<>(static_cast<Eigen::Index>(steps) * m.cols())};
}
Eigen::Map<Matrix, 0, Eigen::OuterStride<>> rows_at(Matrix& m, std::size_t nodes, std::size_t steps, std::size_t t) {
    return {m.data() + t * static_cast<std::size_t>(m.cols()), static_cast<Eigen::Index>(nodes), m.cols(),
            Eigen::OuterStride<>(static_cast<Eigen::Index>(steps) * m.cols())};
}

struct AttentionVectors {
    RowVector self;  // applied to H_i
    RowVector other; // applied to H_j
};

AttentionVectors split_attention(const GatHead& head) {
    const auto d = static_cast<Eigen::Index>(head.weight.shape[1]);
    return {head.attention.value.row(0).head(d), head.attention.value.row(0).tail(d)};
}

// Masked softmax attention of one head on projected features h [N, d_head].
// Writes alpha [N, N] and the pre-activation mix z = alpha * h.
template <class H>
void attend(const H& h, const AdjacencyMatrix& a, const AttentionVectors& av, double slope, Matrix& alpha,
            Matrix& z) {
    const Eigen::Index n = h.rows();
    const Eigen::VectorXd s = h * av.self.transpose();
    const Eigen::VectorXd r = h * av.other.transpose();
    alpha.setZero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double peak = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
            if (a.weights(i, j) > 0.0) {
                const double e = leaky_relu(s(i) + r(j), slope);
                alpha(i, j) = e;
                peak = std::max(peak, e);
            }
        double total = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (a.weights(i, j) > 0.0) {
                alpha(i, j) = std::exp(alpha(i, j) - peak);
                total += alpha(i, j);
            }
        alpha.row(i) /= total;
    }
    z.noalias() = alpha * h;
}

void check_head(const GatHead& head, std::size_t d_in) {
    if (head.weight.shape.size() != 2 || head.weight.shape[0] != d_in)
        throw std::invalid_argument("graph attention weight " + head.weight.name + " expects d_in=" +
                                    std::to_string(head.weight.shape.empty() ? 0 : head.weight.shape[0]) +
                                    ", input has " + std::to_string(d_in));
}

} // namespace

GatParams make_gat(std::size_t d_in, std::size_t d_head, std::size_t num_heads, double leaky_slope) {
    if (d_in == 0 || d_head == 0 || num_heads == 0)
        throw std::invalid_argument("graph attention dimensions must be positive");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
        throw std::invalid_argument("LeakyReLU slope must lie in (0, 1)");
    GatParams p;
    p.leaky_slope = leaky_slope;
    for (std::size_t k = 0; k < num_heads; ++k) {
        const std::string prefix = "gat.h" + std::to_string(k) + ".";
        p.heads.push_back({Parameter(prefix + "W", {d_in, d_head}, false), Parameter(prefix + "a", {2 * d_head}, false)});
    }
    return p;
}

void init_gat(GatParams& p, Rng& rng) {
    const double w_bound = std::sqrt(6.0 / static_cast<double>(p.d_in() + p.d_head()));
    const double a_bound = std::sqrt(6.0 / static_cast<double>(2 * p.d_head() + 1));
    for (auto& head : p.heads) {
        for (Eigen::Index i = 0; i < head.weight.value.size(); ++i)
            head.weight.value.data()[i] = rng.uniform(-w_bound, w_bound);
        for (Eigen::Index i = 0; i < head.attention.value.size(); ++i)
            head.attention.value.data()[i] = rng.uniform(-a_bound, a_bound);
    }
}

AdjacencyMatrix drop_edge(const AdjacencyMatrix& a, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("DropEdge probability must lie in [0, 1]");
    AdjacencyMatrix out = a;
    if (p == 0.0)
        return out;
    Rng rng(seed);
    for (Eigen::Index i = 0; i < a.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < a.weights.cols(); ++j)
            if (i != j && a.weights(i, j) > 0.0 && rng.uniform() < p)
                out.weights(i, j) = 0.0;
    return out;
}

void require_neighbours(const AdjacencyMatrix& a) {
    for (Eigen::Index i = 0; i < a.weights.rows(); ++i)
        if (!(a.weights.row(i).array() > 0.0).any())
            throw std::invalid_argument("node " + std::to_string(i) +
                                        " has no neighbours; graph attention needs self loops or an edge");
}

Matrix gat_head(const Matrix& h_in, const AdjacencyMatrix& a, const GatHead& head, double leaky_slope,
                Matrix* attention) {
    if (static_cast<std::size_t>(h_in.rows()) != a.size())
        throw std::invalid_argument("graph attention input has " + std::to_string(h_in.rows()) +
                                    " nodes, adjacency has " + std::to_string(a.size()));
    check_head(head, static_cast<std::size_t>(h_in.cols()));
    require_neighbours(a);
    const Matrix h = h_in * head.weight.value;
    Matrix alpha, z;
    attend(h, a, split_attention(head), leaky_slope, alpha, z);
    if (attention)
        *attention = alpha;
    return z.unaryExpr([](double v) { return elu(v); });
}

Matrix gat_multi_head(const Matrix& h_in, const AdjacencyMatrix& a, const GatParams& p,
                      std::vector<Matrix>* attention) {
    const auto dh = static_cast<Eigen::Index>(p.d_head());
    Matrix out(h_in.rows(), static_cast<Eigen::Index>(p.d_out()));
    if (attention)
        attention->assign(p.heads.size(), Matrix());
    for (std::size_t k = 0; k < p.heads.size(); ++k)
        out.middleCols(static_cast<Eigen::Index>(k) * dh, dh) =
            gat_head(h_in, a, p.heads[k], p.leaky_slope, attention ? &(*attention)[k] : nullptr);
    return out;
}

Tensor3 gat_over_time(const Tensor3& x, const AdjacencyMatrix& a, const GatParams& p, GatCache* cache) {
    if (x.nodes() != a.size())
        throw std::invalid_argument("graph attention input has " + std::to_string(x.nodes()) +
                                    " nodes, adjacency has " + std::to_string(a.size()));
    for (const auto& head : p.heads)
        check_head(head, x.width());
    require_neighbours(a);

    const std::size_t nodes = x.nodes();
    const std::size_t steps = x.steps();
    const auto dh = static_cast<Eigen::Index>(p.d_head());
    Tensor3 out(nodes, steps, p.d_out());
    if (cache) {
        cache->input = x;
        cache->adjacency = a;
        cache->projected.assign(p.heads.size(), Matrix());
        cache->attention.assign(p.heads.size(), std::vector<Matrix>(steps));
        cache->mixed.assign(p.heads.size(), std::vector<Matrix>(steps));
    }
    Matrix alpha, z;
    for (std::size_t k = 0; k < p.heads.size(); ++k) {
        const Matrix h = x.data() * p.heads[k].weight.value;
        const auto av = split_attention(p.heads[k]);
        for (std::size_t t = 0; t < steps; ++t) {
            attend(rows_at(h, nodes, steps, t), a, av, p.leaky_slope, alpha, z);
            out.step(t).middleCols(static_cast<Eigen::Index>(k) * dh, dh) =
                z.unaryExpr([](double v) { return elu(v); });
            if (cache) {
                cache->attention[k][t] = alpha;
                cache->mixed[k][t] = z;
            }
        }
        if (cache)
            cache->projected[k] = h;
    }
    return out;
}

Tensor3 gat_over_time_backward(const GatCache& cache, const Tensor3& grad_out, const GatParams& p, GatParams& grads) {
    const Tensor3& x = cache.input;
    const std::size_t nodes = x.nodes();
    const std::size_t steps = x.steps();
    const auto dh = static_cast<Eigen::Index>(p.d_head());
    const double slope = p.leaky_slope;
    const AdjacencyMatrix& a = cache.adjacency;
    Tensor3 grad_in(nodes, steps, x.width());

    for (std::size_t k = 0; k < p.heads.size(); ++k) {
        const auto av = split_attention(p.heads[k]);
        const Matrix& h_all = cache.projected[k];
        Matrix grad_h = Matrix::Zero(h_all.rows(), h_all.cols());
        RowVector grad_self = RowVector::Zero(dh);
        RowVector grad_other = RowVector::Zero(dh);

        for (std::size_t t = 0; t < steps; ++t) {
            const auto h = rows_at(h_all, nodes, steps, t);
            const Matrix& alpha = cache.attention[k][t];
            const Matrix& z = cache.mixed[k][t];

            // Through ELU: d/dz = 1 for z > 0, exp(z) otherwise.
            Matrix dz = grad_out.step(t).middleCols(static_cast<Eigen::Index>(k) * dh, dh);
            for (Eigen::Index i = 0; i < dz.size(); ++i)
                if (z.data()[i] <= 0.0)
                    dz.data()[i] *= std::exp(z.data()[i]);

            Matrix dh_t = alpha.transpose() * dz;
            const Matrix dalpha = dz * h.transpose();

            // Softmax and LeakyReLU, restricted to neighbourhoods.
            const Eigen::VectorXd s = h * av.self.transpose();
            const Eigen::VectorXd r = h * av.other.transpose();
            Eigen::VectorXd ds = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes));
            Eigen::VectorXd dr = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes));
            for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(nodes); ++i) {
                const double inner = alpha.row(i).dot(dalpha.row(i));
                for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(nodes); ++j) {
                    if (!(a.weights(i, j) > 0.0))
                        continue;
                    const double de = alpha(i, j) * (dalpha(i, j) - inner);
                    const double du = s(i) + r(j) > 0.0 ? de : slope * de;
                    ds(i) += du;
                    dr(j) += du;
                }
            }
            dh_t.noalias() += ds * av.self + dr * av.other;
            grad_self.noalias() += ds.transpose() * h;
            grad_other.noalias() += dr.transpose() * h;
            rows_at(grad_h, nodes, steps, t) = dh_t;
        }

        auto& g = grads.heads[k];
        g.weight.value.noalias() += x.data().transpose() * grad_h;
        g.attention.value.row(0).head(dh) += grad_self;
        g.attention.value.row(0).tail(dh) += grad_other;
        grad_in.data().noalias() += grad_h * p.heads[k].weight.value.transpose();
    }
    return grad_in;
}

} // namespace gatgpt
