#include "cfdgcn/gnn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cfdgcn::gnn {
namespace {

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_forward_shapes(const NormalizedAdjacency& adj, const Matrix& z, const GcnLayer& layer) {
    if (z.rows() != adj.size()) {
        throw std::invalid_argument("gcn: input has " + std::to_string(z.rows()) +
                                    " rows but graph has " + std::to_string(adj.size()) + " nodes");
    }
    if (z.cols() != layer.in_channels()) {
        throw std::invalid_argument("gcn: input " + shape(z) + " does not match weight " +
                                    shape(layer.weight));
    }
    if (layer.bias.size() != layer.out_channels()) {
        throw std::invalid_argument("gcn: bias length does not match output channels");
    }
}

}  // namespace

GcnLayer GcnLayer::glorot(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    GcnLayer layer = zeros(in, out);
    // Row-major fill so the draw order does not depend on Eigen's storage order.
    for (Eigen::Index i = 0; i < in; ++i) {
        for (Eigen::Index j = 0; j < out; ++j) layer.weight(i, j) = dist(rng);
    }
    return layer;
}

GcnLayer GcnLayer::zeros(Eigen::Index in, Eigen::Index out) {
    return {Matrix::Zero(in, out), RowVector::Zero(out)};
}

NormalizedAdjacency normalized_adjacency(const Graph& graph) {
    const auto n = static_cast<Eigen::Index>(graph.num_nodes);
    Eigen::VectorXd degree = Eigen::VectorXd::Ones(n);
    for (const auto& [a, b] : graph.edges) {
        if (a == b) throw std::invalid_argument("normalized_adjacency: self edge");
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(n) + 2 * graph.edges.size());
    for (Eigen::Index i = 0; i < n; ++i) entries.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (const auto& [a, b] : graph.edges) {
        const double w = inv_sqrt[a] * inv_sqrt[b];
        entries.emplace_back(a, b, w);
        entries.emplace_back(b, a, w);
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(entries.begin(), entries.end());
    return NormalizedAdjacency(std::move(m));
}

Matrix gcn_forward(const NormalizedAdjacency& adj, const Matrix& z, const GcnLayer& layer,
                   bool apply_relu) {
    check_forward_shapes(adj, z, layer);
    Matrix out = adj.matrix() * (z * layer.weight);
    out.rowwise() += layer.bias;
    if (apply_relu) out = out.cwiseMax(0.0);
    return out;
}

GcnGradients gcn_backward(const NormalizedAdjacency& adj, const Matrix& z, const GcnLayer& layer,
                          bool apply_relu, const Matrix& output, const Matrix& output_cotangent) {
    check_forward_shapes(adj, z, layer);
    if (output_cotangent.rows() != z.rows() || output_cotangent.cols() != layer.out_channels() ||
        output.rows() != output_cotangent.rows() || output.cols() != output_cotangent.cols()) {
        throw std::invalid_argument("gcn_backward: cotangent " + shape(output_cotangent) +
                                    " does not match layer output");
    }
    Matrix g = output_cotangent;
    if (apply_relu) g = (output.array() > 0.0).select(g, 0.0);

    // B is symmetric, so B^T G = B G.
    const Matrix bg = adj.matrix() * g;
    GcnGradients out;
    out.d_weight = z.transpose() * bg;
    out.d_input = bg * layer.weight.transpose();
    out.d_bias = g.colwise().sum();
    return out;
}

AdamState AdamState::like(std::span<const Matrix> params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const auto& p : params) {
        s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
        s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
    return s;
}

std::optional<std::vector<Matrix>> adam_deltas(std::span<const Matrix> grads, AdamState& state) {
    if (grads.size() != state.m.size()) {
        throw std::invalid_argument("adam: expected " + std::to_string(state.m.size()) +
                                    " gradient tensors, got " + std::to_string(grads.size()));
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].rows() != state.m[i].rows() || grads[i].cols() != state.m[i].cols()) {
            throw std::invalid_argument("adam: gradient " + std::to_string(i) + " has shape " +
                                        shape(grads[i]) + ", expected " + shape(state.m[i]));
        }
        if (!grads[i].allFinite()) return std::nullopt;
    }

    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    std::vector<Matrix> deltas;
    deltas.reserve(grads.size());
    for (std::size_t i = 0; i < grads.size(); ++i) {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i].cwiseProduct(grads[i]);
        const auto m_hat = state.m[i].array() / correction1;
        const auto v_hat = state.v[i].array() / correction2;
        deltas.emplace_back(-c.lr * m_hat / (v_hat.sqrt() + c.eps));
    }
    return deltas;
}

bool adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam: parameter and gradient counts differ");
    }
    auto deltas = adam_deltas(grads, state);
    if (!deltas) return false;
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += (*deltas)[i];
    return true;
}

}  // namespace cfdgcn::gnn
