#pragma once

/**
 * @file gnn.hpp
 * @brief Graph convolution layers with explicit reverse passes, plus Adam.
 *
 * A layer computes B Z W + b where B = D^-1/2 (A + I) D^-1/2 and D_ii = 1 + deg(i).
 * The bias is one row broadcast over nodes so trained weights transfer between
 * meshes of different sizes.
 */

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cfdgcn/mesh.hpp"

namespace cfdgcn::gnn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct GcnLayer {
    Matrix weight;  // F x F'
    RowVector bias; // 1 x F'

    Eigen::Index in_channels() const { return weight.rows(); }
    Eigen::Index out_channels() const { return weight.cols(); }

    /// Uniform in +-sqrt(6 / (F + F')), zero bias.
    static GcnLayer glorot(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);
    static GcnLayer zeros(Eigen::Index in, Eigen::Index out);
};

class NormalizedAdjacency {
public:
    NormalizedAdjacency() = default;
    explicit NormalizedAdjacency(SparseMatrix b) : b_(std::move(b)) {}

    const SparseMatrix& matrix() const { return b_; }
    Eigen::Index size() const { return b_.rows(); }
    double coeff(Eigen::Index i, Eigen::Index j) const { return b_.coeff(i, j); }

private:
    SparseMatrix b_;
};

NormalizedAdjacency normalized_adjacency(const Graph& graph);

/// B Z W + b, optionally followed by max(., 0).
Matrix gcn_forward(const NormalizedAdjacency& adj, const Matrix& z, const GcnLayer& layer,
                   bool apply_relu);

struct GcnGradients {
    Matrix d_input;
    Matrix d_weight;
    RowVector d_bias;
};

/// Reverse pass. `output` is the forward result; its positive entries form the ReLU mask.
GcnGradients gcn_backward(const NormalizedAdjacency& adj, const Matrix& z, const GcnLayer& layer,
                          bool apply_relu, const Matrix& output, const Matrix& output_cotangent);

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-tensor first/second moments.
struct AdamState {
    AdamConfig config;
    std::int64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    /// Zero moments shaped like `params`.
    static AdamState like(std::span<const Matrix> params, AdamConfig config);
};

/// Advances the moments and returns the bias-corrected update for every tensor.
/// Returns nullopt and leaves the state untouched if any gradient is non-finite.
std::optional<std::vector<Matrix>> adam_deltas(std::span<const Matrix> grads, AdamState& state);

/// params += adam_deltas(grads). Returns false (step skipped) on non-finite gradients.
bool adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state);

}  // namespace cfdgcn::gnn
