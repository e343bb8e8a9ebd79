#pragma once

/**
 * @file upsample.hpp
 * @brief Inverse-squared-distance k-NN interpolation between node sets.
 *
 * Each target node takes the weighted mean of its k nearest source nodes with
 * weights 1/d^2. A target closer than 1e-12 to a source node copies it exactly.
 * Gradients treat the neighbour sets as fixed.
 */

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cfdgcn/mesh.hpp"

namespace cfdgcn::upsample {

struct UpsamplePlan {
    std::size_t num_sources = 0;
    std::size_t k = 0;
    std::vector<int> neighbors;      // num_targets x k, row-major
    std::vector<double> weights;     // normalised, same layout
    std::vector<double> dist2;       // raw squared distances, same layout
    std::vector<char> snapped;       // per target
    std::vector<Vec2> targets;
    std::vector<Vec2> sources;

    std::size_t num_targets() const { return snapped.size(); }
};

inline constexpr double kSnapDistance2 = 1e-24;

UpsamplePlan build_plan(std::span<const Vec2> targets, std::span<const Vec2> sources, std::size_t k);

/// N_targets x C weighted averages of `source_values` (N_sources x C).
Eigen::MatrixXd apply(const UpsamplePlan& plan, const Eigen::MatrixXd& source_values);

struct UpsampleGradients {
    Eigen::MatrixXd d_values;     // N_sources x C
    Eigen::MatrixXd d_positions;  // N_sources x 2
};

UpsampleGradients apply_backward(const UpsamplePlan& plan, const Eigen::MatrixXd& source_values,
                                 const Eigen::MatrixXd& output_cotangent);

}  // namespace cfdgcn::upsample
