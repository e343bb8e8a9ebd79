#include "cfdgcn/upsample.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cfdgcn::upsample {

UpsamplePlan build_plan(std::span<const Vec2> targets, std::span<const Vec2> sources, std::size_t k) {
    if (k == 0) throw std::invalid_argument("upsample: k must be positive");
    if (k > sources.size()) {
        throw std::invalid_argument("upsample: k = " + std::to_string(k) + " exceeds " +
                                    std::to_string(sources.size()) + " source nodes");
    }
    const auto nn = knn(targets, sources, k);

    UpsamplePlan plan;
    plan.num_sources = sources.size();
    plan.k = k;
    plan.targets.assign(targets.begin(), targets.end());
    plan.sources.assign(sources.begin(), sources.end());
    plan.neighbors.resize(targets.size() * k);
    plan.weights.resize(targets.size() * k);
    plan.dist2.resize(targets.size() * k);
    plan.snapped.assign(targets.size(), 0);

    for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& row = nn[t];
        double* w = &plan.weights[t * k];
        for (std::size_t j = 0; j < k; ++j) {
            plan.neighbors[t * k + j] = row[j].index;
            plan.dist2[t * k + j] = row[j].dist2;
        }
        if (row[0].dist2 < kSnapDistance2) {
            plan.snapped[t] = 1;
            w[0] = 1.0;
            for (std::size_t j = 1; j < k; ++j) w[j] = 0.0;
            continue;
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            w[j] = 1.0 / row[j].dist2;
            sum += w[j];
        }
        for (std::size_t j = 0; j < k; ++j) w[j] /= sum;
    }
    return plan;
}

Eigen::MatrixXd apply(const UpsamplePlan& plan, const Eigen::MatrixXd& source_values) {
    if (static_cast<std::size_t>(source_values.rows()) != plan.num_sources) {
        throw std::invalid_argument("upsample: plan expects " + std::to_string(plan.num_sources) +
                                    " source rows, got " + std::to_string(source_values.rows()));
    }
    const std::size_t k = plan.k;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(plan.num_targets()),
                                                source_values.cols());
    // U = D_a + sum_j w_j (D_j - D_a) with a the heaviest neighbour: equal to sum_j w_j D_j,
    // but a constant field and a snapped target come out bit-exact.
    for (std::size_t t = 0; t < plan.num_targets(); ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        const double* w = &plan.weights[t * k];
        const std::size_t a = static_cast<std::size_t>(std::max_element(w, w + k) - w);
        const auto anchor = source_values.row(plan.neighbors[t * k + a]);
        out.row(row) = anchor;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == a || w[j] == 0.0) continue;
            out.row(row) += w[j] * (source_values.row(plan.neighbors[t * k + j]) - anchor);
        }
    }
    return out;
}

UpsampleGradients apply_backward(const UpsamplePlan& plan, const Eigen::MatrixXd& source_values,
                                 const Eigen::MatrixXd& output_cotangent) {
    if (static_cast<std::size_t>(source_values.rows()) != plan.num_sources ||
        static_cast<std::size_t>(output_cotangent.rows()) != plan.num_targets() ||
        output_cotangent.cols() != source_values.cols()) {
        throw std::invalid_argument("upsample: backward shapes do not match the plan");
    }
    if (plan.dist2.size() != plan.weights.size() || plan.sources.size() != plan.num_sources) {
        throw std::invalid_argument("upsample: plan was built without distance recording");
    }
    const std::size_t k = plan.k;
    UpsampleGradients g;
    g.d_values = Eigen::MatrixXd::Zero(source_values.rows(), source_values.cols());
    g.d_positions = Eigen::MatrixXd::Zero(source_values.rows(), 2);

    // U = sum_j r_j D_j / S with r_j = 1/d_j^2 and S = sum_j r_j:
    //   dU/dr_j = (D_j - U) / S,  dr_j/dX_j = 2 (x_t - X_j) / d_j^4.
    const Eigen::MatrixXd out = apply(plan, source_values);
    for (std::size_t t = 0; t < plan.num_targets(); ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        const auto cot = output_cotangent.row(row);
        for (std::size_t j = 0; j < k; ++j) {
            const double w = plan.weights[t * k + j];
            if (w != 0.0) g.d_values.row(plan.neighbors[t * k + j]) += w * cot;
        }
        if (plan.snapped[t]) continue;

        double sum_r = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum_r += 1.0 / plan.dist2[t * k + j];
        for (std::size_t j = 0; j < k; ++j) {
            const int src = plan.neighbors[t * k + j];
            const double d2 = plan.dist2[t * k + j];
            const double dU_dr = cot.dot(source_values.row(src) - out.row(row)) / sum_r;
            const double scale = dU_dr * 2.0 / (d2 * d2);
            const Vec2 diff = plan.targets[t] - plan.sources[static_cast<std::size_t>(src)];
            g.d_positions(src, 0) += scale * diff.x;
            g.d_positions(src, 1) += scale * diff.y;
        }
    }
    return g;
}

}  // namespace cfdgcn::upsample
