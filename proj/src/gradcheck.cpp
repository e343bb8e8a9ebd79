#include "cfdgcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>

#include "cfdgcn/gnn.hpp"
#include "cfdgcn/pipeline.hpp"
#include "cfdgcn/solver.hpp"
#include "cfdgcn/upsample.hpp"

namespace cfdgcn::gradcheck {
namespace {

using Matrix = Eigen::MatrixXd;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    }
    return m;
}

/// Compares `analytic` against central differences of `f` over every entry of `x`.
/// If the estimates at h and h/10 disagree by more than roundoff allows, the
/// interval straddles a kink (ReLU, max) and the step is refined, down to h/1000.
template <class Params>
void compare(CheckResult& r, Params& x, const Matrix& analytic, const std::function<double()>& f,
             const Options& o) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    const double floor = std::max(o.abs_floor, o.relative_floor * analytic.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double saved = x(i, j);
            double scale = 0.0;
            auto central = [&](double h) {
                x(i, j) = saved + h;
                const double fp = f();
                x(i, j) = saved - h;
                const double fm = f();
                x(i, j) = saved;
                scale = std::max({scale, std::fabs(fp), std::fabs(fm)});
                return (fp - fm) / (2.0 * h);
            };
            auto roundoff = [&](double h) { return 100.0 * eps * scale / h; };
            double h = o.step;
            double numeric = central(h);
            for (int k = 0; k < 3; ++k) {
                const double finer = central(h / 10.0);
                const double band = std::max(0.1 * r.tolerance * std::fabs(finer), roundoff(h / 10.0));
                if (std::fabs(numeric - finer) <= band) break;
                h /= 10.0;
                numeric = finer;
            }
            // Differences inside the roundoff band of the quotient are not resolvable.
            const double excess = std::max(0.0, std::fabs(analytic(i, j) - numeric) - roundoff(h));
            const double denom = std::max({std::fabs(analytic(i, j)), std::fabs(numeric), floor});
            r.max_rel_err = std::max(r.max_rel_err, excess / denom);
            ++r.entries;
        }
    }
}

std::vector<Vec2> to_points(const Matrix& m) {
    std::vector<Vec2> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = {m(i, 0), m(i, 1)};
    return out;
}

Matrix to_matrix(std::span<const Vec2> pts) {
    Matrix m(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = pts[i].x;
        m(static_cast<Eigen::Index>(i), 1) = pts[i].y;
    }
    return m;
}

std::vector<CheckResult> solver_suite(const Mesh& coarse, const Options& o, std::mt19937_64& rng) {
    const Mesh mesh = coarse.is_triangular() ? coarse : triangulate(coarse);
    const solver::FreestreamSpec spec{3.0, 0.45};
    const Matrix cot = random_matrix(static_cast<Eigen::Index>(mesh.num_nodes()), 3, rng);

    solver::ForwardRecord rec;
    solver::solve(mesh, spec, o.solver_iters, 0.0, {}, &rec);
    const auto g = solver::solve_backward(mesh, rec, cot);

    Matrix x = to_matrix(mesh.nodes);
    Matrix params(1, 2);
    params << spec.aoa_deg, spec.mach;
    auto objective = [&] {
        Mesh m = mesh;
        m.nodes = to_points(x);
        const solver::FreestreamSpec s{params(0, 0), params(0, 1)};
        return cot.cwiseProduct(solver::solve(m, s, o.solver_iters, 0.0).node_fields).sum();
    };
    CheckResult nodes{"solver d/dnodes", 0.0, o.nonlinear_tol, 0};
    compare(nodes, x, g.d_nodes, objective, o);
    Matrix analytic_params(1, 2);
    analytic_params << g.d_aoa, g.d_mach;
    CheckResult flow{"solver d/d(aoa,mach)", 0.0, o.nonlinear_tol, 0};
    compare(flow, params, analytic_params, objective, o);
    return {nodes, flow};
}

std::vector<CheckResult> gcn_suite(const Options& o, std::mt19937_64& rng) {
    // Ring of 8 nodes with two chords.
    Graph graph;
    graph.num_nodes = 8;
    for (int i = 0; i < 8; ++i) graph.edges.emplace_back(std::min(i, (i + 1) % 8), std::max(i, (i + 1) % 8));
    graph.edges.emplace_back(0, 4);
    graph.edges.emplace_back(2, 6);
    std::sort(graph.edges.begin(), graph.edges.end());
    const auto adj = gnn::normalized_adjacency(graph);

    std::vector<CheckResult> out;
    for (bool relu : {false, true}) {
        Matrix z = random_matrix(8, 4, rng);
        gnn::GcnLayer layer{random_matrix(4, 3, rng), random_matrix(1, 3, rng)};
        const Matrix cot = random_matrix(8, 3, rng);
        const Matrix y = gnn::gcn_forward(adj, z, layer, relu);
        const auto g = gnn::gcn_backward(adj, z, layer, relu, y, cot);
        auto objective = [&] { return cot.cwiseProduct(gnn::gcn_forward(adj, z, layer, relu)).sum(); };
        const std::string tag = relu ? "gcn+relu" : "gcn";
        CheckResult dz{tag + " d/dinput", 0.0, o.linear_tol, 0};
        compare(dz, z, g.d_input, objective, o);
        CheckResult dw{tag + " d/dweight", 0.0, o.linear_tol, 0};
        compare(dw, layer.weight, g.d_weight, objective, o);
        CheckResult db{tag + " d/dbias", 0.0, o.linear_tol, 0};
        Matrix bias = layer.bias;
        auto bias_objective = [&] {
            layer.bias = bias;
            return objective();
        };
        compare(db, bias, g.d_bias, bias_objective, o);
        out.insert(out.end(), {dz, dw, db});
    }
    return out;
}

std::vector<CheckResult> upsample_suite(const Mesh& coarse, const Mesh& fine, const Options& o,
                                        std::mt19937_64& rng) {
    Matrix sources = to_matrix(coarse.nodes);
    Matrix values = random_matrix(sources.rows(), 3, rng);
    const Matrix cot = random_matrix(static_cast<Eigen::Index>(fine.num_nodes()), 3, rng);
    const auto src = to_points(sources);
    const auto plan = upsample::build_plan(fine.nodes, src, 3);
    const auto g = upsample::apply_backward(plan, values, cot);
    // Plans are rebuilt per evaluation; the neighbour sets are stable for small steps.
    auto objective = [&] {
        const auto s = to_points(sources);
        return cot.cwiseProduct(upsample::apply(upsample::build_plan(fine.nodes, s, 3), values)).sum();
    };
    CheckResult dv{"upsample d/dvalues", 0.0, o.linear_tol, 0};
    compare(dv, values, g.d_values, objective, o);
    CheckResult dp{"upsample d/dpositions", 0.0, o.nonlinear_tol, 0};
    compare(dp, sources, g.d_positions, objective, o);
    return {dv, dp};
}

std::vector<CheckResult> pipeline_suite(const Mesh& coarse, const Mesh& fine, const Options& o,
                                        std::mt19937_64& rng) {
    pipeline::MeshBank bank;
    bank.emplace("gradcheck", pipeline::MeshCase{"gradcheck", pipeline::FineMesh::build(fine),
                                                 pipeline::CoarseMesh::build(coarse), {}});
    const auto& c = bank.at("gradcheck");
    pipeline::TrainConfig cfg;
    cfg.hidden_channels = 6;
    cfg.coarse_max_iters = 1;
    cfg.seed = o.seed;
    auto params = pipeline::init_params(cfg, bank);
    // Non-zero biases keep ReLU units away from their kinks in expectation.
    for (auto& l : params.layers) l.bias = random_matrix(1, l.bias.cols(), rng, 0.1);
    const solver::FreestreamSpec spec{2.0, 0.5};
    const Matrix truth = random_matrix(static_cast<Eigen::Index>(c.fine.mesh.num_nodes()), 3, rng, 0.5);
    const auto lg = pipeline::forward_backward(params, c, spec, cfg, truth);

    auto objective = [&] {
        return pipeline::loss_mse(truth, pipeline::forward(params, c, spec, cfg).y_hat);
    };
    std::vector<CheckResult> out;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        CheckResult w{"end-to-end d/dW" + std::to_string(i + 1), 0.0, o.nonlinear_tol, 0};
        compare(w, params.layers[i].weight, lg.grads.layers[i].weight, objective, o);
        CheckResult b{"end-to-end d/db" + std::to_string(i + 1), 0.0, o.nonlinear_tol, 0};
        compare(b, params.layers[i].bias, lg.grads.layers[i].bias, objective, o);
        out.insert(out.end(), {w, b});
    }
    CheckResult xc{"end-to-end d/dX_coarse", 0.0, o.nonlinear_tol, 0};
    compare(xc, params.coarse_nodes.at("gradcheck"), lg.grads.coarse_nodes.at("gradcheck"), objective, o);
    out.push_back(xc);
    return out;
}

}  // namespace

CheckResult check_gradient(const std::string& name, Eigen::MatrixXd& x, const Eigen::MatrixXd& analytic,
                           const std::function<double()>& f, double tolerance, const Options& options) {
    if (x.rows() != analytic.rows() || x.cols() != analytic.cols()) {
        throw std::invalid_argument("check_gradient: shape mismatch for " + name);
    }
    CheckResult r{name, 0.0, tolerance, 0};
    compare(r, x, analytic, f, options);
    return r;
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / denom;
}

std::vector<CheckResult> run_all(const Mesh& coarse, const Mesh& fine, const Options& options) {
    std::mt19937_64 rng(options.seed);
    std::vector<CheckResult> out;
    for (auto suite : {solver_suite(coarse, options, rng), gcn_suite(options, rng),
                       upsample_suite(coarse, fine, options, rng), pipeline_suite(coarse, fine, options, rng)}) {
        out.insert(out.end(), suite.begin(), suite.end());
    }
    return out;
}

}  // namespace cfdgcn::gradcheck
