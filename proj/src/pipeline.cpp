#include "cfdgcn/pipeline.hpp"

#include <random>
#include <sstream>
#include <stdexcept>

#include "cfdgcn/meshopt.hpp"

namespace cfdgcn::pipeline {
namespace {

constexpr Eigen::Index kFeatureChannels = 5;
constexpr Eigen::Index kFieldChannels = 3;

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

std::string describe(const MeshCase& c, const solver::FreestreamSpec& spec) {
    std::ostringstream s;
    s << "sample mesh=" << c.mesh_id << " aoa=" << spec.aoa_deg << " mach=" << spec.mach;
    return s.str();
}

struct CoarsePath {
    Mesh mesh;
    solver::SolverOutput solution;
    solver::ForwardRecord record;
    std::vector<upsample::UpsamplePlan> plans;
    std::vector<Matrix> level_values;  // input to each plan
    Matrix upsampled;
};

CoarsePath run_coarse(const MeshCase& c, const Matrix& coarse_nodes, const solver::FreestreamSpec& spec,
                      const TrainConfig& cfg, bool keep_record) {
    if (static_cast<std::size_t>(cfg.num_upsample) != c.intermediate_levels.size() + 1) {
        throw std::invalid_argument("num_upsample = " + std::to_string(cfg.num_upsample) + " needs " +
                                    std::to_string(cfg.num_upsample - 1) +
                                    " intermediate node sets, case '" + c.mesh_id + "' has " +
                                    std::to_string(c.intermediate_levels.size()));
    }
    CoarsePath path;
    path.mesh = c.coarse.mesh;
    path.mesh.nodes = to_points(coarse_nodes);
    solver::SolverSettings settings;
    settings.cfl = cfg.cfl;
    try {
        path.solution = solver::solve(path.mesh, spec, cfg.coarse_max_iters, 0.0, settings,
                                      keep_record ? &path.record : nullptr);
    } catch (const solver::SolverError& e) {
        throw SampleError(describe(c, spec) + ": coarse solve failed: " + e.what());
    }

    std::vector<Vec2> sources = path.mesh.nodes;
    Matrix values = path.solution.node_fields;
    const auto k = static_cast<std::size_t>(cfg.knn_k);
    for (std::size_t level = 0; level <= c.intermediate_levels.size(); ++level) {
        const std::vector<Vec2>& targets =
            level < c.intermediate_levels.size() ? c.intermediate_levels[level] : c.fine.mesh.nodes;
        path.plans.push_back(upsample::build_plan(targets, sources, k));
        path.level_values.push_back(values);
        values = upsample::apply(path.plans.back(), values);
        sources = targets;
    }
    path.upsampled = std::move(values);
    return path;
}

struct GcnTrace {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
};

Matrix run_gcn(const ModelParams& params, const FineMesh& fine, const Matrix& features,
               const Matrix* upsampled, GcnTrace* trace) {
    const auto num = static_cast<int>(params.layers.size());
    Matrix z = features;
    for (int i = 1; i <= num; ++i) {
        const bool relu = i < num;
        Matrix out = gnn::gcn_forward(fine.adjacency, z, params.layers[static_cast<std::size_t>(i - 1)], relu);
        if (trace != nullptr) {
            trace->inputs.push_back(std::move(z));
            trace->outputs.push_back(out);
        }
        if (upsampled != nullptr && i == params.concat_layer) {
            Matrix cat(out.rows(), out.cols() + upsampled->cols());
            cat << out, *upsampled;
            z = std::move(cat);
        } else {
            z = std::move(out);
        }
    }
    return z;
}

}  // namespace

int ModelParams::hidden_channels() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().out_channels());
}

FineMesh FineMesh::build(Mesh mesh) {
    FineMesh f;
    f.mesh = mesh.is_triangular() ? std::move(mesh) : triangulate(mesh);
    f.mesh.validate();
    f.adjacency = gnn::normalized_adjacency(build_graph(f.mesh));
    const auto sdf = signed_distance(f.mesh.nodes, f.mesh, "airfoil");
    f.geometry.resize(static_cast<Eigen::Index>(f.mesh.nodes.size()), 3);
    for (std::size_t i = 0; i < f.mesh.nodes.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        f.geometry(r, 0) = f.mesh.nodes[i].x;
        f.geometry(r, 1) = f.mesh.nodes[i].y;
        f.geometry(r, 2) = sdf[i];
    }
    return f;
}

CoarseMesh CoarseMesh::build(Mesh mesh) {
    CoarseMesh c;
    c.mesh = mesh.is_triangular() ? std::move(mesh) : triangulate(mesh);
    c.mesh.validate();
    c.boundary_nodes = meshopt::boundary_nodes(c.mesh);
    return c;
}

ModelParams init_params(const TrainConfig& cfg, const MeshBank& cases) {
    cfg.validate();
    ModelParams p;
    p.kind = cfg.baseline == Baseline::Gcn ? ModelKind::GcnOnly : ModelKind::CfdGcn;
    p.frozen_mesh = cfg.baseline == Baseline::Frozen;
    p.concat_layer = cfg.concat_layer;
    const Eigen::Index hidden = cfg.hidden_channels;
    std::mt19937_64 rng(cfg.seed);
    for (int i = 1; i <= cfg.num_layers; ++i) {
        Eigen::Index in = i == 1 ? kFeatureChannels : hidden;
        if (p.kind == ModelKind::CfdGcn && i - 1 == cfg.concat_layer) in += kFieldChannels;
        const Eigen::Index out = i == cfg.num_layers ? kFieldChannels : hidden;
        p.layers.push_back(gnn::GcnLayer::glorot(in, out, rng));
    }
    if (p.kind == ModelKind::CfdGcn) {
        for (const auto& [id, c] : cases) p.coarse_nodes[id] = to_matrix(c.coarse.mesh.nodes);
    }
    check_channels(p);
    return p;
}

void check_channels(const ModelParams& p) {
    const auto num = static_cast<int>(p.layers.size());
    if (num < 2) throw std::invalid_argument("model needs at least two layers");
    if (p.kind == ModelKind::CfdGcn && (p.concat_layer < 1 || p.concat_layer >= num)) {
        throw std::invalid_argument("concat_layer must lie in [1, num_layers)");
    }
    Eigen::Index expected = kFeatureChannels;
    for (int i = 1; i <= num; ++i) {
        const auto& layer = p.layers[static_cast<std::size_t>(i - 1)];
        if (layer.in_channels() != expected || layer.bias.size() != layer.out_channels()) {
            throw std::invalid_argument("layer " + std::to_string(i) + " expects " +
                                        std::to_string(layer.in_channels()) + " input channels, chain provides " +
                                        std::to_string(expected));
        }
        expected = layer.out_channels();
        if (p.kind == ModelKind::CfdGcn && i == p.concat_layer) expected += kFieldChannels;
    }
    if (expected != kFieldChannels) throw std::invalid_argument("final layer must output 3 channels");
}

Matrix build_features(const FineMesh& fine, const solver::FreestreamSpec& spec) {
    Matrix z(fine.geometry.rows(), kFeatureChannels);
    z.leftCols(3) = fine.geometry;
    z.col(3).setConstant(spec.aoa_deg);
    z.col(4).setConstant(spec.mach);
    return z;
}

Matrix build_features(const Mesh& fine_mesh, const solver::FreestreamSpec& spec) {
    const auto sdf = signed_distance(fine_mesh.nodes, fine_mesh, "airfoil");
    Matrix z(static_cast<Eigen::Index>(fine_mesh.nodes.size()), kFeatureChannels);
    for (std::size_t i = 0; i < fine_mesh.nodes.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        z.row(r) << fine_mesh.nodes[i].x, fine_mesh.nodes[i].y, sdf[i], spec.aoa_deg, spec.mach;
    }
    return z;
}

double loss_mse(const Matrix& y, const Matrix& y_hat) {
    if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
        throw std::invalid_argument("loss_mse: shape mismatch");
    }
    if (y.size() == 0) return 0.0;
    return (y - y_hat).squaredNorm() / static_cast<double>(y.size());
}

Prediction forward(const ModelParams& params, const MeshCase& mesh_case,
                   const solver::FreestreamSpec& spec, const TrainConfig& cfg) {
    check_channels(params);
    Prediction pred;
    const Matrix features = build_features(mesh_case.fine, spec);
    if (params.kind == ModelKind::GcnOnly) {
        pred.y_hat = run_gcn(params, mesh_case.fine, features, nullptr, nullptr);
        return pred;
    }
    const auto it = params.coarse_nodes.find(mesh_case.mesh_id);
    if (it == params.coarse_nodes.end()) {
        throw std::invalid_argument("no coarse coordinates for mesh '" + mesh_case.mesh_id + "'");
    }
    CoarsePath path = run_coarse(mesh_case, it->second, spec, cfg, false);
    pred.y_hat = run_gcn(params, mesh_case.fine, features, &path.upsampled, nullptr);
    pred.coarse_fields = std::move(path.solution.node_fields);
    pred.upsampled = std::move(path.upsampled);
    return pred;
}

LossAndGradients forward_backward(const ModelParams& params, const MeshCase& mesh_case,
                                  const solver::FreestreamSpec& spec, const TrainConfig& cfg,
                                  const Matrix& ground_truth) {
    check_channels(params);
    const Matrix features = build_features(mesh_case.fine, spec);
    const bool hybrid = params.kind == ModelKind::CfdGcn;
    const bool mesh_trainable = hybrid && !params.frozen_mesh;

    CoarsePath path;
    const Matrix* coarse_nodes = nullptr;
    if (hybrid) {
        const auto it = params.coarse_nodes.find(mesh_case.mesh_id);
        if (it == params.coarse_nodes.end()) {
            throw std::invalid_argument("no coarse coordinates for mesh '" + mesh_case.mesh_id + "'");
        }
        coarse_nodes = &it->second;
        path = run_coarse(mesh_case, *coarse_nodes, spec, cfg, mesh_trainable);
    }

    GcnTrace trace;
    LossAndGradients out;
    out.prediction.y_hat = run_gcn(params, mesh_case.fine, features, hybrid ? &path.upsampled : nullptr, &trace);
    if (ground_truth.rows() != out.prediction.y_hat.rows() || ground_truth.cols() != kFieldChannels) {
        throw std::invalid_argument(describe(mesh_case, spec) + ": ground truth has wrong shape");
    }
    out.loss = loss_mse(ground_truth, out.prediction.y_hat);

    const auto num = static_cast<int>(params.layers.size());
    out.grads.layers.resize(params.layers.size());
    Matrix d_out = 2.0 * (out.prediction.y_hat - ground_truth) / static_cast<double>(ground_truth.size());
    Matrix d_upsampled;
    for (int i = num; i >= 1; --i) {
        const auto li = static_cast<std::size_t>(i - 1);
        auto g = gnn::gcn_backward(mesh_case.fine.adjacency, trace.inputs[li], params.layers[li], i < num,
                                   trace.outputs[li], d_out);
        out.grads.layers[li] = {std::move(g.d_weight), std::move(g.d_bias)};
        if (i == 1) break;
        if (hybrid && i - 1 == params.concat_layer) {
            const Eigen::Index h = g.d_input.cols() - kFieldChannels;
            d_upsampled = g.d_input.rightCols(kFieldChannels);
            d_out = g.d_input.leftCols(h);
        } else {
            d_out = std::move(g.d_input);
        }
    }

    if (hybrid) {
        Matrix grad = Matrix::Zero(coarse_nodes->rows(), 2);
        if (mesh_trainable) {
            // Back through the upsampling chain; only the first plan's sources are X_C.
            Matrix d_values = d_upsampled;
            for (std::size_t level = path.plans.size(); level-- > 0;) {
                auto ug = upsample::apply_backward(path.plans[level], path.level_values[level], d_values);
                d_values = std::move(ug.d_values);
                if (level == 0) grad += ug.d_positions;
            }
            const auto sg = solver::solve_backward(path.mesh, path.record, d_values);
            grad += sg.d_nodes;
        }
        out.grads.coarse_nodes[mesh_case.mesh_id] = std::move(grad);
        out.prediction.coarse_fields = std::move(path.solution.node_fields);
        out.prediction.upsampled = std::move(path.upsampled);
    }
    return out;
}

Matrix predict_ucm(const MeshCase& mesh_case, const Matrix& coarse_nodes,
                   const solver::FreestreamSpec& spec, const TrainConfig& cfg) {
    return run_coarse(mesh_case, coarse_nodes, spec, cfg, false).upsampled;
}

Matrix predict_ucm(const MeshCase& mesh_case, const solver::FreestreamSpec& spec,
                   const TrainConfig& cfg) {
    return predict_ucm(mesh_case, to_matrix(mesh_case.coarse.mesh.nodes), spec, cfg);
}

Matrix predict_gcn_only(const ModelParams& params, const FineMesh& fine,
                        const solver::FreestreamSpec& spec) {
    if (params.kind != ModelKind::GcnOnly) {
        throw std::invalid_argument("predict_gcn_only needs GCN-only parameters");
    }
    check_channels(params);
    return run_gcn(params, fine, build_features(fine, spec), nullptr, nullptr);
}

}  // namespace cfdgcn::pipeline
