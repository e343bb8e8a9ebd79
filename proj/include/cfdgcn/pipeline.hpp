#pragma once

/**
 * @file pipeline.hpp
 * @brief The hybrid solver + graph-convolution model, its baselines and training.
 *
 * Model (K layers, concatenation after layer `concat_layer`):
 *
 *   U_0 = solve(X_C, aoa, mach)            coarse mesh, fixed iteration budget
 *   U_L = upsample(U_0)                    k-NN, 1/d^2 weights, onto fine nodes
 *   Z_0 = [x, y, sdf, aoa, mach]
 *   Z_i = relu(gcn_i(Z_{i-1}))             i < K, with U_L appended to Z_concat
 *   Y   = gcn_K(Z_{K-1})
 *
 * Both the GCN weights and the coarse node coordinates X_C are trained.
 */

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfdgcn/data.hpp"
#include "cfdgcn/gnn.hpp"
#include "cfdgcn/mesh.hpp"
#include "cfdgcn/solver.hpp"
#include "cfdgcn/upsample.hpp"

namespace cfdgcn::pipeline {

using Matrix = Eigen::MatrixXd;

enum class Baseline { None, Ucm, Gcn, Frozen };

Baseline parse_baseline(const std::string& name);
std::string to_string(Baseline b);

struct TrainConfig {
    double lr = 5e-5;
    int batch_size = 16;
    int coarse_max_iters = 200;
    int epochs = 1;
    std::string split = "interpolation";
    std::uint64_t seed = 0;
    int knn_k = 3;
    int concat_layer = 3;
    int num_layers = 6;
    int hidden_channels = 512;
    int num_upsample = 1;
    Baseline baseline = Baseline::None;
    bool freeze_boundary = true;
    bool project_updates = true;
    bool pooled_rmse = true;
    double cfl = 0.8;
    int eval_every = 1;
    int threads = 0;

    /// Throws std::invalid_argument on non-positive counts or rates.
    void validate() const;
};

/// Sets one field from its key=value spelling (keys match the member names).
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig read_config_file(const std::string& path, TrainConfig base = {});
std::string to_config_text(const TrainConfig& cfg);

/// Fine mesh with its graph operator and the geometric feature columns (x, y, sdf).
struct FineMesh {
    Mesh mesh;
    gnn::NormalizedAdjacency adjacency;
    Matrix geometry;  // N x 3

    static FineMesh build(Mesh mesh);
};

struct CoarseMesh {
    Mesh mesh;  // triangular; node coordinates are the initial X_C
    std::vector<int> boundary_nodes;

    static CoarseMesh build(Mesh mesh);
};

/// The fine/coarse pair for one airfoil, plus optional intermediate node sets
/// for L > 1 successive upsamplings (coarse -> levels[0] -> ... -> fine).
struct MeshCase {
    std::string mesh_id;
    FineMesh fine;
    CoarseMesh coarse;
    std::vector<std::vector<Vec2>> intermediate_levels;
};

using MeshBank = std::map<std::string, MeshCase>;

enum class ModelKind : std::uint32_t { CfdGcn = 0, GcnOnly = 1 };

struct ModelParams {
    ModelKind kind = ModelKind::CfdGcn;
    std::vector<gnn::GcnLayer> layers;
    std::map<std::string, Matrix> coarse_nodes;  // mesh_id -> N_C x 2
    bool frozen_mesh = false;
    int concat_layer = 3;

    int hidden_channels() const;
};

/// Glorot-initialised layers (seeded from cfg.seed) and X_C copied from each case.
ModelParams init_params(const TrainConfig& cfg, const MeshBank& cases);

/// Channel chain check; throws std::invalid_argument on mismatch.
void check_channels(const ModelParams& params);

/// Columns (x, y, sdf, aoa_degrees, mach).
Matrix build_features(const Mesh& fine_mesh, const solver::FreestreamSpec& spec);
Matrix build_features(const FineMesh& fine, const solver::FreestreamSpec& spec);

double loss_mse(const Matrix& y, const Matrix& y_hat);

struct Prediction {
    Matrix y_hat;
    Matrix coarse_fields;  // U_0, empty for the GCN-only model
    Matrix upsampled;      // U_L
};

/// Failure on one sample, tagged with the sample parameters.
class SampleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Prediction forward(const ModelParams& params, const MeshCase& mesh_case,
                   const solver::FreestreamSpec& spec, const TrainConfig& cfg);

struct Gradients {
    std::vector<gnn::GcnLayer> layers;
    std::map<std::string, Matrix> coarse_nodes;
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients grads;
    Prediction prediction;
};

LossAndGradients forward_backward(const ModelParams& params, const MeshCase& mesh_case,
                                  const solver::FreestreamSpec& spec, const TrainConfig& cfg,
                                  const Matrix& ground_truth);

/// Coarse solve on the case's original coarse mesh, upsampled to the fine nodes.
Matrix predict_ucm(const MeshCase& mesh_case, const solver::FreestreamSpec& spec,
                   const TrainConfig& cfg);
/// Same, but with explicit coarse coordinates.
Matrix predict_ucm(const MeshCase& mesh_case, const Matrix& coarse_nodes,
                   const solver::FreestreamSpec& spec, const TrainConfig& cfg);

Matrix predict_gcn_only(const ModelParams& params, const FineMesh& fine,
                        const solver::FreestreamSpec& spec);

struct EvalResult {
    double rmse = 0.0;
    std::vector<double> losses;  // per sample; NaN where the solve failed
    std::size_t failures = 0;
};

/// cfg.baseline == Ucm evaluates the upsampled coarse solve and ignores `params`.
EvalResult evaluate(const ModelParams& params, const MeshBank& cases,
                    const std::vector<data::FieldSample>& samples, const TrainConfig& cfg);

struct MetricRow {
    int epoch = 0;
    std::int64_t step = 0;
    double train_rmse = 0.0;
    double test_rmse = 0.0;
    double wall_seconds = 0.0;
    std::size_t flipped_elements_zeroed = 0;
};

std::string metric_csv_header();
std::string metric_csv_row(const MetricRow& row);

struct TrainCallbacks {
    std::function<void(const MetricRow&, const ModelParams&, const gnn::AdamState&)> on_epoch;
    std::function<void(const std::string&)> on_warning;
};

struct TrainResult {
    ModelParams params;
    gnn::AdamState adam;
    std::vector<MetricRow> log;
    std::vector<double> step_losses;             // batch-mean training loss per step
    std::size_t orientation_sign_changes = 0;    // coarse elements whose winding flipped
    std::size_t skipped_samples = 0;
};

TrainResult train(const TrainConfig& cfg, const MeshBank& cases,
                  const std::vector<data::FieldSample>& train_set,
                  const std::vector<data::FieldSample>& test_set, const TrainCallbacks& callbacks = {});

/// Continue from existing parameters and optimiser state.
TrainResult train(const TrainConfig& cfg, const MeshBank& cases,
                  const std::vector<data::FieldSample>& train_set,
                  const std::vector<data::FieldSample>& test_set, ModelParams params,
                  gnn::AdamState adam, const TrainCallbacks& callbacks = {});

data::Checkpoint to_checkpoint(const ModelParams& params, const gnn::AdamState& adam,
                               std::uint64_t seed);
ModelParams from_checkpoint(const data::Checkpoint& ckpt);

}  // namespace cfdgcn::pipeline
