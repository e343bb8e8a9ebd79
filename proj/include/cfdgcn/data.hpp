#pragma once

/**
 * @file data.hpp
 * @brief Ground-truth generation, experiment splits and on-disk formats.
 *
 * Dataset layout under a root directory:
 *
 *   <root>/<mesh_id>/<aoa>_<mach>.fld     one FieldSample per file
 *   <root>/splits/<name>.csv              mesh_id,aoa,mach,role
 *   <root>/exclusions/<name>.csv          mesh_id,aoa,mach
 *
 * Sample file (little-endian):
 *
 *   char[8]  magic "CFDGCNFD"
 *   uint32   version (1)
 *   uint64   mesh hash (sample_mesh_hash of the fine mesh)
 *   float64  aoa [deg]
 *   float64  mach
 *   uint64   N
 *   float64  fields[N][3]   (vx, vy, p) in node order
 */

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfdgcn/gnn.hpp"
#include "cfdgcn/mesh.hpp"
#include "cfdgcn/solver.hpp"

namespace cfdgcn::data {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FieldSample {
    std::string mesh_id;
    double aoa = 0.0;
    double mach = 0.0;
    Eigen::MatrixXd fields;  // N x 3
};

struct ParamPoint {
    std::string mesh_id;
    double aoa = 0.0;
    double mach = 0.0;

    friend bool operator==(const ParamPoint&, const ParamPoint&) = default;
    friend auto operator<=>(const ParamPoint&, const ParamPoint&) = default;
};

struct SplitSpec {
    std::string name;
    std::vector<ParamPoint> train;
    std::vector<ParamPoint> test;
};

std::vector<double> aoa_grid();        // -10, -9, ..., 10
std::vector<double> train_machs();     // 0.2, 0.3, 0.35, 0.4, 0.5, 0.55, 0.6, 0.7
std::vector<double> test_machs();      // 0.25, 0.45, 0.65

inline const std::string kDefaultMeshId = "naca0012";

/// "interpolation", "generalization" or "multi-airfoil". Training points listed in
/// `exclusions` are dropped (shock-bearing cases found by inspection).
SplitSpec make_split(const std::string& name, const std::vector<ParamPoint>& exclusions = {});

std::vector<ParamPoint> read_exclusions(const std::filesystem::path& path);
void write_exclusions(const std::filesystem::path& path, const std::vector<ParamPoint>& points);
void write_split_csv(const std::filesystem::path& path, const SplitSpec& split);

/// True if the isentropic local Mach number exceeds 1 at any node.
bool has_supersonic_region(const Eigen::MatrixXd& fields, double gamma = 1.4);

// Samples ------------------------------------------------------------------

std::string sample_filename(double aoa, double mach);

/// mesh_hash of the triangulated mesh, so quad and split forms of one mesh agree.
std::uint64_t sample_mesh_hash(const Mesh& mesh);

void save_sample(const std::filesystem::path& path, const FieldSample& sample, std::uint64_t mesh_hash);
/// Throws DataError on bad magic/version, truncation, or a mesh-hash/size mismatch.
FieldSample load_sample(const std::filesystem::path& path, const Mesh& mesh, const std::string& mesh_id);

void save_dataset(const std::filesystem::path& root, const std::string& mesh_id, const Mesh& mesh,
                  const std::vector<FieldSample>& samples);
/// Every sample under <root>/<mesh_id>, sorted by (aoa, mach).
std::vector<FieldSample> load_dataset(const std::filesystem::path& root, const std::string& mesh_id,
                                      const Mesh& mesh);

struct GenerationOptions {
    double residual_tol = 1e-8;
    int max_iters = 20000;
    solver::SolverSettings settings;
};

struct GenerationReport {
    std::vector<FieldSample> samples;       // converged, in request order
    std::vector<ParamPoint> not_converged;  // excluded
    std::vector<ParamPoint> supersonic;     // flagged for inspection
    std::size_t solves_run = 0;
    std::size_t cache_hits = 0;
};

/// Solves the fine mesh for each (aoa, mach) not already cached under <root>/<mesh_id>.
GenerationReport generate_ground_truth(const std::filesystem::path& root, const std::string& mesh_id,
                                       const Mesh& fine_mesh, const std::vector<ParamPoint>& params,
                                       const GenerationOptions& options = {});

// Checkpoints --------------------------------------------------------------

/**
 * Binary checkpoint (little-endian):
 *
 *   char[8] "CFDGCNCK", uint32 version (1), uint64 seed, int64 adam step,
 *   float64 lr, beta1, beta2, eps, uint32 model kind, uint32 frozen flag,
 *   uint32 concat layer, uint32 layer count, then per layer: uint64 rows, cols,
 *   weight (row-major), bias; uint32 coarse-mesh count, then per mesh:
 *   uint32 id length, id bytes, uint64 N, N x 2 coordinates;
 *   uint32 moment tensor count, then per tensor: uint64 rows, cols, m, v.
 */
struct Checkpoint {
    std::uint64_t seed = 0;
    std::uint32_t model_kind = 0;
    bool frozen_mesh = false;
    std::uint32_t concat_layer = 0;
    std::vector<gnn::GcnLayer> layers;
    std::map<std::string, Eigen::MatrixXd> coarse_nodes;
    gnn::AdamState adam;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to `path` through a temporary file and rename.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace cfdgcn::data
