#pragma once

/**
 * @file solver.hpp
 * @brief Differentiable 2-D compressible Euler solver on triangular meshes.
 *
 * First-order cell-centred finite volumes with a local Lax-Friedrichs flux and
 * explicit local pseudo-time stepping. Boundary edges tagged as walls get a
 * slip (pressure-only) flux; far-field edges see a freestream ghost state.
 *
 * Non-dimensionalisation: rho_inf = 1 and a_inf = 1, hence p_inf = 1/gamma and
 * |u_inf| = Mach. Angles of attack are given in degrees.
 *
 * Gradients are exact reverse-mode derivatives of the fixed-length iteration:
 * solve() stores every iterate, solve_backward() re-records one step at a time
 * on an ad::Tape and sweeps from the last iterate to the first.
 */

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfdgcn/mesh.hpp"

namespace cfdgcn::solver {

struct FreestreamSpec {
    double aoa_deg = 0.0;
    double mach = 0.5;
    double gamma = 1.4;

    /// Throws std::invalid_argument unless mach > 0, -90 < aoa < 90 and gamma > 1.
    void validate() const;
};

template <class T>
struct State {
    T rho{};
    T rhou{};
    T rhov{};
    T rhoE{};
};

using FlowState = std::vector<State<double>>;

struct Primitive {
    double rho = 0.0;
    double u = 0.0;
    double v = 0.0;
    double p = 0.0;
};

Primitive to_primitive(const State<double>& s, double gamma);
State<double> to_conserved(const Primitive& p, double gamma);

State<double> freestream_state(const FreestreamSpec& spec);

/// Boundary tags recognised by the solver. Other spellings can be aliased here.
struct BoundaryTags {
    std::vector<std::string> wall{"airfoil"};
    std::vector<std::string> farfield{"farfield"};
};

struct SolverSettings {
    double cfl = 0.8;
    BoundaryTags tags;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, int iteration = -1)
        : std::runtime_error(iteration >= 0 ? what + " (iteration " + std::to_string(iteration) + ")"
                                            : what),
          iteration_(iteration) {}
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

enum class FaceKind { Interior, Wall, Farfield };

/// An edge of the triangulation. The scaled normal (y_b - y_a, -(x_b - x_a))
/// points out of `left`; `right` is -1 on boundaries.
struct Face {
    int left = -1;
    int right = -1;
    int a = -1;
    int b = -1;
    FaceKind kind = FaceKind::Interior;
};

/// Face connectivity derived from a triangular mesh. Independent of coordinates.
class FlowTopology {
public:
    FlowTopology(const Mesh& mesh, const BoundaryTags& tags);

    const std::vector<Face>& faces() const { return faces_; }
    const std::vector<Element>& cells() const { return cells_; }
    std::size_t num_nodes() const { return num_nodes_; }
    std::size_t num_cells() const { return cells_.size(); }

private:
    std::vector<Face> faces_;
    std::vector<Element> cells_;
    std::size_t num_nodes_ = 0;
};

/// Per-cell flux balance (sum over faces of numerical flux times face length).
FlowState euler_residual(const Mesh& mesh, const FlowState& state, const FreestreamSpec& spec,
                         const SolverSettings& settings = {});

/// Area-weighted node averages of (u, v, p). N x 3.
Eigen::MatrixXd cells_to_nodes(const Mesh& mesh, const FlowState& state, double gamma);

struct SolverOutput {
    Eigen::MatrixXd node_fields;  // N x 3: vx, vy, p
    int iterations_run = 0;
    double final_residual_norm = 0.0;
    FlowState cell_state;
};

/// Iterates recorded by solve() for the reverse sweep.
struct ForwardRecord {
    std::vector<FlowState> iterates;  // state before each step; iterates[0] is freestream
    FlowState final_state;
    std::vector<Vec2> nodes;
    FreestreamSpec spec;
    SolverSettings settings;
    std::uint64_t topology_hash = 0;
};

/// Steps from the freestream until the RMS of R/A drops below `residual_tol` or
/// `max_iters` steps have run. Always takes at least one step.
SolverOutput solve(const Mesh& mesh, const FreestreamSpec& spec, int max_iters, double residual_tol,
                   const SolverSettings& settings = {}, ForwardRecord* record = nullptr);

struct SolverGradients {
    Eigen::MatrixXd d_nodes;  // N x 2
    double d_aoa = 0.0;       // per degree
    double d_mach = 0.0;
};

/// Reverse-mode derivative of sum(output_cotangent .* node_fields) through every
/// recorded step, w.r.t. node coordinates, angle of attack and Mach number.
SolverGradients solve_backward(const Mesh& mesh, const ForwardRecord& record,
                               const Eigen::MatrixXd& output_cotangent);

}  // namespace cfdgcn::solver
