#include "cfdgcn/solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "cfdgcn/ad.hpp"

namespace cfdgcn::solver {

using ad::Var;

void FreestreamSpec::validate() const {
    if (!(mach > 0.0) || !std::isfinite(mach)) {
        throw std::invalid_argument("freestream Mach must be positive, got " + std::to_string(mach));
    }
    if (!(aoa_deg > -90.0 && aoa_deg < 90.0)) {
        throw std::invalid_argument("angle of attack must lie in (-90, 90) degrees, got " +
                                    std::to_string(aoa_deg));
    }
    if (!(gamma > 1.0)) throw std::invalid_argument("gamma must exceed 1");
}

Primitive to_primitive(const State<double>& s, double gamma) {
    const double u = s.rhou / s.rho;
    const double v = s.rhov / s.rho;
    return {s.rho, u, v, (gamma - 1.0) * (s.rhoE - 0.5 * s.rho * (u * u + v * v))};
}

State<double> to_conserved(const Primitive& p, double gamma) {
    return {p.rho, p.rho * p.u, p.rho * p.v,
            p.p / (gamma - 1.0) + 0.5 * p.rho * (p.u * p.u + p.v * p.v)};
}

namespace {

template <class T>
State<T> freestream_state_t(const T& aoa_deg, const T& mach, double gamma) {
    using std::cos;
    using std::sin;
    const T aoa = aoa_deg * (std::numbers::pi / 180.0);
    const T u = mach * cos(aoa);
    const T v = mach * sin(aoa);
    const double p = 1.0 / gamma;
    return {T(1.0), u, v, T(p / (gamma - 1.0)) + 0.5 * (u * u + v * v)};
}

template <class T>
T pick_max(const T& a, const T& b) {
    return ad::value(a) >= ad::value(b) ? a : b;
}

template <class T>
struct Side {
    T rho, u, v, p, a;
};

template <class T>
Side<T> side(const State<T>& s, double gamma) {
    using std::sqrt;
    const T u = s.rhou / s.rho;
    const T v = s.rhov / s.rho;
    const T p = (gamma - 1.0) * (s.rhoE - 0.5 * (s.rhou * u + s.rhov * v));
    if (!(ad::value(s.rho) > 0.0) || !(ad::value(p) > 0.0)) {
        throw SolverError("nonphysical state (rho = " + std::to_string(ad::value(s.rho)) +
                          ", p = " + std::to_string(ad::value(p)) + ")");
    }
    return {s.rho, u, v, p, sqrt(gamma * p / s.rho)};
}

/// Local Lax-Friedrichs flux through a face with scaled normal (sx, sy).
template <class T>
State<T> llf_flux(const State<T>& L, const State<T>& R, const T& sx, const T& sy, double gamma) {
    using std::abs;
    using std::sqrt;
    const Side<T> l = side(L, gamma);
    const Side<T> r = side(R, gamma);
    const T len = sqrt(sx * sx + sy * sy);
    const T unl = l.u * sx + l.v * sy;
    const T unr = r.u * sx + r.v * sy;
    // Max signal speed times face length.
    const T lam = pick_max(T(abs(unl) + l.a * len), T(abs(unr) + r.a * len));
    const T h = 0.5 * lam;
    return {
        0.5 * (L.rho * unl + R.rho * unr) - h * (R.rho - L.rho),
        0.5 * (L.rhou * unl + l.p * sx + R.rhou * unr + r.p * sx) - h * (R.rhou - L.rhou),
        0.5 * (L.rhov * unl + l.p * sy + R.rhov * unr + r.p * sy) - h * (R.rhov - L.rhov),
        0.5 * ((L.rhoE + l.p) * unl + (R.rhoE + r.p) * unr) - h * (R.rhoE - L.rhoE),
    };
}

template <class T>
void accumulate(State<T>& acc, const State<T>& f, double s) {
    acc.rho += s * f.rho;
    acc.rhou += s * f.rhou;
    acc.rhov += s * f.rhov;
    acc.rhoE += s * f.rhoE;
}

template <class T>
void residual_kernel(const FlowTopology& topo, const std::vector<T>& x, const std::vector<T>& y,
                     const std::vector<State<T>>& U, const State<T>& far, double gamma,
                     std::vector<State<T>>& R) {
    R.assign(U.size(), State<T>{T(0.0), T(0.0), T(0.0), T(0.0)});
    for (const Face& f : topo.faces()) {
        const T sx = y[f.b] - y[f.a];
        const T sy = x[f.a] - x[f.b];
        const State<T>& UL = U[f.left];
        switch (f.kind) {
            case FaceKind::Interior: {
                // One evaluation shared by both cells keeps the scheme exactly conservative.
                const State<T> flux = llf_flux(UL, U[f.right], sx, sy, gamma);
                accumulate(R[f.left], flux, 1.0);
                accumulate(R[f.right], flux, -1.0);
                break;
            }
            case FaceKind::Farfield:
                accumulate(R[f.left], llf_flux(UL, far, sx, sy, gamma), 1.0);
                break;
            case FaceKind::Wall: {
                const T p = side(UL, gamma).p;
                R[f.left].rhou += p * sx;
                R[f.left].rhov += p * sy;
                break;
            }
        }
    }
}

template <class T>
T cell_area(const Element& c, const std::vector<T>& x, const std::vector<T>& y) {
    const int i = c.v[0], j = c.v[1], k = c.v[2];
    return 0.5 * ((x[j] - x[i]) * (y[k] - y[i]) - (y[j] - y[i]) * (x[k] - x[i]));
}

template <class T>
struct CellGeometry {
    T area;
    T perimeter;
};

template <class T>
CellGeometry<T> cell_geometry(const Element& c, const std::vector<T>& x, const std::vector<T>& y) {
    using std::sqrt;
    const int i = c.v[0], j = c.v[1], k = c.v[2];
    const T area = cell_area(c, x, y);
    const auto edge = [&](int p, int q) {
        const T dx = x[q] - x[p];
        const T dy = y[q] - y[p];
        return T(sqrt(dx * dx + dy * dy));
    };
    return {area, edge(i, j) + edge(j, k) + edge(k, i)};
}

/// One explicit pseudo-time step. dt_c = cfl * r_c / (|u_c| + a_c) with r_c the
/// incircle radius 2A/P, so dt_c / A_c = 2 cfl / (P_c (|u_c| + a_c)).
template <class T>
double step_kernel(const FlowTopology& topo, const std::vector<T>& x, const std::vector<T>& y,
                   const std::vector<State<T>>& U, const State<T>& far, double gamma, double cfl,
                   std::vector<State<T>>& R, std::vector<State<T>>& next) {
    using std::sqrt;
    residual_kernel(topo, x, y, U, far, gamma, R);
    next.resize(U.size());
    double sumsq = 0.0;
    for (std::size_t c = 0; c < U.size(); ++c) {
        const CellGeometry<T> g = cell_geometry(topo.cells()[c], x, y);
        const Side<T> s = side(U[c], gamma);
        const T speed = sqrt(s.u * s.u + s.v * s.v) + s.a;
        const T dt_over_area = (2.0 * cfl) / (g.perimeter * speed);
        next[c] = U[c];
        accumulate(next[c], State<T>{dt_over_area * R[c].rho, dt_over_area * R[c].rhou,
                                     dt_over_area * R[c].rhov, dt_over_area * R[c].rhoE},
                   -1.0);
        const double inv_a = 1.0 / ad::value(g.area);
        for (const double r : {ad::value(R[c].rho), ad::value(R[c].rhou), ad::value(R[c].rhov),
                               ad::value(R[c].rhoE)}) {
            sumsq += (r * inv_a) * (r * inv_a);
        }
    }
    return std::sqrt(sumsq / (4.0 * static_cast<double>(std::max<std::size_t>(U.size(), 1))));
}

/// Area-weighted node averages of (u, v, p), flattened row-major N x 3.
template <class T>
void nodes_kernel(std::span<const Element> cells, std::size_t n_nodes, const std::vector<T>& x,
                  const std::vector<T>& y, const std::vector<State<T>>& U, double gamma,
                  std::vector<T>& out) {
    std::vector<T> weight(n_nodes, T(0.0));
    out.assign(3 * n_nodes, T(0.0));
    for (std::size_t c = 0; c < U.size(); ++c) {
        const Element& el = cells[c];
        const T area = cell_area(el, x, y);
        const T u = U[c].rhou / U[c].rho;
        const T v = U[c].rhov / U[c].rho;
        const T p = (gamma - 1.0) * (U[c].rhoE - 0.5 * (U[c].rhou * u + U[c].rhov * v));
        for (int k = 0; k < 3; ++k) {
            const int node = el.v[k];
            weight[node] += area;
            out[3 * node] += area * u;
            out[3 * node + 1] += area * v;
            out[3 * node + 2] += area * p;
        }
    }
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (ad::value(weight[i]) == 0.0) continue;  // node not referenced by any cell
        for (int k = 0; k < 3; ++k) out[3 * i + k] = out[3 * i + k] / weight[i];
    }
}

void split_coords(std::span<const Vec2> nodes, std::vector<double>& x, std::vector<double>& y) {
    x.resize(nodes.size());
    y.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        x[i] = nodes[i].x;
        y[i] = nodes[i].y;
    }
}

void check_orientations(const Mesh& mesh) {
    const auto orient = element_orientations(mesh.nodes, mesh.elements);
    for (std::size_t e = 0; e < orient.size(); ++e) {
        if (!(orient[e] > 0.0)) {
            throw SolverError("element " + std::to_string(e) +
                              " has non-positive orientation; the solver needs counter-clockwise "
                              "triangles");
        }
    }
}

std::uint64_t topology_hash(const Mesh& mesh) {
    Mesh shape;
    shape.nodes.assign(mesh.nodes.size(), Vec2{});
    shape.elements = mesh.elements;
    shape.markers = mesh.markers;
    return mesh_hash(shape);
}

bool matches(const std::vector<std::string>& tags, const std::string& tag) {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

}  // namespace

State<double> freestream_state(const FreestreamSpec& spec) {
    spec.validate();
    return freestream_state_t(spec.aoa_deg, spec.mach, spec.gamma);
}

FlowTopology::FlowTopology(const Mesh& mesh, const BoundaryTags& tags)
    : cells_(mesh.elements), num_nodes_(mesh.nodes.size()) {
    mesh.validate();
    if (!mesh.is_triangular()) throw SolverError("solver requires a triangular mesh");

    struct HalfEdge {
        int cell;
        int a;
        int b;
    };
    std::map<std::pair<int, int>, std::vector<HalfEdge>> edges;
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        const auto& v = cells_[c].v;
        for (int k = 0; k < 3; ++k) {
            const int a = v[k];
            const int b = v[(k + 1) % 3];
            edges[{std::min(a, b), std::max(a, b)}].push_back({static_cast<int>(c), a, b});
        }
    }

    std::map<std::pair<int, int>, FaceKind> boundary;
    for (const auto& m : mesh.markers) {
        FaceKind kind;
        if (matches(tags.wall, m.tag)) {
            kind = FaceKind::Wall;
        } else if (matches(tags.farfield, m.tag)) {
            kind = FaceKind::Farfield;
        } else {
            throw SolverError("unsupported boundary marker '" + m.tag +
                              "'; alias it to a wall or far-field tag");
        }
        for (const auto& s : m.segments) boundary[{std::min(s[0], s[1]), std::max(s[0], s[1])}] = kind;
    }

    for (const auto& [key, halves] : edges) {
        if (halves.size() > 2) {
            throw SolverError("edge (" + std::to_string(key.first) + ", " + std::to_string(key.second) +
                              ") is shared by more than two cells");
        }
        const HalfEdge& h = halves.front();
        Face f{h.cell, -1, h.a, h.b, FaceKind::Interior};
        if (halves.size() == 2) {
            f.right = halves[1].cell;
        } else {
            const auto it = boundary.find(key);
            if (it == boundary.end()) {
                throw SolverError("boundary edge (" + std::to_string(key.first) + ", " +
                                  std::to_string(key.second) + ") is not covered by any marker");
            }
            f.kind = it->second;
        }
        faces_.push_back(f);
    }
}

FlowState euler_residual(const Mesh& mesh, const FlowState& state, const FreestreamSpec& spec,
                         const SolverSettings& settings) {
    spec.validate();
    const FlowTopology topo(mesh, settings.tags);
    if (state.size() != topo.num_cells()) throw SolverError("state size does not match cell count");
    std::vector<double> x, y;
    split_coords(mesh.nodes, x, y);
    FlowState R;
    residual_kernel(topo, x, y, state, freestream_state(spec), spec.gamma, R);
    return R;
}

Eigen::MatrixXd cells_to_nodes(const Mesh& mesh, const FlowState& state, double gamma) {
    if (!mesh.is_triangular()) throw SolverError("cells_to_nodes requires a triangular mesh");
    if (state.size() != mesh.elements.size()) {
        throw SolverError("state size does not match cell count");
    }
    std::vector<double> x, y, flat;
    split_coords(mesh.nodes, x, y);
    nodes_kernel<double>(mesh.elements, mesh.nodes.size(), x, y, state, gamma, flat);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(mesh.nodes.size()), 3);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (int k = 0; k < 3; ++k) out(i, k) = flat[static_cast<std::size_t>(3 * i + k)];
    }
    return out;
}

SolverOutput solve(const Mesh& mesh, const FreestreamSpec& spec, int max_iters, double residual_tol,
                   const SolverSettings& settings, ForwardRecord* record) {
    spec.validate();
    if (max_iters < 1) throw std::invalid_argument("solve: max_iters must be at least 1");
    const FlowTopology topo(mesh, settings.tags);
    check_orientations(mesh);

    std::vector<double> x, y;
    split_coords(mesh.nodes, x, y);
    const State<double> far = freestream_state(spec);
    FlowState U(topo.num_cells(), far);
    FlowState R, next;

    if (record != nullptr) {
        record->iterates.clear();
        record->iterates.reserve(static_cast<std::size_t>(max_iters));
        record->nodes = mesh.nodes;
        record->spec = spec;
        record->settings = settings;
        record->topology_hash = topology_hash(mesh);
    }

    SolverOutput out;
    for (int it = 0; it < max_iters; ++it) {
        if (record != nullptr) record->iterates.push_back(U);
        double norm = 0.0;
        try {
            norm = step_kernel(topo, x, y, U, far, spec.gamma, settings.cfl, R, next);
            for (const auto& s : next) side(s, spec.gamma);
        } catch (const SolverError& e) {
            throw SolverError(e.what(), it + 1);
        }
        std::swap(U, next);
        out.iterations_run = it + 1;
        out.final_residual_norm = norm;
        if (!std::isfinite(norm)) throw SolverError("residual is not finite", it + 1);
        if (norm < residual_tol) break;
    }

    out.node_fields = cells_to_nodes(mesh, U, spec.gamma);
    if (record != nullptr) record->final_state = U;
    out.cell_state = std::move(U);
    return out;
}

SolverGradients solve_backward(const Mesh& mesh, const ForwardRecord& record,
                               const Eigen::MatrixXd& output_cotangent) {
    const FlowTopology topo(mesh, record.settings.tags);
    const std::size_t n_nodes = mesh.nodes.size();
    const std::size_t n_cells = topo.num_cells();
    if (record.topology_hash != topology_hash(mesh) || record.nodes.size() != n_nodes ||
        record.final_state.size() != n_cells || record.iterates.empty()) {
        throw SolverError("forward record does not match the mesh");
    }
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (!(record.nodes[i] == mesh.nodes[i])) {
            throw SolverError("forward record was produced with different node coordinates");
        }
    }
    if (output_cotangent.rows() != static_cast<Eigen::Index>(n_nodes) || output_cotangent.cols() != 3) {
        throw SolverError("output cotangent must be N x 3");
    }

    const double gamma = record.spec.gamma;
    const double cfl = record.settings.cfl;
    std::vector<double> x, y;
    split_coords(record.nodes, x, y);

    std::vector<double> xbar(n_nodes, 0.0), ybar(n_nodes, 0.0);
    std::vector<State<double>> Ubar(n_cells);
    State<double> farbar{};

    ad::Tape tape;
    std::vector<Var> xv(n_nodes), yv(n_nodes);
    std::vector<State<Var>> Uv(n_cells);

    const auto record_inputs = [&](const FlowState& U) {
        for (std::size_t i = 0; i < n_nodes; ++i) {
            xv[i] = Var::input(x[i]);
            yv[i] = Var::input(y[i]);
        }
        for (std::size_t c = 0; c < n_cells; ++c) {
            Uv[c] = {Var::input(U[c].rho), Var::input(U[c].rhou), Var::input(U[c].rhov),
                     Var::input(U[c].rhoE)};
        }
    };
    const auto harvest = [&](const State<Var>* farv) {
        for (std::size_t i = 0; i < n_nodes; ++i) {
            xbar[i] += tape.adjoint(xv[i].id);
            ybar[i] += tape.adjoint(yv[i].id);
        }
        for (std::size_t c = 0; c < n_cells; ++c) {
            Ubar[c] = {tape.adjoint(Uv[c].rho.id), tape.adjoint(Uv[c].rhou.id),
                       tape.adjoint(Uv[c].rhov.id), tape.adjoint(Uv[c].rhoE.id)};
        }
        if (farv != nullptr) {
            farbar.rho += tape.adjoint(farv->rho.id);
            farbar.rhou += tape.adjoint(farv->rhou.id);
            farbar.rhov += tape.adjoint(farv->rhov.id);
            farbar.rhoE += tape.adjoint(farv->rhoE.id);
        }
    };

    // Node averaging of the final state.
    {
        ad::Recording rec(tape);
        record_inputs(record.final_state);
        std::vector<Var> fields;
        nodes_kernel<Var>(topo.cells(), n_nodes, xv, yv, Uv, gamma, fields);
        auto& adj = tape.adjoints();
        for (std::size_t i = 0; i < n_nodes; ++i) {
            for (int k = 0; k < 3; ++k) {
                const Var& f = fields[3 * i + k];
                if (f.recorded()) adj[f.id] += output_cotangent(static_cast<Eigen::Index>(i), k);
            }
        }
        tape.sweep();
        harvest(nullptr);
    }

    // Steps in reverse, each re-recorded from its stored input iterate.
    const State<double> far = freestream_state(record.spec);
    std::vector<State<Var>> Rv, nextv;
    for (std::size_t it = record.iterates.size(); it-- > 0;) {
        ad::Recording rec(tape);
        record_inputs(record.iterates[it]);
        const State<Var> farv{Var::input(far.rho), Var::input(far.rhou), Var::input(far.rhov),
                              Var::input(far.rhoE)};
        step_kernel(topo, xv, yv, Uv, farv, gamma, cfl, Rv, nextv);
        auto& adj = tape.adjoints();
        for (std::size_t c = 0; c < n_cells; ++c) {
            const auto seed = [&](const Var& v, double g) {
                if (v.recorded()) adj[v.id] += g;
            };
            seed(nextv[c].rho, Ubar[c].rho);
            seed(nextv[c].rhou, Ubar[c].rhou);
            seed(nextv[c].rhov, Ubar[c].rhov);
            seed(nextv[c].rhoE, Ubar[c].rhoE);
        }
        tape.sweep();
        harvest(&farv);
    }

    // Every cell starts at the freestream state.
    for (const auto& b : Ubar) {
        farbar.rho += b.rho;
        farbar.rhou += b.rhou;
        farbar.rhov += b.rhov;
        farbar.rhoE += b.rhoE;
    }

    SolverGradients g;
    {
        ad::Recording rec(tape);
        const Var aoa = Var::input(record.spec.aoa_deg);
        const Var mach = Var::input(record.spec.mach);
        const State<Var> s = freestream_state_t(aoa, mach, gamma);
        auto& adj = tape.adjoints();
        const auto seed = [&](const Var& v, double gbar) {
            if (v.recorded()) adj[v.id] += gbar;
        };
        seed(s.rho, farbar.rho);
        seed(s.rhou, farbar.rhou);
        seed(s.rhov, farbar.rhov);
        seed(s.rhoE, farbar.rhoE);
        tape.sweep();
        g.d_aoa = tape.adjoint(aoa.id);
        g.d_mach = tape.adjoint(mach.id);
    }

    g.d_nodes.resize(static_cast<Eigen::Index>(n_nodes), 2);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        g.d_nodes(static_cast<Eigen::Index>(i), 0) = xbar[i];
        g.d_nodes(static_cast<Eigen::Index>(i), 1) = ybar[i];
    }
    return g;
}

}  // namespace cfdgcn::solver
