#include "cfdgcn/meshopt.hpp"

#include <algorithm>

namespace cfdgcn::meshopt {
namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

void check_sizes(std::span<const Vec2> nodes, std::span<const Vec2> delta,
                 std::span<const Element> elements) {
    if (nodes.size() != delta.size()) {
        throw MeshError("delta has " + std::to_string(delta.size()) + " rows, mesh has " +
                        std::to_string(nodes.size()) + " nodes");
    }
    const auto n = static_cast<int>(nodes.size());
    for (const auto& el : elements) {
        if (el.size != 3) throw MeshError("flip detection requires a triangular mesh");
        for (int v : el.vertices()) {
            if (v < 0 || v >= n) throw MeshError("element references node out of range");
        }
    }
}

}  // namespace

std::vector<int> detect_flips(std::span<const Vec2> nodes, std::span<const Vec2> delta,
                              std::span<const Element> elements) {
    check_sizes(nodes, delta, elements);
    std::vector<int> flipped;
    for (std::size_t e = 0; e < elements.size(); ++e) {
        const auto& v = elements[e].v;
        const double before = triangle_orientation(nodes[v[0]], nodes[v[1]], nodes[v[2]]);
        if (before == 0.0) {
            throw MeshError("element " + std::to_string(e) + " is degenerate before the update");
        }
        const double after = triangle_orientation(nodes[v[0]] + delta[v[0]], nodes[v[1]] + delta[v[1]],
                                                  nodes[v[2]] + delta[v[2]]);
        if (sign(after) != sign(before)) flipped.push_back(static_cast<int>(e));
    }
    return flipped;
}

UpdateProjection project_update(std::span<const Vec2> nodes, std::span<const Vec2> delta,
                                std::span<const Element> elements,
                                std::span<const int> always_frozen) {
    UpdateProjection out;
    out.projected.assign(delta.begin(), delta.end());
    for (int v : always_frozen) {
        if (v < 0 || v >= static_cast<int>(nodes.size())) {
            throw MeshError("frozen node index out of range");
        }
        out.projected[v] = {};
        out.frozen_nodes.insert(v);
    }

    // Each round either stops or freezes at least one new node (a flipped element
    // must contain a moving vertex), so the loop runs at most N + 1 times.
    while (true) {
        ++out.rounds;
        const auto flipped = detect_flips(nodes, out.projected, elements);
        if (flipped.empty()) break;
        out.flipped_elements += flipped.size();
        for (int e : flipped) {
            for (int v : elements[e].vertices()) {
                out.projected[v] = {};
                out.frozen_nodes.insert(v);
            }
        }
    }
    return out;
}

std::vector<int> boundary_nodes(const Mesh& mesh) {
    std::vector<int> out;
    for (const auto& m : mesh.markers) {
        for (const auto& s : m.segments) {
            out.push_back(s[0]);
            out.push_back(s[1]);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace cfdgcn::meshopt
