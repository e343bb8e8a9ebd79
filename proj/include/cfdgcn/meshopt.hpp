#pragma once

/**
 * @file meshopt.hpp
 * @brief Inversion-safe projection of coarse-mesh coordinate updates.
 *
 * A candidate update is applied only to nodes whose move does not reverse the
 * winding of any incident triangle. Offending elements have all three vertex
 * rows zeroed, and the check repeats until no element flips.
 */

#include <set>
#include <span>
#include <vector>

#include "cfdgcn/mesh.hpp"

namespace cfdgcn::meshopt {

struct UpdateProjection {
    std::vector<Vec2> projected;
    std::set<int> frozen_nodes;
    int rounds = 0;
    /// Total flipped elements encountered over all rounds.
    std::size_t flipped_elements = 0;
};

/// Elements whose orientation sign differs between `nodes` and `nodes + delta`.
/// A zero orientation after the update counts as flipped. Throws MeshError if an
/// element is already degenerate before the update.
std::vector<int> detect_flips(std::span<const Vec2> nodes, std::span<const Vec2> delta,
                              std::span<const Element> elements);

/// `always_frozen` rows are zeroed before the first round (e.g. boundary nodes).
UpdateProjection project_update(std::span<const Vec2> nodes, std::span<const Vec2> delta,
                                std::span<const Element> elements,
                                std::span<const int> always_frozen = {});

/// Node indices referenced by any marker segment.
std::vector<int> boundary_nodes(const Mesh& mesh);

}  // namespace cfdgcn::meshopt
