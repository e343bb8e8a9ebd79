#pragma once

/**
 * @file meshgen.hpp
 * @brief Structured O-grids around four-digit-style airfoils, written as quad meshes.
 */

#include "cfdgcn/mesh.hpp"

namespace cfdgcn::meshgen {

/// Camber line with maximum `camber` at chord fraction `camber_pos`, closed-edge
/// thickness distribution of maximum `thickness`. Chord spans x in [0, 1].
struct AirfoilShape {
    double camber = 0.0;
    double camber_pos = 0.4;
    double thickness = 0.12;

    static AirfoilShape naca4(const std::string& digits);
};

struct OGridSpec {
    int around = 48;         // nodes around the body (even)
    int radial = 13;         // node rings including body and farfield
    double farfield_radius = 6.0;
    double stretch = 1.35;   // geometric growth of the radial spacing
};

/// Point on the surface at parameter theta; theta = 0 is the trailing edge and the
/// upper surface is traversed first (counter-clockwise).
Vec2 surface_point(const AirfoilShape& shape, double theta);

/// Node j * around + i sits on ring j at station i. Markers "airfoil" (ring 0) and
/// "farfield" (outer ring). Quads are counter-clockwise; the lower half uses the
/// mirrored diagonal so the triangulated mesh of a symmetric body is mirror symmetric
/// under node i <-> (around - i) mod around.
Mesh airfoil_ogrid(const AirfoilShape& shape, const OGridSpec& spec);

/// Unit square split into n x n quads, all boundary segments tagged "farfield".
Mesh farfield_box(int n);

}  // namespace cfdgcn::meshgen
