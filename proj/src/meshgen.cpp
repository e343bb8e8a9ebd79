#include "cfdgcn/meshgen.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cfdgcn::meshgen {

AirfoilShape AirfoilShape::naca4(const std::string& digits) {
    if (digits.size() != 4 || digits.find_first_not_of("0123456789") != std::string::npos) {
        throw std::invalid_argument("expected four digits, got '" + digits + "'");
    }
    AirfoilShape s;
    s.camber = (digits[0] - '0') / 100.0;
    s.camber_pos = (digits[1] - '0') / 10.0;
    s.thickness = std::stoi(digits.substr(2)) / 100.0;
    if (s.camber > 0.0 && s.camber_pos <= 0.0) throw std::invalid_argument("cambered section needs a camber position");
    return s;
}

namespace {

Vec2 surface_at(const AirfoilShape& shape, double x, double side) {
    const double t = shape.thickness;
    // -0.1036 closes the trailing edge.
    const double yt = 5.0 * t *
                      (0.2969 * std::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x -
                       0.1036 * x * x * x * x);
    double yc = 0.0, slope = 0.0;
    const double m = shape.camber, p = shape.camber_pos;
    if (m > 0.0) {
        if (x < p) {
            yc = m / (p * p) * (2.0 * p * x - x * x);
            slope = 2.0 * m / (p * p) * (p - x);
        } else {
            yc = m / ((1 - p) * (1 - p)) * (1.0 - 2.0 * p + 2.0 * p * x - x * x);
            slope = 2.0 * m / ((1 - p) * (1 - p)) * (p - x);
        }
    }
    const double phi = std::atan(slope);
    return {x - side * yt * std::sin(phi), yc + side * yt * std::cos(phi)};
}

}  // namespace

Vec2 surface_point(const AirfoilShape& shape, double theta) {
    return surface_at(shape, 0.5 * (1.0 + std::cos(theta)), std::sin(theta) >= 0.0 ? 1.0 : -1.0);
}

Mesh airfoil_ogrid(const AirfoilShape& shape, const OGridSpec& spec) {
    const int nt = spec.around, nr = spec.radial;
    if (nt < 4 || nt % 2 != 0) throw std::invalid_argument("around must be even and >= 4");
    if (nr < 2) throw std::invalid_argument("radial must be >= 2");
    if (!(spec.stretch > 0.0) || !(spec.farfield_radius > 1.0)) throw std::invalid_argument("bad O-grid spec");

    Mesh mesh;
    mesh.nodes.resize(static_cast<std::size_t>(nt) * nr);
    const double total = spec.stretch == 1.0 ? nr - 1.0 : (std::pow(spec.stretch, nr - 1) - 1.0) / (spec.stretch - 1.0);
    for (int j = 0; j < nr; ++j) {
        const double acc = spec.stretch == 1.0 ? j : (std::pow(spec.stretch, j) - 1.0) / (spec.stretch - 1.0);
        const double s = acc / total;
        for (int i = 0; i < nt; ++i) {
            // Exact angles at the mirror stations keep symmetric bodies bitwise symmetric.
            const int im = i <= nt / 2 ? i : nt - i;
            const double theta = 2.0 * std::numbers::pi * im / nt;
            const double side = i <= nt / 2 ? 1.0 : -1.0;
            const Vec2 body = surface_at(shape, 0.5 * (1.0 + std::cos(theta)), side);
            const Vec2 far{0.5 + spec.farfield_radius * std::cos(theta), side * spec.farfield_radius * std::sin(theta)};
            mesh.nodes[static_cast<std::size_t>(j * nt + i)] = (1.0 - s) * body + s * far;
        }
    }

    auto id = [nt](int i, int j) { return j * nt + (i % nt); };
    for (int j = 0; j + 1 < nr; ++j) {
        for (int i = 0; i < nt; ++i) {
            if (i < nt / 2) {
                mesh.elements.push_back(Element::quad(id(i, j), id(i, j + 1), id(i + 1, j + 1), id(i + 1, j)));
            } else {
                mesh.elements.push_back(Element::quad(id(i + 1, j), id(i, j), id(i, j + 1), id(i + 1, j + 1)));
            }
        }
    }
    Marker wall{"airfoil", {}}, far{"farfield", {}};
    for (int i = 0; i < nt; ++i) {
        wall.segments.push_back({id(i, 0), id(i + 1, 0)});
        far.segments.push_back({id(i, nr - 1), id(i + 1, nr - 1)});
    }
    mesh.markers = {wall, far};
    mesh.validate();
    return mesh;
}

Mesh farfield_box(int n) {
    if (n < 1) throw std::invalid_argument("farfield_box needs n >= 1");
    Mesh mesh;
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) mesh.nodes.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) mesh.elements.push_back(Element::quad(id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)));
    }
    Marker far{"farfield", {}};
    for (int i = 0; i < n; ++i) {
        far.segments.push_back({id(i, 0), id(i + 1, 0)});
        far.segments.push_back({id(n, i), id(n, i + 1)});
        far.segments.push_back({id(i + 1, n), id(i, n)});
        far.segments.push_back({id(0, i + 1), id(0, i)});
    }
    mesh.markers = {far};
    return mesh;
}

}  // namespace cfdgcn::meshgen
