#include "cfdgcn/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace cfdgcn {

bool Mesh::is_triangular() const {
    return std::all_of(elements.begin(), elements.end(),
                       [](const Element& e) { return e.size == 3; });
}

const Marker* Mesh::find_marker(const std::string& tag) const {
    for (const auto& m : markers) {
        if (m.tag == tag) return &m;
    }
    return nullptr;
}

void Mesh::validate() const {
    const auto n = static_cast<int>(nodes.size());
    for (std::size_t e = 0; e < elements.size(); ++e) {
        const auto vs = elements[e].vertices();
        if (elements[e].size != 3 && elements[e].size != 4) {
            throw MeshError("element " + std::to_string(e) + " has unsupported vertex count");
        }
        for (std::size_t a = 0; a < vs.size(); ++a) {
            if (vs[a] < 0 || vs[a] >= n) {
                throw MeshError("element " + std::to_string(e) + " references node " +
                                std::to_string(vs[a]) + " outside [0, " + std::to_string(n) + ")");
            }
            for (std::size_t b = a + 1; b < vs.size(); ++b) {
                if (vs[a] == vs[b]) {
                    throw MeshError("element " + std::to_string(e) + " repeats vertex " +
                                    std::to_string(vs[a]));
                }
            }
        }
    }
    for (const auto& m : markers) {
        for (const auto& s : m.segments) {
            if (s[0] < 0 || s[0] >= n || s[1] < 0 || s[1] >= n) {
                throw MeshError("marker '" + m.tag + "' references a node outside [0, " +
                                std::to_string(n) + ")");
            }
        }
    }
}

Mesh triangulate(const Mesh& mesh) {
    Mesh out;
    out.nodes = mesh.nodes;
    out.markers = mesh.markers;
    out.elements.reserve(mesh.elements.size() * 2);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& el = mesh.elements[e];
        if (el.size == 3) {
            out.elements.push_back(el);
            continue;
        }
        const auto [a, b, c, d] = el.v;
        if (a == b || a == c || a == d || b == c || b == d || c == d) {
            throw MeshError("degenerate quadrilateral at element " + std::to_string(e));
        }
        out.elements.push_back(Element::triangle(a, b, c));
        out.elements.push_back(Element::triangle(a, c, d));
    }
    return out;
}

Graph build_graph(const Mesh& mesh) {
    Graph g;
    g.num_nodes = mesh.nodes.size();
    for (const auto& el : mesh.elements) {
        const auto vs = el.vertices();
        for (std::size_t i = 0; i < vs.size(); ++i) {
            int a = vs[i];
            int b = vs[(i + 1) % vs.size()];
            if (a > b) std::swap(a, b);
            g.edges.emplace_back(a, b);
        }
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    return g;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    const Vec2 d = p - (a + t * ab);
    return std::sqrt(dot(d, d));
}

std::vector<double> signed_distance(std::span<const Vec2> query, const Mesh& mesh,
                                    const std::string& marker_tag) {
    const Marker* marker = mesh.find_marker(marker_tag);
    if (marker == nullptr) throw MeshError("unknown marker '" + marker_tag + "'");
    if (marker->segments.empty()) throw MeshError("marker '" + marker_tag + "' has no segments");

    std::vector<double> out(query.size(), std::numeric_limits<double>::infinity());
    for (std::size_t q = 0; q < query.size(); ++q) {
        for (const auto& s : marker->segments) {
            out[q] = std::min(out[q], point_segment_distance(query[q], mesh.nodes[s[0]],
                                                             mesh.nodes[s[1]]));
        }
    }
    return out;
}

std::vector<std::vector<Neighbor>> knn(std::span<const Vec2> query,
                                       std::span<const Vec2> reference, std::size_t k) {
    if (k == 0) throw std::invalid_argument("knn: k must be positive");
    if (k > reference.size()) {
        throw std::invalid_argument("knn: k = " + std::to_string(k) + " exceeds reference size " +
                                    std::to_string(reference.size()));
    }
    const auto closer = [](const Neighbor& a, const Neighbor& b) {
        return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    };

    std::vector<std::vector<Neighbor>> out(query.size());
    std::vector<Neighbor> all(reference.size());
#pragma omp parallel for schedule(static) firstprivate(all)
    for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(query.size()); ++q) {
        for (std::size_t r = 0; r < reference.size(); ++r) {
            const Vec2 d = query[q] - reference[r];
            all[r] = {static_cast<int>(r), dot(d, d)};
        }
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                          closer);
        out[q].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return out;
}

double triangle_orientation(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

std::vector<double> element_orientations(std::span<const Vec2> nodes,
                                         std::span<const Element> elements) {
    std::vector<double> out;
    out.reserve(elements.size());
    for (const auto& el : elements) {
        if (el.size != 3) throw MeshError("element_orientations requires a triangular mesh");
        out.push_back(triangle_orientation(nodes[el.v[0]], nodes[el.v[1]], nodes[el.v[2]]));
    }
    return out;
}

namespace {

struct Fnv1a {
    std::uint64_t h = 14695981039346656037ULL;

    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    }
    template <class T>
    void value(const T& v) {
        bytes(&v, sizeof(T));
    }
};

}  // namespace

std::uint64_t mesh_hash(const Mesh& mesh) {
    Fnv1a f;
    f.value(static_cast<std::uint64_t>(mesh.nodes.size()));
    for (const auto& p : mesh.nodes) {
        f.value(p.x);
        f.value(p.y);
    }
    f.value(static_cast<std::uint64_t>(mesh.elements.size()));
    for (const auto& e : mesh.elements) {
        f.value(static_cast<std::int32_t>(e.size));
        for (int v : e.vertices()) f.value(static_cast<std::int32_t>(v));
    }
    f.value(static_cast<std::uint64_t>(mesh.markers.size()));
    for (const auto& m : mesh.markers) {
        f.bytes(m.tag.data(), m.tag.size());
        f.value(static_cast<std::uint64_t>(m.segments.size()));
        for (const auto& s : m.segments) {
            f.value(static_cast<std::int32_t>(s[0]));
            f.value(static_cast<std::int32_t>(s[1]));
        }
    }
    return f.h;
}

}  // namespace cfdgcn
