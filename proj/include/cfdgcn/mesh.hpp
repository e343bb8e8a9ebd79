#pragma once

/**
 * @file mesh.hpp
 * @brief Unstructured 2-D mesh container, SU2 ASCII I/O and geometric queries.
 */

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfdgcn {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

/// Triangle or quadrilateral. Unused trailing slots hold -1.
struct Element {
    std::array<int, 4> v{-1, -1, -1, -1};
    int size = 3;

    static Element triangle(int a, int b, int c) { return {{a, b, c, -1}, 3}; }
    static Element quad(int a, int b, int c, int d) { return {{a, b, c, d}, 4}; }

    std::span<const int> vertices() const { return {v.data(), static_cast<std::size_t>(size)}; }

    friend bool operator==(const Element&, const Element&) = default;
};

using Segment = std::array<int, 2>;

struct Marker {
    std::string tag;
    std::vector<Segment> segments;

    friend bool operator==(const Marker&, const Marker&) = default;
};

/// Node coordinates, elements and tagged boundary polylines.
struct Mesh {
    std::vector<Vec2> nodes;
    std::vector<Element> elements;
    std::vector<Marker> markers;

    std::size_t num_nodes() const { return nodes.size(); }
    std::size_t num_elements() const { return elements.size(); }

    bool is_triangular() const;
    const Marker* find_marker(const std::string& tag) const;

    /// Throws MeshError if any index is out of range or an element repeats a vertex.
    void validate() const;

    friend bool operator==(const Mesh&, const Mesh&) = default;
};

class MeshError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parse failure carrying the 1-based line number of the offending input.
class ParseError : public MeshError {
public:
    ParseError(std::size_t line, const std::string& what)
        : MeshError("line " + std::to_string(line) + ": " + what), line_(line), detail_(what) {}
    std::size_t line() const { return line_; }
    const std::string& detail() const { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

// SU2 ASCII format ----------------------------------------------------------

Mesh parse_su2(std::istream& in);
Mesh parse_su2_string(const std::string& text);
Mesh read_su2_file(const std::string& path);

void write_su2(std::ostream& out, const Mesh& mesh);
std::string write_su2_string(const Mesh& mesh);
void write_su2_file(const std::string& path, const Mesh& mesh);

// Topology ------------------------------------------------------------------

/// Splits every quad (a,b,c,d) into (a,b,c) and (a,c,d). Nodes and markers are kept.
Mesh triangulate(const Mesh& mesh);

struct Graph {
    std::size_t num_nodes = 0;
    /// Undirected edges with first < second, sorted lexicographically.
    std::vector<std::pair<int, int>> edges;
};

Graph build_graph(const Mesh& mesh);

// Geometry ------------------------------------------------------------------

/// Unsigned distance from each query point to the polyline of the named marker.
/// All nodes of an external-flow mesh lie outside the body, so no sign is applied.
std::vector<double> signed_distance(std::span<const Vec2> query, const Mesh& mesh,
                                    const std::string& marker_tag);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

struct Neighbor {
    int index = -1;
    double dist2 = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// k nearest reference points per query, ascending squared distance, ties by index.
std::vector<std::vector<Neighbor>> knn(std::span<const Vec2> query,
                                       std::span<const Vec2> reference, std::size_t k);

/// Cross product (x_j - x_i) x (x_k - x_i) per triangle; positive for counter-clockwise.
std::vector<double> element_orientations(std::span<const Vec2> nodes,
                                         std::span<const Element> elements);

double triangle_orientation(Vec2 a, Vec2 b, Vec2 c);

/// 64-bit FNV-1a over the mesh's exact binary content.
std::uint64_t mesh_hash(const Mesh& mesh);

}  // namespace cfdgcn
