#include <doctest.h>

#include <random>

#include "cfdgcn/meshopt.hpp"
#include "helpers.hpp"

using namespace cfdgcn;
using namespace cfdgcn::meshopt;

namespace {

/// Sign changes between two coordinate sets, evaluated directly.
int sign_changes(const std::vector<Vec2>& before, const std::vector<Vec2>& after, const std::vector<Element>& els) {
    int n = 0;
    for (const auto& e : els) {
        const double a = triangle_orientation(before[e.v[0]], before[e.v[1]], before[e.v[2]]);
        const double b = triangle_orientation(after[e.v[0]], after[e.v[1]], after[e.v[2]]);
        if ((a > 0) != (b > 0) || b == 0.0) ++n;
    }
    return n;
}

std::vector<Vec2> add(const std::vector<Vec2>& x, const std::vector<Vec2>& d) {
    std::vector<Vec2> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + d[i];
    return out;
}

const std::vector<Vec2> kTri = {{0, 0}, {1, 0}, {0, 1}};
const std::vector<Element> kTriEl = {Element::triangle(0, 1, 2)};

}  // namespace

TEST_CASE("single triangle flip") {
    const std::vector<Vec2> delta = {{0, 0}, {0, 0}, {0.5, -1.5}};
    CHECK(triangle_orientation(kTri[0], kTri[1], kTri[2]) == 1.0);
    const auto moved = add(kTri, delta);
    // (1,0) x (0.5,-0.5) = 1 * (-0.5) - 0 * 0.5
    CHECK(triangle_orientation(moved[0], moved[1], moved[2]) == -0.5);
    CHECK(detect_flips(kTri, delta, kTriEl) == std::vector<int>{0});

    const auto p = project_update(kTri, delta, kTriEl);
    CHECK(p.frozen_nodes == std::set<int>{0, 1, 2});
    for (const auto& d : p.projected) CHECK(d == Vec2{0, 0});
    CHECK(detect_flips(kTri, p.projected, kTriEl).empty());
}

TEST_CASE("no flips for identity and translation") {
    const std::vector<Vec2> zero(3);
    CHECK(detect_flips(kTri, zero, kTriEl).empty());
    const std::vector<Vec2> shift(3, Vec2{3.5, -2.0});
    CHECK(detect_flips(kTri, shift, kTriEl).empty());
    const auto p = project_update(kTri, shift, kTriEl);
    CHECK(p.projected == shift);
    CHECK(p.frozen_nodes.empty());
    CHECK(p.rounds == 1);
}

TEST_CASE("zero area after the update counts as a flip") {
    const std::vector<Vec2> collapse = {{0, 0}, {0, 0}, {0.5, -1.0}};  // (0,1) -> (0.5,0), on the base edge line
    CHECK(detect_flips(kTri, collapse, kTriEl) == std::vector<int>{0});
}

TEST_CASE("degenerate input element is rejected") {
    const std::vector<Vec2> flat = {{0, 0}, {1, 0}, {2, 0}};
    CHECK_THROWS_AS(detect_flips(flat, std::vector<Vec2>(3), kTriEl), MeshError);
}

TEST_CASE("cascade needs a second round") {
    // Brute-force search over random deltas on two triangles sharing an edge for a
    // case where freezing the first flipped triangle makes the other flip.
    const std::vector<Vec2> nodes = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    const std::vector<Element> els = {Element::triangle(0, 1, 2), Element::triangle(1, 3, 2)};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    bool found = false;
    for (int trial = 0; trial < 200000 && !found; ++trial) {
        std::vector<Vec2> delta(4);
        for (auto& d : delta) d = {u(rng), u(rng)};
        const auto first = detect_flips(nodes, delta, els);
        if (first.size() != 1) continue;
        const auto p = project_update(nodes, delta, els);
        if (p.rounds < 3) continue;  // rounds counts the final clean check
        found = true;
        CHECK(p.frozen_nodes == std::set<int>{0, 1, 2, 3});
        CHECK(detect_flips(nodes, p.projected, els).empty());
    }
    CHECK(found);
}

TEST_CASE("randomized safety and idempotence") {
    const Mesh m = triangulate(testing::shipped("naca0012_coarse"));
    const auto boundary = boundary_nodes(m);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> scale(0.01, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    int flips_seen = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const double s = scale(rng);
        std::vector<Vec2> delta(m.num_nodes());
        for (auto& d : delta) d = {s * g(rng), s * g(rng)};
        flips_seen += !detect_flips(m.nodes, delta, m.elements).empty();
        const auto frozen = trial % 2 == 0 ? std::span<const int>(boundary) : std::span<const int>();
        const auto p = project_update(m.nodes, delta, m.elements, frozen);
        CHECK(sign_changes(m.nodes, add(m.nodes, p.projected), m.elements) == 0);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            if (p.frozen_nodes.count(static_cast<int>(i))) {
                CHECK(p.projected[i] == Vec2{0, 0});
            } else {
                CHECK(p.projected[i] == delta[i]);
            }
        }
        for (int b : frozen) CHECK(p.frozen_nodes.count(b) == 1);
        const auto again = project_update(m.nodes, p.projected, m.elements, frozen);
        CHECK(again.projected == p.projected);
        CHECK(again.rounds == 1);
    }
    CHECK(flips_seen > 100);
}

TEST_CASE("boundary nodes") {
    const Mesh m = testing::shipped("naca0012_coarse");
    const auto b = boundary_nodes(m);
    CHECK(b.size() == 32);  // 16 wall + 16 farfield stations
    CHECK(std::is_sorted(b.begin(), b.end()));
}
