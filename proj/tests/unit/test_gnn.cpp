#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "cfdgcn/gnn.hpp"
#include "cfdgcn/gradcheck.hpp"
#include "helpers.hpp"

using namespace cfdgcn;
using namespace cfdgcn::gnn;

namespace {

Graph random_graph(std::mt19937_64& rng, int max_nodes) {
    std::uniform_int_distribution<int> nn(1, max_nodes);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Graph g;
    g.num_nodes = static_cast<std::size_t>(nn(rng));
    const double density = u(rng);
    for (int i = 0; i < static_cast<int>(g.num_nodes); ++i) {
        for (int j = i + 1; j < static_cast<int>(g.num_nodes); ++j) {
            if (u(rng) < density) g.edges.emplace_back(i, j);
        }
    }
    return g;
}

/// D^-1/2 (A + I) D^-1/2 assembled densely.
Matrix dense_b(const Graph& g) {
    const auto n = static_cast<Eigen::Index>(g.num_nodes);
    Matrix a = Matrix::Identity(n, n);
    for (auto [i, j] : g.edges) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
    }
    const Eigen::VectorXd d = a.rowwise().sum();
    Matrix b(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) b(i, j) = a(i, j) / std::sqrt(d(i) * d(j));
    }
    return b;
}

Graph ring_with_chords() {
    Graph g;
    g.num_nodes = 8;
    for (int i = 0; i < 8; ++i) g.edges.emplace_back(i, (i + 1) % 8);
    g.edges.emplace_back(0, 4);
    g.edges.emplace_back(2, 6);
    return g;
}

}  // namespace

TEST_CASE("normalized adjacency examples") {
    Graph two;
    two.num_nodes = 2;
    two.edges = {{0, 1}};
    const auto b2 = normalized_adjacency(two);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) CHECK(b2.coeff(i, j) == doctest::Approx(0.5).epsilon(1e-15));
    }

    Graph lonely;
    lonely.num_nodes = 3;
    const auto b3 = normalized_adjacency(lonely);
    CHECK(Matrix(b3.matrix()).isIdentity(0.0));

    Graph path;  // 0 - 1 - 2: degrees 2, 3, 2
    path.num_nodes = 3;
    path.edges = {{0, 1}, {1, 2}};
    const auto bp = normalized_adjacency(path);
    CHECK(bp.coeff(0, 0) == doctest::Approx(0.5));
    CHECK(bp.coeff(1, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(bp.coeff(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
    CHECK(bp.coeff(0, 2) == 0.0);
}

TEST_CASE("sparse forward equals the dense evaluation") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const Graph g = random_graph(rng, 12);
        const auto n = static_cast<Eigen::Index>(g.num_nodes);
        const Matrix z = testing::random_matrix(n, 4, rng);
        GcnLayer layer{testing::random_matrix(4, 3, rng), testing::random_matrix(1, 3, rng)};
        const Matrix dense = (dense_b(g) * z * layer.weight).rowwise() + layer.bias;
        const auto adj = normalized_adjacency(g);
        CHECK((Matrix(adj.matrix()) - dense_b(g)).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((gcn_forward(adj, z, layer, false) - dense).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((gcn_forward(adj, z, layer, true) - dense.cwiseMax(0.0)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("adjacency is symmetric with spectrum in [-1, 1]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Graph g = random_graph(rng, 12);
        const Matrix b = normalized_adjacency(g).matrix();
        CHECK((b - b.transpose()).cwiseAbs().maxCoeff() == 0.0);
        const Eigen::SelfAdjointEigenSolver<Matrix> es(b);
        CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
        CHECK(es.eigenvalues().minCoeff() >= -1.0 - 1e-12);
    }
}

TEST_CASE("glorot and zeros initialisation") {
    std::mt19937_64 rng(1);
    const auto l = GcnLayer::glorot(5, 7, rng);
    CHECK(l.weight.rows() == 5);
    CHECK(l.weight.cols() == 7);
    CHECK(l.bias.size() == 7);
    CHECK(l.bias.isZero(0.0));
    CHECK(l.weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 12.0));
    CHECK(GcnLayer::zeros(2, 3).weight.isZero(0.0));
}

TEST_CASE("backward against finite differences") {
    const Graph g = ring_with_chords();
    const auto adj = normalized_adjacency(g);
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        for (bool relu : {false, true}) {
            CAPTURE(seed);
            CAPTURE(relu);
            std::mt19937_64 rng(seed);
            Matrix z = testing::random_matrix(8, 3, rng);
            GcnLayer layer{testing::random_matrix(3, 4, rng), testing::random_matrix(1, 4, rng, -0.2, 0.2)};
            const Matrix cot = testing::random_matrix(8, 4, rng);
            const Matrix out = gcn_forward(adj, z, layer, relu);
            const auto grads = gcn_backward(adj, z, layer, relu, out, cot);
            auto f = [&] { return cot.cwiseProduct(gcn_forward(adj, z, layer, relu)).sum(); };
            const double tol = relu ? 1e-4 : 1e-6;
            CHECK(gradcheck::check_gradient("input", z, grads.d_input, f, tol).passed());
            CHECK(gradcheck::check_gradient("weight", layer.weight, grads.d_weight, f, tol).passed());
            Matrix bias = layer.bias;
            auto fb = [&] {
                GcnLayer l2 = layer;
                l2.bias = bias;
                return cot.cwiseProduct(gcn_forward(adj, z, l2, relu)).sum();
            };
            CHECK(gradcheck::check_gradient("bias", bias, Matrix(grads.d_bias), fb, tol).passed());
        }
    }
}

TEST_CASE("dead relu passes no gradient") {
    const Graph g = ring_with_chords();
    const auto adj = normalized_adjacency(g);
    std::mt19937_64 rng(8);
    const Matrix z = testing::random_matrix(8, 3, rng);
    GcnLayer layer{testing::random_matrix(3, 2, rng), RowVector::Constant(2, -100.0)};
    const Matrix out = gcn_forward(adj, z, layer, true);
    CHECK(out.isZero(0.0));
    const auto grads = gcn_backward(adj, z, layer, true, out, Matrix::Ones(8, 2));
    CHECK(grads.d_input.isZero(0.0));
    CHECK(grads.d_weight.isZero(0.0));
    CHECK(grads.d_bias.isZero(0.0));
}

TEST_CASE("permutation equivariance") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Graph g = random_graph(rng, 12);
        const auto n = static_cast<int>(g.num_nodes);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Graph pg;
        pg.num_nodes = g.num_nodes;
        for (auto [i, j] : g.edges) pg.edges.emplace_back(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);

        const Matrix z = testing::random_matrix(n, 3, rng);
        Matrix pz(n, 3);
        for (int i = 0; i < n; ++i) pz.row(perm[static_cast<std::size_t>(i)]) = z.row(i);
        GcnLayer layer{testing::random_matrix(3, 2, rng), testing::random_matrix(1, 2, rng)};
        const Matrix a = gcn_forward(normalized_adjacency(g), z, layer, true);
        const Matrix b = gcn_forward(normalized_adjacency(pg), pz, layer, true);
        for (int i = 0; i < n; ++i) CHECK((b.row(perm[static_cast<std::size_t>(i)]) - a.row(i)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("adam") {
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};

    SUBCASE("zero gradient leaves parameters") {
        std::vector<Matrix> p = {Matrix::Constant(2, 2, 3.0)};
        auto st = AdamState::like(p, cfg);
        const std::vector<Matrix> g = {Matrix::Zero(2, 2)};
        CHECK(adam_step(p, g, st));
        CHECK(p[0] == Matrix::Constant(2, 2, 3.0));
        CHECK(st.step == 1);
    }
    SUBCASE("first step moves by lr against the gradient sign") {
        std::vector<Matrix> p = {Matrix::Zero(1, 3)};
        auto st = AdamState::like(p, cfg);
        Matrix g(1, 3);
        g << 5.0, -0.2, 1e-3;
        CHECK(adam_step(p, std::vector<Matrix>{g}, st));
        // bias-corrected m/sqrt(v) = g/|g| on the first step
        CHECK(p[0](0) == doctest::Approx(-0.01).epsilon(1e-6));
        CHECK(p[0](1) == doctest::Approx(0.01).epsilon(1e-6));
        CHECK(p[0](2) == doctest::Approx(-0.01 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-6));
    }
    SUBCASE("descends x^2") {
        std::vector<Matrix> p = {Matrix::Constant(1, 1, 2.0)};
        auto st = AdamState::like(p, AdamConfig{0.05});
        for (int i = 0; i < 2000; ++i) adam_step(p, std::vector<Matrix>{2.0 * p[0]}, st);
        CHECK(std::fabs(p[0](0)) < 1e-2);
    }
    SUBCASE("non-finite gradient skips the step") {
        std::vector<Matrix> p = {Matrix::Ones(1, 2), Matrix::Ones(1, 1)};
        auto st = AdamState::like(p, cfg);
        CHECK(adam_step(p, std::vector<Matrix>{Matrix::Ones(1, 2), Matrix::Ones(1, 1)}, st));
        const auto before = p;
        const auto moments = st.m;
        Matrix bad = Matrix::Ones(1, 1);
        bad(0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_FALSE(adam_step(p, std::vector<Matrix>{Matrix::Ones(1, 2), bad}, st));
        CHECK(p == before);
        CHECK(st.m == moments);
        CHECK(st.step == 1);
        bad(0) = std::numeric_limits<double>::infinity();
        CHECK_FALSE(adam_deltas(std::vector<Matrix>{Matrix::Ones(1, 2), bad}, st).has_value());
    }
    SUBCASE("moments are kept per tensor") {
        std::vector<Matrix> p = {Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
        auto st = AdamState::like(p, cfg);
        adam_step(p, std::vector<Matrix>{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 100.0)}, st);
        CHECK(st.m[0](0) == doctest::Approx(0.1));
        CHECK(st.m[1](0) == doctest::Approx(10.0));
        CHECK(st.v[1](0) == doctest::Approx(10.0));
    }
}
