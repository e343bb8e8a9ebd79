#include <doctest.h>

#include <random>

#include "cfdgcn/gradcheck.hpp"
#include "cfdgcn/upsample.hpp"
#include "helpers.hpp"

using namespace cfdgcn;
using namespace cfdgcn::upsample;

namespace {

std::vector<Vec2> random_points(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec2> p(n);
    for (auto& x : p) x = {u(rng), u(rng)};
    return p;
}

Eigen::MatrixXd positions(const std::vector<Vec2>& p) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(p.size()), 2);
    for (std::size_t i = 0; i < p.size(); ++i) m.row(static_cast<Eigen::Index>(i)) << p[i].x, p[i].y;
    return m;
}

std::vector<Vec2> points(const Eigen::MatrixXd& m) {
    std::vector<Vec2> p(static_cast<std::size_t>(m.rows()));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = {m(static_cast<Eigen::Index>(i), 0), m(static_cast<Eigen::Index>(i), 1)};
    return p;
}

}  // namespace

TEST_CASE("weight examples") {
    const std::vector<Vec2> target = {{0, 0}};
    SUBCASE("equidistant") {
        const std::vector<Vec2> src = {{1, 0}, {-1, 0}};
        const auto plan = build_plan(target, src, 2);
        CHECK(plan.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(plan.weights[1] == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("distances one and two") {
        const std::vector<Vec2> src = {{0, 2}, {1, 0}, {9, 9}};
        const auto plan = build_plan(target, src, 2);
        CHECK(plan.neighbors[0] == 1);
        CHECK(plan.neighbors[1] == 0);
        CHECK(plan.weights[0] == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(plan.weights[1] == doctest::Approx(0.2).epsilon(1e-15));
        Eigen::MatrixXd v(3, 1);
        v << 10.0, 5.0, 1000.0;
        CHECK(apply(plan, v)(0, 0) == doctest::Approx(0.8 * 5.0 + 0.2 * 10.0).epsilon(1e-15));
    }
    SUBCASE("coincident source is copied") {
        const std::vector<Vec2> src = {{1, 0}, {1e-13, 0}, {0, 1}};
        const auto plan = build_plan(target, src, 3);
        CHECK(plan.snapped[0] == 1);
        Eigen::MatrixXd v(3, 2);
        v << 1, 2, 3, 4, 5, 6;
        CHECK(apply(plan, v).row(0) == v.row(1));
    }
    CHECK_THROWS(build_plan(target, std::vector<Vec2>{{1, 0}}, 2));
    CHECK_THROWS(build_plan(target, std::vector<Vec2>{{1, 0}}, 0));
}

TEST_CASE("partition of unity, constants and bounds") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const auto src = random_points(30, rng);
        const auto tgt = random_points(50, rng);
        const std::size_t k = 1 + trial % 5;
        const auto plan = build_plan(tgt, src, k);
        for (std::size_t t = 0; t < plan.num_targets(); ++t) {
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                CHECK(plan.weights[t * k + j] >= 0.0);
                sum += plan.weights[t * k + j];
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-12);
        }
        const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(30, 3, 0.37);
        CHECK((apply(plan, c).array() == 0.37).all());

        const Eigen::MatrixXd v = testing::random_matrix(30, 2, rng);
        const Eigen::MatrixXd out = apply(plan, v);
        for (int c2 = 0; c2 < 2; ++c2) {
            CHECK(out.col(c2).maxCoeff() <= v.col(c2).maxCoeff() + 1e-15);
            CHECK(out.col(c2).minCoeff() >= v.col(c2).minCoeff() - 1e-15);
        }

        // linearity
        const Eigen::MatrixXd w = testing::random_matrix(30, 2, rng);
        CHECK((apply(plan, 2.0 * v - 3.0 * w) - (2.0 * apply(plan, v) - 3.0 * apply(plan, w))).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("targets on the source set reproduce the sources") {
    std::mt19937_64 rng(9);
    const auto src = random_points(40, rng);
    const auto plan = build_plan(src, src, 3);
    const Eigen::MatrixXd v = testing::random_matrix(40, 3, rng);
    CHECK(apply(plan, v) == v);
}

TEST_CASE("reverse pass against finite differences") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        const auto src = random_points(12, rng);
        const auto tgt = random_points(20, rng);
        Eigen::MatrixXd v = testing::random_matrix(12, 3, rng);
        const Eigen::MatrixXd cot = testing::random_matrix(20, 3, rng);
        const auto plan = build_plan(tgt, src, 3);
        const auto g = apply_backward(plan, v, cot);

        auto fv = [&] { return cot.cwiseProduct(apply(plan, v)).sum(); };
        CHECK(gradcheck::check_gradient("values", v, g.d_values, fv, 1e-6).passed());

        // Neighbour sets are fixed in the reverse pass; small steps keep them unchanged.
        Eigen::MatrixXd x = positions(src);
        auto fx = [&] { return cot.cwiseProduct(apply(build_plan(tgt, points(x), 3), v)).sum(); };
        CHECK(gradcheck::check_gradient("positions", x, g.d_positions, fx, 1e-4).passed());
    }
}

TEST_CASE("snapped targets have no position gradient") {
    const std::vector<Vec2> src = {{0, 0}, {1, 0}, {0, 1}};
    const auto plan = build_plan(src, src, 2);
    const auto g = apply_backward(plan, Eigen::MatrixXd::Ones(3, 1), Eigen::MatrixXd::Ones(3, 1));
    CHECK(g.d_positions.isZero(0.0));
    CHECK(g.d_values == Eigen::MatrixXd::Ones(3, 1));
}
