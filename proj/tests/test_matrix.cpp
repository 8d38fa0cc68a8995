#include <catch2/catch_amalgamated.hpp>

#include "modalml/matrix.hpp"
#include "modalml/rng.hpp"

#ifdef MODALML_HAVE_EIGEN3
#include <Eigen/Dense>
#endif

using namespace modalml;

TEST_CASE("matrix product and transpose", "[matrix]") {
    const RMatrix a{{1, 2}, {3, 4}};
    const RMatrix b{{0, 1}, {1, 0}};
    const RMatrix c = a * b;
    CHECK(c(0, 0) == 2);
    CHECK(c(0, 1) == 1);
    CHECK(c(1, 0) == 4);
    CHECK(a.transposed()(0, 1) == 3);
    CHECK(frobenius_norm(RMatrix::identity(4)) == 2.0);
    CHECK_THROWS_AS(a * RMatrix(3, 3), DimensionError);
}

TEST_CASE("LU detects singular matrices", "[matrix]") {
    const RMatrix s{{1, 2}, {2, 4}};
    CHECK(LuDecomposition<double>(s).singular());
}

#ifdef MODALML_HAVE_EIGEN3
TEST_CASE("LU solve and inverse agree with Eigen3", "[matrix][oracle]") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(30);
        RMatrix a(n, n);
        Eigen::MatrixXd e(n, n);
        std::vector<double> b(n);
        Eigen::VectorXd eb(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) e(i, j) = a(i, j) = rng.uniform() - 0.5 + (i == j ? 2.0 : 0.0);
            eb(i) = b[i] = rng.uniform();
        }
        const LuDecomposition<double> lu(a);
        const auto x = lu.solve(b);
        const Eigen::VectorXd ex = e.partialPivLu().solve(eb);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(x[i] - ex(i)) <= 1e-10);

        const auto inv = lu.inverse();
        const Eigen::MatrixXd einv = e.inverse();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(inv(i, j) - einv(i, j)) <= 1e-9);
    }
}

TEST_CASE("Cholesky solve agrees with Eigen3 LLT", "[matrix][oracle]") {
    Rng rng(5);
    const std::size_t n = 12;
    RMatrix g(n, n);
    for (auto& v : g.data()) v = rng.uniform();
    RMatrix a = g.transposed() * g;
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 1.0;
    Eigen::MatrixXd e(n, n);
    std::vector<double> b(n);
    Eigen::VectorXd eb(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) e(i, j) = a(i, j);
        eb(i) = b[i] = double(i);
    }
    const auto x = cholesky_solve(a, b);
    const Eigen::VectorXd ex = e.llt().solve(eb);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(x[i] - ex(i)) <= 1e-9);
}
#endif
