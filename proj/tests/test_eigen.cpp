#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <complex>

#include "modalml/eigen.hpp"
#include "modalml/rng.hpp"

#ifdef MODALML_HAVE_EIGEN3
#include <Eigen/Dense>
#endif

using namespace modalml;
using Catch::Approx;

namespace {

RMatrix random_matrix(std::size_t n, Rng& rng) {
    RMatrix a(n, n);
    for (auto& v : a.data()) v = 2.0 * rng.uniform() - 1.0;
    return a;
}

double residual(const RMatrix& a, const CMatrix& phi, std::size_t m, Complex lambda) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        Complex r = -lambda * phi(i, m);
        for (std::size_t j = 0; j < a.cols(); ++j) r += a(i, j) * phi(j, m);
        s += std::norm(r);
    }
    return std::sqrt(s);
}

} // namespace

TEST_CASE("2x2 companion matrix has roots -1 +- i", "[eigen]") {
    const RMatrix a{{0, 1}, {-2, -2}};
    const auto l = eigen::eigenvalues(a);
    REQUIRE(l.size() == 2);
    CHECK(l[0].real() == Approx(-1.0).margin(1e-12));
    CHECK(std::abs(l[0].imag()) == Approx(1.0).margin(1e-12));
    CHECK(l[0] == std::conj(l[1]));

    const auto pairs = eigen::eigenvectors(a);
    for (std::size_t m = 0; m < 2; ++m) CHECK(residual(a, pairs.phi, m, pairs.lambdas[m]) <= 1e-10);
}

TEST_CASE("diagonal matrices", "[eigen]") {
    const RMatrix a{{-1, 0, 0}, {0, -2, 0}, {0, 0, -3}};
    const auto l = eigen::eigenvalues(a);
    std::vector<double> re;
    for (auto z : l) {
        CHECK(z.imag() == 0.0);
        re.push_back(z.real());
    }
    std::sort(re.begin(), re.end());
    CHECK(re == std::vector<double>{-3, -2, -1});

    const RMatrix d{{-1, 0}, {0, -2}};
    const auto sol = eigen::modal_analysis(d, std::vector<std::size_t>{0, 1});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t m = 0; m < 2; ++m) CHECK(sol.p(n, m) == (std::abs(sol.phi(n, m)) > 0.5 ? 1.0 : 0.0));
    // Each mode belongs to exactly one state.
    CHECK(sol.dominant[0].size() == 1);
    CHECK(sol.dominant[1].size() == 1);
    CHECK(sol.dominant[0] != sol.dominant[1]);
}

TEST_CASE("symmetric matrix: orthogonal right vectors, psi = phi^T", "[eigen]") {
    const RMatrix a{{2, 1, 0}, {1, 3, 1}, {0, 1, 4}};
    const auto pairs = eigen::eigenvectors(a);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            Complex dot = 0;
            for (std::size_t k = 0; k < 3; ++k) dot += std::conj(pairs.phi(k, i)) * pairs.phi(k, j);
            CHECK(std::abs(dot) == Approx(i == j ? 1.0 : 0.0).margin(1e-10));
            CHECK(std::abs(pairs.psi(i, j) - pairs.phi(j, i)) <= 1e-10);
        }
}

TEST_CASE("raw participation columns sum to one", "[eigen]") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_matrix(2 + rng.below(20), rng);
        const auto pairs = eigen::eigenvectors(a);
        const auto raw = eigen::participation_raw(pairs.phi, pairs.psi);
        for (std::size_t m = 0; m < raw.cols(); ++m) {
            Complex s = 0;
            for (std::size_t n = 0; n < raw.rows(); ++n) s += raw(n, m);
            CHECK(std::abs(s - Complex(1.0)) <= 1e-8);
        }
        const auto p = eigen::participation_matrix(pairs.phi, pairs.psi);
        for (std::size_t m = 0; m < p.cols(); ++m) {
            double mx = 0;
            for (std::size_t n = 0; n < p.rows(); ++n) mx = std::max(mx, p(n, m));
            CHECK(mx == 1.0);
        }
    }
}

TEST_CASE("dominant groups by threshold", "[eigen]") {
    RMatrix p(3, 1);
    p(0, 0) = 1.0;  // SG mechanics
    p(1, 0) = 0.4;  // VSC controllers
    p(2, 0) = 0.1;
    const std::vector<std::size_t> groups{2, 1, 0};
    CHECK(eigen::dominant_groups(p, groups, 0.3)[0] == eigen::GroupSet{1, 2});
    CHECK_THROWS_AS(eigen::dominant_groups(p, groups, 1.0 + 1e-12), DomainError);
    CHECK_THROWS_AS(eigen::dominant_groups(p, std::vector<std::size_t>{0}, 0.3), DimensionError);
}

TEST_CASE("pole tracking", "[eigen]") {
    const std::vector<Complex> ref{{-1, 2}, {-1, -2}, {-3, 0}};
    CHECK(eigen::track_poles(ref, ref) == std::vector<std::size_t>{0, 1, 2});

    std::vector<Complex> shifted;
    for (auto z : ref) shifted.push_back(z + 0.01);
    CHECK(eigen::track_poles(ref, shifted) == std::vector<std::size_t>{0, 1, 2});

    const std::vector<Complex> rev(ref.rbegin(), ref.rend());
    CHECK(eigen::track_poles(ref, rev) == std::vector<std::size_t>{2, 1, 0});
}

TEST_CASE("invalid input", "[eigen]") {
    CHECK_THROWS_AS(eigen::eigenvalues(RMatrix(2, 3)), DimensionError);
    RMatrix a(2, 2);
    a(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(eigen::eigenvalues(a), DomainError);
}

#ifdef MODALML_HAVE_EIGEN3
TEST_CASE("eigenvalues agree with Eigen3 on random matrices", "[eigen][oracle]") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(39);
        const auto a = random_matrix(n, rng);
        Eigen::MatrixXd e(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) e(i, j) = a(i, j);
        Eigen::EigenSolver<Eigen::MatrixXd> es(e, false);
        REQUIRE(es.info() == Eigen::Success);
        std::vector<Complex> ours = eigen::eigenvalues(a), theirs;
        for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) theirs.push_back(es.eigenvalues()[k]);
        // Greedy nearest matching; random matrices have well-separated spectra.
        const double scale = frobenius_norm(a);
        for (auto z : ours) {
            auto it = std::min_element(theirs.begin(), theirs.end(),
                                       [&](Complex u, Complex v) { return std::abs(u - z) < std::abs(v - z); });
            CHECK(std::abs(*it - z) <= 1e-9 * scale);
            theirs.erase(it);
        }
    }
}
#endif
