#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "modalml/rng.hpp"
#include "modalml/spline.hpp"
#include "oracles.hpp"

using namespace modalml;
using namespace modalml::spline;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * double(i) / double(n - 1);
    v.back() = b;
    return v;
}

} // namespace

TEST_CASE("order-1 basis is an indicator", "[spline]") {
    const std::vector<double> br{0.0, 1.0};
    const auto kv = augment(br, 1);
    CHECK(basis(kv, 0, 0.0) == 1.0);
    CHECK(basis(kv, 0, 0.5) == 1.0);
    CHECK_THROWS_AS(basis(kv, 0, 1.5), DomainError);
}

TEST_CASE("partition of unity", "[spline]") {
    const std::vector<double> br{0.0, 0.1, 0.35, 0.4, 0.8, 1.0};
    for (int k : {2, 3, 4, 5}) {
        const auto kv = augment(br, k);
        for (double x : linspace(0, 1, 97)) {
            double s = 0;
            for (std::size_t j = 0; j < kv.n_basis(); ++j) s += basis(kv, j, x);
            CHECK(s == Catch::Approx(1.0).margin(1e-14));
        }
    }
}

TEST_CASE("order-3 basis is C1 at a simple knot", "[spline]") {
    const std::vector<double> br{0.0, 0.5, 1.0};
    const auto kv = augment(br, 3);
    const double h = 1e-7, t = 0.5;
    for (std::size_t j = 0; j < kv.n_basis(); ++j) {
        const double left = (basis(kv, j, t) - basis(kv, j, t - h)) / h;
        const double right = (basis(kv, j, t + h) - basis(kv, j, t)) / h;
        CHECK(std::abs(left - right) <= 1e-5);
    }
}

TEST_CASE("knot vector validation", "[spline]") {
    KnotVector kv{{0, 0, 1, 0.5, 1}, 2};
    CHECK_THROWS_AS(kv.validate(), DomainError);
    const std::vector<double> one{0.0};
    CHECK_THROWS_AS(augment(one, 4), DomainError);
}

TEST_CASE("interpolation reproduces data and lines", "[spline]") {
    const auto xs = linspace(0, 1, 5);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2 * x - 1);
    const auto c = interpolate_1d(xs, ys);
    for (double x : linspace(0, 1, 101)) CHECK(std::abs(c(x) - (2 * x - 1)) <= 1e-9);

    Rng rng(3);
    const auto xs2 = linspace(0.01, 1.0, 100);
    std::vector<double> ys2;
    for (std::size_t i = 0; i < xs2.size(); ++i) ys2.push_back(rng.uniform());
    const auto c2 = interpolate_1d(xs2, ys2);
    for (std::size_t i = 0; i < xs2.size(); ++i) CHECK(std::abs(c2(xs2[i]) - ys2[i]) <= 1e-9);

    const std::vector<double> dup{0, 0.5, 0.5, 1};
    CHECK_THROWS(interpolate_1d(dup, std::vector<double>{0, 1, 2, 3}));
}

TEST_CASE("least squares reproduces cubics", "[spline]") {
    const auto xs = linspace(0.01, 1.0, 100);
    const std::vector<double> c{0.3, -1.0, 2.0, 4.0};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(oracle::poly(c, x));
    for (std::size_t nseg : {1u, 3u, 8u, 20u})
        for (bool opt : {false, true}) {
            const auto f = approximate_1d(xs, ys, nseg, 4, opt);
            for (double x : linspace(0.01, 1.0, 57)) CHECK(std::abs(f(x) - oracle::poly(c, x)) <= 1e-9);
        }
}

TEST_CASE("square least squares equals interpolation", "[spline]") {
    const auto xs = linspace(0, 1, 12);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(std::sin(5 * x));
    const auto f = approximate_1d(xs, ys, xs.size() - 3, 4, false);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(f(xs[i]) - ys[i]) <= 1e-9);
}

TEST_CASE("optimized knots fit a sharp bend at least as well", "[spline]") {
    const auto xs = linspace(0, 1, 200);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(std::tanh(20 * (x - 0.5)));
    auto residual = [&](const BSplineCurve& f) {
        double r = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) r += std::pow(f(xs[i]) - ys[i], 2);
        return std::sqrt(r);
    };
    auto near_bend = [](const BSplineCurve& f) {
        std::size_t n = 0;
        for (std::size_t i = std::size_t(f.order()); i < f.knots.n_basis(); ++i) n += std::abs(f.knots.t[i] - 0.5) < 0.15;
        return n;
    };
    for (std::size_t nseg : {4u, 7u, 8u, 12u}) {
        const auto uniform = approximate_1d(xs, ys, nseg, 4, false);
        const auto optimized = approximate_1d(xs, ys, nseg, 4, true);
        CHECK(optimized.knots.n_basis() == uniform.knots.n_basis());
        CHECK(residual(optimized) <= residual(uniform));
        CHECK(near_bend(optimized) >= near_bend(uniform));
    }
    const auto u8 = approximate_1d(xs, ys, 8, 4, false), o8 = approximate_1d(xs, ys, 8, 4, true);
    CHECK(residual(o8) < 0.5 * residual(u8));
}

TEST_CASE("tensor product surfaces", "[spline]") {
    const auto xs = linspace(0, 1, 30), ys = linspace(0.01, 1.0, 7);
    const std::vector<double> g{1.0, -2.0, 0.5}, h{0.2, 1.0};
    RMatrix z(xs.size(), ys.size()), zc(xs.size(), ys.size()), zr(xs.size(), ys.size());
    Rng rng(9);
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < ys.size(); ++j) {
            z(i, j) = oracle::poly(g, xs[i]) * oracle::poly(h, ys[j]);
            zc(i, j) = 3.25;
            zr(i, j) = rng.uniform();
        }
    const auto kx = augment(uniform_breaks(0, 1, 5), 4);
    const auto ky = averaging_knots(ys, 4);
    const auto s = fit_2d(xs, ys, z, kx, ky);
    const auto c = fit_2d(xs, ys, zc, kx, ky);
    for (double x : linspace(0, 1, 20))
        for (double y : linspace(0.01, 1.0, 20)) {
            CHECK(std::abs(s(x, y) - oracle::poly(g, x) * oracle::poly(h, y)) <= 1e-8);
            CHECK(std::abs(c(x, y) - 3.25) <= 1e-12);
        }

    // Either fitting order gives the same surface.
    const auto a = fit_2d(xs, ys, zr, kx, ky, Direction::x_first);
    const auto b = fit_2d(xs, ys, zr, kx, ky, Direction::y_first);
    double worst = 0;
    for (double x : linspace(0, 1, 20))
        for (double y : linspace(0.01, 1.0, 20)) worst = std::max(worst, std::abs(a(x, y) - b(x, y)));
    CHECK(worst <= 1e-8);

    RMatrix holes = zr;
    holes(3, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fit_2d(xs, ys, holes, kx, ky), DomainError);
}

TEST_CASE("spline families interpolate between members", "[spline]") {
    // Two features: swept r and fixed tau; y linear in tau.
    const auto rs = linspace(0.01, 1.0, 25);
    const std::vector<double> taus{0.3, 0.5, 0.7};
    RMatrix x(rs.size() * taus.size(), 2);
    std::vector<double> y;
    std::size_t row = 0;
    for (double t : taus)
        for (double r : rs) {
            x(row, 0) = t;
            x(row, 1) = r;
            y.push_back(std::sin(3 * r) + 2 * t);
            ++row;
        }
    FamilyParams p;
    p.kind = Kind::li1d;
    p.swept = {1};
    const auto fam = fit_family(x, y, p);
    CHECK(fam.n_members() == 3);
    for (double r : {0.1, 0.47, 0.9}) {
        const std::vector<double> on{0.5, r};
        const std::vector<double> mid{0.6, r};
        const std::vector<double> lo{0.5, r}, hi{0.7, r};
        CHECK(fam.predict(mid) == Catch::Approx(0.5 * (fam.predict(lo) + fam.predict(hi))).margin(1e-12));
        CHECK(std::abs(fam.predict(on) - (std::sin(3 * r) + 1.0)) <= 1e-5);
    }
    CHECK(fam.predict(std::vector<double>{0.5, rs[4]}) == Catch::Approx(y[25 + 4]).margin(1e-12));
    CHECK_THROWS_AS(fam.predict(std::vector<double>{0.9, 0.5}), DomainError);
    CHECK_NOTHROW(fam.predict(std::vector<double>{0.9, 0.5}, true));
    CHECK_THROWS_AS(fam.predict(std::vector<double>{0.5}), DimensionError);

    const auto back = family_from_json(nlohmann::json::parse(family_to_json(fam).dump()));
    for (double r : {0.1, 0.47, 0.9}) {
        const std::vector<double> q{0.55, r};
        CHECK(back.predict(q) == fam.predict(q));
    }
}

TEST_CASE("2DLA family reuses 1DLA knots", "[spline]") {
    const auto rs = linspace(0.01, 1.0, 40);
    const std::vector<double> taus{0.01, 0.1, 0.3, 0.5, 0.7, 1.0};
    const std::vector<double> shares{0.3, 0.5};
    RMatrix x(rs.size() * taus.size() * shares.size(), 3);
    std::vector<double> y;
    std::size_t row = 0;
    for (double s : shares)
        for (double t : taus)
            for (double r : rs) {
                x(row, 0) = s, x(row, 1) = t, x(row, 2) = r;
                y.push_back(s + t * t - 0.5 * r * r * r);
                ++row;
            }
    FamilyParams p1;
    p1.kind = Kind::la1d;
    p1.swept = {2};
    const auto one = fit_family(x, y, p1);
    CHECK(one.n_members() == 12);
    FamilyParams p2 = p1;
    p2.kind = Kind::la2d;
    p2.swept = {2, 1};
    const auto two = fit_family(x, y, p2, &one);
    CHECK(two.n_members() == 2);
    for (double r : {0.05, 0.5, 0.95})
        for (double t : {0.2, 0.65}) {
            const std::vector<double> q{0.4, t, r};
            CHECK(std::abs(two.predict(q) - (0.4 + t * t - 0.5 * r * r * r)) <= 1e-9);
        }
}
