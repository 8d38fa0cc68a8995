#include <catch2/catch_amalgamated.hpp>

#include "modalml/ensemble.hpp"
#include "modalml/rng.hpp"

using namespace modalml;
using namespace modalml::ensemble;

namespace {

RMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    RMatrix m(r, c);
    for (auto& v : m.data()) v = rng.uniform();
    return m;
}

} // namespace

TEST_CASE("one member without bootstrap is a single tree", "[ensemble]") {
    Rng rng(1);
    const auto x = random_matrix(150, 3, rng), y = random_matrix(150, 4, rng);
    BaggingParams p;
    p.n_trees = 1;
    p.bootstrap = false;
    p.seed = 42;
    const auto e = fit_bagging(x, y, p);
    cart::FitParams fp;
    fp.splitter = cart::Splitter::best_random;
    fp.seed = member_seed(42, 0);
    const auto t = cart::fit(x, y, fp);
    Rng probe(2);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> q{probe.uniform(), probe.uniform(), probe.uniform()};
        const auto a = e.predict(q);
        const auto b = t.predict(q);
        CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST_CASE("prediction is the member mean", "[ensemble]") {
    // A step tree and a one-leaf tree over the same two rows.
    RMatrix x(2, 1), step(2, 1), flat(2, 1);
    x(0, 0) = 0, x(1, 0) = 1;
    step(1, 0) = 1;
    cart::FitParams fp;
    fp.keep_leaf_samples = true;
    const auto a = cart::fit(x, step, fp);
    const auto b = cart::fit(x, flat, fp);
    REQUIRE(a.n_leaves() == 2);
    REQUIRE(b.n_leaves() == 1);
    RMatrix targets(2, 1);
    targets(0, 0) = 3, targets(1, 0) = 3;
    const BaggedEnsemble same({a, b}, {}, targets);
    CHECK(same.predict(std::vector<double>{0.2})[0] == 3.0);
    targets(0, 0) = 0, targets(1, 0) = 1;
    const BaggedEnsemble mixed({a, b}, {}, targets);
    CHECK(mixed.predict(std::vector<double>{0.2})[0] == 0.25);
    CHECK(mixed.predict(std::vector<double>{0.8})[0] == 0.75);
    CHECK(mixed.member(1).predict(std::vector<double>{0.8})[0] == 0.5);
}

TEST_CASE("bootstrap rows", "[ensemble]") {
    const auto r = bootstrap_rows(1000, 7, 3);
    CHECK(r.size() == 1000);
    CHECK(std::is_sorted(r.begin(), r.end()));
    CHECK(r == bootstrap_rows(1000, 7, 3));
    CHECK(r != bootstrap_rows(1000, 7, 4));
    std::vector<std::uint32_t> u(r);
    u.erase(std::unique(u.begin(), u.end()), u.end());
    // About 63% distinct rows.
    CHECK(u.size() > 580);
    CHECK(u.size() < 680);
}

TEST_CASE("determinism and thread independence", "[ensemble]") {
    Rng rng(5);
    const auto x = random_matrix(200, 3, rng), y = random_matrix(200, 5, rng);
    BaggingParams p;
    p.n_trees = 12;
    p.seed = 9;
    p.threads = 1;
    const auto a = fit_bagging(x, y, p);
    p.threads = 4;
    const auto b = fit_bagging(x, y, p);
    CHECK(ensemble_to_json(a).dump() == ensemble_to_json(b).dump());
    for (std::size_t i = 0; i < 20; ++i) CHECK(a.predict(x.row(i)) == b.predict(x.row(i)));
}

TEST_CASE("bagging beats a single tree out of sample", "[ensemble]") {
    Rng rng(6);
    const auto x = random_matrix(400, 3, rng);
    RMatrix y(400, 1);
    for (std::size_t i = 0; i < 400; ++i) y(i, 0) = std::sin(4 * x(i, 0)) * x(i, 1) + 0.1 * (rng.uniform() - 0.5);
    const auto e = fit_bagging(x, y, 50, 3);
    cart::FitParams fp;
    fp.seed = 3;
    const auto t = cart::fit(x, y, fp);
    double se = 0, st = 0;
    for (int i = 0; i < 500; ++i) {
        const std::vector<double> q{rng.uniform(), rng.uniform(), rng.uniform()};
        const double truth = std::sin(4 * q[0]) * q[1];
        se += std::pow(e.predict(q)[0] - truth, 2);
        st += std::pow(t.predict(q)[0] - truth, 2);
    }
    CHECK(se < st);
}

TEST_CASE("JSON round trip", "[ensemble]") {
    Rng rng(8);
    const auto x = random_matrix(120, 3, rng), y = random_matrix(120, 6, rng);
    const auto e = fit_bagging(x, y, 10, 4);
    const auto back = ensemble_from_json(nlohmann::json::parse(ensemble_to_json(e).dump()));
    CHECK(back.n_trees() == 10);
    for (std::size_t i = 0; i < x.rows(); ++i) CHECK(back.predict(x.row(i)) == e.predict(x.row(i)));
    const auto member = e.member(0);
    CHECK(member.has_leaf_values());

    auto bad = ensemble_to_json(e);
    bad["targets"].erase(bad["targets"].begin() + 100, bad["targets"].end());
    CHECK_THROWS_AS(ensemble_from_json(bad), FormatError);
    CHECK_THROWS_AS(fit_bagging(x, y, 0, 1), DomainError);
}
