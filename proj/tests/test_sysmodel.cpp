#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "modalml/eigen.hpp"
#include "modalml/rng.hpp"
#include "modalml/sysmodel.hpp"

using namespace modalml;
using namespace modalml::sysmodel;

namespace {

// Random point inside the sweep box of a builtin grid.
FeaturePoint random_point(const SystemConfig& cfg, const GridSpec& g, Rng& rng) {
    std::vector<double> lo(cfg.n_features(), 1e300), hi(cfg.n_features(), -1e300);
    for (const auto& ax : g.axes)
        for (const auto& tuple : ax.values)
            for (std::size_t k = 0; k < ax.features.size(); ++k) {
                lo[ax.features[k]] = std::min(lo[ax.features[k]], tuple[k]);
                hi[ax.features[k]] = std::max(hi[ax.features[k]], tuple[k]);
            }
    std::vector<double> v(cfg.n_features());
    for (std::size_t f = 0; f < v.size(); ++f) v[f] = lo[f] + rng.uniform() * (hi[f] - lo[f]);
    return make_point(cfg, v);
}

} // namespace

TEST_CASE("builtin state dimensions", "[sysmodel]") {
    const auto three = *builtin("3bus");
    const auto nine = *builtin("9bus");
    CHECK(three.n_states() == 22);
    CHECK(three.n_features() == 3);
    CHECK(nine.n_states() == 71);
    CHECK(nine.n_features() == 6);
    CHECK_FALSE(builtin("14bus").has_value());

    const auto a = build_state_matrix(three, grid_point(three, three_bus_grid(), 0)).a;
    CHECK(a.rows() == 22);
    CHECK(a.cols() == 22);
    const auto b = build_state_matrix(nine, grid_point(nine, nine_bus_grid(), 17)).a;
    CHECK(b.rows() == 71);
}

TEST_CASE("grid sizes and ordering", "[sysmodel]") {
    const auto three = *builtin("3bus");
    const auto g3 = three_bus_grid();
    CHECK(g3.size() == 2800);
    CHECK(g3.size() == 4 * 7 * 100);
    CHECK(nine_bus_grid().size() == 3675);

    const auto pts = sweep_grid(three, g3);
    REQUIRE(pts.size() == 2800);
    // Lexicographic over feature index: the last feature moves fastest.
    CHECK(pts[0].values[2] == 0.01);
    CHECK(pts[1].values[2] == 0.02);
    CHECK(pts[1].values[0] == pts[0].values[0]);
    CHECK(pts[100].values[1] == 0.05);

    CHECK(sweep_grid(three, std::vector<std::vector<double>>{{0.5}, {0.3}, {0.2}}).size() == 1);
    CHECK_THROWS(sweep_grid(three, std::vector<std::vector<double>>{{0.5}, {}, {0.2}}));
}

TEST_CASE("grid index helpers", "[sysmodel]") {
    const auto g = three_bus_grid();
    for (std::size_t k : {0u, 1u, 99u, 100u, 2799u}) CHECK(g.flat_of(g.index_of(k)) == k);
    CHECK_FALSE(g.parent_of(0).has_value());
    CHECK(*g.parent_of(1) == 0);
    CHECK(*g.parent_of(100) == 0);
    const auto three = *builtin("3bus");
    CHECK(nearest_grid_node(g, grid_point(three, g, 1234)) == 1234);
}

TEST_CASE("share encoding", "[sysmodel]") {
    CHECK(share_from_rating(500.0) == 0.5);
    CHECK(share_from_rating(330.0) == Catch::Approx(330.0 / 830.0));
    CHECK_THROWS(share_from_rating(-1.0));
}

TEST_CASE("determinism and validation", "[sysmodel]") {
    const auto cfg = *builtin("3bus");
    const auto pt = make_point(cfg, {0.4, 0.3, 0.05});
    const auto a = build_state_matrix(cfg, pt).a;
    const auto b = build_state_matrix(cfg, pt).a;
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));

    CHECK_THROWS_AS(build_state_matrix(cfg, make_point(cfg, {0.4, 0.3})), DimensionError);
    CHECK_THROWS_AS(build_state_matrix(cfg, make_point(cfg, {0.4, -0.3, 0.05})), DomainError);
    CHECK_THROWS_AS(build_state_matrix(cfg, make_point(cfg, {1.4, 0.3, 0.05})), DomainError);
}

TEST_CASE("every state carries one group label", "[sysmodel]") {
    for (const char* name : {"3bus", "9bus"}) {
        const auto cfg = *builtin(name);
        REQUIRE_NOTHROW(cfg.validate());
        CHECK(cfg.group_of_state.size() == cfg.n_states());
        for (auto g : cfg.group_of_state) CHECK(g < cfg.groups.size());
    }
}

TEST_CASE("continuity probe stays under the documented bound", "[sysmodel]") {
    Rng rng(3);
    for (const char* name : {"3bus", "9bus"}) {
        const auto cfg = *builtin(name);
        const auto g = *builtin_grid(name);
        const double eps = 1e-6;
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            auto pt = random_point(cfg, g, rng);
            const auto a = build_state_matrix(cfg, pt).a;
            for (std::size_t f = 0; f < cfg.n_features(); ++f) {
                auto q = pt;
                q.values[f] += eps;
                if (q.values[f] > 1.0) q.values[f] -= 2 * eps;
                const auto b = build_state_matrix(cfg, q).a;
                double d = 0.0;
                for (std::size_t i = 0; i < a.data().size(); ++i) d += std::pow(a.data()[i] - b.data()[i], 2);
                worst = std::max(worst, std::sqrt(d) / eps);
            }
        }
        INFO(name << " worst ratio " << worst);
        CHECK(worst <= cfg.lipschitz_bound);
    }
}

TEST_CASE("whole sweep is stable with conjugate-closed spectra", "[sysmodel]") {
    for (const char* name : {"3bus", "9bus"}) {
        const auto cfg = *builtin(name);
        const auto g = *builtin_grid(name);
        std::size_t unstable = 0, unpaired = 0;
        for (std::size_t k = 0; k < g.size(); k += (name[0] == '3' ? 1 : 7)) {
            const auto l = eigen::eigenvalues(build_state_matrix(cfg, grid_point(cfg, g, k)).a);
            for (auto z : l) {
                unstable += z.real() >= 0.0;
                if (z.imag() != 0.0) {
                    const auto it = std::min_element(l.begin(), l.end(), [&](auto u, auto v) {
                        return std::abs(u - std::conj(z)) < std::abs(v - std::conj(z));
                    });
                    unpaired += std::abs(*it - std::conj(z)) > 1e-10 * std::max(1.0, std::abs(z));
                }
            }
        }
        INFO(name);
        CHECK(unstable == 0);
        CHECK(unpaired == 0);
    }
}

TEST_CASE("config and grid JSON round trip", "[sysmodel]") {
    const auto cfg = *builtin("9bus");
    const nlohmann::json j = cfg;
    const auto back = j.get<SystemConfig>();
    const auto pt = make_point(cfg, {0.28, 0.68, 0.5, 0.28, 0.65, 0.02});
    const auto a = build_state_matrix(cfg, pt).a, b = build_state_matrix(back, pt).a;
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));

    const nlohmann::json gj = nine_bus_grid();
    CHECK(gj.get<GridSpec>().hash() == nine_bus_grid().hash());
}
