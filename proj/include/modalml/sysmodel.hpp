#pragma once

// Parameterized surrogate of a linearized converter-based power system.
//
// A(theta) is assembled from damped second-order oscillator blocks
//     [[0, w], [-w, -2 zeta w]]          (eigenvalues -zeta w +- i w sqrt(1 - zeta^2))
// and first-order lags (-1/tau on the diagonal), plus sparse cross-block
// coupling entries. Every block parameter and coupling gain is a polynomial in
// the features with real exponents, offset + sum_k scale_k * prod_f x_f^p_kf,
// which is smooth on the positive orthant the features live in.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modalml/error.hpp"
#include "modalml/matrix.hpp"

namespace modalml::sysmodel {

enum class FeatureKind { share, time_constant, droop };

NLOHMANN_JSON_SERIALIZE_ENUM(FeatureKind, {{FeatureKind::share, "share"},
                                           {FeatureKind::time_constant, "time_constant"},
                                           {FeatureKind::droop, "droop"}})

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::share;
};

struct FeaturePoint {
    std::vector<double> values;
    std::vector<std::string> names;

    friend bool operator==(const FeaturePoint&, const FeaturePoint&) = default;
};

struct Term {
    double scale = 0.0;
    std::vector<double> powers;  ///< one exponent per feature, missing entries are 0
};

/// offset + sum_k scale_k * prod_f x_f^powers_kf
struct Coefficient {
    double offset = 0.0;
    std::vector<Term> terms;

    double operator()(std::span<const double> x) const {
        double v = offset;
        for (const auto& t : terms) {
            double prod = t.scale;
            for (std::size_t f = 0; f < t.powers.size() && f < x.size(); ++f)
                if (t.powers[f] != 0.0) prod *= std::pow(x[f], t.powers[f]);
            v += prod;
        }
        return v;
    }
};

enum class BlockKind { oscillator, lag };

NLOHMANN_JSON_SERIALIZE_ENUM(BlockKind, {{BlockKind::oscillator, "oscillator"}, {BlockKind::lag, "lag"}})

/// Oscillators occupy states first_state and first_state + 1 and use omega and
/// zeta; lags occupy first_state and use tau.
struct Block {
    std::string label;
    BlockKind kind = BlockKind::lag;
    std::size_t first_state = 0;
    Coefficient omega, zeta, tau;

    std::size_t width() const noexcept { return kind == BlockKind::oscillator ? 2 : 1; }
};

struct Coupling {
    std::size_t row = 0, col = 0;
    Coefficient gain;
};

struct SystemConfig {
    static constexpr int schema_version = 1;

    std::string name;
    std::vector<FeatureSpec> features;
    std::vector<std::string> groups;
    std::vector<std::size_t> group_of_state;
    std::vector<Block> blocks;
    std::vector<Coupling> couplings;
    /// Bound on ||A(x + eps e_f) - A(x)||_F / eps over the documented sweep box.
    double lipschitz_bound = 0.0;

    std::size_t n_states() const noexcept { return group_of_state.size(); }
    std::size_t n_features() const noexcept { return features.size(); }

    std::vector<std::string> feature_names() const {
        std::vector<std::string> out;
        for (const auto& f : features) out.push_back(f.name);
        return out;
    }

    /// Throws if blocks do not tile the state vector or indices are invalid.
    void validate() const {
        const std::size_t n = n_states();
        std::vector<int> covered(n, 0);
        for (const auto& b : blocks) {
            detail::require(b.first_state + b.width() <= n, "SystemConfig: block '" + b.label + "' exceeds state count");
            for (std::size_t k = 0; k < b.width(); ++k) ++covered[b.first_state + k];
        }
        for (std::size_t i = 0; i < n; ++i)
            detail::require(covered[i] == 1, "SystemConfig: state " + std::to_string(i) + " is not covered by exactly one block");
        for (const auto g : group_of_state)
            detail::require(g < groups.size(), "SystemConfig: group label out of range");
        for (const auto& c : couplings)
            detail::require(c.row < n && c.col < n && c.row != c.col, "SystemConfig: invalid coupling index");
    }
};

struct StateMatrix {
    RMatrix a;
    std::string config_name;
    FeaturePoint features;
};

/// S_SG / (S_SG + S_VSC), the share encoding used at the system boundary.
inline double share_from_rating(double s_sg_mva, double s_vsc_mva = 500.0) {
    detail::require(s_sg_mva > 0.0 && s_vsc_mva > 0.0, "share_from_rating: ratings must be positive");
    return s_sg_mva / (s_sg_mva + s_vsc_mva);
}

inline void validate_point(const SystemConfig& cfg, const FeaturePoint& pt) {
    detail::require_dims(pt.values.size() == cfg.n_features(),
                         "feature point has " + std::to_string(pt.values.size()) + " values, configuration '" +
                             cfg.name + "' expects " + std::to_string(cfg.n_features()));
    detail::require_dims(pt.names.empty() || pt.names.size() == pt.values.size(),
                         "feature point names and values differ in length");
    for (std::size_t f = 0; f < pt.values.size(); ++f) {
        const double v = pt.values[f];
        const auto& spec = cfg.features[f];
        bool ok = std::isfinite(v);
        switch (spec.kind) {
            case FeatureKind::share:
            case FeatureKind::droop: ok = ok && v > 0.0 && v <= 1.0; break;
            case FeatureKind::time_constant: ok = ok && v > 0.0; break;
        }
        if (!ok) throw DomainError("feature '" + spec.name + "' out of range: " + std::to_string(v));
    }
}

inline FeaturePoint make_point(const SystemConfig& cfg, std::vector<double> values) {
    return FeaturePoint{std::move(values), cfg.feature_names()};
}

inline StateMatrix build_state_matrix(const SystemConfig& cfg, const FeaturePoint& pt) {
    validate_point(cfg, pt);
    const std::size_t n = cfg.n_states();
    const std::span<const double> x = pt.values;
    RMatrix a(n, n);
    for (const auto& b : cfg.blocks) {
        const std::size_t i = b.first_state;
        if (b.kind == BlockKind::oscillator) {
            const double w = b.omega(x), z = b.zeta(x);
            a(i, i + 1) = w;
            a(i + 1, i) = -w;
            a(i + 1, i + 1) = -2.0 * z * w;
        } else {
            a(i, i) = -1.0 / b.tau(x);
        }
    }
    for (const auto& c : cfg.couplings) a(c.row, c.col) += c.gain(x);
    if (!all_finite(a)) throw NumericalError("build_state_matrix: non-finite entry for configuration " + cfg.name);
    return StateMatrix{std::move(a), cfg.name, pt};
}

// ---------------------------------------------------------------------------
// Sweep grids

/// One grid axis. An axis usually drives a single feature; linked axes move
/// several features together (one tuple per grid step).
struct GridAxis {
    std::vector<std::size_t> features;
    std::vector<std::vector<double>> values;
};

struct GridSpec {
    std::vector<GridAxis> axes;

    static GridSpec per_feature(const std::vector<std::vector<double>>& lists) {
        GridSpec g;
        for (std::size_t f = 0; f < lists.size(); ++f) {
            GridAxis ax;
            ax.features = {f};
            for (double v : lists[f]) ax.values.push_back({v});
            g.axes.push_back(std::move(ax));
        }
        return g;
    }

    std::size_t size() const {
        std::size_t n = axes.empty() ? 0 : 1;
        for (const auto& ax : axes) n *= ax.values.size();
        return n;
    }

    /// Axis step indices of flat point k (last axis fastest).
    std::vector<std::size_t> index_of(std::size_t k) const {
        std::vector<std::size_t> idx(axes.size());
        for (std::size_t a = axes.size(); a-- > 0;) {
            idx[a] = k % axes[a].values.size();
            k /= axes[a].values.size();
        }
        return idx;
    }

    std::size_t flat_of(std::span<const std::size_t> idx) const {
        std::size_t k = 0;
        for (std::size_t a = 0; a < axes.size(); ++a) k = k * axes[a].values.size() + idx[a];
        return k;
    }

    /// Grid neighbour one step back along the rightmost non-zero axis index;
    /// empty for the origin. Every parent precedes its child in sweep order.
    std::optional<std::size_t> parent_of(std::size_t k) const {
        auto idx = index_of(k);
        for (std::size_t a = idx.size(); a-- > 0;)
            if (idx[a] > 0) {
                --idx[a];
                return flat_of(idx);
            }
        return std::nullopt;
    }

    /// FNV-1a over the axis layout and value bits; recorded as DB provenance.
    std::string hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&](std::uint64_t v) {
            for (int b = 0; b < 8; ++b) {
                h ^= (v >> (8 * b)) & 0xffu;
                h *= 1099511628211ULL;
            }
        };
        for (const auto& ax : axes) {
            mix(ax.features.size());
            for (auto f : ax.features) mix(f);
            mix(ax.values.size());
            for (const auto& tup : ax.values)
                for (double v : tup) {
                    std::uint64_t bits;
                    std::memcpy(&bits, &v, sizeof bits);
                    mix(bits);
                }
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    void validate(const SystemConfig& cfg) const {
        detail::require(!axes.empty(), "grid: no axes given");
        std::vector<int> seen(cfg.n_features(), 0);
        for (const auto& ax : axes) {
            detail::require(!ax.values.empty(), "grid: empty value list");
            for (auto f : ax.features) {
                detail::require(f < cfg.n_features(), "grid: feature index out of range");
                ++seen[f];
            }
            for (const auto& tup : ax.values)
                detail::require_dims(tup.size() == ax.features.size(), "grid: value tuple width mismatch");
        }
        for (std::size_t f = 0; f < seen.size(); ++f)
            detail::require(seen[f] == 1, "grid: feature '" + cfg.features[f].name + "' must appear on exactly one axis");
    }
};

inline FeaturePoint grid_point(const SystemConfig& cfg, const GridSpec& grid, std::size_t k) {
    const auto idx = grid.index_of(k);
    std::vector<double> values(cfg.n_features());
    for (std::size_t a = 0; a < grid.axes.size(); ++a)
        for (std::size_t j = 0; j < grid.axes[a].features.size(); ++j)
            values[grid.axes[a].features[j]] = grid.axes[a].values[idx[a]][j];
    return make_point(cfg, std::move(values));
}

/// Full Cartesian product in lexicographic order over axes, last axis fastest.
inline std::vector<FeaturePoint> sweep_grid(const SystemConfig& cfg, const GridSpec& grid) {
    grid.validate(cfg);
    std::vector<FeaturePoint> out;
    out.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) out.push_back(grid_point(cfg, grid, k));
    return out;
}

inline std::vector<FeaturePoint> sweep_grid(const SystemConfig& cfg, const std::vector<std::vector<double>>& per_feature) {
    detail::require_dims(per_feature.size() == cfg.n_features(), "sweep_grid: one value list per feature required");
    return sweep_grid(cfg, GridSpec::per_feature(per_feature));
}

/// Grid node closest to an arbitrary point, axis by axis.
inline std::size_t nearest_grid_node(const GridSpec& grid, const FeaturePoint& pt) {
    std::vector<std::size_t> idx(grid.axes.size());
    for (std::size_t a = 0; a < grid.axes.size(); ++a) {
        const auto& ax = grid.axes[a];
        double best = INFINITY;
        for (std::size_t s = 0; s < ax.values.size(); ++s) {
            double d = 0.0;
            for (std::size_t j = 0; j < ax.features.size(); ++j) {
                const double diff = ax.values[s][j] - pt.values.at(ax.features[j]);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                idx[a] = s;
            }
        }
    }
    return grid.flat_of(idx);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const Term& t) { j = {{"scale", t.scale}, {"powers", t.powers}}; }
inline void from_json(const nlohmann::json& j, Term& t) {
    j.at("scale").get_to(t.scale);
    j.at("powers").get_to(t.powers);
}
inline void to_json(nlohmann::json& j, const Coefficient& c) { j = {{"offset", c.offset}, {"terms", c.terms}}; }
inline void from_json(const nlohmann::json& j, Coefficient& c) {
    c.offset = j.value("offset", 0.0);
    c.terms = j.value("terms", std::vector<Term>{});
}
inline void to_json(nlohmann::json& j, const FeatureSpec& f) { j = {{"name", f.name}, {"kind", f.kind}}; }
inline void from_json(const nlohmann::json& j, FeatureSpec& f) {
    j.at("name").get_to(f.name);
    j.at("kind").get_to(f.kind);
}
inline void to_json(nlohmann::json& j, const Block& b) {
    j = {{"label", b.label}, {"kind", b.kind}, {"first_state", b.first_state}};
    if (b.kind == BlockKind::oscillator) {
        j["omega"] = b.omega;
        j["zeta"] = b.zeta;
    } else {
        j["tau"] = b.tau;
    }
}
inline void from_json(const nlohmann::json& j, Block& b) {
    b.label = j.value("label", std::string{});
    j.at("kind").get_to(b.kind);
    j.at("first_state").get_to(b.first_state);
    if (b.kind == BlockKind::oscillator) {
        j.at("omega").get_to(b.omega);
        j.at("zeta").get_to(b.zeta);
    } else {
        j.at("tau").get_to(b.tau);
    }
}
inline void to_json(nlohmann::json& j, const Coupling& c) { j = {{"row", c.row}, {"col", c.col}, {"gain", c.gain}}; }
inline void from_json(const nlohmann::json& j, Coupling& c) {
    j.at("row").get_to(c.row);
    j.at("col").get_to(c.col);
    j.at("gain").get_to(c.gain);
}
inline void to_json(nlohmann::json& j, const SystemConfig& c) {
    j = {{"schema_version", SystemConfig::schema_version},
         {"name", c.name},
         {"n_states", c.n_states()},
         {"n_features", c.n_features()},
         {"features", c.features},
         {"groups", c.groups},
         {"group_labels", c.group_of_state},
         {"blocks", c.blocks},
         {"couplings", c.couplings},
         {"lipschitz_bound", c.lipschitz_bound}};
}
inline void from_json(const nlohmann::json& j, SystemConfig& c) {
    const int version = j.at("schema_version").get<int>();
    if (version != SystemConfig::schema_version)
        throw FormatError("SystemConfig: unsupported schema_version " + std::to_string(version));
    j.at("name").get_to(c.name);
    j.at("features").get_to(c.features);
    j.at("groups").get_to(c.groups);
    j.at("group_labels").get_to(c.group_of_state);
    j.at("blocks").get_to(c.blocks);
    c.couplings = j.value("couplings", std::vector<Coupling>{});
    c.lipschitz_bound = j.value("lipschitz_bound", 0.0);
    if (j.contains("n_states") && j["n_states"].get<std::size_t>() != c.n_states())
        throw FormatError("SystemConfig: n_states disagrees with group_labels");
    if (j.contains("n_features") && j["n_features"].get<std::size_t>() != c.n_features())
        throw FormatError("SystemConfig: n_features disagrees with features");
    c.validate();
}
inline void to_json(nlohmann::json& j, const GridSpec& g) {
    j = nlohmann::json::array();
    for (const auto& ax : g.axes) j.push_back({{"features", ax.features}, {"values", ax.values}});
}
inline void from_json(const nlohmann::json& j, GridSpec& g) {
    g.axes.clear();
    for (const auto& a : j) {
        GridAxis ax;
        a.at("features").get_to(ax.features);
        a.at("values").get_to(ax.values);
        g.axes.push_back(std::move(ax));
    }
}

// ---------------------------------------------------------------------------
// Built-in configurations

namespace recipe {

inline Coefficient constant(double v) { return {v, {}}; }

/// offset + scale * x_f^power
inline Coefficient mono(std::size_t n_features, double offset, double scale, std::size_t f, double power = 1.0) {
    Term t{scale, std::vector<double>(n_features, 0.0)};
    t.powers[f] = power;
    return {offset, {t}};
}

inline Coefficient add(Coefficient a, const Coefficient& b) {
    a.offset += b.offset;
    a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
    return a;
}

class Builder {
public:
    explicit Builder(SystemConfig& cfg) : cfg_(cfg) {}

    std::size_t oscillator(const std::string& label, std::size_t group, Coefficient omega, Coefficient zeta) {
        const std::size_t first = cfg_.group_of_state.size();
        cfg_.blocks.push_back({label, BlockKind::oscillator, first, std::move(omega), std::move(zeta), {}});
        cfg_.group_of_state.insert(cfg_.group_of_state.end(), 2, group);
        return first;
    }

    std::size_t lag(const std::string& label, std::size_t group, Coefficient tau) {
        const std::size_t first = cfg_.group_of_state.size();
        cfg_.blocks.push_back({label, BlockKind::lag, first, {}, {}, std::move(tau)});
        cfg_.group_of_state.push_back(group);
        return first;
    }

    /// Symmetric coupling between two states.
    void link(std::size_t i, std::size_t j, const Coefficient& gain) {
        cfg_.couplings.push_back({i, j, gain});
        cfg_.couplings.push_back({j, i, gain});
    }

    /// One-way coupling (state j drives state i).
    void drive(std::size_t i, std::size_t j, const Coefficient& gain) { cfg_.couplings.push_back({i, j, gain}); }

private:
    SystemConfig& cfg_;
};

} // namespace recipe

/// 22-state, 3-feature system: one synchronous generator (SG) and one voltage
/// source converter (VSC). Features: S_SGshare, tau_v [s], R.
inline SystemConfig three_bus() {
    using namespace recipe;
    SystemConfig cfg;
    cfg.name = "3bus";
    cfg.features = {{"S_SGshare", FeatureKind::share}, {"tau_v", FeatureKind::time_constant}, {"R", FeatureKind::droop}};
    cfg.groups = {"VSC currents", "VSC controllers", "SG mechanics", "SG exciter", "SG currents"};
    constexpr std::size_t nf = 3, S = 0, TV = 1, R = 2;
    enum : std::size_t { vsc_cur, vsc_ctl, sg_mech, sg_exc, sg_cur };
    Builder b(cfg);

    const auto i_d = b.oscillator("vsc current loop d", vsc_cur, mono(nf, 300.0, 500.0, S), mono(nf, 0.30, 0.20, TV, 0.5));
    const auto i_q = b.oscillator("vsc current loop q", vsc_cur, mono(nf, 250.0, 200.0, S), mono(nf, 0.35, 0.15, TV));
    const auto v_ctl = b.lag("vsc voltage control", vsc_ctl, mono(nf, 0.0, 1.0, TV));
    const auto pll = b.oscillator("vsc pll", vsc_ctl, mono(nf, 30.0, 10.0, S), mono(nf, 0.5, 0.2, TV));
    const auto p_filt = b.lag("vsc droop filter", vsc_ctl, mono(nf, 0.05, 0.5, R));
    const auto droop = b.oscillator("vsc power loop", vsc_ctl, mono(nf, 6.0, 6.0, S), mono(nf, 0.05, 0.6, R, 0.5));
    const auto swing = b.oscillator("sg swing", sg_mech, mono(nf, 0.0, 5.0, S, -0.5), mono(nf, 0.08, 0.04, S));
    const auto gov = b.lag("sg governor", sg_mech, mono(nf, 0.3, 0.4, S));
    const auto turb = b.lag("sg turbine", sg_mech, mono(nf, 1.5, 2.0, S));
    const auto exc = b.oscillator("sg exciter", sg_exc, mono(nf, 12.0, 8.0, S), constant(0.35));
    const auto avr = b.lag("sg avr filter", sg_exc, mono(nf, 0.15, 0.1, S));
    const auto stator = b.oscillator("sg stator", sg_cur, constant(377.0), mono(nf, 0.05, 0.03, S));
    const auto damper = b.oscillator("sg damper", sg_cur, mono(nf, 120.0, 40.0, S), constant(0.6));
    const auto field = b.lag("sg field", sg_cur, mono(nf, 0.8, 1.5, S));

    // Cross-group interactions, strength scaled with the SG share.
    b.link(v_ctl, gov, mono(nf, 0.0, 0.3, S));
    b.link(v_ctl, avr, mono(nf, 0.0, 0.8, S));
    b.link(v_ctl, field, mono(nf, 0.0, 0.2, S));
    b.link(p_filt, gov, mono(nf, 0.0, 0.4, S));
    b.link(droop + 1, swing + 1, add(mono(nf, 0.0, 1.2, S), mono(nf, 0.0, 0.3, R)));
    b.link(pll + 1, exc + 1, mono(nf, 0.0, 2.0, S));
    b.link(i_d + 1, stator + 1, mono(nf, 0.0, 6.0, S));
    b.link(i_q + 1, damper + 1, mono(nf, 0.0, 8.0, S));
    b.drive(swing + 1, turb, mono(nf, 0.0, 0.5, S));
    b.drive(exc + 1, field, constant(0.4));
    b.drive(p_filt, droop, mono(nf, 0.0, 1.0, R, 0.5));
    cfg.lipschitz_bound = 1.2e4;
    cfg.validate();
    return cfg;
}

/// 71-state, 6-feature system: two SGs, one VSC, eight dynamic loads and a
/// network block. Features: S_SG1share, S_SG2share, P_load5share,
/// P_load6share, tau_v [s], R. Load shares modulate load dynamics and the
/// coupling between loads, network and generators.
inline SystemConfig nine_bus() {
    using namespace recipe;
    SystemConfig cfg;
    cfg.name = "9bus";
    cfg.features = {{"S_SG1share", FeatureKind::share},   {"S_SG2share", FeatureKind::share},
                    {"P_load5share", FeatureKind::share}, {"P_load6share", FeatureKind::share},
                    {"tau_v", FeatureKind::time_constant}, {"R", FeatureKind::droop}};
    cfg.groups = {"VSC currents", "VSC controllers", "SG1 mechanics", "SG1 exciter", "SG1 currents",
                  "SG2 mechanics", "SG2 exciter", "SG2 currents", "Load dynamics", "Network"};
    constexpr std::size_t nf = 6, S1 = 0, S2 = 1, P5 = 2, P6 = 3, TV = 4, R = 5;
    enum : std::size_t { vsc_cur, vsc_ctl, sg1_mech, sg1_exc, sg1_cur, sg2_mech, sg2_exc, sg2_cur, loads, network };
    Builder b(cfg);

    const auto i_d = b.oscillator("vsc current loop d", vsc_cur, add(mono(nf, 300.0, 150.0, S1), mono(nf, 0.0, 150.0, S2)),
                                  mono(nf, 0.30, 0.20, TV, 0.5));
    const auto i_q = b.oscillator("vsc current loop q", vsc_cur, add(mono(nf, 240.0, 60.0, S1), mono(nf, 0.0, 60.0, S2)),
                                  mono(nf, 0.35, 0.15, TV));
    const auto v_ctl = b.lag("vsc voltage control", vsc_ctl, mono(nf, 0.0, 1.0, TV));
    const auto pll = b.oscillator("vsc pll", vsc_ctl, add(mono(nf, 30.0, 5.0, S1), mono(nf, 0.0, 5.0, S2)),
                                  mono(nf, 0.5, 0.2, TV));
    const auto p_filt = b.lag("vsc droop filter", vsc_ctl, mono(nf, 0.05, 0.5, R));
    const auto droop = b.oscillator("vsc power loop", vsc_ctl, add(mono(nf, 6.0, 2.0, S1), mono(nf, 0.0, 2.0, S2)),
                                    mono(nf, 0.05, 0.6, R, 0.5));

    struct SgStates {
        std::size_t swing, gov, turb, exc, avr, stator, damper, field;
    };
    auto add_sg = [&](const std::string& tag, std::size_t s, std::size_t mech, std::size_t exc_g, std::size_t cur,
                      double detune) {
        SgStates st{};
        st.swing = b.oscillator(tag + " swing", mech, mono(nf, 0.0, 3.5 * detune, s, -0.5), mono(nf, 0.07, 0.05, s));
        st.gov = b.lag(tag + " governor", mech, mono(nf, 0.3 * detune, 0.3, s));
        st.turb = b.lag(tag + " turbine", mech, mono(nf, 1.2 * detune, 1.5, s));
        st.exc = b.oscillator(tag + " exciter", exc_g, mono(nf, 11.0 * detune, 6.0, s), constant(0.35));
        st.avr = b.lag(tag + " avr filter", exc_g, mono(nf, 0.12 * detune, 0.1, s));
        st.stator = b.oscillator(tag + " stator", cur, constant(377.0 * detune), mono(nf, 0.05, 0.03, s));
        st.damper = b.oscillator(tag + " damper", cur, mono(nf, 110.0 * detune, 40.0, s), constant(0.6));
        st.field = b.lag(tag + " field", cur, mono(nf, 0.7 * detune, 1.2, s));
        return st;
    };
    const SgStates sg1 = add_sg("sg1", S1, sg1_mech, sg1_exc, sg1_cur, 1.0);
    const SgStates sg2 = add_sg("sg2", S2, sg2_mech, sg2_exc, sg2_cur, 1.17);

    std::vector<std::size_t> load_osc, load_lag;
    for (std::size_t k = 0; k < 8; ++k) {
        const double base = 18.0 + 4.3 * double(k);
        Coefficient omega = constant(base);
        Coefficient tau = constant(0.04 + 0.013 * double(k));
        if (k == 4) {
            omega = mono(nf, base, 12.0, P5);
            tau = mono(nf, 0.03, 0.05, P5);
        } else if (k == 5) {
            omega = mono(nf, base, 10.0, P6);
            tau = mono(nf, 0.03, 0.06, P6);
        }
        load_osc.push_back(b.oscillator("load " + std::to_string(k + 1), loads, omega, constant(0.2 + 0.02 * double(k))));
        load_lag.push_back(b.lag("load " + std::to_string(k + 1) + " lag", loads, tau));
    }
    std::vector<std::size_t> line;
    for (std::size_t k = 0; k < 6; ++k)
        line.push_back(b.oscillator("line " + std::to_string(k + 1), network, constant(520.0 + 70.0 * double(k)),
                                    constant(0.08 + 0.01 * double(k))));
    const auto net_lag = b.lag("network filter", network, add(mono(nf, 0.02, 0.02, P5), mono(nf, 0.0, 0.02, P6)));

    // VSC <-> generators
    b.link(v_ctl, sg1.gov, mono(nf, 0.0, 0.25, S1));
    b.link(v_ctl, sg2.avr, mono(nf, 0.0, 0.6, S2));
    b.link(v_ctl, sg1.field, mono(nf, 0.0, 0.15, S1));
    b.link(p_filt, sg2.gov, mono(nf, 0.0, 0.3, S2));
    b.link(droop + 1, sg1.swing + 1, add(mono(nf, 0.0, 0.8, S1), mono(nf, 0.0, 0.2, R)));
    b.link(droop + 1, sg2.swing + 1, add(mono(nf, 0.0, 0.8, S2), mono(nf, 0.0, 0.2, R)));
    b.link(pll + 1, sg1.exc + 1, mono(nf, 0.0, 1.5, S1));
    b.link(i_d + 1, sg1.stator + 1, mono(nf, 0.0, 5.0, S1));
    b.link(i_q + 1, sg2.damper + 1, mono(nf, 0.0, 6.0, S2));
    b.drive(p_filt, droop, mono(nf, 0.0, 1.0, R, 0.5));
    // Inter-machine and machine-internal paths
    b.link(sg1.swing + 1, sg2.swing + 1, add(mono(nf, 0.0, 0.6, P5), mono(nf, 0.0, 0.6, P6)));
    for (const SgStates* sg : {&sg1, &sg2}) {
        b.drive(sg->swing + 1, sg->turb, constant(0.4));
        b.drive(sg->exc + 1, sg->field, constant(0.4));
    }
    // Loads and network, coupling scaled by the demand shares
    for (std::size_t k = 0; k < 8; ++k) {
        const std::size_t share = (k % 2 == 0) ? P5 : P6;
        b.link(load_osc[k] + 1, line[k % 6] + 1, mono(nf, 1.0, 3.0, share));
        b.link(load_lag[k], net_lag, mono(nf, 0.05, 0.2, share));
    }
    b.link(load_osc[4] + 1, sg1.exc + 1, mono(nf, 0.0, 1.2, P5));
    b.link(load_osc[5] + 1, sg2.exc + 1, mono(nf, 0.0, 1.2, P6));
    b.link(line[0] + 1, sg1.stator + 1, constant(8.0));
    b.link(line[3] + 1, sg2.stator + 1, constant(8.0));
    cfg.lipschitz_bound = 1.5e4;
    cfg.validate();
    return cfg;
}

inline std::optional<SystemConfig> builtin(const std::string& name) {
    if (name == "3bus") return three_bus();
    if (name == "9bus") return nine_bus();
    return std::nullopt;
}

/// Sweep of the 3-bus case: SG ratings 500/400/300/200 MVA against a 500 MVA
/// converter, seven voltage-control time constants, droop 0.01..1.00.
inline GridSpec three_bus_grid() {
    std::vector<double> share;
    for (double mva : {500.0, 400.0, 300.0, 200.0}) share.push_back(share_from_rating(mva));
    std::sort(share.begin(), share.end());
    std::vector<double> tau_v{0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0};
    std::vector<double> droop;
    for (int k = 1; k <= 100; ++k) droop.push_back(k / 100.0);
    return GridSpec::per_feature({share, tau_v, droop});
}

/// Sweep of the 9-bus case: each SG from 50 to 250 MVA (shares of 250 MVA),
/// three demand scenarios for loads 5 and 6 moving together on one axis
/// (100/50 MW base, load 5 at 150 MW, load 6 at 100 MW; shares of 250 MW),
/// seven time constants and seven droop values.
inline GridSpec nine_bus_grid() {
    GridSpec g;
    g.axes.push_back({{0}, {{0.2}, {0.4}, {0.6}, {0.8}, {1.0}}});
    g.axes.push_back({{1}, {{0.2}, {0.4}, {0.6}, {0.8}, {1.0}}});
    g.axes.push_back({{2, 3}, {{0.4, 0.2}, {0.6, 0.2}, {0.4, 0.4}}});
    GridAxis tv{{4}, {}}, r{{5}, {}};
    for (double v : {0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0}) {
        tv.values.push_back({v});
        r.values.push_back({v});
    }
    g.axes.push_back(std::move(tv));
    g.axes.push_back(std::move(r));
    return g;
}

inline std::optional<GridSpec> builtin_grid(const std::string& name) {
    if (name == "3bus") return three_bus_grid();
    if (name == "9bus") return nine_bus_grid();
    return std::nullopt;
}

/// Seven held-out operating points varying tau_v at fixed other features.
inline std::vector<FeaturePoint> builtin_test_instances(const SystemConfig& cfg) {
    std::vector<FeaturePoint> out;
    const std::vector<double> tau_v{0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95};
    for (double tv : tau_v) {
        if (cfg.name == "3bus")
            out.push_back(make_point(cfg, {share_from_rating(330.0), tv, 0.05}));
        else if (cfg.name == "9bus")
            out.push_back(make_point(cfg, {0.28, 0.68, 0.5, 0.28, tv, 0.02}));
    }
    return out;
}

} // namespace modalml::sysmodel
