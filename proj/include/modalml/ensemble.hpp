#pragma once

// Bagged ensembles of fully grown multi-output trees.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modalml/cart.hpp"
#include "modalml/error.hpp"
#include "modalml/matrix.hpp"
#include "modalml/parallel.hpp"
#include "modalml/rng.hpp"

namespace modalml::ensemble {

struct BaggingParams {
    std::size_t n_trees = 50;
    bool bootstrap = true;
    std::uint64_t seed = 0;
    cart::Splitter splitter = cart::Splitter::best_random;
    unsigned threads = 0;  ///< 0 = hardware concurrency

    friend bool operator==(const BaggingParams&, const BaggingParams&) = default;
};

/// Member i grows with tree seed (seed + i); its bootstrap rows come from an
/// independent stream keyed on the same pair.
inline std::uint64_t member_seed(std::uint64_t seed, std::size_t i) { return seed + i; }

inline std::vector<std::uint32_t> bootstrap_rows(std::size_t n_rows, std::uint64_t seed, std::size_t i) {
    Rng rng(splitmix64(seed ^ 0x6a09e667f3bcc909ULL) + i);
    std::vector<std::uint32_t> rows(n_rows);
    for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(n_rows));
    std::sort(rows.begin(), rows.end());
    return rows;
}

class BaggedEnsemble {
public:
    BaggedEnsemble() = default;
    BaggedEnsemble(std::vector<cart::Tree> trees, BaggingParams params, RMatrix targets)
        : trees_(std::move(trees)), params_(params), targets_(std::move(targets)) {
        if (trees_.empty()) throw DomainError("BaggedEnsemble: no member trees");
        for (const auto& t : trees_)
            if (t.n_features() != trees_[0].n_features() || t.n_outputs() != trees_[0].n_outputs())
                throw DimensionError("BaggedEnsemble: members disagree on dimensions");
        if (targets_.cols() != trees_[0].n_outputs()) throw DimensionError("BaggedEnsemble: target width mismatch");
        for (auto& t : trees_) {
            if (!t.has_leaf_samples()) throw DomainError("BaggedEnsemble: members need leaf samples");
            for (std::size_t l = 0; l < t.n_leaves(); ++l)
                for (auto r : t.leaf_samples(l))
                    if (r >= targets_.rows()) throw DimensionError("BaggedEnsemble: leaf sample row out of range");
            if (t.has_leaf_values()) t.drop_leaf_values();
        }
        index_leaves();
    }

    std::size_t n_trees() const noexcept { return trees_.size(); }
    std::size_t n_features() const { return trees_.at(0).n_features(); }
    std::size_t n_outputs() const { return trees_.at(0).n_outputs(); }
    const std::vector<cart::Tree>& trees() const noexcept { return trees_; }
    const BaggingParams& params() const noexcept { return params_; }
    /// Training targets referenced by the members' leaf sample lists.
    const RMatrix& targets() const noexcept { return targets_; }

    /// Copy of member i with its leaf values filled in (for plotting and inspection).
    cart::Tree member(std::size_t i) const {
        cart::Tree t = trees_.at(i);
        t.refresh_leaf_values(targets_);
        return t;
    }

    /// Arithmetic mean of the member predictions, accumulated in member order.
    /// A member's prediction is the mean target over its leaf's samples.
    void predict_into(std::span<const double> x, std::span<double> out) const {
        modalml::detail::require_dims(out.size() == n_outputs(), "ensemble predict: output width mismatch");
        std::fill(out.begin(), out.end(), 0.0);
        const std::size_t m = out.size();
        for (std::size_t i = 0; i < trees_.size(); ++i) {
            const auto ref = leaf_ref_[i][trees_[i].leaf_index(x)];
            const double* v = ref >= 0 ? targets_.row(std::size_t(ref)).data() : mixed_values_[i].data() + std::size_t(-1 - ref) * m;
            for (std::size_t o = 0; o < m; ++o) out[o] += v[o];
        }
        const double inv = 1.0 / double(trees_.size());
        for (auto& v : out) v *= inv;
    }

    std::vector<double> predict(std::span<const double> x) const {
        std::vector<double> out(n_outputs());
        predict_into(x, out);
        return out;
    }

private:
    // Leaves whose samples are repeats of one row point at that target row;
    // only leaves mixing distinct rows keep a mean vector.
    void index_leaves() {
        const std::size_t m = targets_.cols();
        leaf_ref_.assign(trees_.size(), {});
        mixed_values_.assign(trees_.size(), {});
        std::vector<double> buf(m);
        for (std::size_t i = 0; i < trees_.size(); ++i) {
            const auto& t = trees_[i];
            auto& ref = leaf_ref_[i];
            ref.resize(t.n_leaves());
            for (std::size_t l = 0; l < t.n_leaves(); ++l) {
                const auto rows = t.leaf_samples(l);
                if (rows.empty()) throw DomainError("BaggedEnsemble: empty leaf");
                if (std::all_of(rows.begin(), rows.end(), [&](auto r) { return r == rows[0]; })) {
                    ref[l] = rows[0];
                    continue;
                }
                cart::Tree::mean_of_rows(targets_, rows, buf);
                ref[l] = -1 - std::int64_t(mixed_values_[i].size() / m);
                mixed_values_[i].insert(mixed_values_[i].end(), buf.begin(), buf.end());
            }
        }
    }

    std::vector<cart::Tree> trees_;
    BaggingParams params_;
    RMatrix targets_;
    std::vector<std::vector<std::int64_t>> leaf_ref_;
    std::vector<std::vector<double>> mixed_values_;
};

/// Fits n_trees fully grown trees, each on a with-replacement resample of all
/// rows (or on all rows when bootstrap is off). Members train in parallel;
/// the result does not depend on the thread count.
inline BaggedEnsemble fit_bagging(const RMatrix& x, const RMatrix& y, const BaggingParams& params) {
    if (params.n_trees < 1) throw DomainError("fit_bagging: n_trees must be >= 1");
    cart::detail::check_training_data(x, y);
    std::vector<cart::Tree> trees(params.n_trees);
    parallel_for(
        params.n_trees,
        [&](std::size_t i) {
            cart::FitParams fp;
            fp.splitter = params.splitter;
            fp.seed = member_seed(params.seed, i);
            fp.keep_leaf_samples = true;
            const auto rows = params.bootstrap ? bootstrap_rows(x.rows(), params.seed, i) : std::vector<std::uint32_t>{};
            trees[i] = cart::fit(x, y, fp, rows);
        },
        params.threads);
    return BaggedEnsemble(std::move(trees), params, y);
}

inline BaggedEnsemble fit_bagging(const RMatrix& x, const RMatrix& y, std::size_t n_trees, std::uint64_t seed) {
    BaggingParams p;
    p.n_trees = n_trees;
    p.seed = seed;
    return fit_bagging(x, y, p);
}

/// Members store leaf sample rows instead of leaf values; the targets are
/// written once.
inline nlohmann::json ensemble_to_json(const BaggedEnsemble& e) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : e.trees()) trees.push_back(cart::tree_to_json(t, true));
    nlohmann::json targets = nlohmann::json::array();
    for (std::size_t r = 0; r < e.targets().rows(); ++r) {
        const auto row = e.targets().row(r);
        targets.push_back(std::vector<double>(row.begin(), row.end()));
    }
    const auto& p = e.params();
    return {{"kind", "bagged_ensemble"},
            {"schema_version", 1},
            {"n_trees", e.n_trees()},
            {"bootstrap", p.bootstrap},
            {"seed", p.seed},
            {"splitter", p.splitter},
            {"n_features", e.n_features()},
            {"n_outputs", e.n_outputs()},
            {"targets", std::move(targets)},
            {"trees", std::move(trees)}};
}

inline BaggedEnsemble ensemble_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "bagged_ensemble") throw FormatError("ensemble JSON: wrong kind");
        if (j.at("schema_version").get<int>() != 1) throw FormatError("ensemble JSON: unsupported schema_version");
        BaggingParams p;
        p.n_trees = j.at("n_trees").get<std::size_t>();
        p.bootstrap = j.at("bootstrap").get<bool>();
        p.seed = j.at("seed").get<std::uint64_t>();
        j.at("splitter").get_to(p.splitter);
        const auto m = j.at("n_outputs").get<std::size_t>();
        RMatrix targets;
        for (const auto& row : j.at("targets")) {
            const auto v = row.get<std::vector<double>>();
            if (v.size() != m) throw FormatError("ensemble JSON: target width mismatch");
            targets.append_row(v);
        }
        std::vector<cart::Tree> trees;
        for (const auto& tj : j.at("trees")) {
            trees.push_back(cart::tree_from_json(tj));
        }
        if (trees.size() != p.n_trees) throw FormatError("ensemble JSON: member count mismatch");
        return BaggedEnsemble(std::move(trees), p, std::move(targets));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("ensemble JSON: ") + e.what());
    } catch (const DimensionError& e) {
        throw FormatError(std::string("ensemble JSON: ") + e.what());
    }
}

} // namespace modalml::ensemble
