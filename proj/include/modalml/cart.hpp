#pragma once

// CART regression trees for single- and multi-output targets.
//
// Splits route a sample left iff x[feature] < threshold. The BEST splitter
// scans every midpoint between consecutive distinct feature values; the
// BEST_RANDOM splitter draws one uniform threshold inside the node's range of
// each feature and keeps the feature whose draw gives the lowest impurity.
// Multi-output impurity is the sum of the per-output impurities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modalml/error.hpp"
#include "modalml/matrix.hpp"
#include "modalml/rng.hpp"

namespace modalml::cart {

/// best_random: one uniform threshold per feature, best feature kept.
/// random_feature: one uniformly chosen feature, best threshold on it.
enum class Splitter { best, best_random, random_feature };
enum class Impurity { mse, mae };

NLOHMANN_JSON_SERIALIZE_ENUM(Splitter, {{Splitter::best, "BEST"},
                                       {Splitter::best_random, "BEST_RANDOM"},
                                       {Splitter::random_feature, "RANDOM_FEATURE"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Impurity, {{Impurity::mse, "MSE"}, {Impurity::mae, "MAE"}})

struct FitParams {
    std::optional<std::size_t> max_depth;  ///< nullopt = unlimited
    std::size_t min_samples_leaf = 1;
    std::size_t min_samples_split = 2;
    Splitter splitter = Splitter::best;
    Impurity impurity = Impurity::mse;
    double ccp_alpha = 0.0;
    std::uint64_t seed = 0;
    /// Record the training rows of every leaf (used by ensemble persistence).
    bool keep_leaf_samples = false;

    void validate() const {
        modalml::detail::require(min_samples_split >= 2, "FitParams: min_samples_split must be >= 2");
        modalml::detail::require(min_samples_leaf >= 1, "FitParams: min_samples_leaf must be >= 1");
        modalml::detail::require(ccp_alpha >= 0.0 && !std::isnan(ccp_alpha), "FitParams: ccp_alpha must be >= 0");
        modalml::detail::require(!max_depth || *max_depth >= 1, "FitParams: max_depth must be >= 1");
    }

    friend bool operator==(const FitParams&, const FitParams&) = default;
};

struct SplitRule {
    std::size_t feature = 0;
    double threshold = 0.0;
};

class Tree {
public:
    struct Node {
        std::int32_t left = -1;  ///< -1 for leaves
        std::int32_t right = -1;
        std::uint32_t feature = 0;
        double threshold = 0.0;
        std::size_t n_samples = 0;
        double impurity = 0.0;  ///< per-sample impurity summed over outputs
        std::uint32_t leaf = 0; ///< row of leaf_values when a leaf

        bool is_leaf() const noexcept { return left < 0; }
        SplitRule rule() const noexcept { return {feature, threshold}; }
    };

    std::size_t n_features() const noexcept { return n_features_; }
    std::size_t n_outputs() const noexcept { return n_outputs_; }
    std::size_t n_nodes() const noexcept { return nodes_.size(); }
    std::size_t n_leaves() const noexcept {
        if (!leaf_values_.empty()) return leaf_values_.size() / n_outputs_;
        return leaf_offsets_.empty() ? 0 : leaf_offsets_.size() - 1;
    }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const Node& root() const { return nodes_.front(); }

    std::span<const double> leaf_value(std::size_t leaf) const {
        if (leaf_values_.empty()) throw Error("tree has no leaf values (call refresh_leaf_values first)");
        return {leaf_values_.data() + leaf * n_outputs_, n_outputs_};
    }
    bool has_leaf_values() const noexcept { return !leaf_values_.empty(); }

    /// Training range of every feature; clips partition plots.
    const std::vector<double>& feature_min() const noexcept { return feature_min_; }
    const std::vector<double>& feature_max() const noexcept { return feature_max_; }

    bool has_leaf_samples() const noexcept { return !leaf_offsets_.empty(); }
    std::span<const std::uint32_t> leaf_samples(std::size_t leaf) const {
        return {leaf_rows_.data() + leaf_offsets_[leaf], leaf_offsets_[leaf + 1] - leaf_offsets_[leaf]};
    }

    std::size_t leaf_index(std::span<const double> x) const {
        if (x.size() != n_features_)
            throw DimensionError("predict: expected " + std::to_string(n_features_) + " features, got " +
                                 std::to_string(x.size()));
        std::size_t k = 0;
        while (!nodes_[k].is_leaf()) {
            const Node& nd = nodes_[k];
            k = static_cast<std::size_t>(x[nd.feature] < nd.threshold ? nd.left : nd.right);
        }
        return nodes_[k].leaf;
    }

    /// Mean target vector of the leaf reached by x.
    std::span<const double> predict(std::span<const double> x) const { return leaf_value(leaf_index(x)); }

    std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [k, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes_[k].is_leaf()) {
                stack.push_back({std::size_t(nodes_[k].left), d + 1});
                stack.push_back({std::size_t(nodes_[k].right), d + 1});
            }
        }
        return best;
    }

    /// Recomputes leaf values as the mean of the recorded leaf samples' targets.
    void refresh_leaf_values(const RMatrix& y) {
        modalml::detail::require(has_leaf_samples(), "refresh_leaf_values: tree has no leaf samples");
        modalml::detail::require_dims(y.cols() == n_outputs_, "refresh_leaf_values: target width mismatch");
        leaf_values_.assign(n_leaves() * n_outputs_, 0.0);
        for (std::size_t l = 0; l < n_leaves(); ++l) {
            const auto rows = leaf_samples(l);
            for (auto r : rows) modalml::detail::require_dims(r < y.rows(), "refresh_leaf_values: sample row out of range");
            mean_of_rows(y, rows, std::span<double>(leaf_values_.data() + l * n_outputs_, n_outputs_));
        }
    }

    /// Frees the leaf value table; leaf samples are kept. Ensemble members
    /// predict from their samples and the shared targets instead.
    void drop_leaf_values() {
        modalml::detail::require(has_leaf_samples(), "drop_leaf_values: tree has no leaf samples");
        leaf_values_.clear();
        leaf_values_.shrink_to_fit();
    }

    /// Mean of y over the given rows, summed in the given order. Repeats of a
    /// single row (bootstrap duplicates) return that row exactly.
    static void mean_of_rows(const RMatrix& y, std::span<const std::uint32_t> rows, std::span<double> out) {
        if (!rows.empty() && std::all_of(rows.begin(), rows.end(), [&](auto r) { return r == rows[0]; })) {
            const auto yr = y.row(rows[0]);
            std::copy(yr.begin(), yr.end(), out.begin());
            return;
        }
        std::fill(out.begin(), out.end(), 0.0);
        for (auto r : rows) {
            const auto yr = y.row(r);
            for (std::size_t o = 0; o < out.size(); ++o) out[o] += yr[o];
        }
        const double inv = rows.empty() ? 0.0 : 1.0 / double(rows.size());
        for (auto& v : out) v *= inv;
    }

private:
    friend class TreeAccess;

    std::size_t n_features_ = 0, n_outputs_ = 0;
    std::vector<Node> nodes_;
    std::vector<double> leaf_values_;
    std::vector<double> feature_min_, feature_max_;
    std::vector<std::size_t> leaf_offsets_;
    std::vector<std::uint32_t> leaf_rows_;
};

/// Internal construction access for the builder, pruning and deserialization.
class TreeAccess {
public:
    static auto& n_features(Tree& t) { return t.n_features_; }
    static auto& n_outputs(Tree& t) { return t.n_outputs_; }
    static auto& nodes(Tree& t) { return t.nodes_; }
    static auto& leaf_values(Tree& t) { return t.leaf_values_; }
    static auto& feature_min(Tree& t) { return t.feature_min_; }
    static auto& feature_max(Tree& t) { return t.feature_max_; }
    static auto& leaf_offsets(Tree& t) { return t.leaf_offsets_; }
    static auto& leaf_rows(Tree& t) { return t.leaf_rows_; }
};

namespace detail {

inline void check_training_data(const RMatrix& x, const RMatrix& y) {
    if (x.rows() == 0 || y.rows() == 0) throw DomainError("fit: empty training set");
    modalml::detail::require_dims(x.rows() == y.rows(), "fit: x and y row counts differ");
    if (x.cols() == 0 || y.cols() == 0) throw DimensionError("fit: no features or no outputs");
    if (!all_finite(x) || !all_finite(y)) throw DomainError("fit: training data contains non-finite values");
}

// Threshold strictly above a and at most b, so that a goes left and b right.
inline double midpoint(double a, double b) {
    const double t = a + (b - a) / 2.0;
    return t > a ? t : b;
}

class Builder {
public:
    Builder(const RMatrix& x, const RMatrix& y, const FitParams& p, std::span<const std::uint32_t> rows)
        : x_(x), y_(y), p_(p), rng_(p.seed), F_(x.cols()), M_(y.cols()) {
        if (rows.empty()) {
            samples_.resize(x.rows());
            std::iota(samples_.begin(), samples_.end(), 0u);
        } else {
            samples_.assign(rows.begin(), rows.end());
            for (auto r : samples_) modalml::detail::require_dims(r < x.rows(), "fit: sample row out of range");
        }
        sum_l_.resize(M_);
        sq_l_.resize(M_);
        sum_t_.resize(M_);
        sq_t_.resize(M_);
        mean_.resize(M_);
    }

    Tree build() {
        Tree t;
        TreeAccess::n_features(t) = F_;
        TreeAccess::n_outputs(t) = M_;
        auto& fmin = TreeAccess::feature_min(t);
        auto& fmax = TreeAccess::feature_max(t);
        fmin.assign(F_, std::numeric_limits<double>::infinity());
        fmax.assign(F_, -std::numeric_limits<double>::infinity());
        for (auto r : samples_)
            for (std::size_t f = 0; f < F_; ++f) {
                fmin[f] = std::min(fmin[f], x_(r, f));
                fmax[f] = std::max(fmax[f], x_(r, f));
            }
        auto& nodes = TreeAccess::nodes(t);
        auto& values = TreeAccess::leaf_values(t);
        auto& offsets = TreeAccess::leaf_offsets(t);
        auto& leaf_rows = TreeAccess::leaf_rows(t);
        if (p_.keep_leaf_samples) offsets.push_back(0);

        struct Task {
            std::size_t node, begin, end, depth;
        };
        nodes.emplace_back();
        std::vector<Task> stack{{0, 0, samples_.size(), 0}};
        std::vector<double> leaf_buf(M_);
        while (!stack.empty()) {
            const Task task = stack.back();
            stack.pop_back();
            const std::size_t n = task.end - task.begin;
            const std::span<std::uint32_t> rows(samples_.data() + task.begin, n);
            nodes[task.node].n_samples = n;
            nodes[task.node].impurity = node_impurity(rows);

            std::optional<SplitRule> split;
            const bool depth_ok = !p_.max_depth || task.depth < *p_.max_depth;
            if (depth_ok && n >= p_.min_samples_split && n >= 2 * p_.min_samples_leaf && !targets_constant(rows))
                split = find_split(rows);

            if (!split) {
                std::vector<std::uint32_t> sorted(rows.begin(), rows.end());
                std::sort(sorted.begin(), sorted.end());
                Tree::mean_of_rows(y_, sorted, leaf_buf);
                nodes[task.node].leaf = static_cast<std::uint32_t>(values.size() / M_);
                values.insert(values.end(), leaf_buf.begin(), leaf_buf.end());
                if (p_.keep_leaf_samples) {
                    leaf_rows.insert(leaf_rows.end(), sorted.begin(), sorted.end());
                    offsets.push_back(leaf_rows.size());
                }
                continue;
            }
            const auto mid = std::stable_partition(rows.begin(), rows.end(), [&](std::uint32_t r) {
                return x_(r, split->feature) < split->threshold;
            });
            const std::size_t n_left = static_cast<std::size_t>(mid - rows.begin());
            const std::size_t left = nodes.size();
            nodes.emplace_back();
            nodes.emplace_back();
            Tree::Node& nd = nodes[task.node];
            nd.feature = static_cast<std::uint32_t>(split->feature);
            nd.threshold = split->threshold;
            nd.left = static_cast<std::int32_t>(left);
            nd.right = static_cast<std::int32_t>(left + 1);
            // Right pushed first so the left subtree is expanded first.
            stack.push_back({left + 1, task.begin + n_left, task.end, task.depth + 1});
            stack.push_back({left, task.begin, task.begin + n_left, task.depth + 1});
        }
        return t;
    }

private:
    bool targets_constant(std::span<const std::uint32_t> rows) const {
        const auto first = y_.row(rows[0]);
        for (std::size_t k = 1; k < rows.size(); ++k) {
            const auto yr = y_.row(rows[k]);
            if (!std::equal(yr.begin(), yr.end(), first.begin())) return false;
        }
        return true;
    }

    // Fills centered_ (n x M, node-local order) and returns the node impurity.
    double node_impurity(std::span<const std::uint32_t> rows) {
        const std::size_t n = rows.size();
        if (p_.impurity == Impurity::mae) return mae_impurity(rows);
        std::fill(mean_.begin(), mean_.end(), 0.0);
        for (auto r : rows) {
            const auto yr = y_.row(r);
            for (std::size_t o = 0; o < M_; ++o) mean_[o] += yr[o];
        }
        for (auto& m : mean_) m /= double(n);
        centered_.resize(n * M_);
        double sse = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto yr = y_.row(rows[k]);
            double* c = centered_.data() + k * M_;
            for (std::size_t o = 0; o < M_; ++o) {
                c[o] = yr[o] - mean_[o];
                sse += c[o] * c[o];
            }
        }
        node_sse_ = sse;
        return sse / double(n);
    }

    double mae_impurity(std::span<const std::uint32_t> rows) const {
        std::vector<double> col(rows.size());
        double total = 0.0;
        for (std::size_t o = 0; o < M_; ++o) {
            for (std::size_t k = 0; k < rows.size(); ++k) col[k] = y_(rows[k], o);
            std::sort(col.begin(), col.end());
            const std::size_t n = col.size();
            const double med = (n % 2) ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
            double s = 0.0;
            for (double v : col) s += std::abs(v - med);
            total += s / double(n);
        }
        return total;
    }

    // Sum of squared deviations of the two children given left sums/squares.
    double split_sse(std::size_t n_left, std::size_t n_right) const {
        double sse = 0.0;
        const double inv_l = 1.0 / double(n_left), inv_r = 1.0 / double(n_right);
        for (std::size_t o = 0; o < M_; ++o) {
            const double sr = sum_t_[o] - sum_l_[o];
            const double qr = sq_t_[o] - sq_l_[o];
            sse += (sq_l_[o] - sum_l_[o] * sum_l_[o] * inv_l) + (qr - sr * sr * inv_r);
        }
        return sse;
    }

    void totals(std::size_t n) {
        std::fill(sum_t_.begin(), sum_t_.end(), 0.0);
        std::fill(sq_t_.begin(), sq_t_.end(), 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double* c = centered_.data() + k * M_;
            for (std::size_t o = 0; o < M_; ++o) {
                sum_t_[o] += c[o];
                sq_t_[o] += c[o] * c[o];
            }
        }
    }

    void add_left(std::size_t local) {
        const double* c = centered_.data() + local * M_;
        for (std::size_t o = 0; o < M_; ++o) {
            sum_l_[o] += c[o];
            sq_l_[o] += c[o] * c[o];
        }
    }

    void clear_left() {
        std::fill(sum_l_.begin(), sum_l_.end(), 0.0);
        std::fill(sq_l_.begin(), sq_l_.end(), 0.0);
    }

    double mae_split(std::span<const std::uint32_t> rows, std::size_t feature, double threshold) const {
        std::vector<std::uint32_t> l, r;
        for (auto s : rows) (x_(s, feature) < threshold ? l : r).push_back(s);
        return mae_impurity(l) * double(l.size()) + mae_impurity(r) * double(r.size());
    }

    std::optional<SplitRule> find_split(std::span<const std::uint32_t> rows) {
        const std::size_t n = rows.size();
        const std::size_t min_leaf = p_.min_samples_leaf;
        const bool mse = p_.impurity == Impurity::mse;
        if (mse) totals(n);
        const double scale = mse ? std::max(node_sse_, 1e-300) : 1.0;
        const double tol = 1e-12 * scale;
        double best = std::numeric_limits<double>::infinity();
        std::optional<SplitRule> out;

        if (p_.splitter != Splitter::best_random) {
            std::vector<std::size_t> features(F_);
            std::iota(features.begin(), features.end(), std::size_t{0});
            if (p_.splitter == Splitter::random_feature) {
                std::erase_if(features, [&](std::size_t f) {
                    const double v0 = x_(rows[0], f);
                    return std::all_of(rows.begin(), rows.end(), [&](std::uint32_t r) { return x_(r, f) == v0; });
                });
                if (features.empty()) return std::nullopt;
                features = {features[rng_.below(features.size())]};
            }
            order_.resize(n);
            for (std::size_t f : features) {
                for (std::size_t k = 0; k < n; ++k) order_[k] = {x_(rows[k], f), static_cast<std::uint32_t>(k)};
                std::sort(order_.begin(), order_.end());
                if (order_.front().first == order_.back().first) continue;
                clear_left();
                for (std::size_t i = 0; i + 1 < n; ++i) {
                    if (mse) add_left(order_[i].second);
                    if (order_[i].first == order_[i + 1].first) continue;
                    const std::size_t nl = i + 1, nr = n - nl;
                    if (nl < min_leaf || nr < min_leaf) continue;
                    const double t = midpoint(order_[i].first, order_[i + 1].first);
                    const double crit = mse ? split_sse(nl, nr) : mae_split(rows, f, t);
                    if (crit < best - tol) {
                        best = crit;
                        out = SplitRule{f, t};
                    }
                }
            }
            return out;
        }

        for (std::size_t f = 0; f < F_; ++f) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (auto r : rows) {
                lo = std::min(lo, x_(r, f));
                hi = std::max(hi, x_(r, f));
            }
            if (!(hi > lo)) continue;
            double t = lo + rng_.uniform() * (hi - lo);
            if (!(t > lo)) t = std::nextafter(lo, hi);
            std::size_t nl = 0;
            clear_left();
            for (std::size_t k = 0; k < n; ++k)
                if (x_(rows[k], f) < t) {
                    ++nl;
                    if (mse) add_left(k);
                }
            const std::size_t nr = n - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double crit = mse ? split_sse(nl, nr) : mae_split(rows, f, t);
            if (crit < best - tol) {
                best = crit;
                out = SplitRule{f, t};
            }
        }
        return out;
    }

    const RMatrix& x_;
    const RMatrix& y_;
    const FitParams& p_;
    Rng rng_;
    std::size_t F_, M_;
    std::vector<std::uint32_t> samples_;
    std::vector<double> centered_, sum_l_, sq_l_, sum_t_, sq_t_, mean_;
    std::vector<std::pair<double, std::uint32_t>> order_;
    double node_sse_ = 0.0;
};

} // namespace detail

Tree prune(const Tree& tree, double alpha);

/// Grows a tree on the given rows of (x, y) (all rows when empty; repeated
/// rows act as bootstrap multiplicities), then prunes when ccp_alpha > 0.
inline Tree fit(const RMatrix& x, const RMatrix& y, const FitParams& params,
                std::span<const std::uint32_t> rows = {}) {
    params.validate();
    detail::check_training_data(x, y);
    detail::Builder builder(x, y, params, rows);
    Tree t = builder.build();
    if (params.ccp_alpha > 0.0) t = prune(t, params.ccp_alpha);
    return t;
}

/// Minimal cost-complexity pruning: repeatedly collapses the internal node of
/// smallest effective alpha g(t) = (R(t) - R(T_t)) / (|leaves(T_t)| - 1)
/// while g <= alpha. R(t) is the node impurity weighted by its sample share.
/// Leaf sample lists are dropped.
inline Tree prune(const Tree& tree, double alpha) {
    modalml::detail::require(alpha >= 0.0, "prune: alpha must be >= 0");
    if (alpha == 0.0 || tree.root().is_leaf()) return tree;
    const auto& nodes = tree.nodes();
    const std::size_t nn = nodes.size();
    const double total = double(tree.root().n_samples);
    std::vector<char> collapsed(nn, 0);
    std::vector<double> r_sub(nn), leaves(nn);
    std::vector<std::size_t> parent(nn, nn), post;
    post.reserve(nn);
    {
        std::vector<std::pair<std::size_t, bool>> st{{0, false}};
        while (!st.empty()) {
            auto [k, done] = st.back();
            st.pop_back();
            if (done || nodes[k].is_leaf()) {
                post.push_back(k);
                continue;
            }
            st.push_back({k, true});
            st.push_back({std::size_t(nodes[k].right), false});
            st.push_back({std::size_t(nodes[k].left), false});
            parent[std::size_t(nodes[k].left)] = parent[std::size_t(nodes[k].right)] = k;
        }
    }
    auto own_risk = [&](std::size_t k) { return nodes[k].impurity * double(nodes[k].n_samples) / total; };
    while (true) {
        for (auto k : post) {
            if (nodes[k].is_leaf() || collapsed[k]) {
                r_sub[k] = own_risk(k);
                leaves[k] = 1.0;
            } else {
                r_sub[k] = r_sub[std::size_t(nodes[k].left)] + r_sub[std::size_t(nodes[k].right)];
                leaves[k] = leaves[std::size_t(nodes[k].left)] + leaves[std::size_t(nodes[k].right)];
            }
        }
        double best_g = std::numeric_limits<double>::infinity();
        std::size_t best_k = nn;
        for (auto k : post) {
            if (nodes[k].is_leaf() || collapsed[k]) continue;
            bool live = true;
            for (std::size_t a = parent[k]; a != nn; a = parent[a])
                if (collapsed[a]) {
                    live = false;
                    break;
                }
            if (!live) continue;
            const double g = std::max(0.0, (own_risk(k) - r_sub[k]) / (leaves[k] - 1.0));
            if (g < best_g) {
                best_g = g;
                best_k = k;
            }
        }
        if (best_k == nn || best_g > alpha) break;
        collapsed[best_k] = 1;
        if (best_k == 0) break;
    }

    // Rebuild the reachable part, collapsed nodes becoming leaves that hold the
    // sample-weighted mean of their descendants' leaves.
    const std::size_t m = tree.n_outputs();
    Tree out;
    TreeAccess::n_features(out) = tree.n_features();
    TreeAccess::n_outputs(out) = m;
    TreeAccess::feature_min(out) = tree.feature_min();
    TreeAccess::feature_max(out) = tree.feature_max();
    auto& on = TreeAccess::nodes(out);
    auto& ov = TreeAccess::leaf_values(out);
    std::vector<double> acc(m);
    auto subtree_mean = [&](std::size_t k) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::vector<std::size_t> st{k};
        while (!st.empty()) {
            const std::size_t q = st.back();
            st.pop_back();
            if (nodes[q].is_leaf()) {
                const auto v = tree.leaf_value(nodes[q].leaf);
                for (std::size_t o = 0; o < m; ++o) acc[o] += double(nodes[q].n_samples) * v[o];
            } else {
                st.push_back(std::size_t(nodes[q].right));
                st.push_back(std::size_t(nodes[q].left));
            }
        }
        for (auto& v : acc) v /= double(nodes[k].n_samples);
    };
    struct Item {
        std::size_t src, dst;
    };
    on.push_back(nodes[0]);
    std::vector<Item> st{{0, 0}};
    while (!st.empty()) {
        const Item it = st.back();
        st.pop_back();
        const auto& src = nodes[it.src];
        if (src.is_leaf() || collapsed[it.src]) {
            on[it.dst].left = on[it.dst].right = -1;
            on[it.dst].feature = 0;
            on[it.dst].threshold = 0.0;
            on[it.dst].leaf = static_cast<std::uint32_t>(ov.size() / m);
            if (src.is_leaf()) {
                const auto v = tree.leaf_value(src.leaf);
                ov.insert(ov.end(), v.begin(), v.end());
            } else {
                subtree_mean(it.src);
                ov.insert(ov.end(), acc.begin(), acc.end());
            }
            continue;
        }
        const std::size_t l = on.size();
        on.push_back(nodes[std::size_t(src.left)]);
        on.push_back(nodes[std::size_t(src.right)]);
        on[it.dst].left = static_cast<std::int32_t>(l);
        on[it.dst].right = static_cast<std::int32_t>(l + 1);
        st.push_back({std::size_t(src.right), l + 1});
        st.push_back({std::size_t(src.left), l});
    }
    return out;
}

/// Sample-weighted impurity decrease per feature, normalized to sum to 1
/// (all zeros for a single-leaf tree).
inline std::vector<double> feature_importance(const Tree& tree) {
    std::vector<double> imp(tree.n_features(), 0.0);
    const auto& nodes = tree.nodes();
    const double total = double(tree.root().n_samples);
    for (const auto& nd : nodes) {
        if (nd.is_leaf()) continue;
        const auto& l = nodes[std::size_t(nd.left)];
        const auto& r = nodes[std::size_t(nd.right)];
        const double dec = double(nd.n_samples) * nd.impurity - double(l.n_samples) * l.impurity -
                           double(r.n_samples) * r.impurity;
        imp[nd.feature] += std::max(0.0, dec) / total;
    }
    const double s = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (s > 0.0)
        for (auto& v : imp) v /= s;
    return imp;
}

/// Mean squared error over all rows and outputs.
template <class Predictor>
double mean_squared_error(const Predictor& predict, const RMatrix& x, const RMatrix& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto p = predict(x.row(i));
        for (std::size_t o = 0; o < y.cols(); ++o) {
            const double d = p[o] - y(i, o);
            s += d * d;
        }
    }
    return s / double(x.rows() * y.cols());
}

// ---------------------------------------------------------------------------
// Feature-space partition

enum class Aggregation { max, min, mean };

struct Rect {
    double x0, x1, y0, y1;
    double area() const noexcept { return (x1 - x0) * (y1 - y0); }
};

struct Region {
    Rect rect;
    double value;
};

namespace detail {

struct Acc {
    Rect rect;
    double mx, mn, sum;
    std::size_t count;
};

inline std::vector<Acc> partition_rec(const Tree& tree, std::size_t k, std::vector<std::pair<double, double>>& box,
                                      std::size_t fi, std::size_t fj, std::size_t output) {
    const auto& nd = tree.nodes()[k];
    if (nd.is_leaf()) {
        const double v = tree.leaf_value(nd.leaf)[output];
        return {Acc{{box[fi].first, box[fi].second, box[fj].first, box[fj].second}, v, v, v, 1}};
    }
    const std::size_t f = nd.feature;
    const double t = nd.threshold;
    auto& [lo, hi] = box[f];
    const bool left_ok = lo < t, right_ok = hi >= t;
    if (left_ok && !right_ok) return partition_rec(tree, std::size_t(nd.left), box, fi, fj, output);
    if (right_ok && !left_ok) return partition_rec(tree, std::size_t(nd.right), box, fi, fj, output);

    const auto saved = box[f];
    box[f].second = std::min(saved.second, t);
    auto left = partition_rec(tree, std::size_t(nd.left), box, fi, fj, output);
    box[f] = saved;
    box[f].first = std::max(saved.first, t);
    auto right = partition_rec(tree, std::size_t(nd.right), box, fi, fj, output);
    box[f] = saved;

    if (f == fi || f == fj) {
        left.insert(left.end(), right.begin(), right.end());
        return left;
    }
    // Split on a hidden feature: both children cover the same plane area, so
    // overlay them and aggregate where they intersect.
    std::vector<Acc> out;
    for (const auto& a : left)
        for (const auto& b : right) {
            const Rect r{std::max(a.rect.x0, b.rect.x0), std::min(a.rect.x1, b.rect.x1), std::max(a.rect.y0, b.rect.y0),
                         std::min(a.rect.y1, b.rect.y1)};
            if (!(r.x0 < r.x1 && r.y0 < r.y1)) continue;
            out.push_back({r, std::max(a.mx, b.mx), std::min(a.mn, b.mn), a.sum + b.sum, a.count + b.count});
        }
    return out;
}

} // namespace detail

/// Projection of the tree's leaf cells onto the (fi, fj) plane over the
/// training range, aggregating the chosen output over the hidden features.
/// The returned rectangles tile the domain.
inline std::vector<Region> feature_space_partition(const Tree& tree, std::size_t fi, std::size_t fj,
                                                   std::size_t output = 0, Aggregation agg = Aggregation::max,
                                                   std::optional<Rect> domain = std::nullopt) {
    if (fi >= tree.n_features() || fj >= tree.n_features() || fi == fj)
        throw DomainError("feature_space_partition: invalid feature pair");
    if (output >= tree.n_outputs()) throw DomainError("feature_space_partition: output index out of range");
    std::vector<std::pair<double, double>> box(tree.n_features());
    for (std::size_t f = 0; f < tree.n_features(); ++f) box[f] = {tree.feature_min()[f], tree.feature_max()[f]};
    if (domain) {
        box[fi] = {domain->x0, domain->x1};
        box[fj] = {domain->y0, domain->y1};
    }
    if (!(box[fi].first < box[fi].second && box[fj].first < box[fj].second))
        throw DomainError("feature_space_partition: plotting domain has zero area");
    const auto accs = detail::partition_rec(tree, 0, box, fi, fj, output);
    std::vector<Region> out;
    out.reserve(accs.size());
    for (const auto& a : accs) {
        double v = a.mx;
        if (agg == Aggregation::min) v = a.mn;
        if (agg == Aggregation::mean) v = a.sum / double(a.count);
        out.push_back({a.rect, v});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct ParamGrid {
    std::vector<std::optional<std::size_t>> max_depth{std::nullopt};
    std::vector<std::size_t> min_samples_leaf{1};
    std::vector<std::size_t> min_samples_split{2};
    std::vector<double> ccp_alpha{0.0};
    Splitter splitter = Splitter::best;
    Impurity impurity = Impurity::mse;
    std::uint64_t seed = 0;

    /// Cells in row-major order: max_depth slowest, ccp_alpha fastest.
    std::vector<FitParams> cells() const {
        std::vector<FitParams> out;
        for (auto d : max_depth)
            for (auto l : min_samples_leaf)
                for (auto s : min_samples_split)
                    for (auto a : ccp_alpha) {
                        FitParams p;
                        p.max_depth = d;
                        p.min_samples_leaf = l;
                        p.min_samples_split = s;
                        p.ccp_alpha = a;
                        p.splitter = splitter;
                        p.impurity = impurity;
                        p.seed = seed;
                        out.push_back(p);
                    }
        return out;
    }
};

struct CvScore {
    FitParams params;
    double validation_mse;
};

struct CvResult {
    FitParams best;
    std::vector<CvScore> scores;
};

/// Scores every cell by held-out MSE. With k_folds <= 1 a single seeded split
/// keeps `fraction` of the rows for training; otherwise k-fold CV averages the
/// fold scores. Ties go to the earliest cell. Cells that differ only in
/// ccp_alpha share one grown tree.
inline CvResult grid_search_cv(const RMatrix& x, const RMatrix& y, const std::vector<FitParams>& cells,
                               double fraction = 0.8, std::uint64_t seed = 0, std::size_t k_folds = 1) {
    if (cells.empty()) throw DomainError("grid_search_cv: empty parameter grid");
    detail::check_training_data(x, y);
    if (x.rows() < 2) throw DomainError("grid_search_cv: at least two rows are required");
    if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("grid_search_cv: fraction must lie in (0, 1)");

    std::vector<std::size_t> perm(x.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

    std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::size_t>>> folds;
    if (k_folds <= 1) {
        auto n_train = static_cast<std::size_t>(std::llround(fraction * double(x.rows())));
        n_train = std::clamp<std::size_t>(n_train, 1, x.rows() - 1);
        std::vector<std::uint32_t> tr(perm.begin(), perm.begin() + std::ptrdiff_t(n_train));
        std::vector<std::size_t> va(perm.begin() + std::ptrdiff_t(n_train), perm.end());
        std::sort(tr.begin(), tr.end());
        std::sort(va.begin(), va.end());
        folds.emplace_back(std::move(tr), std::move(va));
    } else {
        modalml::detail::require(k_folds <= x.rows(), "grid_search_cv: more folds than rows");
        for (std::size_t k = 0; k < k_folds; ++k) {
            std::vector<std::uint32_t> tr;
            std::vector<std::size_t> va;
            for (std::size_t i = 0; i < perm.size(); ++i)
                (i % k_folds == k) ? va.push_back(perm[i]) : tr.push_back(static_cast<std::uint32_t>(perm[i]));
            std::sort(tr.begin(), tr.end());
            std::sort(va.begin(), va.end());
            folds.emplace_back(std::move(tr), std::move(va));
        }
    }

    std::vector<double> score(cells.size(), 0.0);
    std::vector<char> done(cells.size(), 0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (done[c]) continue;
        FitParams grow = cells[c];
        grow.ccp_alpha = 0.0;
        for (const auto& [tr, va] : folds) {
            const Tree full = fit(x, y, grow, tr);
            for (std::size_t d = c; d < cells.size(); ++d) {
                FitParams other = cells[d];
                other.ccp_alpha = 0.0;
                if (!(other == grow)) continue;
                const Tree t = cells[d].ccp_alpha > 0.0 ? prune(full, cells[d].ccp_alpha) : full;
                double s = 0.0;
                for (auto i : va) {
                    const auto p = t.predict(x.row(i));
                    for (std::size_t o = 0; o < y.cols(); ++o) s += (p[o] - y(i, o)) * (p[o] - y(i, o));
                }
                score[d] += s / double(va.size() * y.cols()) / double(folds.size());
            }
        }
        for (std::size_t d = c; d < cells.size(); ++d) {
            FitParams other = cells[d];
            other.ccp_alpha = 0.0;
            if (other == grow) done[d] = 1;
        }
    }
    CvResult res;
    std::size_t best = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        res.scores.push_back({cells[c], score[c]});
        if (score[c] < score[best]) best = c;
    }
    res.best = cells[best];
    return res;
}

inline CvResult grid_search_cv(const RMatrix& x, const RMatrix& y, const ParamGrid& grid, double fraction = 0.8,
                               std::uint64_t seed = 0, std::size_t k_folds = 1) {
    return grid_search_cv(x, y, grid.cells(), fraction, seed, k_folds);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const FitParams& p) {
    j = {{"max_depth", p.max_depth ? nlohmann::json(*p.max_depth) : nlohmann::json(nullptr)},
         {"min_samples_leaf", p.min_samples_leaf},
         {"min_samples_split", p.min_samples_split},
         {"splitter", p.splitter},
         {"impurity", p.impurity},
         {"ccp_alpha", p.ccp_alpha},
         {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, FitParams& p) {
    p = FitParams{};
    if (j.contains("max_depth") && !j["max_depth"].is_null()) p.max_depth = j["max_depth"].get<std::size_t>();
    p.min_samples_leaf = j.value("min_samples_leaf", std::size_t{1});
    p.min_samples_split = j.value("min_samples_split", std::size_t{2});
    if (j.contains("splitter")) j["splitter"].get_to(p.splitter);
    if (j.contains("impurity")) j["impurity"].get_to(p.impurity);
    p.ccp_alpha = j.value("ccp_alpha", 0.0);
    p.seed = j.value("seed", std::uint64_t{0});
}

namespace detail {

inline nlohmann::json node_to_json(const Tree& t, std::size_t k, bool samples_only) {
    const auto& nd = t.nodes()[k];
    nlohmann::json j;
    if (nd.is_leaf()) {
        if (samples_only) {
            const auto s = t.leaf_samples(nd.leaf);
            j["samples"] = std::vector<std::uint32_t>(s.begin(), s.end());
        } else {
            const auto v = t.leaf_value(nd.leaf);
            j["value"] = std::vector<double>(v.begin(), v.end());
        }
    } else {
        j["feature"] = nd.feature;
        j["threshold"] = nd.threshold;
    }
    j["n_samples"] = nd.n_samples;
    j["impurity"] = nd.impurity;
    if (!nd.is_leaf()) {
        j["left"] = node_to_json(t, std::size_t(nd.left), samples_only);
        j["right"] = node_to_json(t, std::size_t(nd.right), samples_only);
    }
    return j;
}

inline void node_from_json(const nlohmann::json& j, Tree& t, std::size_t k) {
    auto& nodes = TreeAccess::nodes(t);
    nodes[k].n_samples = j.at("n_samples").get<std::size_t>();
    nodes[k].impurity = j.at("impurity").get<double>();
    if (j.contains("left")) {
        const auto f = j.at("feature").get<std::uint32_t>();
        if (f >= t.n_features()) throw FormatError("tree JSON: split feature out of range");
        nodes[k].feature = f;
        nodes[k].threshold = j.at("threshold").get<double>();
        const std::size_t l = nodes.size();
        nodes.emplace_back();
        nodes.emplace_back();
        nodes[k].left = static_cast<std::int32_t>(l);
        nodes[k].right = static_cast<std::int32_t>(l + 1);
        node_from_json(j.at("left"), t, l);
        node_from_json(j.at("right"), t, l + 1);
        return;
    }
    auto& values = TreeAccess::leaf_values(t);
    const std::size_t m = t.n_outputs();
    nodes[k].leaf = static_cast<std::uint32_t>(values.size() / m);
    if (j.contains("value")) {
        if (t.has_leaf_samples()) throw FormatError("tree JSON: leaves mix values and samples");
        const auto v = j["value"].get<std::vector<double>>();
        if (v.size() != m) throw FormatError("tree JSON: leaf value width mismatch");
        values.insert(values.end(), v.begin(), v.end());
    } else {
        const auto s = j.at("samples").get<std::vector<std::uint32_t>>();
        auto& offsets = TreeAccess::leaf_offsets(t);
        auto& rows = TreeAccess::leaf_rows(t);
        if (!values.empty()) throw FormatError("tree JSON: leaves mix values and samples");
        if (offsets.empty()) offsets.push_back(0);
        nodes[k].leaf = static_cast<std::uint32_t>(offsets.size() - 1);
        rows.insert(rows.end(), s.begin(), s.end());
        offsets.push_back(rows.size());
    }
}

inline nlohmann::json flat_tree_to_json(const Tree& t) {
    const auto& nodes = t.nodes();
    std::vector<std::int32_t> left, right, leaf;
    std::vector<std::uint32_t> feature;
    std::vector<double> threshold, impurity;
    std::vector<std::size_t> n_samples;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& nd : nodes) {
        left.push_back(nd.left);
        right.push_back(nd.right);
        feature.push_back(nd.feature);
        threshold.push_back(nd.threshold);
        n_samples.push_back(nd.n_samples);
        impurity.push_back(nd.impurity);
        leaf.push_back(nd.is_leaf() ? std::int32_t(nd.leaf) : -1);
    }
    for (std::size_t l = 0; l < t.n_leaves(); ++l) {
        const auto s = t.leaf_samples(l);
        samples.push_back(std::vector<std::uint32_t>(s.begin(), s.end()));
    }
    return {{"kind", "regression_tree"},
            {"schema_version", 1},
            {"encoding", "flat"},
            {"n_features", t.n_features()},
            {"n_outputs", t.n_outputs()},
            {"feature_min", t.feature_min()},
            {"feature_max", t.feature_max()},
            {"left", left},
            {"right", right},
            {"feature", feature},
            {"threshold", threshold},
            {"n_samples", n_samples},
            {"impurity", impurity},
            {"leaf", leaf},
            {"leaf_samples", std::move(samples)}};
}

inline void flat_tree_from_json(const nlohmann::json& j, Tree& t) {
    const auto left = j.at("left").get<std::vector<std::int32_t>>();
    const auto right = j.at("right").get<std::vector<std::int32_t>>();
    const auto feature = j.at("feature").get<std::vector<std::uint32_t>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto n_samples = j.at("n_samples").get<std::vector<std::size_t>>();
    const auto impurity = j.at("impurity").get<std::vector<double>>();
    const auto leaf = j.at("leaf").get<std::vector<std::int32_t>>();
    const std::size_t n = left.size();
    if (n == 0 || right.size() != n || feature.size() != n || threshold.size() != n || n_samples.size() != n ||
        impurity.size() != n || leaf.size() != n)
        throw FormatError("tree JSON: flat arrays differ in length");
    const auto& ls = j.at("leaf_samples");
    auto& offsets = TreeAccess::leaf_offsets(t);
    auto& rows = TreeAccess::leaf_rows(t);
    offsets.push_back(0);
    for (const auto& s : ls) {
        const auto v = s.get<std::vector<std::uint32_t>>();
        rows.insert(rows.end(), v.begin(), v.end());
        offsets.push_back(rows.size());
    }
    auto& nodes = TreeAccess::nodes(t);
    nodes.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto& nd = nodes[k];
        const bool is_leaf = left[k] < 0;
        // Children always follow their parent, which also rules out cycles.
        if (!is_leaf && (left[k] <= std::int32_t(k) || right[k] <= std::int32_t(k) || std::size_t(left[k]) >= n ||
                         std::size_t(right[k]) >= n || feature[k] >= t.n_features()))
            throw FormatError("tree JSON: invalid node " + std::to_string(k));
        if (is_leaf && (leaf[k] < 0 || std::size_t(leaf[k]) >= ls.size()))
            throw FormatError("tree JSON: invalid leaf index at node " + std::to_string(k));
        nd.left = is_leaf ? -1 : left[k];
        nd.right = is_leaf ? -1 : right[k];
        nd.feature = feature[k];
        nd.threshold = threshold[k];
        nd.n_samples = n_samples[k];
        nd.impurity = impurity[k];
        nd.leaf = is_leaf ? std::uint32_t(leaf[k]) : 0;
    }
}

} // namespace detail

/// Nested JSON: internal nodes carry feature/threshold/left/right, leaves carry
/// their value. With samples_only the tree is written as flat node arrays with
/// leaf sample rows instead (ensemble members, which store targets once).
inline nlohmann::json tree_to_json(const Tree& t, bool samples_only = false) {
    if (samples_only) {
        if (!t.has_leaf_samples()) throw Error("tree_to_json: tree has no leaf samples");
        return detail::flat_tree_to_json(t);
    }
    return {{"kind", "regression_tree"},
            {"schema_version", 1},
            {"n_features", t.n_features()},
            {"n_outputs", t.n_outputs()},
            {"feature_min", t.feature_min()},
            {"feature_max", t.feature_max()},
            {"root", detail::node_to_json(t, 0, samples_only)}};
}

/// Inverse of tree_to_json. Trees stored with leaf samples need
/// refresh_leaf_values() with the training targets before predicting.
inline Tree tree_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "regression_tree") throw FormatError("tree JSON: wrong kind");
        if (j.at("schema_version").get<int>() != 1) throw FormatError("tree JSON: unsupported schema_version");
        Tree t;
        TreeAccess::n_features(t) = j.at("n_features").get<std::size_t>();
        TreeAccess::n_outputs(t) = j.at("n_outputs").get<std::size_t>();
        TreeAccess::feature_min(t) = j.at("feature_min").get<std::vector<double>>();
        TreeAccess::feature_max(t) = j.at("feature_max").get<std::vector<double>>();
        if (t.n_outputs() == 0 || t.feature_min().size() != t.n_features())
            throw FormatError("tree JSON: inconsistent header");
        if (j.value("encoding", std::string("nested")) == "flat") {
            detail::flat_tree_from_json(j, t);
            return t;
        }
        TreeAccess::nodes(t).emplace_back();
        detail::node_from_json(j.at("root"), t, 0);
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("tree JSON: ") + e.what());
    }
}

} // namespace modalml::cart
