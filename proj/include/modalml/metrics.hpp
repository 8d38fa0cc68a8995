#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modalml/eigen.hpp"
#include "modalml/error.hpp"

namespace modalml::metrics {

/// Wave Hedges error: mean of |t - p| / max(|t|, |p|), 0 where both are 0.
inline double whe(std::span<const double> t, std::span<const double> p) {
    if (t.size() != p.size()) throw DimensionError("whe: length mismatch");
    if (t.empty()) throw DomainError("whe: empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double den = std::max(std::abs(t[i]), std::abs(p[i]));
        if (den > 0.0) s += std::abs(t[i] - p[i]) / den;
    }
    return s / double(t.size());
}

inline double mae(std::span<const double> t, std::span<const double> p) {
    if (t.size() != p.size()) throw DimensionError("mae: length mismatch");
    if (t.empty()) throw DomainError("mae: empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += std::abs(t[i] - p[i]);
    return s / double(t.size());
}

/// Fraction of poles whose predicted dominant-group set differs from the truth.
inline double misclassification(std::span<const eigen::GroupSet> truth, std::span<const eigen::GroupSet> pred) {
    if (truth.size() != pred.size()) throw DimensionError("misclassification: length mismatch");
    if (truth.empty()) throw DomainError("misclassification: no poles");
    std::size_t bad = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) bad += truth[i] != pred[i];
    return double(bad) / double(truth.size());
}

inline constexpr double not_applicable = std::numeric_limits<double>::quiet_NaN();

struct InstanceScore {
    std::vector<double> features;
    double whe_re = not_applicable, whe_im = not_applicable;
    double mae_pf = not_applicable;
    std::size_t misclassified = 0, poles = 0;
};

/// One row of the evaluation table. Averages run over the flattened
/// instance x pole (or instance x state x pole) matrix.
struct ModelScore {
    std::string model;
    double whe_re = not_applicable, whe_im = not_applicable;
    double mae_pf = not_applicable;
    double misclassified_fraction = not_applicable;
    std::vector<InstanceScore> instances;

    void finalize() {
        auto mean = [&](auto member) {
            double s = 0.0;
            std::size_t n = 0;
            for (const auto& i : instances)
                if (!std::isnan(i.*member)) {
                    s += i.*member;
                    ++n;
                }
            return n ? s / double(n) : not_applicable;
        };
        whe_re = mean(&InstanceScore::whe_re);
        whe_im = mean(&InstanceScore::whe_im);
        mae_pf = mean(&InstanceScore::mae_pf);
        std::size_t bad = 0, total = 0;
        for (const auto& i : instances) {
            bad += i.misclassified;
            total += i.poles;
        }
        misclassified_fraction = total ? double(bad) / double(total) : not_applicable;
    }
};

struct EvalReport {
    std::string config_name;
    std::vector<std::string> feature_names;
    std::vector<ModelScore> models;
};

namespace detail {
inline nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
} // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : r.models) {
        nlohmann::json inst = nlohmann::json::array();
        for (const auto& i : m.instances)
            inst.push_back({{"features", i.features},
                            {"whe_re", detail::number_or_null(i.whe_re)},
                            {"whe_im", detail::number_or_null(i.whe_im)},
                            {"mae_pf", detail::number_or_null(i.mae_pf)},
                            {"misclassified", i.misclassified},
                            {"poles", i.poles}});
        models.push_back({{"model", m.model},
                          {"whe_re", detail::number_or_null(m.whe_re)},
                          {"whe_im", detail::number_or_null(m.whe_im)},
                          {"mae_pf", detail::number_or_null(m.mae_pf)},
                          {"misclassified_fraction", detail::number_or_null(m.misclassified_fraction)},
                          {"instances", std::move(inst)}});
    }
    return {{"kind", "evaluation_report"},
            {"schema_version", 1},
            {"config", r.config_name},
            {"feature_names", r.feature_names},
            {"averaging", "flattened instance x component matrix"},
            {"models", std::move(models)}};
}

/// Plain-text table in the layout of the paper's result tables.
inline std::string to_text(const EvalReport& r) {
    auto cell = [](double v, const char* fmt) {
        if (std::isnan(v)) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof buf, fmt, v);
        return std::string(buf);
    };
    std::string out = "Evaluation on " + r.config_name + " (" +
                      std::to_string(r.models.empty() ? 0 : r.models.front().instances.size()) + " test instances)\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %10s %10s %10s %14s\n", "Model", "WHE Re", "WHE Im", "MAE PF",
                  "Misclassified");
    out += line;
    out += std::string(62, '-') + "\n";
    for (const auto& m : r.models) {
        std::snprintf(line, sizeof line, "%-14s %10s %10s %10s %14s\n", m.model.c_str(), cell(m.whe_re, "%.4f").c_str(),
                      cell(m.whe_im, "%.4f").c_str(), cell(m.mae_pf, "%.4f").c_str(),
                      cell(100.0 * m.misclassified_fraction, "%.1f%%").c_str());
        out += line;
    }
    return out;
}

} // namespace modalml::metrics
