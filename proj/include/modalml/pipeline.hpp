#pragma once

// End-to-end workflow: sweep generation, model training, evaluation on held-out
// operating points, single-point prediction and partition maps. Every command
// is a pure function of the RunConfig (timing files excepted).

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "modalml/cart.hpp"
#include "modalml/dataset.hpp"
#include "modalml/eigen.hpp"
#include "modalml/ensemble.hpp"
#include "modalml/error.hpp"
#include "modalml/metrics.hpp"
#include "modalml/parallel.hpp"
#include "modalml/spline.hpp"
#include "modalml/svg.hpp"
#include "modalml/sysmodel.hpp"

namespace modalml::pipeline {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Model variants

enum class Model { so_dt, mo_dt, ens_mo_dt, li1d, la1d, la2d, mo_dt_1, mo_dt_2, ens_mo_dt_1, ens_mo_dt_2 };

inline constexpr std::array<std::pair<Model, const char*>, 10> model_table{{{Model::so_dt, "SO-DT"},
                                                                            {Model::mo_dt, "MO-DT"},
                                                                            {Model::ens_mo_dt, "ENS-MO-DT"},
                                                                            {Model::li1d, "1DLI"},
                                                                            {Model::la1d, "1DLA"},
                                                                            {Model::la2d, "2DLA"},
                                                                            {Model::mo_dt_1, "MO-DT-I"},
                                                                            {Model::mo_dt_2, "MO-DT-II"},
                                                                            {Model::ens_mo_dt_1, "ENS-MO-DT-I"},
                                                                            {Model::ens_mo_dt_2, "ENS-MO-DT-II"}}};

inline std::string model_name(Model m) {
    for (const auto& [k, n] : model_table)
        if (k == m) return n;
    return "?";
}

/// Accepts the canonical names and spaced variants such as "ENS MO-DT 1".
inline Model model_from_name(std::string s) {
    for (auto& c : s) c = c == ' ' || c == '_' ? '-' : char(std::toupper(static_cast<unsigned char>(c)));
    if (s.ends_with("-1")) s = s.substr(0, s.size() - 2) + "-I";
    if (s.ends_with("-2")) s = s.substr(0, s.size() - 2) + "-II";
    for (const auto& [k, n] : model_table)
        if (s == n) return k;
    throw DomainError("unknown model '" + s + "' (expected one of SO-DT, MO-DT, ENS-MO-DT, 1DLI, 1DLA, 2DLA, MO-DT-I, "
                      "MO-DT-II, ENS-MO-DT-I, ENS-MO-DT-II)");
}

inline bool is_pf_model(Model m) {
    return m == Model::mo_dt_1 || m == Model::mo_dt_2 || m == Model::ens_mo_dt_1 || m == Model::ens_mo_dt_2;
}
inline bool is_spline_model(Model m) { return m == Model::li1d || m == Model::la1d || m == Model::la2d; }
inline bool is_ensemble_model(Model m) {
    return m == Model::ens_mo_dt || m == Model::ens_mo_dt_1 || m == Model::ens_mo_dt_2;
}
inline bool is_method2(Model m) { return m == Model::mo_dt_2 || m == Model::ens_mo_dt_2; }

/// Pole model whose predictions feed a Method II PF model at predict time.
inline Model pole_source(Model pf) { return pf == Model::ens_mo_dt_2 ? Model::ens_mo_dt : Model::mo_dt; }

// ---------------------------------------------------------------------------
// Configuration

struct HyperGrid {
    std::vector<std::optional<std::size_t>> max_depth{std::nullopt, 12, 8, 5};
    std::vector<std::size_t> min_samples_leaf{1, 3, 10};
    std::vector<std::size_t> min_samples_split{2};
    /// Pruning strengths relative to the root impurity of each DB.
    std::vector<double> ccp_alpha_relative{0.0, 1e-6, 1e-4};
    double validation_fraction = 0.8;
    std::size_t k_folds = 1;
};

struct PartitionPlot {
    Model model = Model::mo_dt;
    std::string output = "Re(lambda_2)";
    std::string x_feature, y_feature;
    cart::Aggregation aggregation = cart::Aggregation::max;
};

struct RunConfig {
    static constexpr int schema_version = 1;

    std::string system = "3bus";  ///< builtin name or path of a system JSON
    std::optional<sysmodel::GridSpec> grid;
    std::vector<Model> models;
    HyperGrid hyper;
    std::size_t n_trees = 50;
    bool bootstrap = true;
    int spline_order = 4;
    std::optional<std::size_t> spline_segments;
    bool optimize_knots = true;
    std::string spline_feature = "R";
    std::string spline_feature_2d = "tau_v";
    std::uint64_t seed = 0;
    double threshold = 0.3;
    std::optional<std::vector<std::vector<double>>> test_instances;
    std::vector<PartitionPlot> partition_plots;
    std::optional<Model> predict_pole_model, predict_pf_model;
    fs::path output_dir = "out";
    unsigned threads = 0;
    bool allow_extrapolation = false;
    /// Directory relative paths resolve against (the config file's folder).
    fs::path base_dir = ".";

    bool has(Model m) const { return std::find(models.begin(), models.end(), m) != models.end(); }
};

inline RunConfig default_config(const std::string& system) {
    RunConfig c;
    c.system = system;
    if (system == "9bus") {
        c.models = {Model::ens_mo_dt, Model::ens_mo_dt_1};
        c.partition_plots = {{Model::ens_mo_dt, "Re(lambda_2)", "S_SG1share", "S_SG2share", cart::Aggregation::max}};
    } else {
        for (const auto& [m, n] : model_table) c.models.push_back(m);
        c.partition_plots = {{Model::mo_dt, "Re(lambda_2)", "S_SGshare", "tau_v", cart::Aggregation::max}};
    }
    return c;
}

NLOHMANN_JSON_SERIALIZE_ENUM(cart::Aggregation,
                             {{cart::Aggregation::max, "max"}, {cart::Aggregation::min, "min"}, {cart::Aggregation::mean, "mean"}})

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json models = nlohmann::json::array();
    for (auto m : c.models) models.push_back(model_name(m));
    nlohmann::json depth = nlohmann::json::array();
    for (auto d : c.hyper.max_depth) depth.push_back(d ? nlohmann::json(*d) : nlohmann::json(nullptr));
    nlohmann::json plots = nlohmann::json::array();
    for (const auto& p : c.partition_plots)
        plots.push_back({{"model", model_name(p.model)},
                         {"output", p.output},
                         {"x", p.x_feature},
                         {"y", p.y_feature},
                         {"aggregation", p.aggregation}});
    nlohmann::json j = {
        {"schema_version", RunConfig::schema_version},
        {"system", c.system},
        {"grid", c.grid ? nlohmann::json(*c.grid) : nlohmann::json(nullptr)},
        {"models", models},
        {"hyperparameters",
         {{"max_depth", depth},
          {"min_samples_leaf", c.hyper.min_samples_leaf},
          {"min_samples_split", c.hyper.min_samples_split},
          {"ccp_alpha_relative", c.hyper.ccp_alpha_relative},
          {"validation_fraction", c.hyper.validation_fraction},
          {"k_folds", c.hyper.k_folds}}},
        {"ensemble", {{"n_trees", c.n_trees}, {"bootstrap", c.bootstrap}}},
        {"spline",
         {{"order", c.spline_order},
          {"n_segments", c.spline_segments ? nlohmann::json(*c.spline_segments) : nlohmann::json(nullptr)},
          {"optimize_knots", c.optimize_knots},
          {"feature", c.spline_feature},
          {"feature_2d", c.spline_feature_2d}}},
        {"seed", c.seed},
        {"threshold", c.threshold},
        {"test_instances", c.test_instances ? nlohmann::json(*c.test_instances) : nlohmann::json(nullptr)},
        {"partition_plots", plots},
        {"predict",
         {{"poles", c.predict_pole_model ? nlohmann::json(model_name(*c.predict_pole_model)) : nlohmann::json(nullptr)},
          {"pf", c.predict_pf_model ? nlohmann::json(model_name(*c.predict_pf_model)) : nlohmann::json(nullptr)}}},
        {"output_dir", c.output_dir.generic_string()},
        {"threads", c.threads},
        {"allow_extrapolation", c.allow_extrapolation}};
    return j;
}

/// Missing keys keep the defaults of default_config(system).
inline RunConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = ".") {
    try {
        if (j.value("schema_version", 1) != RunConfig::schema_version)
            throw FormatError("config: unsupported schema_version");
        RunConfig c = default_config(j.value("system", std::string("3bus")));
        c.base_dir = base_dir;
        if (j.contains("grid") && !j["grid"].is_null()) c.grid = j["grid"].get<sysmodel::GridSpec>();
        if (j.contains("models")) {
            c.models.clear();
            for (const auto& m : j["models"]) c.models.push_back(model_from_name(m.get<std::string>()));
        }
        if (j.contains("hyperparameters")) {
            const auto& h = j["hyperparameters"];
            if (h.contains("max_depth")) {
                c.hyper.max_depth.clear();
                for (const auto& d : h["max_depth"])
                    c.hyper.max_depth.push_back(d.is_null() ? std::nullopt : std::optional(d.get<std::size_t>()));
            }
            if (h.contains("min_samples_leaf")) h["min_samples_leaf"].get_to(c.hyper.min_samples_leaf);
            if (h.contains("min_samples_split")) h["min_samples_split"].get_to(c.hyper.min_samples_split);
            if (h.contains("ccp_alpha_relative")) h["ccp_alpha_relative"].get_to(c.hyper.ccp_alpha_relative);
            c.hyper.validation_fraction = h.value("validation_fraction", c.hyper.validation_fraction);
            c.hyper.k_folds = h.value("k_folds", c.hyper.k_folds);
        }
        if (j.contains("ensemble")) {
            c.n_trees = j["ensemble"].value("n_trees", c.n_trees);
            c.bootstrap = j["ensemble"].value("bootstrap", c.bootstrap);
        }
        if (j.contains("spline")) {
            const auto& s = j["spline"];
            c.spline_order = s.value("order", c.spline_order);
            if (s.contains("n_segments") && !s["n_segments"].is_null()) c.spline_segments = s["n_segments"].get<std::size_t>();
            c.optimize_knots = s.value("optimize_knots", c.optimize_knots);
            c.spline_feature = s.value("feature", c.spline_feature);
            c.spline_feature_2d = s.value("feature_2d", c.spline_feature_2d);
        }
        c.seed = j.value("seed", c.seed);
        c.threshold = j.value("threshold", c.threshold);
        if (j.contains("test_instances") && !j["test_instances"].is_null())
            c.test_instances = j["test_instances"].get<std::vector<std::vector<double>>>();
        if (j.contains("partition_plots")) {
            c.partition_plots.clear();
            for (const auto& p : j["partition_plots"]) {
                PartitionPlot pp;
                pp.model = model_from_name(p.at("model").get<std::string>());
                pp.output = p.at("output").get<std::string>();
                pp.x_feature = p.at("x").get<std::string>();
                pp.y_feature = p.at("y").get<std::string>();
                if (p.contains("aggregation")) p["aggregation"].get_to(pp.aggregation);
                c.partition_plots.push_back(pp);
            }
        }
        if (j.contains("predict")) {
            const auto& p = j["predict"];
            if (p.contains("poles") && !p["poles"].is_null()) c.predict_pole_model = model_from_name(p["poles"]);
            if (p.contains("pf") && !p["pf"].is_null()) c.predict_pf_model = model_from_name(p["pf"]);
        }
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        c.threads = j.value("threads", c.threads);
        c.allow_extrapolation = j.value("allow_extrapolation", c.allow_extrapolation);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
}

inline RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

/// Resolved configuration: the system, its grid and the output locations.
struct Context {
    RunConfig cfg;
    sysmodel::SystemConfig sys;
    sysmodel::GridSpec grid;

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : cfg.base_dir / p; }
    fs::path out() const { return resolve(cfg.output_dir); }
    fs::path db_dir() const { return out() / "db"; }
    fs::path model_dir(Model m) const { return out() / "models" / model_name(m); }
    fs::path report_dir() const { return out() / "reports"; }
    fs::path figure_dir() const { return out() / "figures"; }
    fs::path db_path(dataset::Layout l) const {
        dataset::RegressionDB probe;
        probe.layout = l;
        probe.config_name = sys.name;
        return db_dir() / (dataset::file_stem(probe) + ".json");
    }

    std::size_t feature_index(const std::string& name) const {
        const auto names = sys.feature_names();
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw DomainError("unknown feature '" + name + "' for system " + sys.name);
        return std::size_t(it - names.begin());
    }
};

inline Context make_context(const RunConfig& cfg) {
    Context ctx{cfg, {}, {}};
    if (auto b = sysmodel::builtin(cfg.system)) {
        ctx.sys = *b;
    } else {
        const fs::path p = ctx.resolve(cfg.system);
        std::ifstream in(p);
        if (!in) throw Error("system '" + cfg.system + "' is neither builtin (3bus, 9bus) nor a readable file");
        try {
            ctx.sys = nlohmann::json::parse(in).get<sysmodel::SystemConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("system file " + p.string() + ": " + e.what());
        }
    }
    ctx.sys.validate();
    if (cfg.grid)
        ctx.grid = *cfg.grid;
    else if (auto g = sysmodel::builtin_grid(ctx.sys.name))
        ctx.grid = *g;
    else
        throw DomainError("no grid given and no builtin grid for system '" + ctx.sys.name + "'");
    ctx.grid.validate(ctx.sys);
    if (cfg.models.empty()) throw DomainError("config: at least one model must be selected");
    for (auto m : cfg.models)
        if (is_method2(m) && !cfg.has(pole_source(m)))
            throw DomainError("config: " + model_name(m) + " predicts from " + model_name(pole_source(m)) +
                              " poles, which must also be selected");
    if (!(cfg.threshold > 0.0 && cfg.threshold <= 1.0)) throw DomainError("config: threshold must lie in (0, 1]");
    if (cfg.n_trees < 1) throw DomainError("config: ensemble n_trees must be >= 1");
    return ctx;
}

/// Independent deterministic seed per (master seed, purpose).
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return splitmix64(base ^ h);
}

inline void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw Error("write failed for " + path.string());
}

inline nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing file " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Generation

/// Solves every grid point and orders its modes consistently with its grid
/// parent (one step back along the last moving axis), so that column m of the
/// pole DBs follows one physical mode across the sweep.
inline std::vector<dataset::SweepSample> tracked_sweep(const sysmodel::SystemConfig& sys,
                                                       const sysmodel::GridSpec& grid, double threshold,
                                                       unsigned threads = 0) {
    const auto points = sysmodel::sweep_grid(sys, grid);
    std::vector<dataset::SweepSample> samples(points.size());
    parallel_for(
        points.size(),
        [&](std::size_t k) {
            const auto a = sysmodel::build_state_matrix(sys, points[k]);
            try {
                auto sol = eigen::modal_analysis(a.a, sys.group_of_state, threshold);
                sol.phi = CMatrix();
                sol.psi = CMatrix();
                samples[k] = {points[k], std::move(sol)};
            } catch (const Error& e) {
                std::string where;
                for (std::size_t f = 0; f < points[k].values.size(); ++f)
                    where += (f ? ", " : "") + points[k].names[f] + "=" + svg::label(points[k].values[f]);
                throw NumericalError("eigen-analysis failed at grid point " + std::to_string(k) + " (" + where +
                                     "): " + e.what());
            }
        },
        threads);
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto parent = grid.parent_of(k);
        if (!parent) continue;
        const auto perm = eigen::track_poles(samples[*parent].solution.lambdas, samples[k].solution.lambdas);
        samples[k].solution = eigen::permute_modes(samples[k].solution, perm);
    }
    return samples;
}

struct GenerateResult {
    std::size_t n_points = 0;
    std::vector<fs::path> files;
    dataset::PoleAndPfDBs dbs;
    double seconds = 0.0;
};

inline GenerateResult cmd_generate(const RunConfig& cfg) {
    const auto t0 = Clock::now();
    const Context ctx = make_context(cfg);
    if (ctx.grid.size() == 0) throw DomainError("generate: empty grid");
    const auto samples = tracked_sweep(ctx.sys, ctx.grid, cfg.threshold, cfg.threads);
    GenerateResult r;
    r.n_points = samples.size();
    r.dbs = dataset::assemble(samples, ctx.sys.name, ctx.grid.hash());
    for (const auto* db : {&r.dbs.re, &r.dbs.im, &r.dbs.pf_full}) r.files.push_back(dataset::save(*db, ctx.db_dir()));
    r.seconds = seconds_since(t0);
    return r;
}

inline dataset::RegressionDB load_db(const Context& ctx, dataset::Layout l) {
    const auto path = ctx.db_path(l);
    if (!fs::exists(path)) throw Error("missing DB " + path.string() + " (run generate first)");
    auto db = dataset::load(path);
    if (db.grid_hash != ctx.grid.hash())
        throw Error("DB " + path.string() + " was generated on a different grid (hash " + db.grid_hash + ")");
    return db;
}

// ---------------------------------------------------------------------------
// Predictors

using Regressor = std::variant<cart::Tree, ensemble::BaggedEnsemble>;

inline std::vector<double> predict(const Regressor& r, std::span<const double> x) {
    if (const auto* t = std::get_if<cart::Tree>(&r)) {
        const auto p = t->predict(x);
        return {p.begin(), p.end()};
    }
    return std::get<ensemble::BaggedEnsemble>(r).predict(x);
}

struct PoleModel {
    Model kind = Model::mo_dt;
    std::vector<Regressor> re, im;                 ///< one MO regressor, or M SO trees
    std::vector<spline::SplineFamily> sre, sim;    ///< splines: one family per mode

    std::vector<Complex> predict(std::span<const double> x, bool allow_extrapolation = false) const {
        std::vector<double> r, i;
        if (is_spline_model(kind)) {
            for (const auto& f : sre) r.push_back(f.predict(x, allow_extrapolation));
            for (const auto& f : sim) i.push_back(f.predict(x, allow_extrapolation));
        } else if (re.size() == 1) {
            r = pipeline::predict(re[0], x);
            i = pipeline::predict(im[0], x);
        } else {
            for (const auto& t : re) r.push_back(pipeline::predict(t, x)[0]);
            for (const auto& t : im) i.push_back(pipeline::predict(t, x)[0]);
        }
        std::vector<Complex> out(r.size());
        for (std::size_t m = 0; m < r.size(); ++m) out[m] = {r[m], i[m]};
        return out;
    }
};

struct PfModel {
    Model kind = Model::mo_dt_1;
    std::vector<Regressor> parts;  ///< per state (Method I) or per mode (Method II)

    /// Participation matrix (N x M), each column re-normalized by its maximum.
    RMatrix predict(std::span<const double> x, std::span<const Complex> poles, std::size_t n_states) const {
        const std::size_t m_count = poles.size();
        RMatrix p(n_states, m_count);
        if (!is_method2(kind)) {
            modalml::detail::require_dims(parts.size() == n_states, "PF model: one regressor per state expected");
            for (std::size_t n = 0; n < n_states; ++n) {
                const auto row = pipeline::predict(parts[n], x);
                for (std::size_t m = 0; m < m_count; ++m) p(n, m) = row[m];
            }
        } else {
            modalml::detail::require_dims(parts.size() == m_count, "PF model: one regressor per mode expected");
            std::vector<double> xi(x.begin(), x.end());
            xi.resize(x.size() + 2);
            for (std::size_t m = 0; m < m_count; ++m) {
                xi[x.size()] = poles[m].real();
                xi[x.size() + 1] = poles[m].imag();
                const auto col = pipeline::predict(parts[m], xi);
                for (std::size_t n = 0; n < n_states; ++n) p(n, m) = col[n];
            }
        }
        for (std::size_t m = 0; m < m_count; ++m) {
            double mx = 0.0;
            for (std::size_t n = 0; n < n_states; ++n) mx = std::max(mx, p(n, m));
            for (std::size_t n = 0; n < n_states; ++n) p(n, m) = mx > 0.0 ? std::max(0.0, p(n, m)) / mx : 0.0;
        }
        return p;
    }
};

// ---------------------------------------------------------------------------
// Training

struct TrainedFile {
    fs::path relative;  ///< under models/<NAME>/
    std::string content;
    nlohmann::json summary;
};

namespace detail {

inline std::vector<cart::FitParams> cv_cells(const HyperGrid& h, const RMatrix& y) {
    // Root impurity (sum of per-output variances) scales the pruning grid.
    double root = 0.0;
    for (std::size_t o = 0; o < y.cols(); ++o) {
        double mean = 0.0;
        for (std::size_t i = 0; i < y.rows(); ++i) mean += y(i, o);
        mean /= double(y.rows());
        double v = 0.0;
        for (std::size_t i = 0; i < y.rows(); ++i) v += (y(i, o) - mean) * (y(i, o) - mean);
        root += v / double(y.rows());
    }
    cart::ParamGrid g;
    g.max_depth = h.max_depth;
    g.min_samples_leaf = h.min_samples_leaf;
    g.min_samples_split = h.min_samples_split;
    g.ccp_alpha.clear();
    for (double a : h.ccp_alpha_relative) g.ccp_alpha.push_back(a * root);
    return g.cells();
}

inline nlohmann::json model_header(const Context& ctx, Model m, const std::string& target,
                                   const dataset::RegressionDB& db) {
    return {{"kind", "trained_model"},
            {"schema_version", 1},
            {"model", model_name(m)},
            {"target", target},
            {"config", ctx.sys.name},
            {"grid_hash", db.grid_hash},
            {"seed", ctx.cfg.seed},
            {"feature_names", db.feature_names},
            {"output_names", db.output_names}};
}

inline TrainedFile train_tree(const Context& ctx, Model m, const std::string& target, const dataset::RegressionDB& db) {
    const auto& h = ctx.cfg.hyper;
    const auto cells = cv_cells(h, db.y);
    const auto cv = cart::grid_search_cv(db.x, db.y, cells, h.validation_fraction,
                                         derive_seed(ctx.cfg.seed, "cv/" + model_name(m) + "/" + target), h.k_folds);
    double best_score = 0.0;
    for (const auto& s : cv.scores)
        if (s.params == cv.best) {
            best_score = s.validation_mse;
            break;
        }
    const cart::Tree tree = cart::fit(db.x, db.y, cv.best);
    nlohmann::json j = model_header(ctx, m, target, db);
    j["fit"] = cv.best;
    j["validation_mse"] = best_score;
    j["predictor"] = cart::tree_to_json(tree);
    nlohmann::json summary = {{"target", target},
                              {"params", cv.best},
                              {"validation_mse", best_score},
                              {"leaves", tree.n_leaves()},
                              {"depth", tree.depth()}};
    return {target + ".json", j.dump(), std::move(summary)};
}

inline TrainedFile train_ensemble(const Context& ctx, Model m, const std::string& target,
                                  const dataset::RegressionDB& db, unsigned threads) {
    ensemble::BaggingParams p;
    p.n_trees = ctx.cfg.n_trees;
    p.bootstrap = ctx.cfg.bootstrap;
    p.seed = derive_seed(ctx.cfg.seed, "bagging/" + model_name(m) + "/" + target);
    p.threads = threads;
    const auto e = ensemble::fit_bagging(db.x, db.y, p);
    nlohmann::json j = model_header(ctx, m, target, db);
    j["fit"] = {{"n_trees", p.n_trees}, {"bootstrap", p.bootstrap}, {"seed", p.seed}, {"splitter", p.splitter}};
    j["predictor"] = ensemble::ensemble_to_json(e);
    std::size_t leaves = 0;
    for (const auto& t : e.trees()) leaves += t.n_leaves();
    nlohmann::json summary = {{"target", target}, {"n_trees", p.n_trees}, {"mean_leaves", double(leaves) / double(e.n_trees())}};
    return {target + ".json", j.dump(), std::move(summary)};
}

inline std::string two_digits(std::size_t k, std::size_t total) {
    const std::size_t width = std::to_string(total).size();
    std::string s = std::to_string(k);
    return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

inline std::vector<TrainedFile> train_splines(const Context& ctx, Model m, const dataset::RegressionDB& re,
                                              const dataset::RegressionDB& im) {
    const std::size_t fx = ctx.feature_index(ctx.cfg.spline_feature);
    spline::FamilyParams p1;
    p1.order = ctx.cfg.spline_order;
    p1.n_segments = ctx.cfg.spline_segments;
    p1.optimize_knots = ctx.cfg.optimize_knots;
    p1.swept = {fx};
    p1.kind = m == Model::li1d ? spline::Kind::li1d : spline::Kind::la1d;
    spline::FamilyParams p2 = p1;
    p2.kind = spline::Kind::la2d;
    if (m == Model::la2d) {
        p2.swept = {fx, ctx.feature_index(ctx.cfg.spline_feature_2d)};
        p1.kind = spline::Kind::la1d;
    }
    std::vector<TrainedFile> out;
    for (const auto* db : {&re, &im}) {
        const std::string target = db == &re ? "re" : "im";
        std::vector<spline::SplineFamily> fams(db->y.cols());
        parallel_for(
            db->y.cols(),
            [&](std::size_t k) {
                const auto col = db->y.col(k);
                if (m == Model::la2d) {
                    const auto knots = spline::fit_family(db->x, col, p1);
                    fams[k] = spline::fit_family(db->x, col, p2, &knots);
                } else {
                    fams[k] = spline::fit_family(db->x, col, p1);
                }
            },
            ctx.cfg.threads);
        nlohmann::json fj = nlohmann::json::array();
        for (const auto& f : fams) fj.push_back(spline::family_to_json(f));
        nlohmann::json j = model_header(ctx, m, target, *db);
        j["fit"] = {{"order", p1.order},
                    {"n_segments", p1.n_segments ? nlohmann::json(*p1.n_segments) : nlohmann::json("default")},
                    {"optimize_knots", p1.optimize_knots},
                    {"swept", m == Model::la2d ? p2.swept : p1.swept}};
        j["predictor"] = {{"kind", "spline_model"}, {"families", std::move(fj)}};
        out.push_back({target + ".json", j.dump(), {{"target", target}, {"families", fams.size()}}});
    }
    return out;
}

} // namespace detail

struct TrainResult {
    nlohmann::json report;   ///< deterministic: chosen parameters, validation scores
    nlohmann::json timing;   ///< seconds per model
    std::vector<fs::path> files;
};

inline TrainResult cmd_train(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    const auto re = load_db(ctx, dataset::Layout::poles_re);
    const auto im = load_db(ctx, dataset::Layout::poles_im);
    std::optional<dataset::RegressionDB> pf;
    for (auto m : cfg.models)
        if (is_pf_model(m) && !pf) pf = load_db(ctx, dataset::Layout::pf_full);

    TrainResult res;
    res.report = {{"kind", "training_report"}, {"schema_version", 1}, {"config", ctx.sys.name},
                  {"grid_hash", re.grid_hash}, {"models", nlohmann::json::object()}};
    res.timing = nlohmann::json::object();
    nlohmann::json index = {{"kind", "model_index"}, {"schema_version", 1}, {"config", ctx.sys.name},
                            {"grid_hash", re.grid_hash}, {"models", nlohmann::json::object()}};

    for (auto m : cfg.models) {
        const auto t0 = Clock::now();
        std::vector<TrainedFile> files;
        const std::size_t n_modes = re.y.cols();
        if (m == Model::so_dt) {
            files.resize(2 * n_modes);
            parallel_for(
                2 * n_modes,
                [&](std::size_t k) {
                    const bool is_re = k < n_modes;
                    const std::size_t mode = (k % n_modes) + 1;
                    const auto db = dataset::to_single_output(is_re ? re : im, mode);
                    files[k] = detail::train_tree(ctx, m, (is_re ? "re_" : "im_") + detail::two_digits(mode, n_modes), db);
                },
                cfg.threads);
        } else if (m == Model::mo_dt || m == Model::ens_mo_dt) {
            files.resize(2);
            for (std::size_t k = 0; k < 2; ++k) {
                const auto& db = k == 0 ? re : im;
                const std::string target = k == 0 ? "re" : "im";
                files[k] = m == Model::mo_dt ? detail::train_tree(ctx, m, target, db)
                                             : detail::train_ensemble(ctx, m, target, db, cfg.threads);
            }
        } else if (is_spline_model(m)) {
            files = detail::train_splines(ctx, m, re, im);
        } else {
            const bool method2 = is_method2(m);
            const std::size_t count = method2 ? n_modes : pf->n_states;
            files.resize(count);
            parallel_for(
                count,
                [&](std::size_t k) {
                    const auto db = method2 ? dataset::pf_method2(*pf, re, im, k + 1) : dataset::pf_method1(*pf, k + 1);
                    const std::string target = (method2 ? "mode_" : "pv_") + detail::two_digits(k + 1, count);
                    files[k] = is_ensemble_model(m) ? detail::train_ensemble(ctx, m, target, db, 1)
                                                    : detail::train_tree(ctx, m, target, db);
                },
                cfg.threads);
        }
        const double secs = seconds_since(t0);
        nlohmann::json entries = nlohmann::json::array();
        nlohmann::json names = nlohmann::json::array();
        for (auto& f : files) {
            const auto path = ctx.model_dir(m) / f.relative;
            write_file(path, f.content);
            res.files.push_back(path);
            entries.push_back(std::move(f.summary));
            names.push_back(f.relative.generic_string());
            f.content.clear();
            f.content.shrink_to_fit();
        }
        res.report["models"][model_name(m)] = std::move(entries);
        index["models"][model_name(m)] = std::move(names);
        res.timing[model_name(m)] = {{"train_seconds", secs}};
    }
    write_file(ctx.out() / "models" / "index.json", index.dump(2) + "\n");
    write_file(ctx.report_dir() / "train_report.json", res.report.dump(2) + "\n");
    write_file(ctx.report_dir() / "train_timing.json", res.timing.dump(2) + "\n");
    return res;
}

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline Regressor regressor_from(const nlohmann::json& j) {
    const auto& p = j.at("predictor");
    if (p.at("kind").get<std::string>() == "bagged_ensemble") return ensemble::ensemble_from_json(p);
    return cart::tree_from_json(p);
}

inline std::vector<std::string> model_files(const Context& ctx, Model m) {
    const auto index = read_json(ctx.out() / "models" / "index.json");
    const auto name = model_name(m);
    if (!index.at("models").contains(name))
        throw Error("model " + name + " has not been trained (run train with it selected)");
    if (index.at("grid_hash").get<std::string>() != ctx.grid.hash())
        throw Error("trained models belong to a different grid; retrain");
    return index["models"][name].get<std::vector<std::string>>();
}

} // namespace detail

inline PoleModel load_pole_model(const Context& ctx, Model m) {
    if (is_pf_model(m)) throw DomainError(model_name(m) + " is not a pole model");
    PoleModel pm;
    pm.kind = m;
    for (const auto& file : detail::model_files(ctx, m)) {
        const auto j = read_json(ctx.model_dir(m) / file);
        const bool is_re = j.at("target").get<std::string>().starts_with("re");
        if (is_spline_model(m)) {
            auto& dst = is_re ? pm.sre : pm.sim;
            for (const auto& f : j.at("predictor").at("families")) dst.push_back(spline::family_from_json(f));
        } else {
            (is_re ? pm.re : pm.im).push_back(detail::regressor_from(j));
        }
    }
    return pm;
}

inline PfModel load_pf_model(const Context& ctx, Model m) {
    if (!is_pf_model(m)) throw DomainError(model_name(m) + " is not a participation-factor model");
    PfModel pf;
    pf.kind = m;
    for (const auto& file : detail::model_files(ctx, m)) pf.parts.push_back(detail::regressor_from(read_json(ctx.model_dir(m) / file)));
    return pf;
}

struct LoadedModels {
    std::map<Model, PoleModel> poles;
    std::map<Model, PfModel> pfs;
};

inline LoadedModels load_models(const Context& ctx, std::span<const Model> which) {
    LoadedModels lm;
    for (auto m : which) {
        if (is_pf_model(m)) {
            if (!lm.pfs.contains(m)) lm.pfs.emplace(m, load_pf_model(ctx, m));
            if (is_method2(m) && !lm.poles.contains(pole_source(m)))
                lm.poles.emplace(pole_source(m), load_pole_model(ctx, pole_source(m)));
        } else if (!lm.poles.contains(m)) {
            lm.poles.emplace(m, load_pole_model(ctx, m));
        }
    }
    return lm;
}

// ---------------------------------------------------------------------------
// Ground truth for arbitrary points

/// Pole ordering of the nearest grid node, read back from the pole DBs.
struct Reference {
    dataset::RegressionDB re, im;

    std::vector<Complex> poles_at(std::size_t node) const {
        std::vector<Complex> out(re.y.cols());
        for (std::size_t m = 0; m < out.size(); ++m) out[m] = {re.y(node, m), im.y(node, m)};
        return out;
    }
};

inline Reference load_reference(const Context& ctx) {
    return {load_db(ctx, dataset::Layout::poles_re), load_db(ctx, dataset::Layout::poles_im)};
}

/// Direct path: state matrix, eigen-analysis, and tracking against the
/// nearest grid node so mode m matches DB column m.
inline eigen::ModalSolution exact_solution(const Context& ctx, const Reference& ref, const sysmodel::FeaturePoint& pt) {
    const auto a = sysmodel::build_state_matrix(ctx.sys, pt);
    auto sol = eigen::modal_analysis(a.a, ctx.sys.group_of_state, ctx.cfg.threshold);
    const auto node = sysmodel::nearest_grid_node(ctx.grid, pt);
    const auto ref_poles = ref.poles_at(node);
    return eigen::permute_modes(sol, eigen::track_poles(ref_poles, sol.lambdas));
}

inline std::vector<sysmodel::FeaturePoint> test_points(const Context& ctx) {
    std::vector<sysmodel::FeaturePoint> out;
    if (ctx.cfg.test_instances) {
        for (const auto& v : *ctx.cfg.test_instances) {
            auto pt = sysmodel::make_point(ctx.sys, v);
            sysmodel::validate_point(ctx.sys, pt);
            out.push_back(std::move(pt));
        }
    } else {
        out = sysmodel::builtin_test_instances(ctx.sys);
    }
    if (out.empty()) throw DomainError("no test instances configured for system " + ctx.sys.name);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

/// PF model whose predictions color a pole model's markers.
inline std::optional<Model> paired_pf(const RunConfig& cfg, Model pole) {
    const bool ens = pole == Model::ens_mo_dt;
    for (auto m : ens ? std::array{Model::ens_mo_dt_1, Model::ens_mo_dt_2} : std::array{Model::mo_dt_1, Model::mo_dt_2})
        if (cfg.has(m)) return m;
    return std::nullopt;
}

inline std::optional<cart::Tree> plot_tree(const LoadedModels& lm, const PartitionPlot& p, bool& is_re, std::size_t& output,
                                   std::size_t n_modes) {
    const std::string& o = p.output;
    is_re = o.starts_with("Re(");
    if (!is_re && !o.starts_with("Im(")) throw DomainError("partition plot output must be Re(lambda_k) or Im(lambda_k)");
    const auto us = o.find('_');
    const std::size_t k = us == std::string::npos ? 0 : std::stoul(o.substr(us + 1));
    if (k < 1 || k > n_modes) throw DomainError("partition plot output '" + o + "' names no mode");
    const auto it = lm.poles.find(p.model);
    if (it == lm.poles.end()) return std::nullopt;
    const auto& regs = is_re ? it->second.re : it->second.im;
    if (regs.empty()) return std::nullopt;
    const Regressor& r = regs.size() == 1 ? regs[0] : regs[k - 1];
    output = regs.size() == 1 ? k - 1 : 0;
    if (const auto* t = std::get_if<cart::Tree>(&r)) return *t;
    // Ensembles are drawn through their first member.
    return std::get<ensemble::BaggedEnsemble>(r).member(0);
}

} // namespace detail

inline std::vector<fs::path> render_partition_plots(const Context& ctx, const LoadedModels& lm, std::size_t n_modes) {
    std::vector<fs::path> out;
    for (const auto& p : ctx.cfg.partition_plots) {
        bool is_re = true;
        std::size_t output = 0;
        const auto tree = detail::plot_tree(lm, p, is_re, output, n_modes);
        if (!tree) continue;
        const auto fi = ctx.feature_index(p.x_feature), fj = ctx.feature_index(p.y_feature);
        const auto regions = cart::feature_space_partition(*tree, fi, fj, output, p.aggregation);
        static const char* agg_name[] = {"max", "min", "mean"};
        const std::string agg = agg_name[int(p.aggregation)];
        const std::string title = model_name(p.model) + ": " + p.output + " (" + agg + " over other features)";
        std::string stem = "partition_" + model_name(p.model) + "_" + p.output + "_" + p.x_feature + "_" + p.y_feature;
        for (auto& c : stem)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
        const auto path = ctx.figure_dir() / (stem + ".svg");
        write_file(path, svg::partition_map(regions, p.x_feature, p.y_feature, title));
        out.push_back(path);
    }
    return out;
}

struct EvaluateResult {
    metrics::EvalReport report;
    nlohmann::json timing;
    std::vector<fs::path> files;
};

inline EvaluateResult cmd_evaluate(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    const Reference ref = load_reference(ctx);
    const auto points = test_points(ctx);
    const LoadedModels lm = load_models(ctx, cfg.models);
    const std::size_t n_states = ctx.sys.n_states();

    std::vector<eigen::ModalSolution> truth;
    for (const auto& pt : points) truth.push_back(exact_solution(ctx, ref, pt));

    EvaluateResult res;
    res.report.config_name = ctx.sys.name;
    res.report.feature_names = ctx.sys.feature_names();
    res.timing = nlohmann::json::object();

    // Pole predictions are computed once per pole model and reused by PF models.
    std::map<Model, std::vector<std::vector<Complex>>> pole_pred;
    for (const auto& [m, pm] : lm.poles) {
        const auto t0 = Clock::now();
        auto& v = pole_pred[m];
        for (const auto& pt : points) v.push_back(pm.predict(pt.values, cfg.allow_extrapolation));
        res.timing[model_name(m)]["test_seconds"] = seconds_since(t0);
    }
    std::map<Model, std::vector<RMatrix>> pf_pred;
    for (const auto& [m, pfm] : lm.pfs) {
        const auto t0 = Clock::now();
        auto& v = pf_pred[m];
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto poles = is_method2(m) ? pole_pred.at(pole_source(m))[i] : truth[i].lambdas;
            v.push_back(pfm.predict(points[i].values, poles, n_states));
        }
        res.timing[model_name(m)]["test_seconds"] = seconds_since(t0);
    }

    for (auto m : cfg.models) {
        metrics::ModelScore score;
        score.model = model_name(m);
        for (std::size_t i = 0; i < points.size(); ++i) {
            metrics::InstanceScore is;
            is.features = points[i].values;
            const auto& t = truth[i];
            if (!is_pf_model(m)) {
                const auto& p = pole_pred.at(m)[i];
                std::vector<double> tr, ti, pr, pi;
                for (std::size_t k = 0; k < p.size(); ++k) {
                    tr.push_back(t.lambdas[k].real());
                    ti.push_back(t.lambdas[k].imag());
                    pr.push_back(p[k].real());
                    pi.push_back(p[k].imag());
                }
                is.whe_re = metrics::whe(tr, pr);
                is.whe_im = metrics::whe(ti, pi);
            } else {
                const auto& p = pf_pred.at(m)[i];
                is.mae_pf = metrics::mae(t.p.data(), p.data());
                const auto dom = eigen::dominant_groups(p, ctx.sys.group_of_state, cfg.threshold);
                is.poles = dom.size();
                for (std::size_t k = 0; k < dom.size(); ++k) is.misclassified += dom[k] != t.dominant[k];
            }
            score.instances.push_back(std::move(is));
        }
        score.finalize();
        res.report.models.push_back(std::move(score));
    }

    // Modal maps: exact crosses and predicted circles per pole model.
    std::vector<std::string> groups = ctx.sys.groups;
    for (const auto& [m, preds] : pole_pred) {
        if (!cfg.has(m)) continue;
        const auto pf = detail::paired_pf(cfg, m);
        std::vector<svg::PoleMarker> markers;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto lead_true = eigen::leading_group(truth[i].p, ctx.sys.group_of_state);
            const auto lead_pred = pf ? eigen::leading_group(pf_pred.at(*pf)[i], ctx.sys.group_of_state) : lead_true;
            for (std::size_t k = 0; k < preds[i].size(); ++k) {
                markers.push_back({truth[i].lambdas[k], lead_true[k], true});
                markers.push_back({preds[i][k], lead_pred[k], false});
            }
        }
        const auto path = ctx.figure_dir() / ("modal_map_" + model_name(m) + ".svg");
        write_file(path, svg::modal_map(markers, groups,
                                        "Exact (x) vs " + model_name(m) + (pf ? " / " + model_name(*pf) : "") +
                                            " (o), " + std::to_string(points.size()) + " instances"));
        res.files.push_back(path);
    }
    for (auto& p : render_partition_plots(ctx, lm, ref.re.y.cols())) res.files.push_back(p);

    const auto json_path = ctx.report_dir() / "evaluation.json";
    const auto text_path = ctx.report_dir() / "evaluation.txt";
    write_file(json_path, metrics::to_json(res.report).dump(2) + "\n");
    write_file(text_path, metrics::to_text(res.report));
    // Training times recorded by train are merged into the timing table.
    const auto train_timing_path = ctx.report_dir() / "train_timing.json";
    if (fs::exists(train_timing_path)) {
        const auto tt = read_json(train_timing_path);
        for (auto it = tt.begin(); it != tt.end(); ++it)
            if (res.timing.contains(it.key())) res.timing[it.key()]["train_seconds"] = it.value().value("train_seconds", 0.0);
    }
    write_file(ctx.report_dir() / "evaluation_timing.json", res.timing.dump(2) + "\n");
    res.files.insert(res.files.end(), {json_path, text_path});
    return res;
}

// ---------------------------------------------------------------------------
// Single-point prediction

struct Prediction {
    sysmodel::FeaturePoint point;
    Model pole_model = Model::mo_dt;
    std::optional<Model> pf_model;
    std::vector<Complex> poles;
    RMatrix pf;
    std::vector<eigen::GroupSet> dominant;
    eigen::ModalSolution exact;
    double predict_seconds = 0.0;  ///< per call, models already in memory
    double direct_seconds = 0.0;   ///< per call: state matrix + eigen-analysis + tracking
    double load_seconds = 0.0;
};

inline Model default_pole_model(const RunConfig& cfg) {
    if (cfg.predict_pole_model) return *cfg.predict_pole_model;
    for (auto m : {Model::ens_mo_dt, Model::mo_dt, Model::so_dt, Model::la2d, Model::la1d, Model::li1d})
        if (cfg.has(m)) return m;
    throw DomainError("predict: no pole model selected");
}

inline std::optional<Model> default_pf_model(const RunConfig& cfg) {
    if (cfg.predict_pf_model) return cfg.predict_pf_model;
    for (auto m : {Model::ens_mo_dt_1, Model::ens_mo_dt_2, Model::mo_dt_1, Model::mo_dt_2})
        if (cfg.has(m)) return m;
    return std::nullopt;
}

/// Mean wall time per call of f, repeating for at least min_seconds.
template <class F>
double time_per_call(F&& f, double min_seconds = 0.2) {
    std::size_t n = 0;
    const auto t0 = Clock::now();
    double el = 0.0;
    do {
        f();
        ++n;
        el = seconds_since(t0);
    } while (el < min_seconds && n < 1000000);
    return el / double(n);
}

/// Full modal map and dominant groups at one point with loaded models.
inline Prediction predict_point(const Context& ctx, const LoadedModels& lm, Model pole_model,
                                std::optional<Model> pf_model, const sysmodel::FeaturePoint& pt) {
    Prediction p;
    p.point = pt;
    p.pole_model = pole_model;
    p.pf_model = pf_model;
    const auto& pm = lm.poles.at(pole_model);
    const PfModel* pfm = pf_model ? &lm.pfs.at(*pf_model) : nullptr;
    const PoleModel* src = pfm && is_method2(*pf_model) ? &lm.poles.at(pole_source(*pf_model)) : nullptr;
    const std::size_t n_states = ctx.sys.n_states();
    p.poles = pm.predict(pt.values, ctx.cfg.allow_extrapolation);
    if (pfm) {
        const auto pf_poles = src ? src->predict(pt.values, ctx.cfg.allow_extrapolation) : p.poles;
        p.pf = pfm->predict(pt.values, pf_poles, n_states);
        p.dominant = eigen::dominant_groups(p.pf, ctx.sys.group_of_state, ctx.cfg.threshold);
    }
    return p;
}

inline nlohmann::json to_json(const Context& ctx, const Prediction& p) {
    nlohmann::json poles = nlohmann::json::array();
    for (std::size_t k = 0; k < p.poles.size(); ++k) {
        nlohmann::json e = {{"mode", k + 1}, {"re", p.poles[k].real()}, {"im", p.poles[k].imag()}};
        if (!p.dominant.empty()) {
            std::vector<std::string> g;
            for (auto d : p.dominant[k]) g.push_back(ctx.sys.groups[d]);
            e["dominant_groups"] = g;
        }
        if (!p.exact.lambdas.empty()) {
            e["exact_re"] = p.exact.lambdas[k].real();
            e["exact_im"] = p.exact.lambdas[k].imag();
            std::vector<std::string> g;
            for (auto d : p.exact.dominant[k]) g.push_back(ctx.sys.groups[d]);
            e["exact_dominant_groups"] = g;
        }
        poles.push_back(std::move(e));
    }
    return {{"kind", "prediction"},
            {"schema_version", 1},
            {"config", ctx.sys.name},
            {"features", p.point.values},
            {"feature_names", p.point.names},
            {"pole_model", model_name(p.pole_model)},
            {"pf_model", p.pf_model ? nlohmann::json(model_name(*p.pf_model)) : nlohmann::json(nullptr)},
            {"poles", std::move(poles)}};
}

inline Prediction cmd_predict(const RunConfig& cfg, const std::vector<double>& values) {
    const Context ctx = make_context(cfg);
    auto pt = sysmodel::make_point(ctx.sys, values);
    sysmodel::validate_point(ctx.sys, pt);
    const Model pole = default_pole_model(cfg);
    const auto pf = default_pf_model(cfg);
    std::vector<Model> which{pole};
    if (pf) which.push_back(*pf);

    const auto t0 = Clock::now();
    const LoadedModels lm = load_models(ctx, which);
    const Reference ref = load_reference(ctx);
    const double load = seconds_since(t0);

    Prediction p = predict_point(ctx, lm, pole, pf, pt);
    p.load_seconds = load;
    p.exact = exact_solution(ctx, ref, pt);
    p.predict_seconds = time_per_call([&] { (void)predict_point(ctx, lm, pole, pf, pt); });
    p.direct_seconds = time_per_call([&] { (void)exact_solution(ctx, ref, pt); });

    std::string stem = "predict";
    for (double v : values) stem += "_" + svg::label(v);
    auto j = to_json(ctx, p);
    write_file(ctx.out() / "predictions" / (stem + ".json"), j.dump(2) + "\n");
    const nlohmann::json timing = {{"predict_seconds_per_call", p.predict_seconds},
                                   {"direct_seconds_per_call", p.direct_seconds},
                                   {"ratio", p.predict_seconds / p.direct_seconds},
                                   {"model_load_seconds", p.load_seconds}};
    write_file(ctx.out() / "predictions" / (stem + "_timing.json"), timing.dump(2) + "\n");

    std::vector<svg::PoleMarker> markers;
    const auto lead_true = eigen::leading_group(p.exact.p, ctx.sys.group_of_state);
    const auto lead_pred = pf ? eigen::leading_group(p.pf, ctx.sys.group_of_state) : lead_true;
    for (std::size_t k = 0; k < p.poles.size(); ++k) {
        markers.push_back({p.exact.lambdas[k], lead_true[k], true});
        markers.push_back({p.poles[k], lead_pred[k], false});
    }
    write_file(ctx.out() / "predictions" / (stem + ".svg"),
               svg::modal_map(markers, ctx.sys.groups, "Exact (x) vs predicted (o) at " + stem.substr(8)));
    return p;
}

/// Partition-map figures for the configured (model, output, feature pair) triples.
inline std::vector<fs::path> cmd_map(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    std::vector<Model> which;
    for (const auto& p : cfg.partition_plots) {
        if (is_spline_model(p.model) || is_pf_model(p.model))
            throw DomainError("partition maps need a tree pole model, not " + model_name(p.model));
        which.push_back(p.model);
    }
    if (which.empty()) throw DomainError("map: no partition plots configured");
    const LoadedModels lm = load_models(ctx, which);
    const std::size_t n_modes = lm.poles.begin()->second.predict(
        sysmodel::grid_point(ctx.sys, ctx.grid, 0).values, true).size();
    return render_partition_plots(ctx, lm, n_modes);
}

} // namespace modalml::pipeline
