#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "modalml/modalml.hpp"

using namespace modalml;
using namespace modalml::pipeline;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("modalml_test_" + name);
    fs::remove_all(p);
    return p;
}

RunConfig small_config(const fs::path& out) {
    RunConfig c = default_config("3bus");
    std::vector<double> r;
    for (int k = 1; k <= 10; ++k) r.push_back(k / 10.0);
    c.grid = sysmodel::GridSpec::per_feature(
        {{sysmodel::share_from_rating(200), sysmodel::share_from_rating(500)}, {0.05, 0.3, 1.0}, r});
    c.models = {Model::so_dt, Model::mo_dt, Model::ens_mo_dt, Model::li1d, Model::la1d, Model::mo_dt_1, Model::mo_dt_2};
    c.hyper.max_depth = {std::nullopt, 4};
    c.hyper.min_samples_leaf = {1};
    c.hyper.ccp_alpha_relative = {0.0};
    c.n_trees = 4;
    c.spline_segments = 3;
    c.test_instances = std::vector<std::vector<double>>{{sysmodel::share_from_rating(330), 0.3, 0.45},
                                                        {sysmodel::share_from_rating(500), 1.0, 0.25}};
    c.partition_plots = {{Model::mo_dt, "Re(lambda_2)", "S_SGshare", "tau_v", cart::Aggregation::max}};
    c.output_dir = out;
    c.threads = 2;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> deterministic_files(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto name = e.path().filename().string();
        if (name.find("_timing") != std::string::npos) continue;
        out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
    return out;
}

} // namespace

TEST_CASE("model names", "[pipeline]") {
    for (const auto& [m, n] : model_table) CHECK(model_from_name(n) == m);
    CHECK(model_from_name("ens mo dt i") == Model::ens_mo_dt_1);
    CHECK(model_from_name("MO_DT-2") == Model::mo_dt_2);
    CHECK_THROWS_AS(model_from_name("forest"), DomainError);
    CHECK(pole_source(Model::ens_mo_dt_2) == Model::ens_mo_dt);
}

TEST_CASE("config JSON round trip and validation", "[pipeline]") {
    auto c = small_config("x");
    c.predict_pf_model = Model::mo_dt_1;
    const auto j = to_json(c);
    const auto back = config_from_json(nlohmann::json::parse(j.dump()));
    CHECK(to_json(back) == j);

    auto bad = c;
    bad.models = {Model::mo_dt_2};
    CHECK_THROWS_AS(make_context(bad), DomainError);
    bad = c;
    bad.threshold = 0.0;
    CHECK_THROWS_AS(make_context(bad), DomainError);
    bad = c;
    bad.system = "no_such_system.json";
    CHECK_THROWS_AS(make_context(bad), Error);
    auto v = j;
    v["schema_version"] = 99;
    CHECK_THROWS_AS(config_from_json(v), FormatError);
    CHECK(make_context(default_config("9bus")).grid.size() == 3675);
}

TEST_CASE("derived seeds", "[pipeline]") {
    CHECK(derive_seed(1, "MO-DT/re") == derive_seed(1, "MO-DT/re"));
    CHECK(derive_seed(1, "MO-DT/re") != derive_seed(2, "MO-DT/re"));
    CHECK(derive_seed(1, "MO-DT/re") != derive_seed(1, "MO-DT/im"));
}

TEST_CASE("small end-to-end run", "[pipeline][slow]") {
    const auto out = scratch("e2e");
    auto cfg = small_config(out);
    cfg.hyper.max_depth = {std::nullopt};
    const auto gen = cmd_generate(cfg);
    CHECK(gen.n_points == 60);
    CHECK(gen.dbs.re.y.rows() == 60);
    CHECK(gen.dbs.pf_full.y.rows() == 60 * 22);

    const auto tr = cmd_train(cfg);
    const Context ctx = make_context(cfg);
    std::size_t so = 0;
    for (const auto& e : fs::directory_iterator(ctx.model_dir(Model::so_dt))) so += e.path().extension() == ".json";
    CHECK(so == 44);
    std::size_t mo = 0;
    for (const auto& e : fs::directory_iterator(ctx.model_dir(Model::mo_dt))) mo += e.path().extension() == ".json";
    CHECK(mo == 2);
    CHECK(tr.report["models"].contains("MO-DT-II"));

    // Fully grown trees reproduce their training rows.
    const auto lm = load_models(ctx, std::vector<Model>{Model::mo_dt, Model::so_dt});
    const Reference ref = load_reference(ctx);
    const auto chosen = tr.report["models"]["MO-DT"];
    INFO(chosen.dump());
    for (std::size_t node : {0u, 17u, 59u}) {
        const auto x = ref.re.x.row(node);
        const auto truth = ref.poles_at(node);
        for (auto m : {Model::mo_dt, Model::so_dt}) {
            const auto p = lm.poles.at(m).predict(x);
            REQUIRE(p.size() == truth.size());
            double worst = 0;
            for (std::size_t k = 0; k < p.size(); ++k) worst = std::max(worst, std::abs(p[k] - truth[k]));
            CHECK(worst <= 1e-12);
        }
    }

    const auto ev = cmd_evaluate(cfg);
    CHECK(ev.report.models.size() == cfg.models.size());
    for (const auto& m : ev.report.models) {
        if (m.model.find("-I") != std::string::npos) {
            CHECK(m.mae_pf >= 0.0);
            CHECK(m.misclassified_fraction <= 1.0);
        } else {
            CHECK(m.whe_re >= 0.0);
            CHECK(m.whe_im >= 0.0);
        }
    }
    CHECK(fs::exists(ctx.report_dir() / "evaluation.json"));
    CHECK(fs::exists(ctx.figure_dir() / "modal_map_MO-DT.svg"));

    const auto p = cmd_predict(cfg, {sysmodel::share_from_rating(330), 0.3, 0.45});
    CHECK(p.poles.size() == 22);
    CHECK(p.dominant.size() == 22);
    CHECK(p.exact.lambdas.size() == 22);
    CHECK(p.predict_seconds > 0.0);
    CHECK_THROWS_AS(cmd_predict(cfg, {0.3, 0.3}), DimensionError);
    CHECK(!cmd_map(cfg).empty());
}

TEST_CASE("runs are reproducible", "[pipeline][slow]") {
    std::map<std::string, std::string> files[2];
    for (int run = 0; run < 2; ++run) {
        const auto out = scratch("repro" + std::to_string(run));
        auto cfg = small_config(out);
        cfg.models = {Model::mo_dt, Model::ens_mo_dt, Model::la1d, Model::ens_mo_dt_1};
        cfg.threads = run == 0 ? 1 : 3;
        cmd_generate(cfg);
        cmd_train(cfg);
        cmd_evaluate(cfg);
        files[run] = deterministic_files(out);
    }
    REQUIRE(files[0].size() == files[1].size());
    for (const auto& [name, body] : files[0]) {
        INFO(name);
        CHECK(files[1][name] == body);
    }
}

TEST_CASE("stale databases are rejected", "[pipeline]") {
    const auto out = scratch("stale");
    auto cfg = small_config(out);
    cfg.models = {Model::mo_dt};
    cmd_generate(cfg);
    cfg.grid->axes[1].values.pop_back();
    CHECK_THROWS_AS(cmd_train(cfg), Error);
}
