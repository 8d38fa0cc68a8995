#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "modalml/modalml.hpp"

using namespace modalml;
using namespace modalml::pipeline;

namespace {

std::vector<double> parse_point(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw DomainError("--point: '" + tok + "' is not a number");
        }
    }
    return v;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Machine-learned modal analysis surrogates for small-signal stability"};
    app.require_subcommand(1, 1);

    std::string config_path, system = "3bus", models, out;
    std::uint64_t seed = 0;
    bool allow_extrapolation = false;
    unsigned threads = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run configuration JSON");
        sub->add_option("--system", system, "Builtin system (3bus, 9bus) when no config is given");
        sub->add_option("--seed", seed, "Master seed (overrides the config)");
        sub->add_option("--models", models, "Comma-separated model list, e.g. MO-DT,ENS-MO-DT-I");
        sub->add_option("--out", out, "Output directory");
        sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
        sub->add_flag("--allow-extrapolation", allow_extrapolation, "Extrapolate spline families outside the hull");
    };
    auto* gen = app.add_subcommand("generate", "Sweep the grid and write the pole and PF databases");
    auto* train = app.add_subcommand("train", "Train the selected models on the databases");
    auto* eval = app.add_subcommand("evaluate", "Score trained models on the test instances");
    auto* pred = app.add_subcommand("predict", "Predict poles and dominant groups at one operating point");
    auto* map = app.add_subcommand("map", "Draw feature-space partition maps of tree models");
    for (auto* s : {gen, train, eval, pred, map}) add_common(s);
    std::string point;
    pred->add_option("--point", point, "Feature values, comma separated, in system feature order")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = config_path.empty() ? default_config(system) : load_config(config_path);
        auto* sub = app.get_subcommands().front();
        if (sub->count("--seed")) cfg.seed = seed;
        if (sub->count("--out")) {
            cfg.output_dir = out;
            cfg.base_dir = ".";
        }
        if (sub->count("--threads")) cfg.threads = threads;
        if (allow_extrapolation) cfg.allow_extrapolation = true;
        if (!models.empty()) {
            cfg.models.clear();
            std::stringstream ss(models);
            std::string tok;
            while (std::getline(ss, tok, ','))
                if (!tok.empty()) cfg.models.push_back(model_from_name(tok));
        }

        if (gen->parsed()) {
            const auto r = cmd_generate(cfg);
            std::printf("generated %zu operating points in %.2f s\n", r.n_points, r.seconds);
            for (const auto& f : r.files) std::printf("  %s\n", f.string().c_str());
        } else if (train->parsed()) {
            const auto t0 = Clock::now();
            const auto r = cmd_train(cfg);
            std::printf("trained %zu model files in %.2f s\n", r.files.size(), seconds_since(t0));
            for (auto it = r.timing.begin(); it != r.timing.end(); ++it)
                std::printf("  %-14s %8.2f s\n", it.key().c_str(), it.value().value("train_seconds", 0.0));
        } else if (eval->parsed()) {
            const auto r = cmd_evaluate(cfg);
            std::cout << metrics::to_text(r.report);
            for (const auto& f : r.files) std::printf("  %s\n", f.string().c_str());
        } else if (pred->parsed()) {
            const Context ctx = make_context(cfg);
            const auto p = cmd_predict(cfg, parse_point(point));
            std::printf("%-5s %12s %12s  %s\n", "mode", "Re", "Im", "dominant groups");
            for (std::size_t k = 0; k < p.poles.size(); ++k) {
                std::string g;
                if (!p.dominant.empty())
                    for (auto d : p.dominant[k]) g += (g.empty() ? "" : ", ") + ctx.sys.groups[d];
                std::printf("%-5zu %12.4f %12.4f  %s\n", k + 1, p.poles[k].real(), p.poles[k].imag(), g.c_str());
            }
            std::printf("prediction %.3g s/call, direct eigen-analysis %.3g s/call (ratio %.3g), model load %.2f s\n",
                        p.predict_seconds, p.direct_seconds, p.predict_seconds / p.direct_seconds, p.load_seconds);
        } else if (map->parsed()) {
            for (const auto& f : cmd_map(cfg)) std::printf("%s\n", f.string().c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
