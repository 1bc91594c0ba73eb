#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "coefrec/error.hpp"
#include "coefrec/experiments.hpp"
#include "coefrec/grid_io.hpp"

namespace {

using coefrec::RunConfig;
using nlohmann::ordered_json;

struct Common {
    std::string example = "ex51";
    std::string config_path;
    std::vector<std::string> overrides;
    bool quick = false;
    bool timings = false;
    std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--example", c.example, "built-in example id")->check(CLI::IsMember(coefrec::builtin_example_ids()));
    cmd->add_option("--config", c.config_path, "JSON config file; CLI flags win")->check(CLI::ExistingFile);
    cmd->add_option("--override", c.overrides, "key=value (dotted path or unique leaf name)");
    cmd->add_flag("--quick", c.quick, "coarser data mesh and data time step");
    cmd->add_flag("--timings", c.timings, "record wall_ms (makes results.csv non-deterministic)");
    cmd->add_option("--out", c.out, "output directory");
}

RunConfig build_config(const Common& c, CLI::App* cmd) {
    ordered_json doc;
    if (!c.config_path.empty()) {
        std::ifstream is(c.config_path);
        try {
            doc = ordered_json::parse(is);
        } catch (const ordered_json::parse_error& e) {
            throw coefrec::IoError(c.config_path + ": " + e.what());
        }
        if (cmd->count("--example") > 0 && doc.value("example", c.example) != c.example) {
            throw coefrec::InvalidArgument("--example disagrees with the config file's example");
        }
        // fill keys missing from the file so overrides can address them
        auto full = coefrec::default_config(doc.value("example", c.example));
        full.merge_patch(doc);
        doc = full;
    } else {
        doc = coefrec::default_config(c.example);
    }
    if (c.quick) {
        coefrec::apply_quick_preset(doc);
    }
    for (const auto& o : c.overrides) {
        coefrec::apply_override(doc, o);
    }
    if (c.timings) {
        doc["timings"] = true;
    }
    RunConfig cfg = coefrec::config_from_json(doc);
    cfg.quick = doc.value("preset", std::string("full")) == "quick";
    return cfg;
}

double step_two_gamma(const RunConfig& cfg) {
    return cfg.example.policy.gamma.value_or(cfg.example.policy.gamma_fallback);
}

void progress(const std::string& msg) { std::cerr << msg << std::endl; }

ordered_json coupled_json(const coefrec::CoupledComparison& c) {
    ordered_json j;
    j["delta"] = c.decoupled.row.delta;
    j["seed"] = c.decoupled.row.seed;
    j["budget"] = c.budget;
    j["decoupled"] = {{"e_D", c.decoupled.row.e_D}, {"e_sigma", c.decoupled.row.e_sigma}};
    j["coupled"] = {{"e_D", c.e_D_coupled}, {"e_sigma", c.e_sigma_coupled}, {"inner_iters", c.coupled.total_inner}};
    ordered_json blocks = ordered_json::array();
    for (const auto& r : c.coupled.log) {
        blocks.push_back({{"outer", r.outer},
                          {"block", std::string(1, r.block)},
                          {"J_before", r.J_before},
                          {"J_after", r.J_after},
                          {"inner_accepted", r.inner_accepted}});
    }
    j["blocks"] = blocks;
    return j;
}

int cmd_forward(const RunConfig& cfg, const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    const auto truth = coefrec::generate_truth(cfg);
    const auto& ex = cfg.example;
    coefrec::write_grid(out / "D_true.csv", coefrec::interpolate(ex.D_true, truth.fine), "D_true");
    coefrec::write_grid(out / "sigma_true.csv", coefrec::interpolate(ex.sigma_true, truth.fine), "sigma_true");
    if (!ex.parabolic) {
        coefrec::write_grid(out / "u1.csv", truth.u1, "u1");
        coefrec::write_grid(out / "u2.csv", truth.u2, "u2");
    } else {
        const auto& traj = truth.trajectory;
        for (const int s : traj.steps()) {
            char name[48];
            std::snprintf(name, sizeof name, "u_step%06d.csv", s);
            coefrec::write_grid(out / name, traj.at_step(s), "u", traj.time(s));
        }
    }
    std::ofstream(out / "config.json") << coefrec::config_to_json(cfg).dump(2) << '\n';
    std::cout << "wrote forward states for " << ex.id << " to " << out.string() << '\n';
    return 0;
}

int cmd_recover(const RunConfig& cfg, double delta, std::uint64_t seed, bool coupled,
                const std::filesystem::path& out) {
    const auto truth = coefrec::generate_truth(cfg);
    coefrec::ExperimentOutput result;
    result.gamma = step_two_gamma(cfg);
    if (coupled) {
        auto cmp = coefrec::compare_coupled(cfg, truth, delta, seed, result.gamma);
        std::filesystem::create_directories(out);
        std::ofstream(out / "coupled.json") << coupled_json(cmp).dump(2) << '\n';
        std::cout << "coupled e_D=" << cmp.e_D_coupled << " e_sigma=" << cmp.e_sigma_coupled
                  << " budget=" << cmp.budget << '\n';
        result.rows.push_back(cmp.decoupled.row);
        result.reconstructions.push_back(std::move(cmp.decoupled));
    } else {
        auto rec = coefrec::recover(cfg, truth, delta, seed, result.gamma);
        result.rows.push_back(rec.row);
        result.reconstructions.push_back(std::move(rec));
    }
    const auto& row = result.rows.front();
    std::cout << cfg.example.id << " delta=" << row.delta << " seed=" << row.seed << " e_D=" << row.e_D
              << " e_sigma=" << row.e_sigma << " e_sigma_interior=" << row.e_sigma_interior << " [" << row.status
              << "]\n";
    coefrec::emit(result, cfg, out);
    return 0;
}

int cmd_experiment(const RunConfig& cfg, std::vector<double> deltas, std::vector<std::uint64_t> seeds,
                   bool coupled, bool keep_grids, const std::filesystem::path& out) {
    if (deltas.empty()) {
        deltas = cfg.example.deltas;
    }
    if (seeds.empty()) {
        seeds = {1, 2, 3, 4, 5};
    }
    const auto result = coefrec::run_experiment(cfg, deltas, seeds, keep_grids, progress);
    coefrec::emit(result, cfg, out);
    if (coupled) {
        const auto truth = coefrec::generate_truth(cfg);
        ordered_json all = ordered_json::array();
        for (const double d : deltas) {
            for (const auto s : seeds) {
                all.push_back(coupled_json(coefrec::compare_coupled(cfg, truth, d, s, result.gamma)));
            }
        }
        std::ofstream(out / "coupled.json") << all.dump(2) << '\n';
    }
    std::cout << coefrec::rates_json(result.rows).dump(2) << '\n';
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, double delta, std::uint64_t seed, int directions) {
    const auto truth = coefrec::generate_truth(cfg);
    const auto rep = coefrec::gradcheck_example(cfg, truth, delta, seed, directions);
    std::cout << cfg.example.id << " worst relative error: diffusion " << rep.diffusion << ", potential "
              << rep.potential << '\n';
    return rep.diffusion <= 1e-5 && rep.potential <= 1e-5 ? 0 : 1;
}

int cmd_rates(const std::string& in) {
    std::cout << coefrec::rates_json(coefrec::read_results_csv(in)).dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decoupled recovery of diffusion and potential coefficients"};
    app.require_subcommand(1);

    Common common;
    std::vector<double> deltas;
    std::vector<std::uint64_t> seeds;
    bool coupled = false;
    bool keep_grids = false;
    int directions = 20;
    std::string rates_in;

    auto* forward = app.add_subcommand("forward", "solve the example's forward problem and dump the states");
    add_common(forward, common);

    auto* recover = app.add_subcommand("recover", "one reconstruction for a single (delta, seed)");
    add_common(recover, common);
    recover->add_option("--delta", deltas, "noise level")->required()->expected(1);
    recover->add_option("--seed", seeds, "noise seed")->expected(1);
    recover->add_flag("--coupled", coupled, "also run the coupled baseline with the same iteration budget");

    auto* experiment = app.add_subcommand("experiment", "sweep over noise levels and seeds");
    add_common(experiment, common);
    experiment->add_option("--delta", deltas, "noise level (repeatable; default: the example's grid)");
    experiment->add_option("--seed", seeds, "noise seed (repeatable; default 1..5)");
    experiment->add_flag("--coupled", coupled, "also compare against the coupled baseline for every row");
    experiment->add_flag("--grids", keep_grids, "write reconstructed coefficients and iteration logs");

    auto* gradcheck = app.add_subcommand("gradcheck", "adjoint gradients against finite differences");
    add_common(gradcheck, common);
    gradcheck->add_option("--delta", deltas, "noise level")->expected(1);
    gradcheck->add_option("--seed", seeds, "seed for data and directions")->expected(1);
    gradcheck->add_option("--directions", directions, "number of random directions")->check(CLI::PositiveNumber);

    auto* rates = app.add_subcommand("rates", "fit convergence rates from a results.csv");
    rates->add_option("results", rates_in, "results.csv")->required()->check(CLI::ExistingFile);

    auto* config = app.add_subcommand("config", "print the default config document of an example");
    add_common(config, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (rates->parsed()) {
            return cmd_rates(rates_in);
        }
        CLI::App* cmd = app.get_subcommands().front();
        const RunConfig cfg = build_config(common, cmd);
        const std::uint64_t seed = seeds.empty() ? 1 : seeds.front();
        if (config->parsed()) {
            std::cout << coefrec::config_to_json(cfg).dump(2) << '\n';
            return 0;
        }
        if (forward->parsed()) {
            return cmd_forward(cfg, common.out);
        }
        if (recover->parsed()) {
            return cmd_recover(cfg, deltas.front(), seed, coupled, common.out);
        }
        if (experiment->parsed()) {
            return cmd_experiment(cfg, deltas, seeds, coupled, keep_grids, common.out);
        }
        if (gradcheck->parsed()) {
            return cmd_gradcheck(cfg, deltas.empty() ? 0.0 : deltas.front(), seed, directions);
        }
    } catch (const coefrec::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
