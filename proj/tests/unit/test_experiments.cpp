#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coefrec/experiments.hpp"
#include "coefrec/grid_io.hpp"

using namespace coefrec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("coefrec_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

ResultRow sample_row(double delta, std::uint64_t seed, double e_D, double e_sigma) {
    ResultRow r;
    r.example = "ex51";
    r.delta = delta;
    r.seed = seed;
    r.e_D = e_D;
    r.e_sigma = e_sigma;
    r.e_sigma_interior = 0.5 * e_sigma;
    r.iters_q = 12;
    r.iters_sigma = 7;
    r.J_final_q = 1.0 / 3.0;
    r.J_final_sigma = 2e-9;
    r.fine_n = 2048;
    r.preset = "full";
    return r;
}

}  // namespace

TEST(Scaling, AnchorReturnsBaseValues) {
    ScalingPolicy p;
    p.delta0 = 1e-2;
    p.h0 = 1.0 / 16;
    p.H0 = 1.0 / 32;
    p.alpha1_0 = 1e-6;
    p.alpha2_0 = 1e-5;
    const auto s = scale_parameters(p, 1e-2, false, 0.5);
    EXPECT_EQ(s.alpha1, 1e-6);
    EXPECT_EQ(s.alpha2, 1e-5);
    EXPECT_EQ(s.n_h, 16);
    EXPECT_EQ(s.n_H, 32);
}

TEST(Scaling, EllipticRegularizationFollowsDeltaSquared) {
    ScalingPolicy p;
    p.delta0 = 1e-2;
    p.alpha1_0 = 1e-6;
    EXPECT_NEAR(scale_parameters(p, 1e-3, false, 0.5).alpha1, 1e-8, 1e-20);
}

TEST(Scaling, ParabolicTimeStep) {
    ScalingPolicy p;
    p.delta0 = 1e-2;
    p.tau0 = 0.1;
    p.k = 1;
    EXPECT_NEAR(scale_parameters(p, 1e-4, true, 0.5).tau, 0.01, 1e-15);
    EXPECT_NEAR(snap_time_step(0.0123, 1.0 / 2000, 0.1, 1), 25.0 / 2000, 1e-15);
    EXPECT_NEAR(snap_time_step(0.5, 1.0 / 2000, 0.1, 1), 0.1, 1e-15);
    EXPECT_THROW(snap_time_step(0.01, 0.2, 0.1, 1), InvalidArgument);
}

TEST(Scaling, PowerOfTwoMeshes) {
    EXPECT_EQ(snap_to_power_of_two(1.0 / 16, 1024), 16);
    EXPECT_EQ(snap_to_power_of_two(1.0 / 40, 1024), 32);
    EXPECT_EQ(snap_to_power_of_two(1.0 / 50, 1024), 64);
    EXPECT_EQ(snap_to_power_of_two(1e-6, 128), 128);
    EXPECT_EQ(snap_to_power_of_two(0.9, 128), 2);
}

TEST(Examples, SourceGapIsPositive) {
    const auto ex = builtin_example("ex51");
    for (double x : {0.0, 0.3, 1.0}) {
        EXPECT_EQ(ex.f2({x, 0.0}) - ex.f1({x, 0.0}), 9.0);
    }
    EXPECT_THROW(builtin_example("ex99"), InvalidArgument);
}

TEST(Rates, Oracles) {
    std::vector<std::pair<double, double>> lin, flat;
    for (double d : {1e-1, 1e-2, 1e-3}) {
        lin.push_back({d, d});
        flat.push_back({d, 0.7});
    }
    EXPECT_NEAR(estimate_rate(lin), 1.0, 1e-12);
    EXPECT_NEAR(estimate_rate(flat), 0.0, 1e-12);
    const std::vector<std::pair<double, double>> table{
        {1e-2, 4.87e-2}, {5e-3, 3.51e-2}, {1e-3, 1.73e-2}, {5e-4, 7.12e-3}, {1e-4, 4.67e-3}};
    EXPECT_NEAR(estimate_rate(table), 0.51, 0.03);
    EXPECT_THROW(estimate_rate({{1e-2, 1.0}}), InvalidArgument);
    EXPECT_THROW(estimate_rate({{1e-2, 1.0}, {1e-2, 2.0}}), InvalidArgument);
    EXPECT_THROW(estimate_rate({{1e-2, 0.0}, {1e-3, 2.0}}), InvalidArgument);
}

TEST(Results, EmptyTable) {
    const auto dir = scratch("empty");
    fs::create_directories(dir);
    write_results_csv(dir / "results.csv", {});
    const auto text = slurp(dir / "results.csv");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
    EXPECT_TRUE(read_results_csv(dir / "results.csv").empty());
    EXPECT_TRUE(rates_json({}).empty());
    fs::remove_all(dir);
}

TEST(Results, CsvRoundTrip) {
    const auto dir = scratch("roundtrip");
    fs::create_directories(dir);
    std::vector<ResultRow> rows{sample_row(1e-2, 1, 0.0487, 0.0178), sample_row(1e-3, 2, 0.0173, 0.0161)};
    rows[1].status = "stall_q";
    rows[1].tau_data = 1.0 / 2000;
    write_results_csv(dir / "results.csv", rows);
    const auto back = read_results_csv(dir / "results.csv");
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(back[i].example, rows[i].example);
        EXPECT_EQ(back[i].delta, rows[i].delta);
        EXPECT_EQ(back[i].seed, rows[i].seed);
        EXPECT_EQ(back[i].e_D, rows[i].e_D);
        EXPECT_EQ(back[i].e_sigma, rows[i].e_sigma);
        EXPECT_EQ(back[i].e_sigma_interior, rows[i].e_sigma_interior);
        EXPECT_EQ(back[i].iters_q, rows[i].iters_q);
        EXPECT_EQ(back[i].iters_sigma, rows[i].iters_sigma);
        EXPECT_EQ(back[i].J_final_q, rows[i].J_final_q);
        EXPECT_EQ(back[i].J_final_sigma, rows[i].J_final_sigma);
        EXPECT_EQ(back[i].fine_n, rows[i].fine_n);
        EXPECT_EQ(back[i].tau_data, rows[i].tau_data);
        EXPECT_EQ(back[i].preset, rows[i].preset);
        EXPECT_EQ(back[i].status, rows[i].status);
    }
    std::ofstream(dir / "bad.csv") << "not,a,header\n";
    EXPECT_THROW(read_results_csv(dir / "bad.csv"), IoError);
    EXPECT_THROW(read_results_csv(dir / "missing.csv"), IoError);
    fs::remove_all(dir);
}

TEST(Results, SeedMeansAndRates) {
    std::vector<ResultRow> rows;
    for (std::uint64_t s = 1; s <= 2; ++s) {
        rows.push_back(sample_row(1e-2, s, 1e-1 * s, 0.2));
        rows.push_back(sample_row(1e-4, s, 1e-2 * s, 0.2));
    }
    auto failed = sample_row(1e-4, 3, 50.0, 50.0);
    failed.status = "failed: solver";
    rows.push_back(failed);
    const auto means = seed_means(rows, "ex51");
    ASSERT_EQ(means.size(), 2u);
    EXPECT_EQ(means[0].delta, 1e-4);
    EXPECT_EQ(means[0].count, 2);
    EXPECT_NEAR(means[0].e_D, 0.015, 1e-15);
    const auto j = rates_json(rows);
    EXPECT_NEAR(j["ex51"]["e_D"].get<double>(), 0.5, 1e-12);
    EXPECT_NEAR(j["ex51"]["e_sigma"].get<double>(), 0.0, 1e-12);
}

TEST(Config, OverridesAndValidation) {
    auto doc = default_config("ex51");
    apply_override(doc, "alpha1_0=3e-6");
    apply_override(doc, "step_sigma.max_iters=17");
    apply_override(doc, "transfer=sample");
    const auto cfg = config_from_json(doc);
    EXPECT_EQ(cfg.example.policy.alpha1_0, 3e-6);
    EXPECT_EQ(cfg.step_sigma.max_iters, 17);
    EXPECT_EQ(cfg.transfer, "sample");
    EXPECT_THROW(apply_override(doc, "max_iters=5"), InvalidArgument);  // ambiguous
    EXPECT_THROW(apply_override(doc, "no_such_key=5"), InvalidArgument);
    EXPECT_THROW(apply_override(doc, "alpha1_0"), InvalidArgument);
    auto bad = default_config("ex51");
    apply_override(bad, "fine_n=1000");
    EXPECT_THROW(config_from_json(bad), InvalidArgument);
}

TEST(Config, JsonRoundTripAndQuickPreset) {
    const auto cfg = config_from_json(default_config("ex53"));
    EXPECT_EQ(config_to_json(cfg), default_config("ex53"));
    auto doc = default_config("ex53");
    apply_quick_preset(doc);
    const auto q = config_from_json(doc);
    EXPECT_TRUE(q.quick);
    EXPECT_EQ(q.example.fine_n, 512);
    EXPECT_NEAR(q.example.tau_data, 4.0 / 2000, 1e-15);
    auto d54 = default_config("ex54");
    apply_quick_preset(d54);
    EXPECT_EQ(config_from_json(d54).example.fine_n, 128);
}

TEST(Pipeline, ExactDataRowsOnConstantTruth) {
    for (const char* id : {"const1d", "const2d"}) {
        const auto cfg = config_from_json(default_config(id));
        const auto out = run_experiment(cfg, {0.0}, {1});
        ASSERT_EQ(out.rows.size(), 1u);
        EXPECT_LE(out.rows[0].e_D, 1e-4) << id;
        EXPECT_LE(out.rows[0].e_sigma, 1e-4) << id;
    }
}

TEST(Pipeline, Example51DiffusionErrorAtOnePercent) {
    const auto cfg = config_from_json(default_config("ex51"));
    const auto out = run_experiment(cfg, {1e-2}, {1, 2, 3, 4, 5});
    const auto means = seed_means(out.rows, "ex51");
    ASSERT_EQ(means.size(), 1u);
    EXPECT_EQ(means[0].count, 5);
    EXPECT_GE(means[0].e_D, 0.02);
    EXPECT_LE(means[0].e_D, 0.10);
}

TEST(Pipeline, WeightedMisfitShrinksWithNoise) {
    const auto cfg = config_from_json(default_config("ex51"));
    const auto truth = generate_truth(cfg);
    std::vector<double> misfit;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        double sum = 0.0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const auto rec = recover(cfg, truth, delta, seed, 0.5);
            const auto& m = rec.q.mesh_ptr();
            const auto u1 = transfer(truth.u1, m);
            const auto u2 = transfer(truth.u2, m);
            auto q_ref = interpolate(cfg.example.D_true, m);
            for (std::size_t i = 0; i < q_ref.size(); ++i) {
                q_ref[i] *= u1[i] * u1[i];
            }
            const auto w = ratio_observable(u1, u2, 0.5);
            const auto F = source_F_elliptic(u1, u2, GridFunction(m, 1.0), GridFunction(m, 10.0));
            sum += stability_diagnostics(q_ref, rec.q, w, F, 2.0).weighted_misfit;
        }
        misfit.push_back(sum / 3);
    }
    EXPECT_GT(misfit[0], misfit[1]);
    EXPECT_GT(misfit[1], misfit[2]);
}

TEST(Pipeline, DeterministicOutputs) {
    const auto cfg = config_from_json(default_config("ex51"));
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    emit(run_experiment(cfg, {1e-2, 1e-3}, {1, 2}), cfg, a);
    emit(run_experiment(cfg, {1e-2, 1e-3}, {1, 2}), cfg, b);
    EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
    EXPECT_EQ(slurp(a / "rates.json"), slurp(b / "rates.json"));
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Pipeline, ManifestListsScaledParameters) {
    const auto cfg = config_from_json(default_config("ex51"));
    const auto dir = scratch("manifest");
    const auto out = run_experiment(cfg, {1e-2, 1e-4}, {1}, true);
    emit(out, cfg, dir);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    ASSERT_EQ(m["rows"].size(), out.rows.size());
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        const auto& r = m["rows"][i];
        const auto& p = out.rows[i].params;
        EXPECT_EQ(r["n_h"].get<int>(), p.n_h);
        EXPECT_EQ(r["n_H"].get<int>(), p.n_H);
        EXPECT_EQ(r["alpha1"].get<double>(), p.alpha1);
        EXPECT_EQ(r["alpha2"].get<double>(), p.alpha2);
        EXPECT_EQ(r["gamma"].get<double>(), p.gamma);
        EXPECT_EQ(r["tau"].get<double>(), p.tau);
    }
    EXPECT_EQ(m["gamma"].get<double>(), out.gamma);
    EXPECT_TRUE(fs::exists(dir / "grids" / "ex51_d0.01_s1_D.csv"));
    EXPECT_TRUE(fs::exists(dir / "grids" / "ex51_d0.0001_s1_log_q.csv"));
    fs::remove_all(dir);
}

TEST(GridIo, RoundTrip) {
    const auto dir = scratch("grid");
    fs::create_directories(dir);
    const auto m = build_mesh(2, 5);
    const auto u = interpolate([](const Point& p) { return std::exp(p[0]) - p[1] / 3.0; }, m);
    write_grid(dir / "u.csv", u, "u", 0.25);
    const auto back = read_grid(dir / "u.csv");
    EXPECT_EQ(back.field, "u");
    ASSERT_TRUE(back.time.has_value());
    EXPECT_EQ(*back.time, 0.25);
    ASSERT_EQ(back.u.size(), u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        EXPECT_EQ(back.u[i], u[i]);
    }
    EXPECT_THROW(read_grid(dir / "nope.csv"), IoError);
    fs::remove_all(dir);
}
