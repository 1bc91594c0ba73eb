#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "coefrec/error.hpp"
#include "coefrec/experiments.hpp"

namespace coefrec {

namespace {

MeshPtr observation_mesh(const RunConfig& cfg, const GroundTruth& truth) {
    if (cfg.obs_n == 0 || cfg.obs_n == truth.fine->n()) {
        return truth.fine;
    }
    return build_mesh(cfg.example.dim, cfg.obs_n);
}

std::string sanitize(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') {
            c = ';';
        }
    }
    return "failed: " + s;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

int data_steps(const ExampleSpec& ex) {
    const double r = ex.T_final / ex.tau_data;
    const long n = std::lround(r);
    if (n < 1 || std::abs(r - n) > 1e-6) {
        throw InvalidArgument("tau_data must divide the final time");
    }
    return static_cast<int>(n);
}

}  // namespace

GroundTruth generate_truth(const RunConfig& cfg) {
    const auto& ex = cfg.example;
    GroundTruth t;
    t.fine = build_mesh(ex.dim, ex.fine_n);
    const auto D = interpolate(ex.D_true, t.fine);
    const auto sigma = interpolate(ex.sigma_true, t.fine);
    const auto f1 = interpolate(ex.f1, t.fine);
    const auto f2 = interpolate(ex.f2, t.fine);
    const auto g = interpolate(ex.g, t.fine);
    t.schedule = {f1, f2, ex.bridge_lo, ex.bridge_hi};
    if (!ex.parabolic) {
        t.u1 = solve_elliptic({D, sigma, f1, g}, cfg.forward_solve).u;
        t.u2 = solve_elliptic({D, sigma, f2, g}, cfg.forward_solve).u;
        return t;
    }
    ParabolicProblem p{D, sigma, g, interpolate(ex.u0, t.fine), t.schedule, ex.T_final, data_steps(ex)};
    t.trajectory = solve_parabolic(p, ex.windows, cfg.forward_solve);
    t.u1 = t.trajectory.at_time(ex.windows.at(0).T);
    t.u2 = t.trajectory.at_time(ex.windows.at(1).T);
    return t;
}

PreparedData prepare_data(const RunConfig& cfg, const GroundTruth& truth, double delta, std::uint64_t seed) {
    PreparedData d;
    d.obs_mesh = observation_mesh(cfg, truth);
    const NoiseSpec noise{delta, seed};
    if (!cfg.example.parabolic) {
        d.obs = make_elliptic_observations(transfer(truth.u1, d.obs_mesh), transfer(truth.u2, d.obs_mesh), noise,
                                           cfg.positivity_floor);
    } else {
        d.obs = make_parabolic_observations(truth.trajectory, cfg.example.windows, d.obs_mesh, noise,
                                            cfg.positivity_floor);
    }
    return d;
}

DerivedObservables derive_observables(const RunConfig& cfg, const GroundTruth& truth, const PreparedData& data,
                                      double tau) {
    const auto f1 = transfer(truth.schedule.early, data.obs_mesh);
    const auto f2 = transfer(truth.schedule.late, data.obs_mesh);
    if (!cfg.example.parabolic) {
        return elliptic_observables(data.obs, f1, f2);
    }
    const SourceSchedule sched{f1, f2, truth.schedule.t_lo, truth.schedule.t_hi};
    return parabolic_effective_sources(data.obs, sched, tau, cfg.example.policy.k);
}

GridFunction to_working_mesh(const RunConfig& cfg, const GridFunction& u, const MeshPtr& mesh, bool zero_boundary) {
    if (same_mesh(u.mesh(), *mesh)) {
        return GridFunction(mesh, std::vector<double>(u.values().begin(), u.values().end()));
    }
    if (cfg.transfer == "sample" || mesh->n() > u.mesh().n()) {
        return transfer(u, mesh);
    }
    const SolveOptions opts{1e-12, 0, SolveMethod::Automatic};
    return zero_boundary ? project_P_h(u, mesh, opts) : project_full(u, mesh, opts);
}

void run_step_one(const RunConfig& cfg, const DerivedObservables& obs, const ScaledParameters& p,
                  Reconstruction& rec) {
    const auto& ex = cfg.example;
    const auto mesh = build_mesh(ex.dim, p.n_h);
    const auto w = to_working_mesh(cfg, obs.w_delta, mesh, true);
    const auto F = to_working_mesh(cfg, obs.F_delta, mesh, false);
    const auto z1 = to_working_mesh(cfg, obs.z1, mesh, false);

    InverseStepConfig step = cfg.step_q;
    step.alpha = p.alpha1;
    step.box = ex.box_q;
    const DiffusionObjective objective(w, F, p.alpha1, step.solve);
    auto out = minimize(objective, step);
    rec.q = std::move(out.coeff);
    rec.log_q = std::move(out.log);
    rec.D = diffusion_from_q(rec.q, z1, cfg.positivity_floor, ex.box_D);
    rec.D_true = interpolate(ex.D_true, mesh);
    rec.row.e_D = relative_l2_error(rec.D, rec.D_true);
    rec.row.iters_q = rec.log_q.accepted;
    rec.row.J_final_q = rec.log_q.records.back().J;
    if (rec.log_q.reason == StopReason::Stall) {
        rec.row.status = "stall_q";
    }
}

void run_step_two(const RunConfig& cfg, const DerivedObservables& obs, const ScaledParameters& p,
                  Reconstruction& rec) {
    const auto& ex = cfg.example;
    const auto mesh = build_mesh(ex.dim, p.n_H);
    const auto zeta = to_working_mesh(cfg, obs.zeta_delta, mesh, true);
    const auto rhs = to_working_mesh(cfg, obs.zeta_rhs, mesh, false);
    const auto D = transfer(rec.D, mesh);

    InverseStepConfig step = cfg.step_sigma;
    step.alpha = p.alpha2;
    step.box = ex.box_sigma;
    const PotentialObjective objective(zeta, rhs, D, p.alpha2, step.solve);
    auto out = minimize(objective, step);
    rec.sigma = std::move(out.coeff);
    rec.log_sigma = std::move(out.log);
    rec.sigma_true = interpolate(ex.sigma_true, mesh);
    const double ref = measure(NormKind::L2, rec.sigma_true);
    const auto diff = rec.sigma - rec.sigma_true;
    rec.row.e_sigma = measure(NormKind::L2, diff) / ref;
    rec.row.e_sigma_interior = l2_norm_away_from_boundary(diff, cfg.interior_distance) / ref;
    rec.row.iters_sigma = rec.log_sigma.accepted;
    rec.row.J_final_sigma = rec.log_sigma.records.back().J;
    if (rec.log_sigma.reason == StopReason::Stall && rec.row.status == "ok") {
        rec.row.status = "stall_sigma";
    }
}

namespace {

ScaledParameters parameters_for(const RunConfig& cfg, const GroundTruth& truth, double delta, double gamma) {
    const auto& ex = cfg.example;
    ScaledParameters p;
    if (delta > 0.0) {
        p = scale_parameters(ex.policy, delta, ex.parabolic, gamma, truth.fine->n());
    } else {
        // exact data: anchors without scaling
        p = scale_parameters(ex.policy, ex.policy.delta0, ex.parabolic, gamma, truth.fine->n());
    }
    if (ex.parabolic) {
        double theta = ex.windows.front().theta;
        for (const auto& w : ex.windows) {
            theta = std::min(theta, w.theta);
        }
        p.tau = snap_time_step(p.tau, truth.trajectory.tau(), theta, ex.policy.k);
    }
    return p;
}

Reconstruction begin_row(const RunConfig& cfg, double delta, std::uint64_t seed) {
    Reconstruction rec;
    rec.row.example = cfg.example.id;
    rec.row.delta = delta;
    rec.row.seed = seed;
    rec.row.fine_n = cfg.example.fine_n;
    rec.row.tau_data = cfg.example.parabolic ? cfg.example.tau_data : 0.0;
    rec.row.preset = cfg.quick ? "quick" : "full";
    return rec;
}

}  // namespace

Reconstruction recover(const RunConfig& cfg, const GroundTruth& truth, double delta, std::uint64_t seed,
                       double gamma) {
    const auto t0 = std::chrono::steady_clock::now();
    Reconstruction rec = begin_row(cfg, delta, seed);
    rec.row.params = parameters_for(cfg, truth, delta, gamma);
    const auto data = prepare_data(cfg, truth, delta, seed);
    rec.observables = derive_observables(cfg, truth, data, rec.row.params.tau);
    run_step_one(cfg, rec.observables, rec.row.params, rec);
    run_step_two(cfg, rec.observables, rec.row.params, rec);
    if (cfg.timings) {
        rec.row.wall_ms = elapsed_ms(t0);
    }
    return rec;
}

ExperimentOutput run_experiment(const RunConfig& cfg, const std::vector<double>& deltas,
                                const std::vector<std::uint64_t>& seeds, bool keep_reconstructions,
                                const ProgressFn& progress) {
    const auto& ex = cfg.example;
    if (progress) {
        progress("generating ground truth for " + ex.id);
    }
    const GroundTruth truth = generate_truth(cfg);

    // Phase one: data and step one for every (delta, seed).
    std::vector<Reconstruction> recs;
    std::vector<double> ms;
    std::set<std::pair<double, std::uint64_t>> seen;
    for (const double delta : deltas) {
        for (const auto seed : seeds) {
            if (!seen.insert({delta, seed}).second) {
                continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            Reconstruction rec = begin_row(cfg, delta, seed);
            try {
                // gamma does not affect step one
                rec.row.params = parameters_for(cfg, truth, delta, ex.policy.gamma_fallback);
                const auto data = prepare_data(cfg, truth, delta, seed);
                rec.observables = derive_observables(cfg, truth, data, rec.row.params.tau);
                run_step_one(cfg, rec.observables, rec.row.params, rec);
            } catch (const std::exception& e) {
                rec.row.status = sanitize(e.what());
            }
            ms.push_back(elapsed_ms(t0));
            if (progress) {
                std::ostringstream os;
                os << ex.id << " step one delta=" << delta << " seed=" << seed << " e_D=" << rec.row.e_D
                   << " iters=" << rec.row.iters_q << " [" << rec.row.status << "]";
                progress(os.str());
            }
            recs.push_back(std::move(rec));
        }
    }

    ExperimentOutput out;
    if (ex.policy.gamma) {
        out.gamma = *ex.policy.gamma;
    } else {
        std::vector<ResultRow> rows;
        for (const auto& r : recs) {
            rows.push_back(r.row);
        }
        std::vector<std::pair<double, double>> pairs;
        for (const auto& m : seed_means(rows, ex.id)) {
            if (m.delta > 0.0 && m.e_D > 0.0) {
                pairs.push_back({m.delta, m.e_D});
            }
        }
        out.gamma = ex.policy.gamma_fallback;
        if (pairs.size() >= 2) {
            const double rate = estimate_rate(pairs);
            if (std::isfinite(rate) && rate > 0.0) {
                out.gamma = rate;
            }
        }
    }
    if (progress) {
        std::ostringstream os;
        os << "step-two exponent gamma = " << out.gamma;
        progress(os.str());
    }

    // Phase two: step two with the scaled (H, alpha2).
    for (std::size_t i = 0; i < recs.size(); ++i) {
        auto& rec = recs[i];
        if (rec.row.status.rfind("failed", 0) == 0) {
            out.rows.push_back(rec.row);
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const double tau = rec.row.params.tau;
            rec.row.params = parameters_for(cfg, truth, rec.row.delta, out.gamma);
            rec.row.params.tau = tau;
            run_step_two(cfg, rec.observables, rec.row.params, rec);
        } catch (const std::exception& e) {
            rec.row.status = sanitize(e.what());
        }
        if (cfg.timings) {
            rec.row.wall_ms = ms[i] + elapsed_ms(t0);
        }
        if (progress) {
            std::ostringstream os;
            os << ex.id << " step two delta=" << rec.row.delta << " seed=" << rec.row.seed
               << " e_sigma=" << rec.row.e_sigma << " iters=" << rec.row.iters_sigma << " [" << rec.row.status
               << "]";
            progress(os.str());
        }
        out.rows.push_back(rec.row);
        if (keep_reconstructions) {
            out.reconstructions.push_back(std::move(rec));
        }
    }
    return out;
}

CoupledComparison compare_coupled(const RunConfig& cfg, const GroundTruth& truth, double delta, std::uint64_t seed,
                                  double gamma) {
    const auto& ex = cfg.example;
    if (ex.parabolic) {
        throw InvalidArgument("compare_coupled: the coupled baseline is implemented for elliptic data only");
    }
    CoupledComparison out;
    out.decoupled = recover(cfg, truth, delta, seed, gamma);
    const auto& p = out.decoupled.row.params;
    out.budget = out.decoupled.row.iters_q + out.decoupled.row.iters_sigma;

    const auto mesh = build_mesh(ex.dim, p.n_h);
    const auto data = prepare_data(cfg, truth, delta, seed);
    CoupledData cd;
    cd.z = {to_working_mesh(cfg, data.obs.z1, mesh, false), to_working_mesh(cfg, data.obs.z2, mesh, false)};
    cd.f = {interpolate(ex.f1, mesh), interpolate(ex.f2, mesh)};
    cd.g = interpolate(ex.g, mesh);

    CoupledConfig cc;
    cc.D = cfg.step_q;
    cc.D.alpha = p.alpha1;
    cc.D.box = ex.box_D;
    cc.sigma = cfg.step_sigma;
    cc.sigma.alpha = p.alpha2;
    cc.sigma.box = ex.box_sigma;
    cc.outer_iters = cfg.coupled_outer;
    cc.inner_iters = cfg.coupled_inner;
    out.coupled = coupled_baseline(cd, cc, out.budget);
    out.e_D_coupled = relative_l2_error(out.coupled.D, interpolate(ex.D_true, mesh));
    out.e_sigma_coupled = relative_l2_error(out.coupled.sigma, interpolate(ex.sigma_true, mesh));
    return out;
}

GradcheckReport gradcheck_example(const RunConfig& cfg, const GroundTruth& truth, double delta,
                                  std::uint64_t seed, int directions) {
    const auto& ex = cfg.example;
    const auto p = parameters_for(cfg, truth, delta > 0.0 ? delta : ex.policy.delta0, ex.policy.gamma_fallback);
    const auto data = prepare_data(cfg, truth, delta, seed);
    const auto obs = derive_observables(cfg, truth, data, p.tau);
    const SolveOptions tight{1e-14, 0, SolveMethod::Automatic};

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.25, 0.75);
    auto random_inside = [&](const MeshPtr& mesh, const Box& box) {
        GridFunction c(mesh, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            c[i] = box.lower + unit(rng) * (box.upper - box.lower);
        }
        return c;
    };

    GradcheckReport rep;
    {
        const auto mesh = build_mesh(ex.dim, p.n_h);
        const DiffusionObjective obj(to_working_mesh(cfg, obs.w_delta, mesh, true),
                                     to_working_mesh(cfg, obs.F_delta, mesh, false), p.alpha1, tight);
        rep.diffusion = check_gradient(obj, random_inside(mesh, ex.box_q), directions, seed + 1).worst_relative_error;
    }
    {
        const auto mesh = build_mesh(ex.dim, p.n_H);
        const PotentialObjective obj(to_working_mesh(cfg, obs.zeta_delta, mesh, true),
                                     to_working_mesh(cfg, obs.zeta_rhs, mesh, false),
                                     interpolate(ex.D_true, mesh), p.alpha2, tight);
        rep.potential =
            check_gradient(obj, random_inside(mesh, ex.box_sigma), directions, seed + 2).worst_relative_error;
    }
    return rep;
}

}  // namespace coefrec
