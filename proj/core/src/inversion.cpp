#include "coefrec/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "coefrec/error.hpp"
#include "coefrec/forward.hpp"

namespace coefrec {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

// 1/2 (a - b)^T M (a - b)
double half_mass_distance(const SparseSymMatrix& M, const GridFunction& a, const GridFunction& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a[i] - b[i];
    }
    return 0.5 * M.quadratic_form(d);
}

std::array<double, 2> element_gradient(const Mesh& mesh, std::size_t e, const GridFunction& u) {
    const auto el = mesh.element(e);
    const auto& g = mesh.geometry(e);
    std::array<double, 2> out{0.0, 0.0};
    for (std::size_t a = 0; a < el.size(); ++a) {
        const double v = u[static_cast<std::size_t>(el[a])];
        out[0] += v * g.grad[a][0];
        out[1] += v * g.grad[a][1];
    }
    return out;
}

// dual_k += sum over elements of |K|/(d+1) grad(u).grad(v): derivative of (q grad u, grad v) in q_k.
void add_stiffness_sensitivity(const Mesh& mesh, const GridFunction& u, const GridFunction& v,
                               std::vector<double>& dual) {
    const int nv = mesh.vertices_per_element();
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto gu = element_gradient(mesh, e, u);
        const auto gv = element_gradient(mesh, e, v);
        const double c = mesh.geometry(e).measure / nv * (gu[0] * gv[0] + gu[1] * gv[1]);
        for (const int k : mesh.element(e)) {
            dual[static_cast<std::size_t>(k)] += c;
        }
    }
}

// dual_k += int phi_k u v: derivative of (sigma u, v) in sigma_k.
void add_mass_sensitivity(const Mesh& mesh, const GridFunction& u, const GridFunction& v,
                          std::vector<double>& dual) {
    const int nv = mesh.vertices_per_element();
    const int d = mesh.dim();
    double w[3][3][3];
    for (int a = 0; a < nv; ++a) {
        for (int b = 0; b < nv; ++b) {
            for (int c = 0; c < nv; ++c) {
                int m[3] = {0, 0, 0};
                ++m[a];
                ++m[b];
                ++m[c];
                w[a][b][c] = simplex_monomial_weight(d, std::span<const int>(m, static_cast<std::size_t>(nv)));
            }
        }
    }
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto el = mesh.element(e);
        const double meas = mesh.geometry(e).measure;
        for (int c = 0; c < nv; ++c) {
            double s = 0.0;
            for (int a = 0; a < nv; ++a) {
                for (int b = 0; b < nv; ++b) {
                    s += w[a][b][c] * u[static_cast<std::size_t>(el[a])] * v[static_cast<std::size_t>(el[b])];
                }
            }
            dual[static_cast<std::size_t>(el[c])] += meas * s;
        }
    }
}

// Adjoint solve A v = M (target - state) with v = 0 on the boundary.
GridFunction adjoint_state(const SparseSymMatrix& A_full, const SparseSymMatrix& M, const GridFunction& state,
                           const GridFunction& target, const SolveOptions& options, const char* context) {
    const Mesh& mesh = state.mesh();
    std::vector<double> r(state.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = target[i] - state[i];
    }
    const auto mr = M.multiply(r);
    const auto rhs = gather_interior(mr, mesh);
    const auto A = restrict_to_interior(A_full, mesh);
    const auto sol = solve_spd_or_throw(A, rhs, options, context);
    return expand_interior(sol.x, GridFunction(state.mesh_ptr(), 0.0));
}

void add_penalty_gradient(const SparseSymMatrix& laplace, const GridFunction& coeff, double alpha,
                          std::vector<double>& dual) {
    const auto kq = laplace.multiply(coeff.values());
    for (std::size_t i = 0; i < dual.size(); ++i) {
        dual[i] += alpha * kq[i];
    }
}

void require_on_mesh(const GridFunction& u, const MeshPtr& mesh, const char* context) {
    if (!u.mesh_ptr() || !same_mesh(u.mesh(), *mesh)) {
        throw MeshMismatch(std::string(context) + ": coefficient is not on the objective's mesh");
    }
}

}  // namespace

void InverseStepConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw InvalidArgument("inverse step: alpha must be nonnegative");
    }
    if (!(grad_tol >= 0.0) || !(obj_decrease_tol >= 0.0) || max_iters < 0) {
        throw InvalidArgument("inverse step: tolerances must be nonnegative");
    }
    if (!(linesearch.armijo_c > 0.0 && linesearch.armijo_c < 1.0) ||
        !(linesearch.shrink > 0.0 && linesearch.shrink < 1.0) || linesearch.max_backtracks < 1) {
        throw InvalidArgument("inverse step: invalid line-search parameters");
    }
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::GradientTolerance:
            return "gradient_tolerance";
        case StopReason::ObjectiveStalled:
            return "objective_stalled";
        case StopReason::MaxIterations:
            return "max_iterations";
        case StopReason::LineSearchFailed:
            return "line_search_failed";
        case StopReason::Stall:
            return "stall";
    }
    return "unknown";
}

void IterationLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << "iter,J,misfit,penalty,grad_norm,step,clamped_count\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", r.iter, r.J, r.misfit, r.penalty,
                      r.grad_norm, r.step, r.clamped);
        out << buf;
    }
}

// ---------------------------------------------------------------- diffusion

DiffusionObjective::DiffusionObjective(GridFunction w_target, GridFunction F, double alpha, SolveOptions solve)
    : w_target_(std::move(w_target)), alpha_(alpha), solve_(solve) {
    require_same_mesh(w_target_, F, "DiffusionObjective");
    load_ = load_vector(F);
    mass_ = assemble_mass(w_target_.mesh_ptr());
    laplace_ = assemble_stiffness(w_target_.mesh_ptr());
}

Evaluation DiffusionObjective::evaluate(const GridFunction& q) const {
    require_on_mesh(q, mesh(), "DiffusionObjective");
    const auto A = assemble_stiffness(q);
    auto sol = solve_dirichlet(A, load_, GridFunction(mesh(), 0.0), solve_, "diffusion state");
    Evaluation ev;
    ev.misfit = half_mass_distance(mass_, sol.u, w_target_);
    ev.penalty = 0.5 * alpha_ * laplace_.quadratic_form(q.values());
    ev.J = ev.misfit + ev.penalty;
    ev.states.push_back(std::move(sol.u));
    return ev;
}

std::vector<double> DiffusionObjective::gradient(const GridFunction& q, const Evaluation& at) const {
    const auto A = assemble_stiffness(q);
    const GridFunction& w = at.states.at(0);
    const auto v = adjoint_state(A, mass_, w, w_target_, solve_, "diffusion adjoint");
    std::vector<double> dual(q.size(), 0.0);
    add_stiffness_sensitivity(q.mesh(), w, v, dual);
    add_penalty_gradient(laplace_, q, alpha_, dual);
    return dual;
}

// ---------------------------------------------------------------- potential

PotentialObjective::PotentialObjective(GridFunction zeta_target, GridFunction rhs, GridFunction frozen_D,
                                       double alpha, SolveOptions solve)
    : zeta_target_(std::move(zeta_target)), alpha_(alpha), solve_(solve) {
    require_same_mesh(zeta_target_, rhs, "PotentialObjective");
    require_same_mesh(zeta_target_, frozen_D, "PotentialObjective");
    load_ = load_vector(rhs);
    mass_ = assemble_mass(zeta_target_.mesh_ptr());
    laplace_ = assemble_stiffness(zeta_target_.mesh_ptr());
    diffusion_ = assemble_stiffness(frozen_D);
}

Evaluation PotentialObjective::evaluate(const GridFunction& sigma) const {
    require_on_mesh(sigma, mesh(), "PotentialObjective");
    auto A = diffusion_;
    A.add_scaled(assemble_mass(sigma), 1.0);
    auto sol = solve_dirichlet(A, load_, GridFunction(mesh(), 0.0), solve_, "potential state");
    Evaluation ev;
    ev.misfit = half_mass_distance(mass_, sol.u, zeta_target_);
    ev.penalty = 0.5 * alpha_ * laplace_.quadratic_form(sigma.values());
    ev.J = ev.misfit + ev.penalty;
    ev.states.push_back(std::move(sol.u));
    return ev;
}

std::vector<double> PotentialObjective::gradient(const GridFunction& sigma, const Evaluation& at) const {
    auto A = diffusion_;
    A.add_scaled(assemble_mass(sigma), 1.0);
    const GridFunction& zeta = at.states.at(0);
    const auto v = adjoint_state(A, mass_, zeta, zeta_target_, solve_, "potential adjoint");
    std::vector<double> dual(sigma.size(), 0.0);
    add_mass_sensitivity(sigma.mesh(), zeta, v, dual);
    add_penalty_gradient(laplace_, sigma, alpha_, dual);
    return dual;
}

// ---------------------------------------------------------------- coupled

CoupledBlockObjective::CoupledBlockObjective(const CoupledData& data, Block block, GridFunction fixed,
                                             double alpha_self, double alpha_other, SolveOptions solve)
    : data_(data), block_(block), fixed_(std::move(fixed)), alpha_self_(alpha_self), solve_(solve) {
    if (data_.z.size() != data_.f.size() || data_.z.empty()) {
        throw InvalidArgument("coupled data needs matching observation and source lists");
    }
    for (std::size_t i = 0; i < data_.z.size(); ++i) {
        require_same_mesh(data_.g, data_.z[i], "CoupledBlockObjective");
        require_same_mesh(data_.g, data_.f[i], "CoupledBlockObjective");
        loads_.push_back(load_vector(data_.f[i]));
    }
    require_same_mesh(data_.g, fixed_, "CoupledBlockObjective");
    mass_ = assemble_mass(data_.g.mesh_ptr());
    laplace_ = assemble_stiffness(data_.g.mesh_ptr());
    other_penalty_ = 0.5 * alpha_other * laplace_.quadratic_form(fixed_.values());
}

Evaluation CoupledBlockObjective::evaluate(const GridFunction& coeff) const {
    require_on_mesh(coeff, mesh(), "CoupledBlockObjective");
    const GridFunction& D = block_ == Block::Diffusion ? coeff : fixed_;
    const GridFunction& sigma = block_ == Block::Diffusion ? fixed_ : coeff;
    auto A = assemble_stiffness(D);
    A.add_scaled(assemble_mass(sigma), 1.0);
    Evaluation ev;
    for (std::size_t i = 0; i < loads_.size(); ++i) {
        auto sol = solve_dirichlet(A, loads_[i], data_.g, solve_, "coupled state");
        ev.misfit += half_mass_distance(mass_, sol.u, data_.z[i]);
        ev.states.push_back(std::move(sol.u));
    }
    ev.penalty = 0.5 * alpha_self_ * laplace_.quadratic_form(coeff.values()) + other_penalty_;
    ev.J = ev.misfit + ev.penalty;
    return ev;
}

std::vector<double> CoupledBlockObjective::gradient(const GridFunction& coeff, const Evaluation& at) const {
    const GridFunction& D = block_ == Block::Diffusion ? coeff : fixed_;
    const GridFunction& sigma = block_ == Block::Diffusion ? fixed_ : coeff;
    auto A = assemble_stiffness(D);
    A.add_scaled(assemble_mass(sigma), 1.0);
    std::vector<double> dual(coeff.size(), 0.0);
    for (std::size_t i = 0; i < loads_.size(); ++i) {
        const GridFunction& u = at.states.at(i);
        const auto v = adjoint_state(A, mass_, u, data_.z[i], solve_, "coupled adjoint");
        if (block_ == Block::Diffusion) {
            add_stiffness_sensitivity(coeff.mesh(), u, v, dual);
        } else {
            add_mass_sensitivity(coeff.mesh(), u, v, dual);
        }
    }
    add_penalty_gradient(laplace_, coeff, alpha_self_, dual);
    return dual;
}

// ---------------------------------------------------------------- optimizer

namespace {

SparseSymMatrix riesz_operator(const MeshPtr& mesh) {
    auto A = assemble_stiffness(mesh);
    A.add_scaled(assemble_mass(mesh), 1.0);
    return A;
}

GridFunction riesz_apply(const SparseSymMatrix& R, std::span<const double> dual, const MeshPtr& mesh,
                         const SolveOptions& options) {
    if (dual.size() != mesh->node_count()) {
        throw InvalidArgument("riesz_smooth: dual vector size does not match mesh");
    }
    auto sol = solve_spd_or_throw(R, dual, options, "riesz_smooth");
    return GridFunction(mesh, std::move(sol.x));
}

}  // namespace

GridFunction riesz_smooth(std::span<const double> dual, const MeshPtr& mesh, const SolveOptions& options) {
    return riesz_apply(riesz_operator(mesh), dual, mesh, options);
}

MinimizeResult minimize(const Objective& objective, const InverseStepConfig& cfg,
                        const std::function<void(int, const GridFunction&)>& observer) {
    cfg.validate();
    const MeshPtr& mesh = objective.mesh();
    const auto R = riesz_operator(mesh);

    GridFunction x = cfg.initial_guess ? *cfg.initial_guess : GridFunction(mesh, cfg.box.midpoint());
    require_on_mesh(x, mesh, "minimize");
    x = clamp_to_box(x, cfg.box);

    MinimizeResult res;
    Evaluation ev = objective.evaluate(x);
    std::vector<double> dual = objective.gradient(x, ev);
    GridFunction G = riesz_apply(R, dual, mesh, cfg.solve);
    double gnorm = std::sqrt(std::max(0.0, dot(dual, G.values())));
    res.log.records.push_back({0, ev.J, ev.misfit, ev.penalty, gnorm, 0.0, count_at_bounds(x, cfg.box)});

    std::vector<double> dir(x.size());
    for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i] = -G[i];
    }
    double prev_step = 0.0;
    double prev_slope = 0.0;
    res.log.reason = StopReason::MaxIterations;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        if (gnorm <= cfg.grad_tol) {
            res.log.reason = StopReason::GradientTolerance;
            break;
        }
        double slope = dot(dual, dir);
        bool steepest = false;
        if (!(slope < 0.0)) {
            for (std::size_t i = 0; i < dir.size(); ++i) {
                dir[i] = -G[i];
            }
            slope = -gnorm * gnorm;
            steepest = true;
        }
        double t = prev_step > 0.0 ? prev_step * prev_slope / slope : 1.0 / gnorm;
        if (!(t > 0.0) || !std::isfinite(t)) {
            t = 1.0 / gnorm;
        }

        // One projected trial along the current direction.
        struct Trial {
            double t = 0.0;
            GridFunction x;
            Evaluation ev;
            bool moved = false;
            bool armijo = false;
        };
        auto probe = [&](double step) {
            Trial tr;
            tr.t = step;
            tr.x = x;
            for (std::size_t i = 0; i < tr.x.size(); ++i) {
                tr.x[i] += step * dir[i];
            }
            tr.x = clamp_to_box(tr.x, cfg.box);
            double predicted = 0.0;
            for (std::size_t i = 0; i < tr.x.size(); ++i) {
                predicted += dual[i] * (tr.x[i] - x[i]);
                tr.moved = tr.moved || tr.x[i] != x[i];
            }
            if (tr.moved) {
                tr.ev = objective.evaluate(tr.x);
                tr.armijo = predicted < 0.0 && tr.ev.J <= ev.J + cfg.linesearch.armijo_c * predicted;
            }
            return tr;
        };
        // Minimizer of the parabola through J(0), its slope, and J(step).
        auto parabola_min = [&](const Trial& tr) {
            const double curv = (tr.ev.J - ev.J - slope * tr.t) / (tr.t * tr.t);
            return curv > 0.0 ? -slope / (2.0 * curv) : std::numeric_limits<double>::infinity();
        };

        bool accepted = false;
        Trial best;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double trial = t;
            for (int bt = 0; bt <= cfg.linesearch.max_backtracks; ++bt) {
                Trial tr = probe(trial);
                if (!tr.moved) {
                    break;  // every component is pinned at the box
                }
                if (tr.armijo) {
                    best = std::move(tr);
                    accepted = true;
                    break;
                }
                const double tq = parabola_min(tr);
                trial = std::clamp(std::isfinite(tq) ? tq : 0.0, 0.1 * trial, cfg.linesearch.shrink * trial);
            }
            if (!accepted) {
                if (steepest) {
                    break;
                }
                // retry along steepest descent before giving up
                for (std::size_t i = 0; i < dir.size(); ++i) {
                    dir[i] = -G[i];
                }
                slope = -gnorm * gnorm;
                steepest = true;
                t = 1.0 / gnorm;
            }
        }
        // Refine an accepted step with the parabola model; CG needs near-exact steps.
        for (int k = 0; accepted && k < 8; ++k) {
            const double tq = std::min(parabola_min(best), 4.0 * best.t);
            if (!(tq > 0.0) || std::abs(tq - best.t) < 0.1 * best.t) {
                break;
            }
            Trial tr = probe(std::max(tq, 0.1 * best.t));
            if (!tr.moved || !tr.armijo || !(tr.ev.J < best.ev.J)) {
                break;
            }
            const bool shrank = tr.t < best.t;
            best = std::move(tr);
            if (shrank) {
                break;
            }
        }
        GridFunction xt;
        Evaluation evt;
        if (accepted) {
            t = best.t;
            xt = std::move(best.x);
            evt = std::move(best.ev);
        }
        if (!accepted) {
            res.log.reason = res.log.accepted == 0 ? StopReason::Stall : StopReason::LineSearchFailed;
            break;
        }

        const double J_old = ev.J;
        x = std::move(xt);
        ev = std::move(evt);
        ++res.log.accepted;
        auto dual_new = objective.gradient(x, ev);
        GridFunction G_new = riesz_apply(R, dual_new, mesh, cfg.solve);
        const double gnorm_new = std::sqrt(std::max(0.0, dot(dual_new, G_new.values())));
        res.log.records.push_back({it, ev.J, ev.misfit, ev.penalty, gnorm_new, t, count_at_bounds(x, cfg.box)});
        if (observer) {
            observer(it, x);
        }

        // Polak-Ribiere+, inner products taken between dual and primal vectors.
        double num = 0.0;
        for (std::size_t i = 0; i < dual_new.size(); ++i) {
            num += dual_new[i] * (G_new[i] - G[i]);
        }
        const double beta = std::max(0.0, num / (gnorm * gnorm));
        for (std::size_t i = 0; i < dir.size(); ++i) {
            dir[i] = -G_new[i] + beta * dir[i];
        }
        prev_step = t;
        prev_slope = slope;
        dual = std::move(dual_new);
        G = std::move(G_new);
        gnorm = gnorm_new;

        const double decrease = (J_old - ev.J) / std::max(std::abs(J_old), std::numeric_limits<double>::min());
        if (decrease <= cfg.obj_decrease_tol) {
            res.log.reason = StopReason::ObjectiveStalled;
            break;
        }
        if (gnorm <= cfg.grad_tol) {
            res.log.reason = StopReason::GradientTolerance;
            break;
        }
    }
    res.coeff = std::move(x);
    return res;
}

GridFunction diffusion_from_q(const GridFunction& q, const GridFunction& z1, double floor, const Box& box_D) {
    require_same_mesh(q, z1, "diffusion_from_q");
    if (!(floor > 0.0)) {
        throw InvalidArgument("diffusion_from_q: floor must be positive");
    }
    GridFunction D(q.mesh_ptr(), 0.0);
    for (std::size_t i = 0; i < D.size(); ++i) {
        const double z = std::max(z1[i], floor);
        D[i] = q[i] / (z * z);
    }
    return clamp_to_box(D, box_D);
}

CoupledResult coupled_baseline(const CoupledData& data, const CoupledConfig& cfg, int total_budget,
                               const CoupledObserver& observer) {
    const MeshPtr& mesh = data.g.mesh_ptr();
    GridFunction D = cfg.D.initial_guess ? *cfg.D.initial_guess : GridFunction(mesh, cfg.D.box.midpoint());
    GridFunction sigma =
        cfg.sigma.initial_guess ? *cfg.sigma.initial_guess : GridFunction(mesh, cfg.sigma.box.midpoint());
    D = clamp_to_box(D, cfg.D.box);
    sigma = clamp_to_box(sigma, cfg.sigma.box);

    CoupledResult res;
    for (int outer = 0; outer < cfg.outer_iters; ++outer) {
        bool progressed = false;
        for (const char block : {'D', 's'}) {
            int remaining = cfg.inner_iters;
            if (total_budget > 0) {
                remaining = std::min(remaining, total_budget - res.total_inner);
            }
            if (remaining <= 0) {
                break;
            }
            const bool isD = block == 'D';
            InverseStepConfig step = isD ? cfg.D : cfg.sigma;
            step.max_iters = remaining;
            step.initial_guess = isD ? D : sigma;
            const CoupledBlockObjective obj(data,
                                            isD ? CoupledBlockObjective::Block::Diffusion
                                                : CoupledBlockObjective::Block::Potential,
                                            isD ? sigma : D, isD ? cfg.D.alpha : cfg.sigma.alpha,
                                            isD ? cfg.sigma.alpha : cfg.D.alpha, step.solve);
            auto out = minimize(obj, step, [&](int, const GridFunction& x) {
                if (observer) {
                    observer(isD ? x : D, isD ? sigma : x);
                }
            });
            CoupledRecord rec;
            rec.outer = outer;
            rec.block = isD ? 'D' : 's';
            rec.J_before = out.log.records.front().J;
            rec.J_after = out.log.records.back().J;
            rec.inner_accepted = out.log.accepted;
            res.log.push_back(rec);
            res.total_inner += out.log.accepted;
            progressed = progressed || out.log.accepted > 0;
            (isD ? D : sigma) = std::move(out.coeff);
        }
        if (!progressed || (total_budget > 0 && res.total_inner >= total_budget)) {
            break;
        }
    }
    res.D = std::move(D);
    res.sigma = std::move(sigma);
    return res;
}

// ---------------------------------------------------------------- diagnostics

StabilityDiagnostics stability_diagnostics(const GridFunction& q_ref, const GridFunction& q_test,
                                           const GridFunction& w_ref, const GridFunction& F_ref, double beta) {
    require_same_mesh(q_ref, q_test, "stability_diagnostics");
    require_same_mesh(q_ref, w_ref, "stability_diagnostics");
    require_same_mesh(q_ref, F_ref, "stability_diagnostics");
    if (!(q_ref.min() > 0.0)) {
        throw InvalidArgument("stability_diagnostics: reference q must be positive");
    }
    const Mesh& mesh = q_ref.mesh();
    const int nv = mesh.vertices_per_element();
    const int d = mesh.dim();
    GridFunction ratio(q_ref.mesh_ptr(), 0.0);
    for (std::size_t i = 0; i < ratio.size(); ++i) {
        ratio[i] = (q_ref[i] - q_test[i]) / q_ref[i];
    }

    // Exact integrals of products of P1 functions via barycentric monomials.
    auto product_integral = [&](std::size_t e, std::initializer_list<const GridFunction*> fs) {
        const auto el = mesh.element(e);
        const std::size_t k = fs.size();
        std::vector<int> idx(k, 0);
        double total = 0.0;
        while (true) {
            int m[3] = {0, 0, 0};
            double coef = 1.0;
            std::size_t j = 0;
            for (const GridFunction* f : fs) {
                ++m[idx[j]];
                coef *= (*f)[static_cast<std::size_t>(el[idx[j]])];
                ++j;
            }
            total += coef * simplex_monomial_weight(d, std::span<const int>(m, static_cast<std::size_t>(nv)));
            std::size_t p = 0;
            while (p < k && ++idx[p] == nv) {
                idx[p] = 0;
                ++p;
            }
            if (p == k) {
                break;
            }
        }
        return total * mesh.geometry(e).measure;
    };

    StabilityDiagnostics out;
    out.positivity_min = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto gw = element_gradient(mesh, e, w_ref);
        const double grad2 = gw[0] * gw[0] + gw[1] * gw[1];
        out.weighted_misfit += grad2 * product_integral(e, {&ratio, &ratio, &q_ref}) +
                               product_integral(e, {&ratio, &ratio, &F_ref, &w_ref});

        const auto el = mesh.element(e);
        double qb = 0.0;
        double Fb = 0.0;
        double wb = 0.0;
        for (const int v : el) {
            qb += q_ref[static_cast<std::size_t>(v)];
            Fb += F_ref[static_cast<std::size_t>(v)];
            wb += w_ref[static_cast<std::size_t>(v)];
        }
        qb /= nv;
        Fb /= nv;
        wb /= nv;
        const double dist = mesh.distance_to_boundary(mesh.barycenter(e));
        out.positivity_min = std::min(out.positivity_min, (qb * grad2 + Fb * wb) / std::pow(dist, beta));
    }
    return out;
}

GradientCheck check_gradient(const Objective& objective, const GridFunction& at, int directions,
                             std::uint64_t seed) {
    const Evaluation ev = objective.evaluate(at);
    const auto dual = objective.gradient(at, ev);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    GradientCheck out;
    const double scale = std::max(1.0, at.max_abs());
    for (int k = 0; k < directions; ++k) {
        std::vector<double> p(at.size());
        for (double& v : p) {
            v = normal(rng);
        }
        const double analytic = dot(dual, p);
        double best = std::numeric_limits<double>::infinity();
        for (double eps = 1e-2 * scale; eps >= 1e-8 * scale; eps *= 0.1) {
            GridFunction plus = at;
            GridFunction minus = at;
            for (std::size_t i = 0; i < p.size(); ++i) {
                plus[i] += eps * p[i];
                minus[i] -= eps * p[i];
            }
            const double fd = (objective.evaluate(plus).J - objective.evaluate(minus).J) / (2.0 * eps);
            const double rel = std::abs(fd - analytic) / std::max(std::abs(analytic), 1e-300);
            best = std::min(best, rel);
        }
        out.worst_relative_error = std::max(out.worst_relative_error, best);
        ++out.directions;
    }
    return out;
}

}  // namespace coefrec
