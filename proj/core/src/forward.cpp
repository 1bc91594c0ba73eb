#include "coefrec/forward.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "coefrec/error.hpp"

namespace coefrec {

ForwardSolution solve_dirichlet(const SparseSymMatrix& full, std::span<const double> load, const GridFunction& g,
                                const SolveOptions& options, const std::string& context,
                                std::span<const double> warm_start) {
    const Mesh& mesh = g.mesh();
    auto ll = lift_load(load, g, full);
    const auto A = restrict_to_interior(full, mesh);
    auto sol = solve_spd_or_throw(A, ll.rhs, options, context, warm_start);
    return {expand_interior(sol.x, ll.lift), sol.report};
}

ForwardSolution solve_elliptic(const EllipticProblem& p, const SolveOptions& options) {
    require_same_mesh(p.D, p.sigma, "solve_elliptic");
    require_same_mesh(p.D, p.f, "solve_elliptic");
    require_same_mesh(p.D, p.g, "solve_elliptic");
    if (!(p.D.min() > 0.0)) {
        throw InvalidArgument("solve_elliptic: diffusion must be positive");
    }
    if (p.sigma.min() < 0.0) {
        throw InvalidArgument("solve_elliptic: potential must be nonnegative");
    }
    auto A = assemble_stiffness(p.D);
    A.add_scaled(assemble_mass(p.sigma), 1.0);
    return solve_dirichlet(A, load_vector(p.f), p.g, options, "solve_elliptic");
}

SourceSchedule SourceSchedule::constant(const GridFunction& f) { return {f, f, 0.0, 0.0}; }

double SourceSchedule::blend(double t) const {
    if (t <= t_lo) {
        return 0.0;
    }
    if (t >= t_hi) {
        return 1.0;
    }
    const double mid = 0.5 * (t_lo + t_hi);
    return 0.5 * (1.0 + std::sin(std::numbers::pi * (t - mid) / (t_hi - t_lo)));
}

GridFunction SourceSchedule::at(double t) const {
    const double s = blend(t);
    if (s == 0.0) {
        return early;
    }
    if (s == 1.0) {
        return late;
    }
    return (1.0 - s) * early + s * late;
}

int Trajectory::step_of(double t) const {
    const double r = t / tau_;
    const double k = std::round(r);
    if (std::abs(r - k) > 1e-6) {
        std::ostringstream os;
        os << "time " << t << " is not a multiple of the step " << tau_;
        throw InvalidArgument(os.str());
    }
    return static_cast<int>(k);
}

const GridFunction& Trajectory::at_step(int step) const {
    const auto it = snapshots_.find(step);
    if (it == snapshots_.end()) {
        std::ostringstream os;
        os << "no stored state at step " << step << " (t = " << time(step) << ")";
        throw InvalidArgument(os.str());
    }
    return it->second;
}

std::vector<int> Trajectory::steps() const {
    std::vector<int> out;
    out.reserve(snapshots_.size());
    for (const auto& [k, v] : snapshots_) {
        out.push_back(k);
    }
    return out;
}

Trajectory solve_parabolic(const ParabolicProblem& p, const std::vector<Window>& windows,
                           const SolveOptions& options, bool store_all) {
    require_same_mesh(p.D, p.sigma, "solve_parabolic");
    require_same_mesh(p.D, p.g, "solve_parabolic");
    require_same_mesh(p.D, p.u0, "solve_parabolic");
    require_same_mesh(p.D, p.source.early, "solve_parabolic");
    require_same_mesh(p.D, p.source.late, "solve_parabolic");
    if (p.n_steps < 1 || !(p.T_final > 0.0)) {
        throw InvalidArgument("solve_parabolic: need n_steps >= 1 and T_final > 0");
    }
    if (!(p.D.min() > 0.0) || p.sigma.min() < 0.0) {
        throw InvalidArgument("solve_parabolic: coefficients outside their admissible range");
    }
    const MeshPtr& mesh = p.D.mesh_ptr();
    const double tau = p.T_final / p.n_steps;
    Trajectory traj(mesh, tau);

    std::set<int> keep;
    for (const auto& w : windows) {
        if (!(w.T > 0.0) || w.T > p.T_final * (1.0 + 1e-12) || w.theta < 0.0 || w.T - w.theta < -1e-12 ||
            w.stride < 1) {
            throw InvalidArgument("solve_parabolic: observation window outside (0, T_final]");
        }
        const int top = traj.step_of(w.T);
        const int low = static_cast<int>(std::ceil((w.T - w.theta) / tau - 1e-9));
        for (int s = top; s >= std::max(low, 0); s -= w.stride) {
            keep.insert(s);
        }
    }
    if (store_all || keep.count(0)) {
        traj.store(0, p.u0);
    }

    const auto M1 = assemble_mass(mesh);
    auto A = assemble_stiffness(p.D);
    A.add_scaled(assemble_mass(p.sigma), 1.0);
    A.add_scaled(M1, 1.0 / tau);
    const auto ll0 = lift_load(std::vector<double>(mesh->node_count(), 0.0), p.g, A);
    const auto Aint = restrict_to_interior(A, *mesh);

    const auto load_early = load_vector(p.source.early);
    const auto load_late = load_vector(p.source.late);
    // boundary elimination term -A_IB g is time independent
    std::vector<double> lift_term = ll0.rhs;

    const auto& interior = mesh->interior_nodes();
    GridFunction u = p.u0;
    std::vector<double> rhs(interior.size());
    std::vector<double> x = gather_interior(u.values(), *mesh);
    std::vector<double> mu(mesh->node_count());
    for (int m = 1; m <= p.n_steps; ++m) {
        const double t = m * tau;
        const double s = p.source.blend(t);
        M1.multiply(u.values(), mu);
        for (std::size_t ii = 0; ii < interior.size(); ++ii) {
            const std::size_t i = interior[ii];
            rhs[ii] = mu[i] / tau + (1.0 - s) * load_early[i] + s * load_late[i] + lift_term[ii];
        }
        SolveResult sol;
        try {
            sol = solve_spd_or_throw(Aint, rhs, options, "solve_parabolic", x);
        } catch (const SolverFailure& e) {
            std::ostringstream os;
            os << "solve_parabolic: step " << m << " (t = " << t << "): " << e.what();
            throw SolverFailure(os.str(), e.report());
        }
        traj.total_iterations += sol.report.iterations;
        x = std::move(sol.x);
        u = expand_interior(x, ll0.lift);
        if (store_all || keep.count(m)) {
            traj.store(m, u);
        }
    }
    return traj;
}

}  // namespace coefrec
