#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "coefrec/fem.hpp"
#include "coefrec/mesh.hpp"
#include "coefrec/solver.hpp"

namespace coefrec {

struct EllipticProblem {
    GridFunction D;
    GridFunction sigma;
    GridFunction f;
    GridFunction g;  // only boundary values are used
};

struct ForwardSolution {
    GridFunction u;
    SolveReport report;
};

/// Solves -div(D grad u) + sigma u = f, u = g on the boundary.
ForwardSolution solve_elliptic(const EllipticProblem& p, const SolveOptions& options = {});

/// Dirichlet solve with a pre-assembled full-node operator and load vector.
ForwardSolution solve_dirichlet(const SparseSymMatrix& full, std::span<const double> load, const GridFunction& g,
                                const SolveOptions& options, const std::string& context,
                                std::span<const double> warm_start = {});

/// Source that switches from `early` to `late` over [t_lo, t_hi]:
/// f(t) = (1 - s(t)) early + s(t) late with s = 0 before t_lo, 1 after t_hi and a
/// half sine wave in between. t_lo == t_hi gives a jump; equal fields give a constant source.
struct SourceSchedule {
    GridFunction early;
    GridFunction late;
    double t_lo = 0.0;
    double t_hi = 0.0;

    static SourceSchedule constant(const GridFunction& f);

    double blend(double t) const;
    GridFunction at(double t) const;
};

struct ParabolicProblem {
    GridFunction D;
    GridFunction sigma;
    GridFunction g;
    GridFunction u0;
    SourceSchedule source;
    double T_final = 1.0;
    int n_steps = 1;
};

/// Observation window [T - theta, T]; every stride-th step counted back from T is kept.
struct Window {
    double T = 0.0;
    double theta = 0.0;
    int stride = 1;
};

class Trajectory {
public:
    Trajectory() = default;
    Trajectory(MeshPtr mesh, double tau) : mesh_(std::move(mesh)), tau_(tau) {}

    const MeshPtr& mesh_ptr() const { return mesh_; }
    double tau() const { return tau_; }
    double time(int step) const { return step * tau_; }

    /// Step index of time t; throws if t is not an integer multiple of tau.
    int step_of(double t) const;
    bool has_step(int step) const { return snapshots_.count(step) != 0; }
    const GridFunction& at_step(int step) const;
    const GridFunction& at_time(double t) const { return at_step(step_of(t)); }
    std::vector<int> steps() const;

    void store(int step, GridFunction u) { snapshots_.insert_or_assign(step, std::move(u)); }
    int total_iterations = 0;

private:
    MeshPtr mesh_;
    double tau_ = 0.0;
    std::map<int, GridFunction> snapshots_;
};

/// Implicit Euler with consistent mass. Keeps the states needed by `windows`
/// (or all of them when store_all is set).
Trajectory solve_parabolic(const ParabolicProblem& p, const std::vector<Window>& windows,
                           const SolveOptions& options = {}, bool store_all = false);

}  // namespace coefrec
