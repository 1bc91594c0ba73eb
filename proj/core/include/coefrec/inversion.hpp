#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coefrec/fem.hpp"
#include "coefrec/mesh.hpp"
#include "coefrec/solver.hpp"

namespace coefrec {

struct LineSearchConfig {
    double armijo_c = 1e-4;
    double shrink = 0.5;
    int max_backtracks = 40;
};

struct InverseStepConfig {
    double alpha = 1e-6;
    Box box{0.0, 1.0};
    int max_iters = 200;
    double grad_tol = 1e-12;         // on the H1 norm of the smoothed gradient
    double obj_decrease_tol = 1e-10;  // relative decrease of J per accepted step
    std::optional<GridFunction> initial_guess;  // empty: box midpoint
    LineSearchConfig linesearch;
    SolveOptions solve;

    void validate() const;
};

struct IterationRecord {
    int iter = 0;
    double J = 0.0;
    double misfit = 0.0;
    double penalty = 0.0;
    double grad_norm = 0.0;
    double step = 0.0;
    std::size_t clamped = 0;
};

enum class StopReason { GradientTolerance, ObjectiveStalled, MaxIterations, LineSearchFailed, Stall };

std::string to_string(StopReason r);

struct IterationLog {
    std::vector<IterationRecord> records;  // record 0 is the initial point
    StopReason reason = StopReason::MaxIterations;
    int accepted = 0;

    void write_csv(const std::filesystem::path& path) const;
};

struct Evaluation {
    double J = 0.0;
    double misfit = 0.0;
    double penalty = 0.0;
    std::vector<GridFunction> states;  // forward solutions behind the misfit
};

/// Smooth functional of one nodal coefficient, with an adjoint gradient.
class Objective {
public:
    virtual ~Objective() = default;
    virtual const MeshPtr& mesh() const = 0;
    virtual Evaluation evaluate(const GridFunction& coeff) const = 0;
    /// Dual vector dJ/dcoeff_k at coeff, reusing the states of `at`.
    virtual std::vector<double> gradient(const GridFunction& coeff, const Evaluation& at) const = 0;
};

/// J(q) = 1/2 ||w_h(q) - w_target||^2 + alpha/2 ||grad q||^2 with
/// (q grad w_h, grad v) = (F, v) for all v vanishing on the boundary, w_h = 0 there.
class DiffusionObjective : public Objective {
public:
    DiffusionObjective(GridFunction w_target, GridFunction F, double alpha, SolveOptions solve = {});
    const MeshPtr& mesh() const override { return w_target_.mesh_ptr(); }
    Evaluation evaluate(const GridFunction& q) const override;
    std::vector<double> gradient(const GridFunction& q, const Evaluation& at) const override;

private:
    GridFunction w_target_;
    std::vector<double> load_;
    SparseSymMatrix mass_;
    SparseSymMatrix laplace_;
    double alpha_;
    SolveOptions solve_;
};

/// J(sigma) = 1/2 ||zeta_h(sigma) - zeta_target||^2 + alpha/2 ||grad sigma||^2 with
/// (D grad zeta, grad v) + (sigma zeta, v) = (rhs, v), zeta = 0 on the boundary.
class PotentialObjective : public Objective {
public:
    PotentialObjective(GridFunction zeta_target, GridFunction rhs, GridFunction frozen_D, double alpha,
                       SolveOptions solve = {});
    const MeshPtr& mesh() const override { return zeta_target_.mesh_ptr(); }
    Evaluation evaluate(const GridFunction& sigma) const override;
    std::vector<double> gradient(const GridFunction& sigma, const Evaluation& at) const override;

private:
    GridFunction zeta_target_;
    std::vector<double> load_;
    SparseSymMatrix mass_;
    SparseSymMatrix laplace_;
    SparseSymMatrix diffusion_;
    double alpha_;
    SolveOptions solve_;
};

/// Data of the coupled output least-squares problem: states u_i solve
/// -div(D grad u_i) + sigma u_i = f_i, u_i = g, and are fitted to z_i.
struct CoupledData {
    std::vector<GridFunction> z;
    std::vector<GridFunction> f;
    GridFunction g;
};

/// One block of the coupled functional; the other coefficient is held fixed.
class CoupledBlockObjective : public Objective {
public:
    enum class Block { Diffusion, Potential };
    CoupledBlockObjective(const CoupledData& data, Block block, GridFunction fixed, double alpha_self,
                          double alpha_other, SolveOptions solve = {});
    const MeshPtr& mesh() const override { return data_.g.mesh_ptr(); }
    Evaluation evaluate(const GridFunction& coeff) const override;
    std::vector<double> gradient(const GridFunction& coeff, const Evaluation& at) const override;

private:
    const CoupledData& data_;
    Block block_;
    GridFunction fixed_;
    double alpha_self_;
    double other_penalty_;
    std::vector<std::vector<double>> loads_;
    SparseSymMatrix mass_;
    SparseSymMatrix laplace_;
    SolveOptions solve_;
};

/// H1 Riesz representative: (grad G, grad phi) + (G, phi) = dual(phi) over all nodes.
GridFunction riesz_smooth(std::span<const double> dual, const MeshPtr& mesh, const SolveOptions& options = {});

struct MinimizeResult {
    GridFunction coeff;
    IterationLog log;
};

/// Projected nonlinear conjugate gradients (Polak-Ribiere+) on nodal values.
/// If `observer` is set it is called with every accepted iterate.
MinimizeResult minimize(const Objective& objective, const InverseStepConfig& cfg,
                        const std::function<void(int, const GridFunction&)>& observer = {});

/// D = q / max(z1, floor)^2, clamped to box_D.
GridFunction diffusion_from_q(const GridFunction& q, const GridFunction& z1, double floor, const Box& box_D);

struct CoupledConfig {
    InverseStepConfig D;
    InverseStepConfig sigma;
    int outer_iters = 10;
    int inner_iters = 10;  // per block and outer iteration
};

struct CoupledRecord {
    int outer = 0;
    char block = 'D';
    double J_before = 0.0;
    double J_after = 0.0;
    int inner_accepted = 0;
};

struct CoupledResult {
    GridFunction D;
    GridFunction sigma;
    std::vector<CoupledRecord> log;
    int total_inner = 0;
};

using CoupledObserver = std::function<void(const GridFunction& D, const GridFunction& sigma)>;

/// Block-alternating minimization of the coupled functional; starts from the
/// configs' initial guesses. total_budget > 0 caps the summed accepted inner iterations.
CoupledResult coupled_baseline(const CoupledData& data, const CoupledConfig& cfg, int total_budget = 0,
                               const CoupledObserver& observer = {});

struct StabilityDiagnostics {
    double weighted_misfit = 0.0;
    double positivity_min = 0.0;
};

/// weighted_misfit = int ((q_ref - q_test)/q_ref)^2 (q_ref |grad w|^2 + F w), with the ratio
/// interpolated nodally; positivity_min = min over element barycenters of
/// (q_ref |grad w|^2 + F w) / dist(x, boundary)^beta.
StabilityDiagnostics stability_diagnostics(const GridFunction& q_ref, const GridFunction& q_test,
                                           const GridFunction& w_ref, const GridFunction& F_ref, double beta);

struct GradientCheck {
    double worst_relative_error = 0.0;
    int directions = 0;
};

/// Central finite differences against the adjoint gradient along random directions,
/// taking for each direction the best step out of a sweep.
GradientCheck check_gradient(const Objective& objective, const GridFunction& at, int directions,
                             std::uint64_t seed);

}  // namespace coefrec
