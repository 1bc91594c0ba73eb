#pragma once

#include <span>
#include <string>
#include <vector>

#include "coefrec/error.hpp"
#include "coefrec/sparse.hpp"

namespace coefrec {

struct SolveReport {
    int iterations = 0;
    double final_relative_residual = 0.0;
    bool converged = false;
    bool rounding_limited = false;  // tol is below the rounding floor, which was reached instead
};

enum class SolveMethod {
    Automatic,          // same as Direct
    ConjugateGradient,  // Jacobi-preconditioned CG regardless of structure
    Direct,             // tridiagonal elimination, sparse Cholesky otherwise; CG polish if needed
};

struct SolveOptions {
    double tol = 1e-10;
    int max_iter = 0;  // 0 selects 20 * rows
    SolveMethod method = SolveMethod::Automatic;
};

struct SolveResult {
    std::vector<double> x;
    SolveReport report;
};

/// Raised when an inner linear solve does not reach its tolerance.
class SolverFailure : public Error {
public:
    SolverFailure(const std::string& context, SolveReport report);
    const SolveReport& report() const { return report_; }

private:
    SolveReport report_;
};

/// Solves A x = b for symmetric positive definite A.
///
/// The residual reported is always recomputed from a fresh product A x, so
/// `converged` implies ||b - A x||_2 <= tol * ||b||_2 for the returned x. When tol is below
/// what rounding allows (64 eps (|| |A| |x| ||_2 + ||b||_2)) and that level is reached,
/// `rounding_limited` is set instead; solve_spd_or_throw accepts either.
/// A non-converged solve is reported, not thrown; use `solve_spd_or_throw`
/// where silent inaccuracy is unacceptable. An optional initial guess may be
/// passed in `x0` (empty means zero).
SolveResult solve_spd(const SparseSymMatrix& A, std::span<const double> b, const SolveOptions& options = {},
                      std::span<const double> x0 = {});

SolveResult solve_spd_or_throw(const SparseSymMatrix& A, std::span<const double> b, const SolveOptions& options,
                               const std::string& context, std::span<const double> x0 = {});

/// Thomas elimination for a tridiagonal SPD matrix stored in a tridiagonal pattern.
std::vector<double> solve_tridiagonal(const SparseSymMatrix& A, std::span<const double> b);

}  // namespace coefrec
