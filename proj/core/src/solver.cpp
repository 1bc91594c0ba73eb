#include "coefrec/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <sstream>

namespace coefrec {

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double relative_residual(const SparseSymMatrix& A, std::span<const double> x, std::span<const double> b,
                         double bnorm) {
    std::vector<double> r(b.size());
    A.multiply(x, r);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = b[i] - r[i];
    }
    return norm2(r) / bnorm;
}

// Residual level that rounding alone can produce, relative to ||b||:
// a small multiple of eps (||A| |x|| + ||b||) / ||b||.
double rounding_floor(const SparseSymMatrix& A, std::span<const double> x, double bnorm) {
    const auto& p = A.pattern();
    const auto vals = A.values();
    double s = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        double row = 0.0;
        for (std::size_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
            row += std::abs(vals[k] * x[p.cols[k]]);
        }
        s += row * row;
    }
    return 64.0 * std::numeric_limits<double>::epsilon() * (std::sqrt(s) + bnorm) / bnorm;
}

bool accept(SolveReport& report, const SparseSymMatrix& A, std::span<const double> x, double bnorm, double tol) {
    if (report.final_relative_residual <= tol) {
        report.converged = true;
        report.rounding_limited = false;
    } else if (report.final_relative_residual <= rounding_floor(A, x, bnorm)) {
        report.rounding_limited = true;
    }
    return report.converged || report.rounding_limited;
}

// Jacobi-preconditioned CG starting from x. Returns iterations used.
int pcg(const SparseSymMatrix& A, std::span<const double> b, std::vector<double>& x, double tol, int max_iter,
        double bnorm) {
    const std::size_t n = b.size();
    std::vector<double> r(n), z(n), p(n), ap(n), inv_diag(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = A.diagonal(i);
        if (!(d > 0.0)) {
            throw InvalidArgument("PCG requires a positive diagonal");
        }
        inv_diag[i] = 1.0 / d;
    }
    A.multiply(x, ap);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = b[i] - ap[i];
        z[i] = inv_diag[i] * r[i];
    }
    p = z;
    double rz = dot(r, z);
    double target = tol * bnorm;
    int it = 0;
    while (it < max_iter) {
        if (norm2(r) <= target) {
            break;
        }
        if (it > 0 && it % 32 == 0) {
            target = std::max(target, 0.5 * rounding_floor(A, x, bnorm) * bnorm);
        }
        A.multiply(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) {
            break;  // loss of positive definiteness or exact breakdown
        }
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        ++it;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = inv_diag[i] * r[i];
        }
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = z[i] + beta * p[i];
        }
    }
    return it;
}

// Sparse Cholesky with fill-reducing ordering. The symbolic analysis is kept per
// pattern and the numeric factor is reused while the values do not change, which
// covers repeated solves with one matrix (time stepping, adjoints).
class CholeskyCache {
public:
    std::vector<double> solve(const SparseSymMatrix& A, std::span<const double> b) {
        const auto& p = A.pattern_ptr();
        Entry& e = entry(p);
        const auto vals = A.values();
        if (!e.factored || !std::equal(vals.begin(), vals.end(), e.values.begin(), e.values.end())) {
            e.values.assign(vals.begin(), vals.end());
            const Eigen::Map<const Eigen::SparseMatrix<double, Eigen::ColMajor, int>> M(
                static_cast<int>(p->rows), static_cast<int>(p->rows), static_cast<int>(p->nnz()), e.outer.data(),
                e.inner.data(), e.values.data());
            e.llt.factorize(M);
            if (e.llt.info() != Eigen::Success) {
                e.factored = false;
                throw InvalidArgument("sparse Cholesky: matrix is not positive definite");
            }
            e.factored = true;
        }
        const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
        Eigen::VectorXd x = e.llt.solve(rhs);
        return std::vector<double>(x.data(), x.data() + x.size());
    }

private:
    using Factor = Eigen::SimplicialLLT<Eigen::SparseMatrix<double, Eigen::ColMajor, int>, Eigen::Lower,
                                        Eigen::AMDOrdering<int>>;
    struct Entry {
        std::weak_ptr<const SparsityPattern> pattern;
        std::vector<int> outer;
        std::vector<int> inner;
        std::vector<double> values;
        Factor llt;
        bool factored = false;
    };

    Entry& entry(const std::shared_ptr<const SparsityPattern>& p) {
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (it->second->pattern.expired()) {
                it = entries_.erase(it);
            } else {
                ++it;
            }
        }
        auto& slot = entries_[p.get()];
        if (!slot) {
            slot = std::make_unique<Entry>();
            slot->pattern = p;
            // full symmetric CSR doubles as CSC
            slot->outer.assign(p->row_ptr.begin(), p->row_ptr.end());
            slot->inner.assign(p->cols.begin(), p->cols.end());
            slot->values.assign(p->nnz(), 0.0);
            const Eigen::Map<const Eigen::SparseMatrix<double, Eigen::ColMajor, int>> M(
                static_cast<int>(p->rows), static_cast<int>(p->rows), static_cast<int>(p->nnz()), slot->outer.data(),
                slot->inner.data(), slot->values.data());
            slot->llt.analyzePattern(M);
        }
        return *slot;
    }

    std::map<const SparsityPattern*, std::unique_ptr<Entry>> entries_;
};

std::vector<double> cholesky_solve(const SparseSymMatrix& A, std::span<const double> b) {
    thread_local CholeskyCache cache;
    return cache.solve(A, b);
}

}  // namespace

SolverFailure::SolverFailure(const std::string& context, SolveReport report)
    : Error([&] {
          std::ostringstream os;
          os << context << ": linear solve did not converge (iterations=" << report.iterations
             << ", relative residual=" << report.final_relative_residual << ")";
          return os.str();
      }()),
      report_(report) {}

std::vector<double> solve_tridiagonal(const SparseSymMatrix& A, std::span<const double> b) {
    const auto& p = A.pattern();
    if (!p.tridiagonal) {
        throw InvalidArgument("direct solve requires a tridiagonal matrix");
    }
    const std::size_t n = p.rows;
    if (b.size() != n) {
        throw InvalidArgument("right-hand side size mismatch");
    }
    std::vector<double> x(n);
    if (n == 0) {
        return x;
    }
    std::vector<double> c(n, 0.0), d(n, 0.0);
    // forward sweep; sub(i) = A(i, i-1), super(i) = A(i, i+1)
    double denom = A.diagonal(0);
    c[0] = n > 1 ? A.at(0, 1) / denom : 0.0;
    d[0] = b[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
        const double sub = A.at(i, i - 1);
        denom = A.diagonal(i) - sub * c[i - 1];
        c[i] = i + 1 < n ? A.at(i, i + 1) / denom : 0.0;
        d[i] = (b[i] - sub * d[i - 1]) / denom;
    }
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    return x;
}

SolveResult solve_spd(const SparseSymMatrix& A, std::span<const double> b, const SolveOptions& options,
                      std::span<const double> x0) {
    const std::size_t n = A.rows();
    if (b.size() != n || (!x0.empty() && x0.size() != n)) {
        throw InvalidArgument("solve_spd: dimension mismatch");
    }
    if (!(options.tol > 0.0)) {
        throw InvalidArgument("solve_spd: tolerance must be positive");
    }
    SolveResult result;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        result.x.assign(n, 0.0);
        result.report = {0, 0.0, true};
        return result;
    }
    const int max_iter = options.max_iter > 0 ? options.max_iter : static_cast<int>(20 * std::max<std::size_t>(n, 1));

    if (options.method != SolveMethod::ConjugateGradient) {
        result.x = A.pattern().tridiagonal ? solve_tridiagonal(A, b) : cholesky_solve(A, b);
        result.report.iterations = 1;
        result.report.final_relative_residual = relative_residual(A, result.x, b, bnorm);
        if (accept(result.report, A, result.x, bnorm, options.tol)) {
            return result;
        }
        // polish an ill-conditioned factorization with CG below
    } else if (!x0.empty()) {
        result.x.assign(x0.begin(), x0.end());
    } else {
        result.x.assign(n, 0.0);
    }

    // The recursively updated residual can drift from the true one; restart a
    // few times from the current iterate until the true residual agrees.
    int used = 0;
    for (int restart = 0; restart < 4 && used < max_iter; ++restart) {
        used += pcg(A, b, result.x, options.tol, max_iter - used, bnorm);
        const double rel = relative_residual(A, result.x, b, bnorm);
        result.report.final_relative_residual = rel;
        if (accept(result.report, A, result.x, bnorm, options.tol)) {
            break;
        }
    }
    result.report.iterations += used;
    return result;
}

SolveResult solve_spd_or_throw(const SparseSymMatrix& A, std::span<const double> b, const SolveOptions& options,
                               const std::string& context, std::span<const double> x0) {
    auto result = solve_spd(A, b, options, x0);
    if (!result.report.converged && !result.report.rounding_limited) {
        throw SolverFailure(context, result.report);
    }
    return result;
}

}  // namespace coefrec
