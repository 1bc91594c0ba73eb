#include "coefrec/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "coefrec/error.hpp"

namespace coefrec {

std::size_t SparsityPattern::find(std::size_t i, std::size_t j) const {
    const auto first = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
    const auto last = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) {
        return npos;
    }
    return static_cast<std::size_t>(it - cols.begin());
}

std::shared_ptr<const SparsityPattern> SparsityPattern::from_rows(std::vector<std::vector<std::size_t>> rows) {
    auto p = std::make_shared<SparsityPattern>();
    p->rows = rows.size();
    p->row_ptr.assign(rows.size() + 1, 0);
    p->diag.resize(rows.size());
    bool tri = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        r.push_back(i);
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
        p->row_ptr[i + 1] = p->row_ptr[i] + r.size();
    }
    p->cols.reserve(p->row_ptr.back());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const std::size_t j : rows[i]) {
            if (j >= rows.size()) {
                throw InvalidArgument("sparsity pattern column out of range");
            }
            if (j == i) {
                p->diag[i] = p->cols.size();
            }
            if ((j > i ? j - i : i - j) > 1) {
                tri = false;
            }
            p->cols.push_back(j);
        }
    }
    p->tridiagonal = tri;
    return p;
}

SparseSymMatrix::SparseSymMatrix(std::shared_ptr<const SparsityPattern> pattern)
    : pattern_(std::move(pattern)), values_(pattern_->nnz(), 0.0) {}

SparseSymMatrix::SparseSymMatrix(std::shared_ptr<const SparsityPattern> pattern, std::vector<double> values)
    : pattern_(std::move(pattern)), values_(std::move(values)) {
    if (values_.size() != pattern_->nnz()) {
        throw InvalidArgument("value array does not match sparsity pattern");
    }
}

double SparseSymMatrix::at(std::size_t i, std::size_t j) const {
    const std::size_t k = pattern_->find(i, j);
    return k == SparsityPattern::npos ? 0.0 : values_[k];
}

void SparseSymMatrix::multiply(std::span<const double> x, std::span<double> y) const {
    const auto& p = *pattern_;
    if (x.size() != p.rows || y.size() != p.rows) {
        throw InvalidArgument("matrix-vector size mismatch");
    }
    for (std::size_t i = 0; i < p.rows; ++i) {
        double s = 0.0;
        for (std::size_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
            s += values_[k] * x[p.cols[k]];
        }
        y[i] = s;
    }
}

std::vector<double> SparseSymMatrix::multiply(std::span<const double> x) const {
    std::vector<double> y(rows());
    multiply(x, y);
    return y;
}

double SparseSymMatrix::quadratic_form(std::span<const double> x) const {
    const auto y = multiply(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += x[i] * y[i];
    }
    return s;
}

SparseSymMatrix& SparseSymMatrix::add_scaled(const SparseSymMatrix& other, double factor) {
    if (other.pattern_ != pattern_) {
        throw InvalidArgument("add_scaled requires matrices on the same sparsity pattern");
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
        values_[k] += factor * other.values_[k];
    }
    return *this;
}

SparseSymMatrix& SparseSymMatrix::scale(double factor) {
    for (double& v : values_) {
        v *= factor;
    }
    return *this;
}

double SparseSymMatrix::asymmetry() const {
    const auto& p = *pattern_;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        for (std::size_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
            const std::size_t j = p.cols[k];
            const std::size_t kt = p.find(j, i);
            const double vt = kt == SparsityPattern::npos ? 0.0 : values_[kt];
            worst = std::max(worst, std::abs(values_[k] - vt));
        }
    }
    return worst;
}

SparseSymMatrix SparseSymMatrix::identity(std::size_t n) {
    std::vector<std::vector<std::size_t>> rows(n);
    SparseSymMatrix m(SparsityPattern::from_rows(std::move(rows)));
    for (double& v : m.values_) {
        v = 1.0;
    }
    return m;
}

SparseSymMatrix SparseSymMatrix::from_triplets(
    std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& entries) {
    std::vector<std::map<std::size_t, double>> acc(n);
    for (const auto& [i, j, v] : entries) {
        if (i >= n || j >= n) {
            throw InvalidArgument("triplet index out of range");
        }
        acc[i][j] += v;
        if (i != j) {
            acc[j][i] += v;
        }
    }
    std::vector<std::vector<std::size_t>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [j, v] : acc[i]) {
            rows[i].push_back(j);
        }
    }
    SparseSymMatrix m(SparsityPattern::from_rows(std::move(rows)));
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [j, v] : acc[i]) {
            m.values_[m.pattern_->find(i, j)] = v;
        }
    }
    return m;
}

}  // namespace coefrec
