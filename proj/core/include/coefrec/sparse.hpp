#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <tuple>
#include <vector>

namespace coefrec {

/// Compressed-row structure shared by every matrix assembled on one mesh.
/// Columns are sorted within each row and the diagonal is always stored.
struct SparsityPattern {
    std::size_t rows = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::size_t> cols;
    std::vector<std::size_t> diag;  // position of (i, i) inside cols
    bool tridiagonal = false;       // every row couples only i-1, i, i+1

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t nnz() const { return cols.size(); }
    std::size_t find(std::size_t i, std::size_t j) const;

    /// Builds a pattern from per-row column sets; diagonal entries are added if missing.
    static std::shared_ptr<const SparsityPattern> from_rows(std::vector<std::vector<std::size_t>> rows);
};

/// Symmetric sparse matrix; both triangles are stored so products need no special casing.
class SparseSymMatrix {
public:
    SparseSymMatrix() = default;
    explicit SparseSymMatrix(std::shared_ptr<const SparsityPattern> pattern);
    SparseSymMatrix(std::shared_ptr<const SparsityPattern> pattern, std::vector<double> values);

    std::size_t rows() const { return pattern_ ? pattern_->rows : 0; }
    std::size_t nnz() const { return values_.size(); }
    const SparsityPattern& pattern() const { return *pattern_; }
    const std::shared_ptr<const SparsityPattern>& pattern_ptr() const { return pattern_; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    /// Entry (i, j), zero when structurally absent.
    double at(std::size_t i, std::size_t j) const;
    double diagonal(std::size_t i) const { return values_[pattern_->diag[i]]; }

    void multiply(std::span<const double> x, std::span<double> y) const;
    std::vector<double> multiply(std::span<const double> x) const;
    double quadratic_form(std::span<const double> x) const;

    /// this += factor * other; both must share the same pattern object.
    SparseSymMatrix& add_scaled(const SparseSymMatrix& other, double factor);
    SparseSymMatrix& scale(double factor);

    /// Largest |A(i,j) - A(j,i)| over stored entries.
    double asymmetry() const;

    static SparseSymMatrix identity(std::size_t n);

    /// Assembles from (i, j, v) triplets, summing duplicates. Each triplet is mirrored,
    /// so pass every off-diagonal pair once.
    static SparseSymMatrix from_triplets(std::size_t n,
                                         const std::vector<std::tuple<std::size_t, std::size_t, double>>& entries);

private:
    std::shared_ptr<const SparsityPattern> pattern_;
    std::vector<double> values_;
};

}  // namespace coefrec
