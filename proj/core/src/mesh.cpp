#include "coefrec/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coefrec/error.hpp"

namespace coefrec {

namespace {

ElementGeometry triangle_geometry(const Point& p0, const Point& p1, const Point& p2) {
    const double area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    ElementGeometry g;
    g.measure = 0.5 * area2;
    g.grad[0] = {(p1[1] - p2[1]) / area2, (p2[0] - p1[0]) / area2};
    g.grad[1] = {(p2[1] - p0[1]) / area2, (p0[0] - p2[0]) / area2};
    g.grad[2] = {(p0[1] - p1[1]) / area2, (p1[0] - p0[0]) / area2};
    return g;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

MeshPtr build_mesh(int dim, int n) {
    if (dim != 1 && dim != 2) {
        throw InvalidArgument("build_mesh: dimension must be 1 or 2");
    }
    if (n < 1) {
        throw InvalidArgument("build_mesh: n must be at least 1");
    }
    std::shared_ptr<Mesh> m(new Mesh());
    m->dim_ = dim;
    m->n_ = n;
    const double h = 1.0 / n;
    const int np = n + 1;

    if (dim == 1) {
        m->nodes_.resize(static_cast<std::size_t>(np));
        m->boundary_.assign(static_cast<std::size_t>(np), 0);
        for (int i = 0; i < np; ++i) {
            m->nodes_[static_cast<std::size_t>(i)] = {i == n ? 1.0 : i * h, 0.0};
        }
        m->boundary_.front() = 1;
        m->boundary_.back() = 1;
        for (int i = 0; i < n; ++i) {
            m->elements_.push_back({i, i + 1, -1});
            ElementGeometry g;
            g.measure = h;
            g.grad[0] = {-1.0 / h, 0.0};
            g.grad[1] = {1.0 / h, 0.0};
            m->geometry_.push_back(g);
        }
    } else {
        m->nodes_.resize(static_cast<std::size_t>(np) * static_cast<std::size_t>(np));
        m->boundary_.assign(m->nodes_.size(), 0);
        for (int j = 0; j < np; ++j) {
            for (int i = 0; i < np; ++i) {
                const auto k = m->node_index(i, j);
                m->nodes_[k] = {i == n ? 1.0 : i * h, j == n ? 1.0 : j * h};
                m->boundary_[k] = (i == 0 || j == 0 || i == n || j == n) ? 1 : 0;
            }
        }
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const int v00 = static_cast<int>(m->node_index(i, j));
                const int v10 = static_cast<int>(m->node_index(i + 1, j));
                const int v11 = static_cast<int>(m->node_index(i + 1, j + 1));
                const int v01 = static_cast<int>(m->node_index(i, j + 1));
                for (const auto& tri : {std::array<int, 3>{v00, v10, v11}, std::array<int, 3>{v00, v11, v01}}) {
                    m->elements_.push_back(tri);
                    m->geometry_.push_back(triangle_geometry(m->nodes_[static_cast<std::size_t>(tri[0])],
                                                             m->nodes_[static_cast<std::size_t>(tri[1])],
                                                             m->nodes_[static_cast<std::size_t>(tri[2])]));
                }
            }
        }
    }

    m->interior_index_.assign(m->nodes_.size(), SparsityPattern::npos);
    for (std::size_t k = 0; k < m->nodes_.size(); ++k) {
        if (!m->boundary_[k]) {
            m->interior_index_[k] = m->interior_nodes_.size();
            m->interior_nodes_.push_back(k);
        }
    }

    const int nv = dim + 1;
    std::vector<std::vector<std::size_t>> rows(m->nodes_.size());
    for (const auto& el : m->elements_) {
        for (int a = 0; a < nv; ++a) {
            for (int b = 0; b < nv; ++b) {
                rows[static_cast<std::size_t>(el[a])].push_back(static_cast<std::size_t>(el[b]));
            }
        }
    }
    m->pattern_ = SparsityPattern::from_rows(std::move(rows));

    m->element_slots_.resize(m->elements_.size() * static_cast<std::size_t>(nv * nv));
    for (std::size_t e = 0; e < m->elements_.size(); ++e) {
        for (int a = 0; a < nv; ++a) {
            for (int b = 0; b < nv; ++b) {
                m->element_slots_[e * static_cast<std::size_t>(nv * nv) + static_cast<std::size_t>(a * nv + b)] =
                    m->pattern_->find(static_cast<std::size_t>(m->elements_[e][a]),
                                      static_cast<std::size_t>(m->elements_[e][b]));
            }
        }
    }

    const auto& full = *m->pattern_;
    std::vector<std::vector<std::size_t>> irows(m->interior_nodes_.size());
    for (std::size_t ii = 0; ii < m->interior_nodes_.size(); ++ii) {
        const std::size_t i = m->interior_nodes_[ii];
        for (std::size_t k = full.row_ptr[i]; k < full.row_ptr[i + 1]; ++k) {
            const std::size_t jj = m->interior_index_[full.cols[k]];
            if (jj != SparsityPattern::npos) {
                irows[ii].push_back(jj);
            }
        }
    }
    m->interior_pattern_ = SparsityPattern::from_rows(std::move(irows));
    const auto& ip = *m->interior_pattern_;
    m->interior_gather_.resize(ip.nnz());
    for (std::size_t ii = 0; ii < ip.rows; ++ii) {
        for (std::size_t k = ip.row_ptr[ii]; k < ip.row_ptr[ii + 1]; ++k) {
            m->interior_gather_[k] = full.find(m->interior_nodes_[ii], m->interior_nodes_[ip.cols[k]]);
        }
    }
    return m;
}

Point Mesh::barycenter(std::size_t e) const {
    Point c{0.0, 0.0};
    const auto el = element(e);
    for (const int v : el) {
        c[0] += nodes_[static_cast<std::size_t>(v)][0];
        c[1] += nodes_[static_cast<std::size_t>(v)][1];
    }
    c[0] /= static_cast<double>(el.size());
    c[1] /= static_cast<double>(el.size());
    return c;
}

double Mesh::evaluate(std::span<const double> values, const Point& x) const {
    if (values.size() != node_count()) {
        throw InvalidArgument("Mesh::evaluate: value count does not match mesh");
    }
    auto locate = [this](double t, int& cell, double& local) {
        const double s = std::clamp(t, 0.0, 1.0) * n_;
        cell = std::min(static_cast<int>(std::floor(s)), n_ - 1);
        local = s - cell;
    };
    int i = 0;
    double xi = 0.0;
    locate(x[0], i, xi);
    if (dim_ == 1) {
        return (1.0 - xi) * values[static_cast<std::size_t>(i)] + xi * values[static_cast<std::size_t>(i + 1)];
    }
    int j = 0;
    double eta = 0.0;
    locate(x[1], j, eta);
    const double v00 = values[node_index(i, j)];
    const double v10 = values[node_index(i + 1, j)];
    const double v11 = values[node_index(i + 1, j + 1)];
    const double v01 = values[node_index(i, j + 1)];
    if (xi >= eta) {
        return v00 + xi * (v10 - v00) + eta * (v11 - v10);
    }
    return v00 + eta * (v01 - v00) + xi * (v11 - v01);
}

double Mesh::distance_to_boundary(const Point& x) const {
    double d = std::min(x[0], 1.0 - x[0]);
    if (dim_ == 2) {
        d = std::min({d, x[1], 1.0 - x[1]});
    }
    return std::max(d, 0.0);
}

bool meshes_nested(const Mesh& a, const Mesh& b) {
    if (a.dim() != b.dim()) {
        return false;
    }
    const int hi = std::max(a.n(), b.n());
    const int lo = std::min(a.n(), b.n());
    return hi % lo == 0 && is_power_of_two(hi / lo);
}

bool same_mesh(const Mesh& a, const Mesh& b) { return &a == &b || (a.dim() == b.dim() && a.n() == b.n()); }

GridFunction::GridFunction(MeshPtr mesh, double fill) : mesh_(std::move(mesh)) {
    if (!mesh_) {
        throw InvalidArgument("GridFunction requires a mesh");
    }
    values_.assign(mesh_->node_count(), fill);
}

GridFunction::GridFunction(MeshPtr mesh, std::vector<double> values)
    : mesh_(std::move(mesh)), values_(std::move(values)) {
    if (!mesh_) {
        throw InvalidArgument("GridFunction requires a mesh");
    }
    if (values_.size() != mesh_->node_count()) {
        throw InvalidArgument("GridFunction: value count does not match node count");
    }
}

bool GridFunction::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double GridFunction::min() const {
    return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end());
}

double GridFunction::max() const {
    return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double GridFunction::max_abs() const {
    double m = 0.0;
    for (const double v : values_) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
    require_same_mesh(*this, other, "GridFunction +=");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        values_[i] += other.values_[i];
    }
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
    require_same_mesh(*this, other, "GridFunction -=");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        values_[i] -= other.values_[i];
    }
    return *this;
}

GridFunction& GridFunction::operator*=(double c) {
    for (double& v : values_) {
        v *= c;
    }
    return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(double c, GridFunction a) { return a *= c; }

void require_same_mesh(const GridFunction& a, const GridFunction& b, const char* context) {
    if (!a.mesh_ptr() || !b.mesh_ptr() || !same_mesh(a.mesh(), b.mesh())) {
        throw MeshMismatch(std::string(context) + ": grid functions live on different meshes");
    }
}

Box::Box(double lo, double hi) : lower(lo), upper(hi) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw InvalidArgument("Box: lower bound must not exceed upper bound");
    }
}

}  // namespace coefrec
