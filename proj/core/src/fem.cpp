#include "coefrec/fem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coefrec/error.hpp"

namespace coefrec {

namespace {

double triple_weight(int dim, int a, int b, int c) {
    int mult[3] = {0, 0, 0};
    ++mult[a];
    ++mult[b];
    ++mult[c];
    return simplex_monomial_weight(dim, std::span<const int>(mult, static_cast<std::size_t>(dim + 1)));
}

void require_mesh(const GridFunction& u, const char* context) {
    if (!u.mesh_ptr()) {
        throw InvalidArgument(std::string(context) + ": grid function has no mesh");
    }
}

void require_finite(const GridFunction& u, const char* context) {
    require_mesh(u, context);
    if (!u.all_finite()) {
        throw InvalidArgument(std::string(context) + ": non-finite coefficient values");
    }
}

// Visits (coarse node, weight) pairs expressing a coarse P1 function at fine node `fine_node`.
template <typename Visit>
void coarse_weights(const Mesh& coarse, int ratio, const Mesh& fine, std::size_t fine_node, Visit&& visit) {
    const int np = fine.n() + 1;
    const int fi = static_cast<int>(fine_node % static_cast<std::size_t>(np));
    const int fj = static_cast<int>(fine_node / static_cast<std::size_t>(np));
    auto split = [&](int f, int& cell, int& rem) {
        cell = f / ratio;
        rem = f % ratio;
        if (cell == coarse.n()) {
            cell = coarse.n() - 1;
            rem = ratio;
        }
    };
    int i = 0;
    int ri = 0;
    split(fi, i, ri);
    const double xi = static_cast<double>(ri) / ratio;
    if (coarse.dim() == 1) {
        visit(static_cast<std::size_t>(i), 1.0 - xi);
        if (ri != 0) {
            visit(static_cast<std::size_t>(i + 1), xi);
        }
        return;
    }
    int j = 0;
    int rj = 0;
    split(fj, j, rj);
    const double eta = static_cast<double>(rj) / ratio;
    const std::size_t v00 = coarse.node_index(i, j);
    const std::size_t v10 = coarse.node_index(i + 1, j);
    const std::size_t v11 = coarse.node_index(i + 1, j + 1);
    const std::size_t v01 = coarse.node_index(i, j + 1);
    auto emit = [&](std::size_t node, double w) {
        if (w != 0.0) {
            visit(node, w);
        }
    };
    if (ri >= rj) {
        emit(v00, 1.0 - xi);
        emit(v10, xi - eta);
        emit(v11, eta);
    } else {
        emit(v00, 1.0 - eta);
        emit(v01, eta - xi);
        emit(v11, xi);
    }
}

void require_nested(const Mesh& a, const Mesh& b, const char* context) {
    if (!meshes_nested(a, b)) {
        std::ostringstream os;
        os << context << ": meshes (dim " << a.dim() << ", n " << a.n() << ") and (dim " << b.dim() << ", n " << b.n()
           << ") are not nested";
        throw MeshMismatch(os.str());
    }
}

}  // namespace

double simplex_monomial_weight(int dim, std::span<const int> multiplicities) {
    // d! prod(m_a!) / (d + sum m_a)!
    auto factorial = [](int k) {
        double f = 1.0;
        for (int i = 2; i <= k; ++i) {
            f *= i;
        }
        return f;
    };
    double num = factorial(dim);
    int total = 0;
    for (const int m : multiplicities) {
        num *= factorial(m);
        total += m;
    }
    return num / factorial(dim + total);
}

GridFunction interpolate(const ScalarField& f, const MeshPtr& mesh) {
    if (!mesh) {
        throw InvalidArgument("interpolate: null mesh");
    }
    std::vector<double> v(mesh->node_count());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = f(mesh->node(i));
        if (!std::isfinite(v[i])) {
            std::ostringstream os;
            os << "interpolate: non-finite sample at node " << i;
            throw InvalidArgument(os.str());
        }
    }
    return GridFunction(mesh, std::move(v));
}

SparseSymMatrix assemble_stiffness(const GridFunction& q) {
    require_finite(q, "assemble_stiffness");
    const Mesh& mesh = q.mesh();
    SparseSymMatrix A(mesh.pattern());
    auto vals = A.values();
    const int nv = mesh.vertices_per_element();
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto el = mesh.element(e);
        const auto& g = mesh.geometry(e);
        double qbar = 0.0;
        for (int a = 0; a < nv; ++a) {
            qbar += q[static_cast<std::size_t>(el[a])];
        }
        qbar /= nv;
        const double scale = qbar * g.measure;
        for (int a = 0; a < nv; ++a) {
            for (int b = 0; b < nv; ++b) {
                vals[mesh.slot(e, a, b)] += scale * (g.grad[a][0] * g.grad[b][0] + g.grad[a][1] * g.grad[b][1]);
            }
        }
    }
    return A;
}

SparseSymMatrix assemble_mass(const GridFunction& sigma) {
    require_finite(sigma, "assemble_mass");
    const Mesh& mesh = sigma.mesh();
    SparseSymMatrix A(mesh.pattern());
    auto vals = A.values();
    const int nv = mesh.vertices_per_element();
    const int d = mesh.dim();
    double w[3][3][3];
    for (int a = 0; a < nv; ++a) {
        for (int b = 0; b < nv; ++b) {
            for (int c = 0; c < nv; ++c) {
                w[a][b][c] = triple_weight(d, a, b, c);
            }
        }
    }
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto el = mesh.element(e);
        const double meas = mesh.geometry(e).measure;
        for (int a = 0; a < nv; ++a) {
            for (int b = 0; b < nv; ++b) {
                double s = 0.0;
                for (int c = 0; c < nv; ++c) {
                    s += w[a][b][c] * sigma[static_cast<std::size_t>(el[c])];
                }
                vals[mesh.slot(e, a, b)] += meas * s;
            }
        }
    }
    return A;
}

SparseSymMatrix assemble_mass(const MeshPtr& mesh) { return assemble_mass(GridFunction(mesh, 1.0)); }

SparseSymMatrix assemble_stiffness(const MeshPtr& mesh) { return assemble_stiffness(GridFunction(mesh, 1.0)); }

std::vector<double> load_vector(const GridFunction& f) {
    require_finite(f, "load_vector");
    const Mesh& mesh = f.mesh();
    std::vector<double> b(mesh.node_count(), 0.0);
    const int nv = mesh.vertices_per_element();
    // int lambda_a lambda_b = |K| d! (1 + [a == b]) / (d + 2)!
    const double base = mesh.dim() == 1 ? 1.0 / 6.0 : 1.0 / 12.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto el = mesh.element(e);
        const double meas = mesh.geometry(e).measure;
        double sum = 0.0;
        for (int c = 0; c < nv; ++c) {
            sum += f[static_cast<std::size_t>(el[c])];
        }
        for (int a = 0; a < nv; ++a) {
            const auto i = static_cast<std::size_t>(el[a]);
            b[i] += meas * base * (sum + f[i]);
        }
    }
    return b;
}

SparseSymMatrix restrict_to_interior(const SparseSymMatrix& full, const Mesh& mesh) {
    if (full.pattern_ptr() != mesh.pattern()) {
        throw MeshMismatch("restrict_to_interior: matrix was not assembled on this mesh");
    }
    const auto& gather = mesh.interior_gather();
    std::vector<double> v(gather.size());
    const auto src = full.values();
    for (std::size_t k = 0; k < gather.size(); ++k) {
        v[k] = src[gather[k]];
    }
    return SparseSymMatrix(mesh.interior_pattern(), std::move(v));
}

LoadAndLift lift_load(std::span<const double> load, const GridFunction& g, const SparseSymMatrix& full) {
    require_finite(g, "assemble_load_and_lift");
    const Mesh& mesh = g.mesh();
    if (load.size() != mesh.node_count() || full.rows() != mesh.node_count()) {
        throw InvalidArgument("assemble_load_and_lift: shape mismatch");
    }
    LoadAndLift out{std::vector<double>(mesh.interior_count()), GridFunction(g.mesh_ptr(), 0.0)};
    bool any = false;
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
        if (mesh.is_boundary(i)) {
            out.lift[i] = g[i];
            any = any || g[i] != 0.0;
        }
    }
    const auto& interior = mesh.interior_nodes();
    if (!any) {
        for (std::size_t ii = 0; ii < interior.size(); ++ii) {
            out.rhs[ii] = load[interior[ii]];
        }
        return out;
    }
    const auto& p = full.pattern();
    const auto vals = full.values();
    for (std::size_t ii = 0; ii < interior.size(); ++ii) {
        const std::size_t i = interior[ii];
        double s = load[i];
        for (std::size_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
            const std::size_t j = p.cols[k];
            if (mesh.is_boundary(j)) {
                s -= vals[k] * out.lift[j];
            }
        }
        out.rhs[ii] = s;
    }
    return out;
}

LoadAndLift assemble_load_and_lift(const GridFunction& f, const GridFunction& g, const SparseSymMatrix& full) {
    require_same_mesh(f, g, "assemble_load_and_lift");
    return lift_load(load_vector(f), g, full);
}

GridFunction expand_interior(std::span<const double> interior, const GridFunction& lift) {
    const Mesh& mesh = lift.mesh();
    if (interior.size() != mesh.interior_count()) {
        throw InvalidArgument("expand_interior: size mismatch");
    }
    GridFunction u = lift;
    const auto& nodes = mesh.interior_nodes();
    for (std::size_t ii = 0; ii < nodes.size(); ++ii) {
        u[nodes[ii]] = interior[ii];
    }
    return u;
}

std::vector<double> gather_interior(std::span<const double> full, const Mesh& mesh) {
    if (full.size() != mesh.node_count()) {
        throw InvalidArgument("gather_interior: size mismatch");
    }
    const auto& nodes = mesh.interior_nodes();
    std::vector<double> out(nodes.size());
    for (std::size_t ii = 0; ii < nodes.size(); ++ii) {
        out[ii] = full[nodes[ii]];
    }
    return out;
}

namespace {

double element_l2_squared(const Mesh& mesh, std::size_t e, std::span<const double> u) {
    const auto el = mesh.element(e);
    double sum = 0.0;
    double sq = 0.0;
    for (const int v : el) {
        const double x = u[static_cast<std::size_t>(v)];
        sum += x;
        sq += x * x;
    }
    const double base = mesh.dim() == 1 ? 1.0 / 6.0 : 1.0 / 12.0;
    return mesh.geometry(e).measure * base * (sq + sum * sum);
}

}  // namespace

double measure(NormKind kind, const GridFunction& u) {
    require_finite(u, "measure");
    const Mesh& mesh = u.mesh();
    if (kind == NormKind::Linf) {
        return u.max_abs();
    }
    double l2 = 0.0;
    double h1 = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        if (kind != NormKind::H1semi) {
            l2 += element_l2_squared(mesh, e, u.values());
        }
        if (kind != NormKind::L2) {
            const auto el = mesh.element(e);
            const auto& g = mesh.geometry(e);
            double gx = 0.0;
            double gy = 0.0;
            for (std::size_t a = 0; a < el.size(); ++a) {
                gx += u[static_cast<std::size_t>(el[a])] * g.grad[a][0];
                gy += u[static_cast<std::size_t>(el[a])] * g.grad[a][1];
            }
            h1 += g.measure * (gx * gx + gy * gy);
        }
    }
    return std::sqrt(l2 + h1);
}

double inner_l2(const GridFunction& a, const GridFunction& b) {
    require_same_mesh(a, b, "inner_l2");
    const auto mb = load_vector(b);
    double s = 0.0;
    for (std::size_t i = 0; i < mb.size(); ++i) {
        s += a[i] * mb[i];
    }
    return s;
}

double l2_norm_away_from_boundary(const GridFunction& u, double min_distance) {
    require_finite(u, "l2_norm_away_from_boundary");
    const Mesh& mesh = u.mesh();
    double s = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        bool inside = true;
        for (const int v : mesh.element(e)) {
            if (mesh.distance_to_boundary(mesh.node(static_cast<std::size_t>(v))) < min_distance - 1e-12) {
                inside = false;
                break;
            }
        }
        if (inside) {
            s += element_l2_squared(mesh, e, u.values());
        }
    }
    return std::sqrt(s);
}

double relative_l2_error(const GridFunction& approx, const GridFunction& truth) {
    require_same_mesh(approx, truth, "relative_l2_error");
    const double denom = measure(NormKind::L2, truth);
    if (denom == 0.0) {
        throw InvalidArgument("relative_l2_error: reference has zero norm");
    }
    return measure(NormKind::L2, approx - truth) / denom;
}

GridFunction transfer(const GridFunction& u, const MeshPtr& target) {
    require_mesh(u, "transfer");
    if (!target) {
        throw InvalidArgument("transfer: null target mesh");
    }
    const Mesh& src = u.mesh();
    require_nested(src, *target, "transfer");
    if (src.n() == target->n()) {
        return GridFunction(target, std::vector<double>(u.values().begin(), u.values().end()));
    }
    std::vector<double> out(target->node_count(), 0.0);
    if (target->n() < src.n()) {
        const int ratio = src.n() / target->n();
        const int np = target->n() + 1;
        for (std::size_t k = 0; k < out.size(); ++k) {
            const int i = static_cast<int>(k % static_cast<std::size_t>(np));
            const int j = static_cast<int>(k / static_cast<std::size_t>(np));
            out[k] = u[src.node_index(i * ratio, src.dim() == 1 ? 0 : j * ratio)];
        }
    } else {
        const int ratio = target->n() / src.n();
        for (std::size_t k = 0; k < out.size(); ++k) {
            double s = 0.0;
            coarse_weights(src, ratio, *target, k, [&](std::size_t c, double w) { s += w * u[c]; });
            out[k] = s;
        }
    }
    return GridFunction(target, std::move(out));
}

std::vector<double> restrict_dual(std::span<const double> fine, const Mesh& fine_mesh, const Mesh& coarse_mesh) {
    require_nested(fine_mesh, coarse_mesh, "restrict_dual");
    if (fine_mesh.n() < coarse_mesh.n()) {
        throw MeshMismatch("restrict_dual: source mesh must be the finer one");
    }
    if (fine.size() != fine_mesh.node_count()) {
        throw InvalidArgument("restrict_dual: size mismatch");
    }
    std::vector<double> out(coarse_mesh.node_count(), 0.0);
    const int ratio = fine_mesh.n() / coarse_mesh.n();
    for (std::size_t k = 0; k < fine.size(); ++k) {
        coarse_weights(coarse_mesh, ratio, fine_mesh, k, [&](std::size_t c, double w) { out[c] += w * fine[k]; });
    }
    return out;
}

namespace {

std::vector<double> projection_load(const GridFunction& f, const Mesh& target) {
    require_finite(f, "projection");
    return restrict_dual(load_vector(f), f.mesh(), target);
}

}  // namespace

GridFunction project_P_h(const GridFunction& f, const MeshPtr& target, const SolveOptions& options) {
    const auto load = projection_load(f, *target);
    const auto M = restrict_to_interior(assemble_mass(target), *target);
    const auto rhs = gather_interior(load, *target);
    const auto sol = solve_spd_or_throw(M, rhs, options, "project_P_h");
    return expand_interior(sol.x, GridFunction(target, 0.0));
}

GridFunction project_full(const GridFunction& f, const MeshPtr& target, const SolveOptions& options) {
    const auto load = projection_load(f, *target);
    const auto M = assemble_mass(target);
    auto sol = solve_spd_or_throw(M, load, options, "project_full");
    return GridFunction(target, std::move(sol.x));
}

GridFunction clamp_to_box(const GridFunction& u, const Box& box) {
    GridFunction out = u;
    for (double& v : out.values()) {
        v = std::min(box.upper, std::max(box.lower, v));
    }
    return out;
}

std::size_t count_at_bounds(const GridFunction& u, const Box& box) {
    std::size_t c = 0;
    for (const double v : u.values()) {
        if (v <= box.lower || v >= box.upper) {
            ++c;
        }
    }
    return c;
}

}  // namespace coefrec
