#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "coefrec/error.hpp"
#include "coefrec/fem.hpp"
#include "oracle.hpp"

using namespace coefrec;
using std::numbers::pi;

namespace {

GridFunction random_field(const MeshPtr& m, double lo, double hi, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    GridFunction f(m);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = u(rng);
    }
    return f;
}

}  // namespace

TEST(Mesh, IntervalWithTwoCells) {
    const auto m = build_mesh(1, 2);
    ASSERT_EQ(m->node_count(), 3u);
    EXPECT_EQ(m->element_count(), 2u);
    EXPECT_DOUBLE_EQ(m->node(0)[0], 0.0);
    EXPECT_DOUBLE_EQ(m->node(1)[0], 0.5);
    EXPECT_DOUBLE_EQ(m->node(2)[0], 1.0);
    EXPECT_TRUE(m->is_boundary(0));
    EXPECT_FALSE(m->is_boundary(1));
    EXPECT_TRUE(m->is_boundary(2));
}

TEST(Mesh, SquareCounts) {
    const auto one = build_mesh(2, 1);
    EXPECT_EQ(one->node_count(), 4u);
    EXPECT_EQ(one->element_count(), 2u);
    EXPECT_EQ(one->interior_count(), 0u);

    const auto m = build_mesh(2, 16);
    EXPECT_EQ(m->node_count(), 289u);
    EXPECT_EQ(m->element_count(), 512u);
    EXPECT_EQ(m->interior_count(), 225u);
}

TEST(Mesh, RejectsBadArguments) {
    EXPECT_THROW(build_mesh(3, 4), InvalidArgument);
    EXPECT_THROW(build_mesh(1, 0), InvalidArgument);
}

TEST(Mesh, ElementMeasuresSumToOne) {
    for (int dim : {1, 2}) {
        const auto m = build_mesh(dim, 8);
        double s = 0.0;
        for (std::size_t e = 0; e < m->element_count(); ++e) {
            EXPECT_NEAR(m->geometry(e).measure, oracle::element_measure(*m, e), 1e-15);
            s += m->geometry(e).measure;
        }
        EXPECT_NEAR(s, 1.0, 1e-13);
    }
}

TEST(Mesh, NestingAndMismatch) {
    EXPECT_TRUE(meshes_nested(*build_mesh(1, 16), *build_mesh(1, 64)));
    EXPECT_FALSE(meshes_nested(*build_mesh(1, 16), *build_mesh(1, 24)));
    GridFunction a(build_mesh(1, 8), 1.0);
    GridFunction b(build_mesh(1, 16), 1.0);
    EXPECT_THROW(a += b, MeshMismatch);
    EXPECT_THROW(transfer(a, build_mesh(1, 12)), MeshMismatch);
}

TEST(Interpolate, ConstantsAndLinears) {
    const auto m = build_mesh(1, 10);
    const auto one = interpolate([](const Point&) { return 1.0; }, m);
    for (std::size_t i = 0; i < one.size(); ++i) {
        EXPECT_EQ(one[i], 1.0);
    }
    const auto x = interpolate([](const Point& p) { return p[0]; }, m);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(x[i], m->node(i)[0]);
    }
    EXPECT_LT(oracle::l2_error(x, [](const Point& p) { return p[0]; }), 1e-15);
}

TEST(Interpolate, RejectsNonFinite) {
    EXPECT_THROW(interpolate([](const Point& p) { return 1.0 / p[0]; }, build_mesh(1, 4)), InvalidArgument);
}

TEST(Interpolate, SecondOrderOnSine) {
    const auto f = [](const Point& p) { return std::sin(2 * pi * p[0]); };
    std::vector<double> hs, errs;
    for (int n : {16, 32, 64}) {
        const auto m = build_mesh(1, n);
        hs.push_back(1.0 / n);
        errs.push_back(oracle::l2_error(interpolate(f, m), f));
    }
    EXPECT_NEAR(errs[0] / errs[1], 4.0, 0.1);
    EXPECT_NEAR(errs[1] / errs[2], 4.0, 0.1);
}

TEST(Projection, IdentityOnRange) {
    const auto m = build_mesh(1, 16);
    auto f = interpolate([](const Point& p) { return std::sin(pi * p[0]); }, m);
    f[0] = f[16] = 0.0;
    const auto r = project_P_h(f, m, {1e-13});
    for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_NEAR(r[i], f[i], 1e-12);
    }
}

TEST(Projection, GalerkinOrthogonality) {
    for (int dim : {1, 2}) {
        const auto fine = build_mesh(dim, dim == 1 ? 128 : 32);
        const auto coarse = build_mesh(dim, 8);
        const auto f = interpolate([](const Point& p) { return std::exp(p[0]) * (1.0 + p[1] * p[1]); }, fine);
        const auto r = project_P_h(f, coarse, {1e-14});
        for (std::size_t k : coarse->interior_nodes()) {
            // (r - f, chi_k) with chi_k moved onto the fine mesh
            GridFunction chi(coarse);
            chi[k] = 1.0;
            const double d = inner_l2(transfer(r, fine), transfer(chi, fine)) - inner_l2(f, transfer(chi, fine));
            EXPECT_LE(std::abs(d), 1e-10) << "dim " << dim << " node " << k;
        }
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (coarse->is_boundary(i)) {
                EXPECT_EQ(r[i], 0.0);
            }
        }
    }
}

TEST(Projection, SecondOrderOnSine) {
    const auto f = [](const Point& p) { return std::sin(pi * p[0]); };
    const auto fine = build_mesh(1, 256);
    const auto fh = interpolate(f, fine);
    std::vector<double> hs, errs;
    for (int n : {16, 32, 64}) {
        hs.push_back(1.0 / n);
        errs.push_back(oracle::l2_error(project_P_h(fh, build_mesh(1, n), {1e-13}), f));
    }
    EXPECT_NEAR(oracle::slope(hs, errs), 2.0, 0.15);
}

TEST(Stiffness, OneDimensionalStencil) {
    const auto m = build_mesh(1, 4);
    const auto K = assemble_stiffness(m);
    for (std::size_t i = 1; i < 4; ++i) {
        EXPECT_NEAR(K.at(i, i - 1), -4.0, 1e-14);
        EXPECT_NEAR(K.at(i, i), 8.0, 1e-14);
        EXPECT_NEAR(K.at(i, i + 1), -4.0, 1e-14);
    }
    EXPECT_EQ(K.at(0, 2), 0.0);
}

TEST(Stiffness, LinearInCoefficient) {
    const auto m = build_mesh(2, 4);
    const auto q = random_field(m, 1.0, 3.0, 7);
    const auto A = assemble_stiffness(q);
    const auto B = assemble_stiffness(2.5 * q);
    for (std::size_t k = 0; k < A.nnz(); ++k) {
        EXPECT_NEAR(B.values()[k], 2.5 * A.values()[k], 1e-14 * (1.0 + std::abs(B.values()[k])));
    }
}

TEST(Assembly, MatchesQuadratureOracle2D) {
    const auto m = build_mesh(2, 4);
    const auto c = random_field(m, 0.5, 3.0, 11);
    const auto K = assemble_stiffness(c);
    const auto M = assemble_mass(c);
    const auto& pat = K.pattern();
    for (std::size_t i = 0; i < pat.rows; ++i) {
        for (std::size_t p = pat.row_ptr[i]; p < pat.row_ptr[i + 1]; ++p) {
            const std::size_t j = pat.cols[p];
            const auto ref = oracle::pair_integrals(c, i, j);
            EXPECT_NEAR(K.at(i, j), ref.stiffness, 1e-12);
            EXPECT_NEAR(M.at(i, j), ref.mass, 1e-12);
        }
    }
    EXPECT_EQ(K.asymmetry(), 0.0);
}

TEST(Mass, OneDimensionalStencilAndZero) {
    const int n = 8;
    const double h = 1.0 / n;
    const auto m = build_mesh(1, n);
    const auto M = assemble_mass(m);
    for (std::size_t i = 1; i < static_cast<std::size_t>(n); ++i) {
        EXPECT_NEAR(M.at(i, i - 1), h / 6, 1e-15);
        EXPECT_NEAR(M.at(i, i), 2 * h / 3, 1e-15);
        EXPECT_NEAR(M.at(i, i + 1), h / 6, 1e-15);
    }
    const auto Z = assemble_mass(GridFunction(m, 0.0));
    for (double v : Z.values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Mass, MatchesQuadratureOracle1D) {
    const auto m = build_mesh(1, 6);
    const auto c = random_field(m, 0.0, 2.0, 3);
    const auto M = assemble_mass(c);
    for (std::size_t i = 0; i < m->node_count(); ++i) {
        for (std::size_t j = (i > 0 ? i - 1 : 0); j <= std::min(i + 1, m->node_count() - 1); ++j) {
            EXPECT_NEAR(M.at(i, j), oracle::pair_integrals(c, i, j).mass, 1e-12);
        }
    }
}

TEST(LoadAndLift, ZeroBoundaryGivesPlainLoad) {
    const auto m = build_mesh(1, 8);
    const auto f = interpolate([](const Point& p) { return 1.0 + p[0]; }, m);
    const auto K = assemble_stiffness(m);
    const auto r = assemble_load_and_lift(f, GridFunction(m), K);
    const auto load = load_vector(f);
    const auto inner = gather_interior(load, *m);
    ASSERT_EQ(r.rhs.size(), inner.size());
    for (std::size_t i = 0; i < inner.size(); ++i) {
        EXPECT_EQ(r.rhs[i], inner[i]);
    }
    EXPECT_EQ(r.lift.max_abs(), 0.0);
}

TEST(LoadAndLift, ConstantBoundaryReproducesConstant) {
    for (int dim : {1, 2}) {
        const auto m = build_mesh(dim, 8);
        const auto K = assemble_stiffness(m);
        const auto r = assemble_load_and_lift(GridFunction(m), GridFunction(m, 1.0), K);
        const auto x = solve_spd(restrict_to_interior(K, *m), r.rhs, {1e-14}).x;
        const auto u = expand_interior(x, r.lift);
        for (std::size_t i = 0; i < u.size(); ++i) {
            EXPECT_NEAR(u[i], 1.0, 1e-12);
        }
    }
}

TEST(LoadAndLift, ManufacturedPoissonRate) {
    const auto exact = [](const Point& p) { return std::sin(pi * p[0]); };
    std::vector<double> hs, errs;
    for (int n : {16, 32, 64, 128}) {
        const auto m = build_mesh(1, n);
        const auto f = interpolate([](const Point& p) { return pi * pi * std::sin(pi * p[0]); }, m);
        const auto K = assemble_stiffness(m);
        const auto r = assemble_load_and_lift(f, GridFunction(m), K);
        const auto u = expand_interior(solve_spd(restrict_to_interior(K, *m), r.rhs, {1e-14}).x, r.lift);
        hs.push_back(1.0 / n);
        errs.push_back(oracle::l2_error(u, exact));
    }
    EXPECT_NEAR(oracle::slope(hs, errs), 2.0, 0.1);
}

TEST(Norms, ExactValues) {
    const auto m = build_mesh(1, 16);
    const GridFunction c(m, -3.0);
    EXPECT_NEAR(measure(NormKind::L2, c), 3.0, 1e-14);
    EXPECT_NEAR(measure(NormKind::H1semi, c), 0.0, 1e-14);
    EXPECT_NEAR(measure(NormKind::Linf, c), 3.0, 0.0);
    const auto x = interpolate([](const Point& p) { return p[0]; }, m);
    EXPECT_NEAR(measure(NormKind::H1semi, x), 1.0, 1e-14);
    EXPECT_NEAR(measure(NormKind::L2, x), 1.0 / std::sqrt(3.0), 1e-14);
    const auto s = interpolate([](const Point& p) { return std::sin(pi * p[0]); }, build_mesh(1, 256));
    EXPECT_NEAR(measure(NormKind::L2, s), 1.0 / std::sqrt(2.0), 1e-4);

    const auto m2 = build_mesh(2, 8);
    const auto xy = interpolate([](const Point& p) { return p[0] + 2.0 * p[1]; }, m2);
    EXPECT_NEAR(measure(NormKind::H1semi, xy), std::sqrt(5.0), 1e-13);
    EXPECT_NEAR(measure(NormKind::L2, xy), oracle::l2_error(xy, [](const Point&) { return 0.0; }), 1e-13);
}

TEST(Transfer, IdentityAndLinears) {
    const auto m = build_mesh(2, 4);
    const auto lin = interpolate([](const Point& p) { return 1.0 + 2.0 * p[0] - p[1]; }, m);
    const auto same = transfer(lin, m);
    for (std::size_t i = 0; i < lin.size(); ++i) {
        EXPECT_EQ(same[i], lin[i]);
    }
    const auto fine = transfer(lin, build_mesh(2, 16));
    for (std::size_t i = 0; i < fine.size(); ++i) {
        const auto& p = fine.mesh().node(i);
        EXPECT_NEAR(fine[i], 1.0 + 2.0 * p[0] - p[1], 1e-14);
    }
}

TEST(Transfer, FineToCoarseWithinInterpolationBound) {
    const auto f = [](const Point& p) { return std::sin(2 * pi * p[0]); };
    const auto coarse = build_mesh(1, 16);
    const auto down = transfer(interpolate(f, build_mesh(1, 256)), coarse);
    // the interpolation bound constant h^2 |f''| / 8 is well above the measured error
    const double h = 1.0 / 16;
    EXPECT_LE(oracle::l2_error(down, f), 4 * pi * pi * h * h / 8);
    EXPECT_NEAR(oracle::l2_error(down, f), oracle::l2_error(interpolate(f, coarse), f), 1e-14);
}

TEST(Clamp, BoxContract) {
    const auto m = build_mesh(1, 4);
    GridFunction u(m, std::vector<double>{-1.0, 0.5, 2.0, 0.9, 7.0});
    const Box box(0.0, 1.0);
    const auto c = clamp_to_box(u, box);
    EXPECT_EQ(c[0], 0.0);
    EXPECT_EQ(c[1], 0.5);
    EXPECT_EQ(c[2], 1.0);
    EXPECT_EQ(c[3], 0.9);
    EXPECT_EQ(c[4], 1.0);
    const auto cc = clamp_to_box(c, box);
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(cc[i], c[i]);
    }
    EXPECT_EQ(count_at_bounds(c, box), 3u);
    EXPECT_THROW(Box(2.0, 1.0), InvalidArgument);
}
