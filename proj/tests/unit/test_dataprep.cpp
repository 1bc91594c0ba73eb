#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "coefrec/dataprep.hpp"
#include "coefrec/experiments.hpp"
#include "oracle.hpp"

using namespace coefrec;

namespace {

struct Example51Truth {
    MeshPtr mesh;
    GridFunction u1, u2, f1, f2, D, sigma;
};

const Example51Truth& ex51_truth() {
    static const Example51Truth t = [] {
        const auto ex = builtin_example("ex51");
        Example51Truth r;
        r.mesh = build_mesh(1, 2048);
        r.D = interpolate(ex.D_true, r.mesh);
        r.sigma = interpolate(ex.sigma_true, r.mesh);
        r.f1 = interpolate(ex.f1, r.mesh);
        r.f2 = interpolate(ex.f2, r.mesh);
        const auto g = interpolate(ex.g, r.mesh);
        r.u1 = solve_elliptic({r.D, r.sigma, r.f1, g}, {1e-13}).u;
        r.u2 = solve_elliptic({r.D, r.sigma, r.f2, g}, {1e-13}).u;
        return r;
    }();
    return t;
}

bool bitwise_equal(const GridFunction& a, const GridFunction& b) {
    return a.size() == b.size() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

GridFunction mirrored(const GridFunction& u) {
    GridFunction m = u;
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = u[n - 1 - i];
    }
    return m;
}

std::vector<TimeSample> polynomial_samples(const MeshPtr& m, int degree, double T, double tau) {
    std::vector<TimeSample> s;
    for (int j = 3; j >= 0; --j) {
        const double t = T - j * tau;
        s.push_back({t, GridFunction(m, std::pow(t, degree))});
    }
    return s;
}

}  // namespace

TEST(Noise, ZeroDeltaIsBitwiseIdentity) {
    const auto& t = ex51_truth();
    EXPECT_TRUE(bitwise_equal(add_noise(t.u1, {0.0, 42}), t.u1));
}

TEST(Noise, DeterministicPerSeedAndStream) {
    const auto& t = ex51_truth();
    const auto a = add_noise(t.u1, {1e-2, 7});
    const auto b = add_noise(t.u1, {1e-2, 7});
    EXPECT_TRUE(bitwise_equal(a, b));
    EXPECT_FALSE(bitwise_equal(a, add_noise(t.u1, {1e-2, 8})));
    EXPECT_FALSE(bitwise_equal(a, add_noise(t.u1, {1e-2, 7}, 1)));
    // keyed generation: any single value can be reproduced on its own
    const double scale = 1e-2 * t.u1.max_abs();
    EXPECT_EQ(a[1000], t.u1[1000] + scale * keyed_normal(7, 0, 1000));
}

TEST(Noise, StandardDeviationAtOneMillionNodes) {
    const auto m = build_mesh(1, 999999);
    const GridFunction u(m, 1.0);
    const auto z = add_noise(u, {1e-2, 3});
    double mean = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        mean += z[i] - 1.0;
    }
    mean /= z.size();
    double var = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        var += (z[i] - 1.0 - mean) * (z[i] - 1.0 - mean);
    }
    const double sd = std::sqrt(var / (z.size() - 1));
    EXPECT_NEAR(sd, 1e-2, 3e-4);
    EXPECT_NEAR(mean, 0.0, 5e-5);
}

TEST(Noise, DistinctSeedsUncorrelated) {
    const int n = 100000;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        const double x = keyed_normal(1, 0, i);
        const double y = keyed_normal(2, 0, i);
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    EXPECT_LT(std::abs(sxy / std::sqrt(sxx * syy)), 0.01);
}

TEST(Noise, RejectsNegativeDelta) {
    EXPECT_THROW(add_noise(GridFunction(build_mesh(1, 4), 1.0), {-1.0, 0}), InvalidArgument);
}

TEST(Observables, RatioBasics) {
    const auto m = build_mesh(2, 4);
    const auto z = interpolate([](const Point& p) { return 1.0 + p[0] + p[1]; }, m);
    const auto w0 = ratio_observable(z, z, 0.5);
    EXPECT_EQ(w0.max_abs(), 0.0);
    const auto w1 = ratio_observable(z, 2.0 * z, 0.5);
    for (std::size_t i = 0; i < w1.size(); ++i) {
        EXPECT_EQ(w1[i], m->is_boundary(i) ? 0.0 : 1.0);
    }
    // the floor guards tiny denominators
    GridFunction tiny(m, 1e-12);
    const auto wf = ratio_observable(tiny, GridFunction(m, 1.0), 0.5);
    EXPECT_EQ(wf[m->node_index(2, 2)], 1.0);
    EXPECT_THROW(ratio_observable(z, z, 0.0), InvalidArgument);
}

TEST(Observables, SourceAndDifferenceBasics) {
    const auto m = build_mesh(1, 8);
    const auto z1 = interpolate([](const Point& p) { return 1.0 + p[0]; }, m);
    const auto z2 = interpolate([](const Point& p) { return 2.0 - p[0] * p[0]; }, m);
    EXPECT_EQ(source_F_elliptic(z1, z2, GridFunction(m), GridFunction(m)).max_abs(), 0.0);
    EXPECT_EQ(difference_observable(z1, z1).max_abs(), 0.0);
    const auto d = difference_observable(z1, z2);
    EXPECT_EQ(d[0], 0.0);
    EXPECT_EQ(d[8], 0.0);
    EXPECT_EQ(d[3], z2[3] - z1[3]);
}

TEST(Observables, MirrorSymmetry) {
    const auto m = build_mesh(1, 32);
    const auto z1 = interpolate([](const Point& p) { return 1.0 + p[0] * p[0]; }, m);
    const auto z2 = interpolate([](const Point& p) { return 1.0 + std::sin(3.0 * p[0]); }, m);
    const auto f1 = interpolate([](const Point& p) { return p[0]; }, m);
    const auto f2 = GridFunction(m, 10.0);
    const auto a = ratio_observable(mirrored(z1), mirrored(z2), 0.5);
    const auto b = mirrored(ratio_observable(z1, z2, 0.5));
    const auto c = source_F_elliptic(mirrored(z1), mirrored(z2), mirrored(f1), mirrored(f2));
    const auto d = mirrored(source_F_elliptic(z1, z2, f1, f2));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i], b[i]);
        EXPECT_EQ(c[i], d[i]);
    }
}

TEST(Observables, Example51NoiseSlopes) {
    const auto& t = ex51_truth();
    const auto w_true = ratio_observable(t.u1, t.u2, 0.5);
    const auto F_true = source_F_elliptic(t.u1, t.u2, t.f1, t.f2);
    const auto zeta_true = difference_observable(t.u1, t.u2);
    std::vector<double> deltas{1e-2, 1e-3, 1e-4}, ew, eF, ez;
    for (double d : deltas) {
        const auto obs = make_elliptic_observations(t.u1, t.u2, {d, 1}, 0.5);
        const auto der = elliptic_observables(obs, t.f1, t.f2);
        ew.push_back(measure(NormKind::L2, der.w_delta - w_true));
        eF.push_back(measure(NormKind::L2, der.F_delta - F_true));
        ez.push_back(measure(NormKind::L2, der.zeta_delta - zeta_true));
    }
    EXPECT_NEAR(oracle::slope(deltas, ew), 1.0, 0.05);
    EXPECT_NEAR(oracle::slope(deltas, eF), 1.0, 0.05);
    EXPECT_NEAR(oracle::slope(deltas, ez), 1.0, 0.05);
}

TEST(Observables, Example51SourceIsPositive) {
    const auto& t = ex51_truth();
    const auto obs = make_elliptic_observations(t.u1, t.u2, {1e-2, 1}, 0.5);
    EXPECT_GT(elliptic_observables(obs, t.f1, t.f2).F_delta.min(), 0.0);
}

TEST(Observables, DifferenceSolvesItsOwnEquation) {
    const auto& t = ex51_truth();
    const auto zeta = difference_observable(t.u1, t.u2);
    auto A = assemble_stiffness(t.D);
    A.add_scaled(assemble_mass(t.sigma), 1.0);
    const auto Az = A.multiply(zeta.values());
    const auto load = load_vector(t.f2 - t.f1);
    double r = 0.0, b = 0.0;
    for (std::size_t i : t.mesh->interior_nodes()) {
        r += (Az[i] - load[i]) * (Az[i] - load[i]);
        b += load[i] * load[i];
    }
    EXPECT_LE(std::sqrt(r / b), 1e-8);
}

TEST(DiffQuotient, PolynomialExactness) {
    const auto m = build_mesh(1, 4);
    const double T = 1.0, tau = 0.1;
    EXPECT_EQ(backward_diff_quotient(polynomial_samples(m, 0, T, tau), T, tau, 1).max_abs(), 0.0);
    EXPECT_NEAR(backward_diff_quotient(polynomial_samples(m, 1, T, tau), T, tau, 1)[2], 1.0, 1e-13);
    EXPECT_NEAR(backward_diff_quotient(polynomial_samples(m, 2, T, tau), T, tau, 1)[2], 1.9, 1e-13);
    EXPECT_NEAR(backward_diff_quotient(polynomial_samples(m, 1, T, tau), T, tau, 2)[2], 1.0, 1e-13);
    EXPECT_NEAR(backward_diff_quotient(polynomial_samples(m, 2, T, tau), T, tau, 2)[2], 2.0, 1e-12);
}

TEST(DiffQuotient, Rejections) {
    const auto m = build_mesh(1, 4);
    const auto s = polynomial_samples(m, 1, 1.0, 0.1);
    EXPECT_THROW(backward_diff_quotient(s, 1.0, 0.15, 1), InvalidArgument);
    EXPECT_THROW(backward_diff_quotient(s, 1.0, 0.1, 3), InvalidArgument);
    EXPECT_THROW(backward_diff_quotient(s, 1.0, 0.0, 1), InvalidArgument);
}

TEST(EffectiveSources, TimeConstantDataReducesToElliptic) {
    const auto m = build_mesh(1, 16);
    const auto z1 = interpolate([](const Point& p) { return 1.0 + p[0] * (1 - p[0]); }, m);
    const auto z2 = interpolate([](const Point& p) { return 1.0 + 3.0 * p[0] * (1 - p[0]); }, m);
    ObservationSet obs;
    obs.mode = ObservationMode::Parabolic;
    obs.z1 = z1;
    obs.z2 = z2;
    obs.windows = {{1.0, 0.1, {{0.9, z1}, {0.95, z1}, {1.0, z1}}}, {5.0, 0.1, {{4.9, z2}, {4.95, z2}, {5.0, z2}}}};
    const GridFunction f1(m, 1.0), f2(m, 10.0);
    const SourceSchedule sched{f1, f2, 1.5, 3.5};
    const auto p = parabolic_effective_sources(obs, sched, 0.05, 1);
    obs.mode = ObservationMode::Elliptic;
    const auto e = elliptic_observables(obs, f1, f2);
    for (std::size_t i = 0; i < z1.size(); ++i) {
        EXPECT_EQ(p.w_delta[i], e.w_delta[i]);
        EXPECT_EQ(p.F_delta[i], e.F_delta[i]);
        EXPECT_EQ(p.zeta_delta[i], e.zeta_delta[i]);
        EXPECT_EQ(p.zeta_rhs[i], e.zeta_rhs[i]);
    }
    EXPECT_THROW(parabolic_effective_sources(obs, sched, 0.05, 1), InvalidArgument);
    obs.mode = ObservationMode::Parabolic;
    EXPECT_THROW(parabolic_effective_sources(obs, sched, 0.2, 1), InvalidArgument);
}

class Example53Sources : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        const auto ex = builtin_example("ex53");
        mesh_ = build_mesh(1, 128);
        sched_ = {interpolate(ex.f1, mesh_), interpolate(ex.f2, mesh_), ex.bridge_lo, ex.bridge_hi};
        windows_ = ex.windows;
        ParabolicProblem p{interpolate(ex.D_true, mesh_), interpolate(ex.sigma_true, mesh_), interpolate(ex.g, mesh_),
                           interpolate(ex.u0, mesh_), sched_, ex.T_final, 50000};
        traj_ = solve_parabolic(p, windows_, {1e-13});
        const auto exact = make_parabolic_observations(traj_, windows_, mesh_, {0.0, 0}, 0.5);
        // second-order quotient on the data step stands in for the time derivative
        F_ref_ = parabolic_effective_sources(exact, sched_, traj_.tau(), 2).F_delta;
    }
    static double error(double tau, double delta) {
        const auto obs = make_parabolic_observations(traj_, windows_, mesh_, {delta, 4}, 0.5);
        return measure(NormKind::L2, parabolic_effective_sources(obs, sched_, tau, 1).F_delta - F_ref_);
    }
    static inline MeshPtr mesh_;
    static inline SourceSchedule sched_;
    static inline std::vector<Window> windows_;
    static inline Trajectory traj_;
    static inline GridFunction F_ref_;
};

TEST_F(Example53Sources, FirstOrderInTau) {
    std::vector<double> taus{0.04, 0.02, 0.01, 0.005}, errs;
    for (double tau : taus) {
        errs.push_back(error(tau, 0.0));
    }
    EXPECT_NEAR(oracle::slope(taus, errs), 1.0, 0.15);
}

TEST_F(Example53Sources, TracksTauPlusDeltaOverTau) {
    // least-squares fit err ~ a tau + b delta / tau over a small grid
    std::vector<std::array<double, 3>> pts;
    for (double tau : {0.01, 0.02, 0.05}) {
        for (double delta : {1e-5, 1e-4, 5e-4}) {
            pts.push_back({tau, delta / tau, error(tau, delta)});
        }
    }
    double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
    for (const auto& [x1, x2, y] : pts) {
        s11 += x1 * x1 / (y * y);
        s12 += x1 * x2 / (y * y);
        s22 += x2 * x2 / (y * y);
        r1 += x1 / y;
        r2 += x2 / y;
    }
    const double det = s11 * s22 - s12 * s12;
    const double a = (r1 * s22 - r2 * s12) / det;
    const double b = (s11 * r2 - s12 * r1) / det;
    EXPECT_GT(a, 0.0);
    EXPECT_GT(b, 0.0);
    for (const auto& [x1, x2, y] : pts) {
        const double fit = a * x1 + b * x2;
        EXPECT_LT(std::abs(fit - y) / y, 0.35) << "tau " << x1 << " delta/tau " << x2;
    }
}

TEST(Observations, ParabolicWindowsAndManifest) {
    const auto m = build_mesh(1, 8);
    ParabolicProblem p{GridFunction(m, 1.0), GridFunction(m, 0.0), GridFunction(m, 1.0), GridFunction(m, 2.0),
                       SourceSchedule::constant(GridFunction(m, 0.0)), 1.0, 20};
    const std::vector<Window> w{{0.5, 0.1, 1}, {1.0, 0.1, 1}};
    const auto traj = solve_parabolic(p, w, {1e-12});
    const auto obs = make_parabolic_observations(traj, w, m, {1e-2, 5}, 0.5);
    ASSERT_EQ(obs.windows.size(), 2u);
    EXPECT_EQ(obs.windows[0].samples.size(), 3u);
    EXPECT_DOUBLE_EQ(obs.windows[0].samples.back().t, 0.5);
    EXPECT_TRUE(bitwise_equal(obs.z2, obs.windows[1].samples.back().u));
    const auto dir = std::filesystem::temp_directory_path() / "coefrec_obs_test";
    std::filesystem::remove_all(dir);
    write_observations(obs, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "z1.csv"));
    std::filesystem::remove_all(dir);
}
