#include <algorithm>
#include <cmath>
#include <numbers>

#include "coefrec/error.hpp"
#include "coefrec/experiments.hpp"

namespace coefrec {

namespace {

constexpr double pi = std::numbers::pi;

ScalarField constant(double c) {
    return [c](const Point&) { return c; };
}

double gauss_bump(const Point& p, double cx, double cy) {
    const double dx = p[0] - cx;
    const double dy = p[1] - cy;
    return std::exp(-20.0 * dx * dx - 20.0 * dy * dy);
}

void parabolic_common(ExampleSpec& s) {
    s.parabolic = true;
    s.f1 = constant(1.0);
    s.f2 = constant(10.0);
    s.g = constant(1.0);
    s.bridge_lo = 1.5;
    s.bridge_hi = 3.5;
    s.T_final = 5.0;
    s.windows = {{1.0, 0.1, 1}, {5.0, 0.1, 1}};
    s.box_q = Box(0.5, 10.0);
    s.deltas = {1e-2, 5e-3, 1e-3, 5e-4, 1e-4};
}

}  // namespace

std::vector<std::string> builtin_example_ids() { return {"ex51", "ex52", "ex53", "ex54", "const1d", "const2d"}; }

ExampleSpec builtin_example(const std::string& id) {
    ExampleSpec s;
    s.id = id;
    if (id == "ex51") {
        s.dim = 1;
        s.D_true = [](const Point& p) { return 2.0 + std::sin(2.0 * pi * p[0]); };
        s.sigma_true = [](const Point& p) { return 1.0 + p[0] * (1.0 - p[0]); };
        s.f1 = constant(1.0);
        s.f2 = constant(10.0);
        s.g = constant(1.0);
        s.fine_n = 2048;
        s.policy = {1e-2, 1.0 / 16, 1.0 / 16, 0.0, 1e-6, 1e-5, 1, std::nullopt, 0.5};
        s.deltas = {1e-2, 5e-3, 1e-3, 5e-4, 1e-4};
    } else if (id == "ex52") {
        s.dim = 2;
        s.D_true = [](const Point& p) { return 2.0 + std::sin(2.0 * pi * p[0]) * std::sin(2.0 * pi * p[1]); };
        s.sigma_true = [](const Point& p) { return 1.0 + p[1] * (1.0 - p[1]) * std::sin(pi * p[0]); };
        s.f1 = constant(1.0);
        s.f2 = constant(10.0);
        s.g = constant(1.0);
        s.fine_n = 256;
        // alpha1 = 1e-8 at delta = 1e-3, moved to the delta0 = 1e-1 anchor by the delta^2 law
        s.policy = {1e-1, 1.0 / 16, 1.0 / 12, 0.0, 1e-4, 5e-6, 1, std::nullopt, 0.5};
        s.deltas = {1e-1, 5e-2, 1e-2, 5e-3, 1e-3};
    } else if (id == "ex53") {
        s.dim = 1;
        parabolic_common(s);
        s.D_true = [](const Point& p) { return 2.0 + std::sin(2.0 * pi * p[0]); };
        s.sigma_true = [](const Point& p) { return 1.0 - std::pow(std::abs(p[0] - 0.5), 1.1); };
        s.u0 = [](const Point& p) { return 1.0 + 0.5 * std::sin(pi * p[0]); };
        s.fine_n = 2048;
        s.tau_data = 1.0 / 2000;
        s.policy = {1e-2, 1.0 / 16, 1.0 / 16, 0.1, 1e-6, 1e-5, 1, std::nullopt, 0.5};
    } else if (id == "ex54") {
        s.dim = 2;
        parabolic_common(s);
        s.D_true = [](const Point& p) { return 2.0 + gauss_bump(p, 0.5, 0.7) - gauss_bump(p, 0.5, 0.3); };
        s.sigma_true = [](const Point& p) { return 1.0 + 0.5 * gauss_bump(p, 0.6, 0.6); };
        s.u0 = [](const Point& p) { return 1.0 + 0.5 * std::sin(pi * p[0]) * std::sin(pi * p[1]); };
        s.fine_n = 256;
        s.tau_data = 1.0 / 250;
        s.policy = {1e-2, 1.0 / 16, 1.0 / 16, 0.1, 1e-6, 1e-6, 1, std::nullopt, 0.5};
    } else if (id == "const1d" || id == "const2d") {
        // sigma * g = f1 makes u1 = 1, so q = D is constant
        s.dim = id == "const1d" ? 1 : 2;
        s.D_true = constant(2.0);
        s.sigma_true = constant(1.0);
        s.f1 = constant(1.0);
        s.f2 = constant(10.0);
        s.g = constant(1.0);
        s.fine_n = s.dim == 1 ? 32 : 16;
        const double h = 1.0 / s.fine_n;
        s.policy = {1e-2, h, h, 0.0, 1e-6, 1e-6, 1, 0.5, 0.5};
        s.deltas = {0.0};
    } else {
        throw InvalidArgument("unknown example '" + id + "'");
    }
    return s;
}

int snap_to_power_of_two(double h, int n_max) {
    if (!(h > 0.0)) {
        throw InvalidArgument("mesh size must be positive");
    }
    const double e = std::round(std::log2(1.0 / h));
    int n = 1;
    for (int i = 0; i < static_cast<int>(std::max(e, 0.0)) && n < (1 << 29); ++i) {
        n *= 2;
    }
    n = std::max(n, 2);
    while (n > n_max && n > 2) {
        n /= 2;
    }
    return n;
}

ScaledParameters scale_parameters(const ScalingPolicy& policy, double delta, bool parabolic, double gamma,
                                  int n_max) {
    if (!(delta > 0.0)) {
        throw InvalidArgument("scale_parameters: delta must be positive");
    }
    const double r = delta / policy.delta0;
    const int k = policy.k;
    ScaledParameters p;
    p.gamma = gamma;
    if (parabolic) {
        p.alpha1 = policy.alpha1_0 * std::pow(r, 2.0 * k / (k + 1.0));
        p.h = policy.h0 * std::pow(r, k / (2.0 * (k + 1.0)));
        p.tau = policy.tau0 * std::pow(r, 1.0 / (k + 1.0));
    } else {
        p.alpha1 = policy.alpha1_0 * r * r;
        p.h = policy.h0 * std::sqrt(r);
    }
    p.alpha2 = policy.alpha2_0 * std::pow(r, 2.0 * gamma);
    p.H = policy.H0 * std::pow(r, gamma / 2.0);
    p.n_h = snap_to_power_of_two(p.h, n_max);
    p.n_H = snap_to_power_of_two(p.H, n_max);
    p.h = 1.0 / p.n_h;
    p.H = 1.0 / p.n_H;
    return p;
}

double snap_time_step(double tau, double tau_data, double theta, int k) {
    if (!(tau_data > 0.0) || !(tau > 0.0)) {
        throw InvalidArgument("snap_time_step: steps must be positive");
    }
    long m = std::max(1L, std::lround(tau / tau_data));
    const long limit = static_cast<long>(std::floor(theta / (k * tau_data) + 1e-9));
    if (limit < 1) {
        throw InvalidArgument("snap_time_step: observation window shorter than k data steps");
    }
    m = std::min(m, limit);
    return m * tau_data;
}

}  // namespace coefrec
