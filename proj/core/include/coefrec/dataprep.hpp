#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "coefrec/forward.hpp"
#include "coefrec/mesh.hpp"

namespace coefrec {

struct NoiseSpec {
    double delta = 0.0;
    std::uint64_t seed = 0;
};

/// Standard normal variate determined by (seed, stream, index).
///
/// Uniforms come from the SplitMix64 output function applied to a counter built
/// from the three keys; two uniforms feed one Box-Muller transform (cosine branch).
/// Evaluation order does not matter, so parallel and serial generation agree.
double keyed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// z = u + delta * max|u| * xi with xi drawn from `stream`. delta = 0 returns u unchanged.
GridFunction add_noise(const GridFunction& u, const NoiseSpec& spec, std::uint64_t stream = 0);

/// w = z2 / max(z1, floor) - 1 with boundary nodes set to 0.
GridFunction ratio_observable(const GridFunction& z1, const GridFunction& z2, double floor);

/// F = f2 z1 - f1 z2, nodewise.
GridFunction source_F_elliptic(const GridFunction& z1, const GridFunction& z2, const GridFunction& f1,
                               const GridFunction& f2);

/// zeta = z2 - z1 with boundary nodes set to 0.
GridFunction difference_observable(const GridFunction& z1, const GridFunction& z2);

struct TimeSample {
    double t = 0.0;
    GridFunction u;
};

/// Order-k backward difference quotient at T (k = 1 or 2). Needs samples at T - j tau, j = 0..k.
GridFunction backward_diff_quotient(const std::vector<TimeSample>& samples, double T, double tau, int k);

struct ObservationWindow {
    double T = 0.0;
    double theta = 0.0;
    std::vector<TimeSample> samples;  // ascending times inside [T - theta, T], last one at T
};

enum class ObservationMode { Elliptic, Parabolic };

struct ObservationSet {
    ObservationMode mode = ObservationMode::Elliptic;
    GridFunction z1;  // elliptic data, or the states at T1 and T2 for parabolic data
    GridFunction z2;
    std::vector<ObservationWindow> windows;  // parabolic only: T1 then T2
    double delta = 0.0;
    std::uint64_t seed = 0;
    double positivity_floor = 0.5;
    double tau_data = 0.0;
};

struct DerivedObservables {
    GridFunction z1;          // denominator for recovering D from q
    GridFunction w_delta;
    GridFunction F_delta;
    GridFunction zeta_delta;
    GridFunction zeta_rhs;
};

/// Noisy elliptic observations from exact states u1, u2 on the same mesh.
ObservationSet make_elliptic_observations(const GridFunction& u1, const GridFunction& u2, const NoiseSpec& noise,
                                          double positivity_floor);

/// Noisy parabolic observations: every stored state of `traj` inside each window,
/// transferred to `mesh` and perturbed with its own per-snapshot noise scale.
ObservationSet make_parabolic_observations(const Trajectory& traj, const std::vector<Window>& windows,
                                           const MeshPtr& mesh, const NoiseSpec& noise, double positivity_floor);

DerivedObservables elliptic_observables(const ObservationSet& obs, const GridFunction& f1, const GridFunction& f2);

/// Effective sources for the two-snapshot reformulation, orientation w = z(T2)/z(T1) - 1.
DerivedObservables parabolic_effective_sources(const ObservationSet& obs, const SourceSchedule& schedule,
                                               double tau, int k);

/// Writes z1, z2 (and every window sample) as grid dumps plus manifest.json into dir.
void write_observations(const ObservationSet& obs, const std::filesystem::path& dir);

}  // namespace coefrec
