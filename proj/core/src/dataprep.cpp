#include "coefrec/dataprep.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "coefrec/error.hpp"
#include "coefrec/grid_io.hpp"

namespace coefrec {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// 53-bit uniform in (0, 1].
double to_unit_open_closed(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53; }

void zero_boundary(GridFunction& u) {
    const Mesh& mesh = u.mesh();
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
        if (mesh.is_boundary(i)) {
            u[i] = 0.0;
        }
    }
}

constexpr std::uint64_t kStreamZ1 = 1;
constexpr std::uint64_t kStreamZ2 = 2;
// parabolic samples use stream (window + 1) << 32 | step

}  // namespace

double keyed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const std::uint64_t key = splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
    const std::uint64_t a = splitmix64(key ^ (2 * index));
    const std::uint64_t b = splitmix64(key ^ (2 * index + 1));
    const double u1 = to_unit_open_closed(a);
    const double u2 = to_unit_open_closed(b);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

GridFunction add_noise(const GridFunction& u, const NoiseSpec& spec, std::uint64_t stream) {
    if (!(spec.delta >= 0.0)) {
        throw InvalidArgument("add_noise: delta must be nonnegative");
    }
    if (!u.all_finite()) {
        throw InvalidArgument("add_noise: non-finite input");
    }
    GridFunction z = u;
    if (spec.delta == 0.0) {
        return z;
    }
    const double scale = spec.delta * u.max_abs();
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] += scale * keyed_normal(spec.seed, stream, i);
    }
    return z;
}

GridFunction ratio_observable(const GridFunction& z1, const GridFunction& z2, double floor) {
    require_same_mesh(z1, z2, "ratio_observable");
    if (!(floor > 0.0)) {
        throw InvalidArgument("ratio_observable: floor must be positive");
    }
    GridFunction w(z1.mesh_ptr(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = z2[i] / std::max(z1[i], floor) - 1.0;
    }
    zero_boundary(w);
    return w;
}

GridFunction source_F_elliptic(const GridFunction& z1, const GridFunction& z2, const GridFunction& f1,
                               const GridFunction& f2) {
    require_same_mesh(z1, z2, "source_F_elliptic");
    require_same_mesh(z1, f1, "source_F_elliptic");
    require_same_mesh(z1, f2, "source_F_elliptic");
    GridFunction F(z1.mesh_ptr(), 0.0);
    for (std::size_t i = 0; i < F.size(); ++i) {
        F[i] = f2[i] * z1[i] - f1[i] * z2[i];
    }
    return F;
}

GridFunction difference_observable(const GridFunction& z1, const GridFunction& z2) {
    require_same_mesh(z1, z2, "difference_observable");
    GridFunction d = z2 - z1;
    zero_boundary(d);
    return d;
}

GridFunction backward_diff_quotient(const std::vector<TimeSample>& samples, double T, double tau, int k) {
    if (k != 1 && k != 2) {
        throw InvalidArgument("backward_diff_quotient: only orders 1 and 2 are supported");
    }
    if (!(tau > 0.0)) {
        throw InvalidArgument("backward_diff_quotient: tau must be positive");
    }
    auto find = [&](double t) -> const GridFunction& {
        const double tol = 1e-9 * std::max(1.0, std::abs(t)) + 1e-6 * tau;
        for (const auto& s : samples) {
            if (std::abs(s.t - t) <= tol) {
                return s.u;
            }
        }
        std::ostringstream os;
        os << "backward_diff_quotient: no sample at t = " << t;
        throw InvalidArgument(os.str());
    };
    const GridFunction& u0 = find(T);
    const GridFunction& u1 = find(T - tau);
    require_same_mesh(u0, u1, "backward_diff_quotient");
    GridFunction out(u0.mesh_ptr(), 0.0);
    if (k == 1) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = (u0[i] - u1[i]) / tau;
        }
    } else {
        const GridFunction& u2 = find(T - 2.0 * tau);
        require_same_mesh(u0, u2, "backward_diff_quotient");
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = (3.0 * u0[i] - 4.0 * u1[i] + u2[i]) / (2.0 * tau);
        }
    }
    return out;
}

ObservationSet make_elliptic_observations(const GridFunction& u1, const GridFunction& u2, const NoiseSpec& noise,
                                          double positivity_floor) {
    require_same_mesh(u1, u2, "make_elliptic_observations");
    if (!(positivity_floor > 0.0)) {
        throw InvalidArgument("positivity floor must be positive");
    }
    ObservationSet obs;
    obs.mode = ObservationMode::Elliptic;
    obs.z1 = add_noise(u1, noise, kStreamZ1);
    obs.z2 = add_noise(u2, noise, kStreamZ2);
    obs.delta = noise.delta;
    obs.seed = noise.seed;
    obs.positivity_floor = positivity_floor;
    return obs;
}

ObservationSet make_parabolic_observations(const Trajectory& traj, const std::vector<Window>& windows,
                                           const MeshPtr& mesh, const NoiseSpec& noise, double positivity_floor) {
    if (windows.size() != 2) {
        throw InvalidArgument("parabolic observations need exactly two windows");
    }
    if (!(positivity_floor > 0.0)) {
        throw InvalidArgument("positivity floor must be positive");
    }
    ObservationSet obs;
    obs.mode = ObservationMode::Parabolic;
    obs.delta = noise.delta;
    obs.seed = noise.seed;
    obs.positivity_floor = positivity_floor;
    obs.tau_data = traj.tau();
    const auto stored = traj.steps();
    for (std::size_t w = 0; w < windows.size(); ++w) {
        ObservationWindow ow{windows[w].T, windows[w].theta, {}};
        const int top = traj.step_of(windows[w].T);
        for (const int s : stored) {
            const double t = traj.time(s);
            if (s > top || t < windows[w].T - windows[w].theta - 1e-9 * traj.tau()) {
                continue;
            }
            const auto stream = ((static_cast<std::uint64_t>(w) + 1) << 32) | static_cast<std::uint64_t>(s);
            ow.samples.push_back({t, add_noise(transfer(traj.at_step(s), mesh), noise, stream)});
        }
        if (ow.samples.empty() || traj.step_of(ow.samples.back().t) != top) {
            throw InvalidArgument("trajectory lacks the state at the window end");
        }
        obs.windows.push_back(std::move(ow));
    }
    obs.z1 = obs.windows[0].samples.back().u;
    obs.z2 = obs.windows[1].samples.back().u;
    return obs;
}

DerivedObservables elliptic_observables(const ObservationSet& obs, const GridFunction& f1, const GridFunction& f2) {
    DerivedObservables d;
    d.z1 = obs.z1;
    d.w_delta = ratio_observable(obs.z1, obs.z2, obs.positivity_floor);
    d.F_delta = source_F_elliptic(obs.z1, obs.z2, f1, f2);
    d.zeta_delta = difference_observable(obs.z1, obs.z2);
    d.zeta_rhs = f2 - f1;
    return d;
}

DerivedObservables parabolic_effective_sources(const ObservationSet& obs, const SourceSchedule& schedule,
                                               double tau, int k) {
    if (obs.mode != ObservationMode::Parabolic || obs.windows.size() != 2) {
        throw InvalidArgument("parabolic_effective_sources: parabolic observations required");
    }
    for (const auto& w : obs.windows) {
        if (k * tau > w.theta * (1.0 + 1e-9)) {
            std::ostringstream os;
            os << "window of length " << w.theta << " too short for order " << k << " with step " << tau;
            throw InvalidArgument(os.str());
        }
    }
    const auto& w1 = obs.windows[0];
    const auto& w2 = obs.windows[1];
    const GridFunction dq1 = backward_diff_quotient(w1.samples, w1.T, tau, k);
    const GridFunction dq2 = backward_diff_quotient(w2.samples, w2.T, tau, k);
    const MeshPtr& mesh = obs.z1.mesh_ptr();
    const GridFunction f_T1 = transfer(schedule.at(w1.T), mesh);
    const GridFunction f_T2 = transfer(schedule.at(w2.T), mesh);

    DerivedObservables d;
    d.z1 = obs.z1;
    d.w_delta = ratio_observable(obs.z1, obs.z2, obs.positivity_floor);
    d.F_delta = GridFunction(mesh, 0.0);
    for (std::size_t i = 0; i < d.F_delta.size(); ++i) {
        d.F_delta[i] = (f_T2[i] - dq2[i]) * obs.z1[i] - (f_T1[i] - dq1[i]) * obs.z2[i];
    }
    d.zeta_delta = difference_observable(obs.z1, obs.z2);
    d.zeta_rhs = f_T2 - f_T1 + dq1 - dq2;
    return d;
}

void write_observations(const ObservationSet& obs, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json m;
    m["mode"] = obs.mode == ObservationMode::Elliptic ? "elliptic" : "parabolic";
    m["delta"] = obs.delta;
    m["seed"] = obs.seed;
    m["positivity_floor"] = obs.positivity_floor;
    m["dim"] = obs.z1.mesh().dim();
    m["n"] = obs.z1.mesh().n();
    write_grid(dir / "z1.csv", obs.z1, "z1");
    write_grid(dir / "z2.csv", obs.z2, "z2");
    if (obs.mode == ObservationMode::Parabolic) {
        m["tau_data"] = obs.tau_data;
        auto& wins = m["windows"] = nlohmann::ordered_json::array();
        for (std::size_t w = 0; w < obs.windows.size(); ++w) {
            const auto& ow = obs.windows[w];
            nlohmann::ordered_json jw;
            jw["T"] = ow.T;
            jw["theta"] = ow.theta;
            auto& files = jw["samples"] = nlohmann::ordered_json::array();
            for (std::size_t s = 0; s < ow.samples.size(); ++s) {
                std::ostringstream name;
                name << "window" << w + 1 << "_" << s << ".csv";
                write_grid(dir / name.str(), ow.samples[s].u, "z", ow.samples[s].t);
                files.push_back({{"t", ow.samples[s].t}, {"file", name.str()}});
            }
            wins.push_back(jw);
        }
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw IoError("cannot write " + (dir / "manifest.json").string());
    }
    out << m.dump(2) << '\n';
}

}  // namespace coefrec
