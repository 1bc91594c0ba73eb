#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coefrec/dataprep.hpp"
#include "coefrec/forward.hpp"
#include "coefrec/inversion.hpp"

namespace coefrec {

/// Anchor values of the a-priori parameter choice and the exponents that move them with delta.
struct ScalingPolicy {
    double delta0 = 1e-2;
    double h0 = 1.0 / 16;
    double H0 = 1.0 / 16;
    double tau0 = 0.1;
    double alpha1_0 = 1e-6;
    double alpha2_0 = 1e-5;
    int k = 1;                          // order of the time difference quotient
    std::optional<double> gamma;        // step-two exponent; empty: measured step-one rate
    double gamma_fallback = 0.5;        // used when no rate can be measured
};

struct ScaledParameters {
    int n_h = 16;
    int n_H = 16;
    double h = 1.0 / 16;
    double H = 1.0 / 16;
    double tau = 0.0;  // 0 for elliptic problems
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double gamma = 0.0;
};

/// Nearest power of two n (in log scale) to 1/h, limited to [2, n_max].
int snap_to_power_of_two(double h, int n_max);

/// Scaled mesh sizes, time step and regularization weights for noise level delta.
/// tau is left unsnapped here; see snap_time_step.
ScaledParameters scale_parameters(const ScalingPolicy& policy, double delta, bool parabolic, double gamma,
                                  int n_max = 1 << 20);

/// Multiple of tau_data closest to tau, reduced until k steps fit into theta.
double snap_time_step(double tau, double tau_data, double theta, int k);

struct ExampleSpec {
    std::string id;
    int dim = 1;
    bool parabolic = false;
    ScalarField D_true;
    ScalarField sigma_true;
    ScalarField f1;  // elliptic first source, or parabolic source before the bridge
    ScalarField f2;  // elliptic second source, or parabolic source after the bridge
    ScalarField g;
    ScalarField u0;  // parabolic only
    double bridge_lo = 0.0;
    double bridge_hi = 0.0;
    double boundary_lower = 1.0;  // known positive lower bound of g
    int fine_n = 0;
    double tau_data = 0.0;
    double T_final = 0.0;
    std::vector<Window> windows;
    Box box_q{0.5, 5.0};
    Box box_D{0.5, 5.0};
    Box box_sigma{0.0, 3.0};
    ScalingPolicy policy;
    std::vector<double> deltas;  // default noise grid
};

/// ex51, ex52 (elliptic 1-D/2-D), ex53, ex54 (parabolic 1-D/2-D), and
/// const1d / const2d: constant D = 2, sigma = 1 with u1 = 1, used for exact-data checks.
ExampleSpec builtin_example(const std::string& id);
std::vector<std::string> builtin_example_ids();

/// Everything a run needs besides the (delta, seed) grid.
struct RunConfig {
    ExampleSpec example;
    bool quick = false;
    int obs_n = 0;                   // observation mesh; 0 uses the data mesh
    std::string transfer = "project";  // "project" (L2) or "sample" (nodal) data transfer to working meshes
    double positivity_floor = 0.0;   // 0 selects half the boundary lower bound
    double interior_distance = 0.1;
    SolveOptions forward_solve{1e-12, 0, SolveMethod::Automatic};
    InverseStepConfig step_q;
    InverseStepConfig step_sigma;
    int coupled_outer = 20;
    int coupled_inner = 10;
    bool timings = false;
};

/// Default configuration of an example as a JSON document (the config-file format).
nlohmann::ordered_json default_config(const std::string& example_id);

/// Builds a RunConfig from a JSON document; missing keys take the example defaults.
RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

/// Applies `key=value`: key is a dotted path or a leaf name that occurs exactly once.
void apply_override(nlohmann::ordered_json& doc, const std::string& assignment);

/// Applies the quick preset to a config document (coarser data mesh and time step).
void apply_quick_preset(nlohmann::ordered_json& doc);

/// Exact states on the data mesh; computed once per example and shared by all rows.
struct GroundTruth {
    MeshPtr fine;
    GridFunction u1;  // elliptic
    GridFunction u2;
    Trajectory trajectory;  // parabolic
    SourceSchedule schedule;
};

GroundTruth generate_truth(const RunConfig& cfg);

struct ResultRow {
    std::string example;
    double delta = 0.0;
    std::uint64_t seed = 0;
    double e_D = 0.0;
    double e_sigma = 0.0;
    double e_sigma_interior = 0.0;
    int iters_q = 0;
    int iters_sigma = 0;
    double J_final_q = 0.0;
    double J_final_sigma = 0.0;
    double wall_ms = 0.0;
    int fine_n = 0;
    double tau_data = 0.0;
    std::string preset;
    std::string status = "ok";
    ScaledParameters params;
};

struct Reconstruction {
    ResultRow row;
    GridFunction q;
    GridFunction D;
    GridFunction sigma;
    GridFunction D_true;  // on the D mesh
    GridFunction sigma_true;  // on the sigma mesh
    IterationLog log_q;
    IterationLog log_sigma;
    DerivedObservables observables;  // on the observation mesh
};

/// Observations and derived observables for one (delta, seed).
struct PreparedData {
    ObservationSet obs;
    MeshPtr obs_mesh;
};

PreparedData prepare_data(const RunConfig& cfg, const GroundTruth& truth, double delta, std::uint64_t seed);
DerivedObservables derive_observables(const RunConfig& cfg, const GroundTruth& truth, const PreparedData& data,
                                      double tau);

/// Moves an observation-mesh function to a working mesh according to cfg.transfer.
/// `zero_boundary` selects the projection onto functions vanishing on the boundary.
GridFunction to_working_mesh(const RunConfig& cfg, const GridFunction& u, const MeshPtr& mesh, bool zero_boundary);

/// Step one: q on mesh h, then D. Fills q, D, D_true, log_q and the step-one row fields.
void run_step_one(const RunConfig& cfg, const DerivedObservables& obs, const ScaledParameters& p,
                  Reconstruction& rec);
/// Step two: sigma on mesh H with D frozen. Fills sigma, sigma_true, log_sigma and row fields.
void run_step_two(const RunConfig& cfg, const DerivedObservables& obs, const ScaledParameters& p,
                  Reconstruction& rec);

/// Single reconstruction with a given gamma (no sweep).
Reconstruction recover(const RunConfig& cfg, const GroundTruth& truth, double delta, std::uint64_t seed,
                       double gamma);

struct ExperimentOutput {
    std::vector<ResultRow> rows;
    std::vector<Reconstruction> reconstructions;  // kept only when requested
    double gamma = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Full sweep: all step-one fits first (to measure gamma), then all step-two fits.
ExperimentOutput run_experiment(const RunConfig& cfg, const std::vector<double>& deltas,
                                const std::vector<std::uint64_t>& seeds, bool keep_reconstructions = false,
                                const ProgressFn& progress = {});

/// Least-squares slope of log(error) against log(delta).
double estimate_rate(const std::vector<std::pair<double, double>>& pairs);

/// Per-delta means over seeds of successful rows, as (delta, mean e_D, mean e_sigma), ascending delta.
struct SeedMean {
    double delta = 0.0;
    double e_D = 0.0;
    double e_sigma = 0.0;
    double sd_D = 0.0;
    double sd_sigma = 0.0;
    int count = 0;
};
std::vector<SeedMean> seed_means(const std::vector<ResultRow>& rows, const std::string& example);

/// Fitted rates per example: {"ex51": {"e_D": slope, "e_sigma": slope}, ...}.
nlohmann::ordered_json rates_json(const std::vector<ResultRow>& rows);

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// results.csv, rates.json, manifest.json and grids/ (when reconstructions are present).
void emit(const ExperimentOutput& out, const RunConfig& cfg, const std::filesystem::path& dir);

/// Decoupled reconstruction next to the coupled baseline on the step-one mesh, the
/// baseline capped at the decoupled run's total accepted iterations. Elliptic only.
struct CoupledComparison {
    Reconstruction decoupled;
    CoupledResult coupled;
    double e_D_coupled = 0.0;
    double e_sigma_coupled = 0.0;
    int budget = 0;
};
CoupledComparison compare_coupled(const RunConfig& cfg, const GroundTruth& truth, double delta, std::uint64_t seed,
                                  double gamma);

/// Gradient checks for both inversion modes on an example's data.
struct GradcheckReport {
    double diffusion = 0.0;
    double potential = 0.0;
};
GradcheckReport gradcheck_example(const RunConfig& cfg, const GroundTruth& truth, double delta,
                                  std::uint64_t seed, int directions);

}  // namespace coefrec
