#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "coefrec/fem.hpp"
#include "coefrec/inversion.hpp"
#include "coefrec/solver.hpp"

using namespace coefrec;

namespace {

GridFunction bump(const MeshPtr& m) {
    return interpolate([](const Point& p) { return 2.0 + std::sin(std::numbers::pi * p[0]) * std::cos(p[1]); }, m);
}

void BM_AssembleStiffness(benchmark::State& state) {
    const auto m = build_mesh(2, static_cast<int>(state.range(0)));
    const auto q = bump(m);
    for (auto _ : state) {
        benchmark::DoNotOptimize(assemble_stiffness(q));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m->element_count()));
}
BENCHMARK(BM_AssembleStiffness)->Arg(32)->Arg(64)->Arg(128);

void BM_Solve(benchmark::State& state) {
    const int dim = static_cast<int>(state.range(0));
    const auto m = build_mesh(dim, static_cast<int>(state.range(1)));
    const auto A = restrict_to_interior(assemble_stiffness(bump(m)), *m);
    const std::vector<double> b(A.rows(), 1.0);
    const SolveOptions opt{1e-10, 0, state.range(2) ? SolveMethod::ConjugateGradient : SolveMethod::Direct};
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_spd(A, b, opt));
    }
}
BENCHMARK(BM_Solve)
    ->ArgNames({"dim", "n", "cg"})
    ->Args({1, 2048, 0})
    ->Args({2, 64, 0})
    ->Args({2, 64, 1})
    ->Args({2, 128, 0})
    ->Args({2, 128, 1})
    ->Unit(benchmark::kMillisecond);

void BM_DiffusionGradient(benchmark::State& state) {
    const int dim = static_cast<int>(state.range(0));
    const auto m = build_mesh(dim, static_cast<int>(state.range(1)));
    const auto w = interpolate([](const Point& p) { return p[0] * (1 - p[0]); }, m);
    const DiffusionObjective J(w, GridFunction(m, 1.0), 1e-6);
    const auto q = bump(m);
    for (auto _ : state) {
        const auto e = J.evaluate(q);
        benchmark::DoNotOptimize(J.gradient(q, e));
    }
}
BENCHMARK(BM_DiffusionGradient)->ArgNames({"dim", "n"})->Args({1, 256})->Args({2, 64})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
