#include <benchmark/benchmark.h>

#include "sketchgen/kernels.hpp"
#include "sketchgen/parallel.hpp"
#include "sketchgen/rng.hpp"

// Compares the OpenMP kernels against the serial reference implementations
// and against the same kernels with parallelism switched off. On a single
// hardware thread the parallel/serial pair should be near-identical; the
// reference rows show the cost of the naive formulations.

using namespace sketchgen;
using kernels::ConvGeom;

namespace {

template <typename T>
std::vector<T> random_vec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.normal());
    return v;
}

void bm_gemm_parallel(benchmark::State& state) {
    const int64_t m = state.range(0), k = state.range(1), n = state.range(2);
    auto a = random_vec<float>(m * k, 1), b = random_vec<float>(k * n, 2);
    std::vector<float> c(m * n, 0.f);
    kernels::set_parallel(true);
    for (auto _ : state) {
        kernels::gemm_accumulate(a.data(), b.data(), c.data(), m, k, n);
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * 2 * m * k * n);
}

void bm_gemm_serial(benchmark::State& state) {
    const int64_t m = state.range(0), k = state.range(1), n = state.range(2);
    auto a = random_vec<float>(m * k, 1), b = random_vec<float>(k * n, 2);
    std::vector<float> c(m * n, 0.f);
    kernels::set_parallel(false);
    for (auto _ : state) {
        kernels::gemm_accumulate(a.data(), b.data(), c.data(), m, k, n);
        benchmark::ClobberMemory();
    }
    kernels::set_parallel(true);
    state.SetItemsProcessed(state.iterations() * 2 * m * k * n);
}

void bm_gemm_reference(benchmark::State& state) {
    const int64_t m = state.range(0), k = state.range(1), n = state.range(2);
    auto a = random_vec<float>(m * k, 1), b = random_vec<float>(k * n, 2);
    std::vector<float> c(m * n, 0.f);
    for (auto _ : state) {
        kernels::reference::gemm_accumulate(a.data(), b.data(), c.data(), m, k, n);
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * 2 * m * k * n);
}

ConvGeom bench_geom() { return ConvGeom::make(8, 32, 32, 32, 32, 3, 3, 1, 1); }

void bm_conv_parallel(benchmark::State& state) {
    const auto g = bench_geom();
    auto x = random_vec<float>(g.n * g.ci * g.hi * g.wi, 3);
    auto w = random_vec<float>(g.co * g.patch(), 4);
    auto b = random_vec<float>(g.co, 5);
    std::vector<float> y(g.n * g.co * g.positions());
    kernels::set_parallel(true);
    for (auto _ : state) {
        kernels::conv2d_forward(x.data(), w.data(), b.data(), g, y.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * 2 * g.n * g.co * g.positions() * g.patch());
}

void bm_conv_serial(benchmark::State& state) {
    const auto g = bench_geom();
    auto x = random_vec<float>(g.n * g.ci * g.hi * g.wi, 3);
    auto w = random_vec<float>(g.co * g.patch(), 4);
    auto b = random_vec<float>(g.co, 5);
    std::vector<float> y(g.n * g.co * g.positions());
    kernels::set_parallel(false);
    for (auto _ : state) {
        kernels::conv2d_forward(x.data(), w.data(), b.data(), g, y.data());
        benchmark::ClobberMemory();
    }
    kernels::set_parallel(true);
    state.SetItemsProcessed(state.iterations() * 2 * g.n * g.co * g.positions() * g.patch());
}

void bm_conv_reference(benchmark::State& state) {
    const auto g = bench_geom();
    auto x = random_vec<float>(g.n * g.ci * g.hi * g.wi, 3);
    auto w = random_vec<float>(g.co * g.patch(), 4);
    auto b = random_vec<float>(g.co, 5);
    std::vector<float> y(g.n * g.co * g.positions());
    for (auto _ : state) {
        kernels::reference::conv2d_forward(x.data(), w.data(), b.data(), g, y.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * 2 * g.n * g.co * g.positions() * g.patch());
}

} // namespace

BENCHMARK(bm_gemm_parallel)->Args({32, 288, 1024})->Args({128, 1152, 64});
BENCHMARK(bm_gemm_serial)->Args({32, 288, 1024})->Args({128, 1152, 64});
BENCHMARK(bm_gemm_reference)->Args({32, 288, 1024})->Args({128, 1152, 64});
BENCHMARK(bm_conv_parallel);
BENCHMARK(bm_conv_serial);
BENCHMARK(bm_conv_reference);

BENCHMARK_MAIN();
