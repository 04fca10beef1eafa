// Parallel kernels vs. the serial reference on generator/encoder-sized inputs.
// Run with OMP_NUM_THREADS=n to see the scaling.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "reavae/kernels.hpp"
#include "reavae/reference.hpp"
#include "reavae/rng.hpp"

using namespace reavae;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed)
{
    Tensor<float> t(std::move(shape));
    Rng rng(seed);
    fill_normal<float>(rng, t.data(), t.data() + t.size());
    return t;
}

Labels random_blocks(int n, int h, int w, int classes)
{
    Labels l(n, h, w);
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) l.at(b, i, j) = ((i / 8) * 3 + (j / 8) + b) % classes;
    return l;
}

// (batch, channels, size)
void conv_args(benchmark::internal::Benchmark* b)
{
    b->Args({4, 16, 64})->Args({4, 32, 32})->Args({1, 64, 64});
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state)
{
    const int n = int(state.range(0)), c = int(state.range(1)), s = int(state.range(2));
    const auto x = random_tensor({n, c, s, s}, 1);
    const auto w = random_tensor({c, c, 3, 3}, 2);
    const auto bias = random_tensor({c}, 3);
    for (auto _ : state) {
        auto y = Parallel ? kernels::conv2d_forward(x, w, &bias, 1, 1) : reference::conv2d_forward(x, w, &bias, 1, 1);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(n) * c * c * 9 * s * s);
}

template <bool Parallel>
void BM_Conv2dBackward(benchmark::State& state)
{
    const int n = int(state.range(0)), c = int(state.range(1)), s = int(state.range(2));
    const auto x = random_tensor({n, c, s, s}, 1);
    const auto w = random_tensor({c, c, 3, 3}, 2);
    const auto dy = random_tensor({n, c, s, s}, 3);
    for (auto _ : state) {
        auto g = Parallel ? kernels::conv2d_backward(x, w, dy, 1, 1, true, true, true)
                          : reference::conv2d_backward(x, w, dy, 1, 1);
        benchmark::DoNotOptimize(g.dx.data());
    }
}

template <bool Parallel>
void BM_RegionPool(benchmark::State& state)
{
    const int n = 4, d = int(state.range(0)), s = int(state.range(1)), classes = 5;
    const auto f = random_tensor({n, d, s, s}, 4);
    const auto labels = random_blocks(n, s, s, classes);
    for (auto _ : state) {
        if constexpr (Parallel) {
            auto r = kernels::region_pool(f, labels, classes);
            benchmark::DoNotOptimize(r.styles.data());
        } else {
            auto r = reference::region_pool(f, labels, classes);
            benchmark::DoNotOptimize(r.data());
        }
    }
}

template <bool Parallel>
void BM_BroadcastCodes(benchmark::State& state)
{
    const int n = 4, d = int(state.range(0)), s = int(state.range(1)), classes = 5;
    const auto codes = random_tensor({n, classes, d}, 5);
    const auto labels = random_blocks(n, s, s, classes);
    for (auto _ : state) {
        auto y = Parallel ? kernels::broadcast_codes(codes, labels) : reference::broadcast_codes(codes, labels);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_BilinearSample(benchmark::State& state)
{
    const int s = int(state.range(0)), out = s;
    const auto tex = random_tensor({4, 3, s, s}, 6);
    std::vector<float> uv(static_cast<std::size_t>(out) * out * 2);
    Rng rng(7);
    std::uniform_real_distribution<float> u01(0.f, 1.f);
    for (auto& v : uv) v = u01(rng);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(out) * out, 1);
    for (auto _ : state) {
        auto y = Parallel ? kernels::bilinear_sample(tex, uv, mask, out, out)
                          : reference::bilinear_sample(tex, uv, mask, out, out);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_Normalize(benchmark::State& state)
{
    const auto x = random_tensor({4, int(state.range(0)), int(state.range(1)), int(state.range(1))}, 8);
    Tensor<float> mean, var;
    for (auto _ : state) {
        auto y = Parallel ? kernels::normalize_forward(x, kernels::NormGroup::channel, 1e-5f, mean, var)
                          : reference::batch_normalize(x, 1e-5f);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_ResizeBilinear(benchmark::State& state)
{
    const int s = int(state.range(0));
    const auto x = random_tensor({4, 16, s, s}, 9);
    for (auto _ : state) {
        auto y = Parallel ? kernels::resize_bilinear(x, 2 * s, 2 * s) : reference::resize_bilinear(x, 2 * s, 2 * s);
        benchmark::DoNotOptimize(y.data());
    }
}

} // namespace

BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/omp")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/serial")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<true>)->Name("conv2d_backward/omp")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<false>)->Name("conv2d_backward/serial")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RegionPool<true>)->Name("region_pool/omp")->Args({64, 64})->Args({128, 128});
BENCHMARK(BM_RegionPool<false>)->Name("region_pool/serial")->Args({64, 64})->Args({128, 128});
BENCHMARK(BM_BroadcastCodes<true>)->Name("broadcast_codes/omp")->Args({64, 64})->Args({128, 128});
BENCHMARK(BM_BroadcastCodes<false>)->Name("broadcast_codes/serial")->Args({64, 64})->Args({128, 128});
BENCHMARK(BM_BilinearSample<true>)->Name("bilinear_sample/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_BilinearSample<false>)->Name("bilinear_sample/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Normalize<true>)->Name("normalize/omp")->Args({64, 64})->Args({16, 256});
BENCHMARK(BM_Normalize<false>)->Name("normalize/serial")->Args({64, 64})->Args({16, 256});
BENCHMARK(BM_ResizeBilinear<true>)->Name("resize_bilinear/omp")->Arg(32)->Arg(128);
BENCHMARK(BM_ResizeBilinear<false>)->Name("resize_bilinear/serial")->Arg(32)->Arg(128);

int main(int argc, char** argv)
{
    benchmark::Initialize(&argc, argv);
    benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
}
