#include <benchmark/benchmark.h>

#include <random>

#include <ATen/CPUGeneratorImpl.h>

#include "glandsynth/evaluation.hpp"
#include "glandsynth/layout.hpp"
#include "glandsynth/networks.hpp"
#include "glandsynth/resample.hpp"
#include "glandsynth/synthesis.hpp"

using namespace glandsynth;

namespace {

std::vector<BoundingBox> boxes_for(std::int64_t n) {
    std::vector<BoundingBox> boxes;
    for (std::int64_t k = 0; k < n; ++k) {
        const double x = 10.0 + double((k * 47) % 180);
        const double y = 10.0 + double((k * 71) % 180);
        boxes.push_back({x, y, x + 40.5, y + 57.25});
    }
    return boxes;
}

GlandLayout layout_for(std::int64_t n) {
    GlandLayout layout;
    for (const auto& b : boxes_for(n)) {
        layout.glands.push_back(spec_from_bbox(b));
    }
    return layout;
}

void BM_WarpIntoBox(benchmark::State& state) {
    const torch::Tensor tile = torch::rand({32, 64, 64});
    const BoundingBox box{30.5, 40, 130, 120.75};
    for (auto _ : state) {
        benchmark::DoNotOptimize(warp_into_box(tile, box, 256));
    }
}
BENCHMARK(BM_WarpIntoBox)->Unit(benchmark::kMillisecond);

void BM_ComposeCumulativeMask(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const torch::Tensor a = torch::randn({n, 32});
    const torch::Tensor m = torch::rand({n, 1, 64, 64});
    const auto boxes = boxes_for(n);
    torch::NoGradGuard no_grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(compose_cumulative_mask(a, m, boxes, 256));
    }
}
BENCHMARK(BM_ComposeCumulativeMask)->Arg(1)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_ExtractGlandObjects(benchmark::State& state) {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution on(0.4);
    std::vector<std::uint8_t> mask(256 * 256);
    for (auto& v : mask) {
        v = on(rng);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract_gland_objects(mask, 256, 256));
    }
}
BENCHMARK(BM_ExtractGlandObjects)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
    const auto dim = static_cast<Eigen::Index>(state.range(0));
    const FeatureMatrix a = FeatureMatrix::Random(1000, dim);
    const FeatureMatrix b = FeatureMatrix::Random(1000, dim).array() + 0.1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fid(a, b));
    }
}
BENCHMARK(BM_Fid)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Synthesize(benchmark::State& state) {
    torch::manual_seed(0);
    const Synthesizer synth(Generator{}, "bench");
    const GlandLayout layout = layout_for(state.range(0));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(synth.generate(layout, seed++));
    }
}
BENCHMARK(BM_Synthesize)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
