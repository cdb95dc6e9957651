#include <benchmark/benchmark.h>

#include "cpsofdm/optimizer.hpp"
#include "cpsofdm/txrx.hpp"

using namespace cpsofdm;

namespace {

ComplexVec random_vec(Rng& rng, std::size_t n) { return rng.complex_normal_vec(n, 1.0); }

WaveformConfig desk_config(std::size_t k, std::size_t s) {
  WaveformConfig wf = WaveformConfig::make(128, k, s / k, 52, GuardType::kCp, 9);
  wf.data_m.clear();
  for (std::size_t m = 1; m < s / k; ++m) wf.data_m.push_back(m);
  return wf;
}

void BM_PrecodeDirect(benchmark::State& state) {
  Rng rng(1);
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const ShapingSet sh = ShapingSet::from_shaping(random_vec(rng, k * m), k, m);
  const ComplexVec d = random_vec(rng, k * m);
  for (auto _ : state) benchmark::DoNotOptimize(precode_direct(d, sh));
}
BENCHMARK(BM_PrecodeDirect)->Args({2, 12})->Args({2, 24})->Args({4, 64});

void BM_PrecodeFrequency(benchmark::State& state) {
  Rng rng(1);
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const ShapingSet sh = ShapingSet::from_shaping(random_vec(rng, k * m), k, m);
  const ComplexVec d = random_vec(rng, k * m);
  for (auto _ : state) benchmark::DoNotOptimize(precode_frequency(d, sh));
}
BENCHMARK(BM_PrecodeFrequency)->Args({2, 12})->Args({2, 24})->Args({4, 64});

void BM_PrecodeCharacteristic(benchmark::State& state) {
  Rng rng(1);
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const ShapingSet sh = ShapingSet::from_shaping(random_vec(rng, k * m), k, m);
  const ComplexVec d = random_vec(rng, k * m);
  for (auto _ : state) benchmark::DoNotOptimize(precode_characteristic(d, sh));
}
BENCHMARK(BM_PrecodeCharacteristic)->Args({2, 12})->Args({2, 24})->Args({4, 64});

void BM_Modulate(benchmark::State& state) {
  Rng rng(2);
  const WaveformConfig wf = desk_config(2, 24);
  const ComplexVec s = random_vec(rng, 24);
  for (auto _ : state) benchmark::DoNotOptimize(modulate(s, wf));
}
BENCHMARK(BM_Modulate);

void BM_QuarticKernel(benchmark::State& state) {
  const WaveformConfig wf = desk_config(2, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_quartic_kernel(wf, 1.0, 1.32));
}
BENCHMARK(BM_QuarticKernel)->Arg(12)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_OsbepMatrix(benchmark::State& state) {
  const WaveformConfig wf = desk_config(2, 24);
  const FrequencyGrid grid = FrequencyGrid::for_subband(wf, 10, 4);
  for (auto _ : state) benchmark::DoNotOptimize(osbep_matrix(wf, grid, 1.0));
}
BENCHMARK(BM_OsbepMatrix)->Unit(benchmark::kMillisecond);

// One MM subproblem of the Case 1b setting.
void BM_SdpSubproblem(benchmark::State& state) {
  const WaveformConfig wf = desk_config(2, static_cast<std::size_t>(state.range(0)));
  const std::size_t s = wf.subcarriers();
  const FrequencyGrid grid = FrequencyGrid::for_subband(wf, 10, 4);
  const QuarticKernel kernel = build_quartic_kernel(wf, 1.0, 1.32);
  ConvexSubproblem pb;
  pb.omega = osbep_matrix(wf, grid, 1.0);
  pb.rho = static_cast<double>(wf.m_sub);
  pb.k_sub = wf.k_sub;
  pb.m_sub = wf.m_sub;
  pb.epsilon = 0.2;
  const ComplexMat x0 = ComplexMat::Identity(static_cast<Eigen::Index>(s),
                                             static_cast<Eigen::Index>(s)) *
                        (pb.rho / static_cast<double>(s));
  pb.objective = surrogate_gradient(x0, kernel);
  pb.osbep_bound = 10.0 * (pb.omega * x0).trace().real();
  for (auto _ : state) benchmark::DoNotOptimize(solve_sdp_subproblem(pb));
}
BENCHMARK(BM_SdpSubproblem)->Arg(12)->Arg(24)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
