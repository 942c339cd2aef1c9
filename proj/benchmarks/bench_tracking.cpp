// Microbenchmarks for the hot kernels: correlation search (narrow vs wide),
// envelope peak refinement, a full tracker step, and the per-beat filter +
// resample + curvature chain. Input frames are synthesized in memory.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "upwave/signal_ops.hpp"
#include "upwave/wall_track.hpp"

namespace {

constexpr int kSamplesPerFrame = 3200;
constexpr double kRfRate = 80e6;
constexpr double kPrf = 2000.0;
constexpr double kC = 1480.0;
constexpr double kCarrierHz = 5e6;

upwave::Geometry geometry() {
    upwave::Geometry g;
    g.rf_rate_hz = kRfRate;
    g.prf_hz = kPrf;
    g.c_mps = kC;
    g.interp_factor = 15;
    return g;
}

void add_burst(std::vector<double>& acc, double raw_pos, double amp) {
    const double sigma = 20.0;
    const long lo = std::max(0L, std::lround(raw_pos - 5.0 * sigma));
    const long hi = std::min<long>(kSamplesPerFrame - 1, std::lround(raw_pos + 5.0 * sigma));
    for (long i = lo; i <= hi; ++i) {
        const double d = static_cast<double>(i) - raw_pos;
        acc[static_cast<std::size_t>(i)] +=
            amp * std::exp(-0.5 * d * d / (sigma * sigma)) *
            std::cos(2.0 * std::numbers::pi * kCarrierHz / kRfRate * d);
    }
}

std::vector<std::int16_t> frame_at(double anterior_mm, double posterior_mm) {
    const auto geom = geometry();
    std::vector<double> acc(kSamplesPerFrame, 0.0);
    add_burst(acc, geom.raw_index_at_depth(anterior_mm * 1e-3), 12000.0);
    add_burst(acc, geom.raw_index_at_depth(posterior_mm * 1e-3), 12000.0);
    std::vector<std::int16_t> out(kSamplesPerFrame);
    for (int i = 0; i < kSamplesPerFrame; ++i)
        out[static_cast<std::size_t>(i)] = static_cast<std::int16_t>(
            std::clamp(acc[static_cast<std::size_t>(i)], -32000.0, 32000.0));
    return out;
}

upwave::WallRegion region_for(double anterior_mm, double posterior_mm) {
    const auto geom = geometry();
    upwave::WallRegion r;
    r.channel = 0;
    r.anterior_center_u =
        std::lround(geom.raw_index_at_depth(anterior_mm * 1e-3) * geom.interp_factor);
    r.posterior_center_u =
        std::lround(geom.raw_index_at_depth(posterior_mm * 1e-3) * geom.interp_factor);
    return r;
}

upwave::RfStream pulsating_stream(int ticks) {
    upwave::RfStream s;
    s.header.n_channels = 1;
    s.samples.reserve(static_cast<std::size_t>(ticks) * kSamplesPerFrame);
    for (int t = 0; t < ticks; ++t) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / kPrf;
        const auto f = frame_at(14.9, 23.1 + 0.15 * std::sin(phase));
        s.samples.insert(s.samples.end(), f.begin(), f.end());
    }
    return s;
}

std::vector<double> interp_window(long center_u, int halfspan) {
    // Analytic interpolated-domain samples of the posterior burst; good
    // enough to exercise the correlation arithmetic itself.
    const auto geom = geometry();
    const double raw_center = static_cast<double>(center_u) / geom.interp_factor;
    const int n = 480 + 2 * halfspan;
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double raw = raw_center + static_cast<double>(i - n / 2) / geom.interp_factor;
        const double d = raw - geom.raw_index_at_depth(23.1e-3);
        w[static_cast<std::size_t>(i)] =
            12000.0 * std::exp(-0.5 * d * d / 400.0) *
            std::cos(2.0 * std::numbers::pi * kCarrierHz / kRfRate * d);
    }
    return w;
}

void BM_XcorrNarrow(benchmark::State& state) {
    const auto geom = geometry();
    const long u = std::lround(geom.raw_index_at_depth(23.1e-3) * 15);
    const auto cmp = interp_window(u, 3);
    const std::vector<double> ref(cmp.begin() + 3, cmp.begin() + 3 + 480);
    for (auto _ : state) benchmark::DoNotOptimize(upwave::xcorr_shift(ref, cmp, -3, 3));
}
BENCHMARK(BM_XcorrNarrow);

void BM_XcorrWide(benchmark::State& state) {
    const auto geom = geometry();
    const long u = std::lround(geom.raw_index_at_depth(23.1e-3) * 15);
    const auto cmp = interp_window(u, 60);
    const std::vector<double> ref(cmp.begin() + 60, cmp.begin() + 60 + 480);
    for (auto _ : state) benchmark::DoNotOptimize(upwave::xcorr_shift(ref, cmp, -60, 60));
}
BENCHMARK(BM_XcorrWide);

void BM_XcorrFrameWide(benchmark::State& state) {
    // Raw-frame form: includes the spline interpolation of both windows.
    const auto geom = geometry();
    const auto prev = frame_at(14.9, 23.1);
    const auto next = frame_at(14.9, 23.1 + 0.02);
    const long u = std::lround(geom.raw_index_at_depth(23.1e-3) * 15);
    for (auto _ : state)
        benchmark::DoNotOptimize(upwave::xcorr_shift(prev, next, u, -60, 60));
}
BENCHMARK(BM_XcorrFrameWide);

void BM_EnvelopePeak(benchmark::State& state) {
    const auto geom = geometry();
    const auto frame = frame_at(14.9, 23.1);
    const long u = std::lround(geom.raw_index_at_depth(23.1e-3) * 15);
    for (auto _ : state)
        benchmark::DoNotOptimize(upwave::envelope_peak_near(frame, u, 60, 15));
}
BENCHMARK(BM_EnvelopePeak);

void BM_TrackerStepNarrow(benchmark::State& state) {
    const auto geom = geometry();
    const upwave::TrackParams params;
    const auto prev = frame_at(14.9, 23.1);
    const auto next = frame_at(14.9, 23.1 + 0.005);
    const long u = std::lround(geom.raw_index_at_depth(23.1e-3) * 15);
    for (auto _ : state) {
        upwave::WallTracker tracker(geom, params, u);
        benchmark::DoNotOptimize(tracker.step(prev, next, 1.0 / kPrf));
    }
}
BENCHMARK(BM_TrackerStepNarrow);

void BM_TrackerStepWideFallback(benchmark::State& state) {
    const auto geom = geometry();
    const upwave::TrackParams params;
    const auto prev = frame_at(14.9, 23.1);
    const auto next = frame_at(14.9, 23.1 + 0.03);  // implausible jump per frame
    const long u = std::lround(geom.raw_index_at_depth(23.1e-3) * 15);
    for (auto _ : state) {
        upwave::WallTracker tracker(geom, params, u);
        benchmark::DoNotOptimize(tracker.step(prev, next, 1.0 / kPrf));
    }
}
BENCHMARK(BM_TrackerStepWideFallback);

void BM_DistensionQuarterSecond(benchmark::State& state) {
    upwave::MemorySource source(pulsating_stream(500));
    const auto region = region_for(14.9, 23.1);
    for (auto _ : state)
        benchmark::DoNotOptimize(upwave::distension_series(source, region, kPrf));
    state.SetItemsProcessed(state.iterations() * 499);
}
BENCHMARK(BM_DistensionQuarterSecond)->Unit(benchmark::kMillisecond);

void BM_BeatTimingChain(benchmark::State& state) {
    // Per-beat foot timing: low-pass, resample to 10 kHz, curvature argmax.
    upwave::SampledSeries seg;
    seg.t0_s = 0.0;
    seg.rate_hz = kPrf;
    seg.values.resize(240);
    for (std::size_t i = 0; i < seg.values.size(); ++i) {
        const double t = static_cast<double>(i) / kPrf;
        seg.values[i] = 0.3 / (1.0 + std::exp(-60.0 * (t - 0.05)));
    }
    for (auto _ : state) {
        const auto smooth = upwave::zero_phase_lowpass(seg, 4, 16.0);
        const auto fine = upwave::resample_to(smooth, 10000.0);
        benchmark::DoNotOptimize(
            upwave::second_derivative_max(fine, 0, fine.values.size() - 1));
    }
}
BENCHMARK(BM_BeatTimingChain)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
