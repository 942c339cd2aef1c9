#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "upwave/rf_stream.hpp"
#include "upwave/series.hpp"
#include "upwave/wall_track.hpp"

namespace upwave {

struct PwvParams {
    double assess_duration_s = 10.0;
    double lowrate_hz = 100.0;
    int window_lowrate_span = 8;   // refinement window: this many low-rate samples
    // Frames tracked beyond each window edge before filtering. Must outlast
    // the zero-phase low-pass transient (~60 ms at 16 Hz), or the edge ramps
    // bias each channel's curvature peak differently and the differential
    // timing error survives into the regression.
    int time_ref_pad_frames = 400;
    int filter_order = 4;
    double filter_cutoff_hz = 16.0;
    double upsample_rate_hz = 10000.0;
    double refractory_s = 0.4;     // minimum spacing between detected feet
    double min_prominence_frac = 0.3;  // feet must sit in the lowest fraction of the swing
    double min_range_mm = 0.02;    // smaller swings count as "no pulsation"
    double min_beat_hz = 0.5;
    double max_beat_hz = 3.0;
    double min_pwv_mps = 0.5;      // plausibility band for per-beat estimates
    double max_pwv_mps = 30.0;
    int min_valid_beats = 3;
    int workers = 1;
    TrackParams track;
};

/// One beat picked on the low-rate series, mapped to full-rate frame indices.
/// hi_end - hi_start = window_lowrate_span * (prf / lowrate), 160 frames at
/// the default 2000/100 Hz split.
struct BeatWindow {
    std::size_t lowrate_min_index = 0;
    std::int64_t hi_start_frame = 0;
    std::int64_t hi_end_frame = 0;
};

struct LowrateResult {
    std::vector<SampledSeries> distension_mm;  // per channel, at prf/decim
    SampledSeries filtered_mm;                 // channel 0 after the low-pass
    std::vector<std::size_t> beat_min_indices; // feet on the filtered series
    std::int64_t first_tick = 0;
    std::int64_t decim = 1;
};

/// Diastolic feet of a periodic waveform: local minima in the lowest
/// min_prominence_frac of the swing, thinned so two feet are never closer
/// than refractory_s (the deeper one wins). Works on any smooth series with
/// upward pulsation (distension or pressure).
std::vector<std::size_t> detect_beat_feet(const SampledSeries& s,
                                          double min_prominence_frac = 0.3,
                                          double refractory_s = 0.4);

/// Decimated tracking pass over [first_tick, last_tick] (last_tick < 0 means
/// the end of the capture). Throws "no beat detected" when the channel-0
/// distension shows no pulsation or its fundamental leaves the
/// [min_beat_hz, max_beat_hz] band.
LowrateResult lowrate_pass(FrameSource& source, std::span<const WallRegion> regions,
                           const PwvParams& params = {}, std::int64_t first_tick = 0,
                           std::int64_t last_tick = -1);

/// Maps each detected foot to a full-rate refinement window; feet whose
/// window would run past last_tick are dropped.
std::vector<BeatWindow> locate_highrate_ranges(const LowrateResult& lowrate,
                                               std::int64_t last_tick,
                                               const PwvParams& params = {});

/// Arrival time of the beat on one channel: full-rate distension inside the
/// window, zero-phase low-pass, spline resampling to upsample_rate_hz, then
/// the position of the strongest upward curvature (second-derivative max).
double beat_time_reference(FrameSource& source, const WallRegion& region,
                           const BeatWindow& window, const PwvParams& params = {});

struct RegressionResult {
    double slope_mps = 0.0;
    double r2 = 0.0;
};

/// Least-squares slope of element position against arrival time. Times must
/// be finite and strictly increasing; otherwise throws "retrograde timing".
RegressionResult pwv_regression(std::span<const double> positions_m,
                                std::span<const double> times_s);

struct BeatPwv {
    BeatWindow window;
    std::vector<double> times_s;  // per channel
    double pwv_mps = 0.0;
    double r2 = 0.0;
    bool valid = false;
    std::string reject_reason;
};

struct PwvEstimate {
    double mean_mps = 0.0;
    double sd_mps = 0.0;  // sample SD over valid beats
    std::vector<BeatPwv> beats;
    int n_valid = 0;
};

/// Session estimate over the first assess_duration_s of the capture starting
/// at first_tick: two-stage tracking, per-beat regressions, mean +/- SD over
/// valid beats. Throws "insufficient beats" when fewer than min_valid_beats
/// survive.
PwvEstimate pwv_session(FrameSource& source, std::span<const WallRegion> regions,
                        const PwvParams& params = {}, std::int64_t first_tick = 0);

/// Mean and sample (n-1) standard deviation; sd is 0 for a single value.
std::pair<double, double> mean_sample_sd(std::span<const double> values);

}  // namespace upwave
