#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "upwave/rf_stream.hpp"
#include "upwave/series.hpp"

namespace upwave {

/// Index/depth conversions for one capture. Tracking happens on a grid of
/// "interpolated samples": raw RF samples cubic-spline upsampled by
/// interp_factor, so one interpolated sample spans c / (2 fs k) meters of
/// depth (two-way travel).
struct Geometry {
    double rf_rate_hz = 0.0;
    double prf_hz = 0.0;
    double c_mps = 0.0;
    int interp_factor = 15;

    double m_per_interp() const { return c_mps / (2.0 * rf_rate_hz * interp_factor); }
    double raw_index_at_depth(double depth_m) const {
        return 2.0 * depth_m / c_mps * rf_rate_hz;
    }
    static Geometry from_header(const RfStreamHeader& h, int interp_factor = 15);
};

struct TrackParams {
    int interp_factor = 15;
    int half_window_w = 240;      // W: correlation window is [u-W, u+W)
    int narrow_halfspan = 3;      // search span around the envelope-peak shift
    int wide_halfspan = 60;       // fallback exhaustive span
    // Plausibility bound for peak-guided shifts: 18.5 mm/s is 15 interpolated
    // samples per frame at 2000 Hz, 80 MHz x 15, c = 1480 m/s.
    double max_wall_speed_mps = 0.0185;
    double snr_noise_depth_mm = 5.0;   // shallower than this counts as noise
    double snr_gate_db = 15.0;
    int id_frames = 8;            // frames averaged when locating the walls
    double min_peak_ratio = 0.25; // weaker wall vs stronger wall, at identification
    double min_separation_mm = 1.5;
};

/// One tracked vessel cross-section on one channel. Centers are in
/// interpolated samples from the top of the frame.
struct WallRegion {
    int channel = 0;
    long anterior_center_u = 0;
    long posterior_center_u = 0;
    int half_window_w = 240;
    double snr_db = 0.0;
};

/// Result of one cross-correlation search. delta is the in-window shift (in
/// interpolated samples) with the highest normalized correlation over
/// [search_lo, search_hi]; fallback_used marks estimates that needed the
/// wide exhaustive search instead of the peak-guided narrow one.
/// delta_fine refines delta by the vertex of a parabola through the three
/// correlation values around the peak. The RF carrier keeps that peak sharp
/// at single-sample spacing, so the vertex resolves displacements well below
/// one interpolated sample; delta remains the authoritative integer shift
/// for window placement and search logic.
struct ShiftEstimate {
    int delta = 0;
    double delta_fine = 0.0;
    double peak_corr = 0.0;
    int search_lo = 0;
    int search_hi = 0;
    bool fallback_used = false;
};

enum class WallSide { anterior, posterior };

/// Locates the two dominant wall echoes on a channel from the first few
/// frames. Throws "no artery found" when no credible echo pair exists and
/// "SNR gate failed" when the echo SNR sits below params.snr_gate_db (the
/// comparison is >=, with a 1e-9 dB guard so exact-boundary fixtures pass).
WallRegion identify_walls(FrameSource& source, int channel, const TrackParams& params = {});

/// Wall-echo SNR of one frame: 20 log10 of mean |sample| inside the two wall
/// windows over mean |sample| shallower than snr_noise_depth_mm. Returns
/// +infinity when the noise zone is exactly silent.
double snr_db(std::span<const std::int16_t> frame, const WallRegion& region,
              const Geometry& geom, const TrackParams& params = {});

/// Normalized cross-correlation over integer lags [search_lo, search_hi].
/// cmp must hold ref.size() + (search_hi - search_lo) samples; cmp[0] lines
/// up with ref[0] at lag search_lo. Ties prefer the smaller |lag|.
ShiftEstimate xcorr_shift(std::span<const double> ref, std::span<const double> cmp,
                          int search_lo, int search_hi);

/// Convenience form working directly on two raw frames: correlates the
/// window at center_u of prev against next over the given lag range.
ShiftEstimate xcorr_shift(std::span<const std::int16_t> prev,
                          std::span<const std::int16_t> next, long center_u,
                          int search_lo, int search_hi, const TrackParams& params = {});

/// Envelope peak (interpolated-sample resolution) nearest center_u, searched
/// within +/- span_u.
long envelope_peak_near(std::span<const std::int16_t> frame, long center_u, long span_u,
                        int interp_factor);

/// Tracks one wall across consecutive (possibly decimated) frames. Per step
/// the envelope-peak displacement predicts the shift, a narrow correlation
/// search refines it, and implausible predictions or a best match on the
/// search boundary trigger the wide fallback search.
class WallTracker {
  public:
    WallTracker(const Geometry& geom, const TrackParams& params, long center_u);

    ShiftEstimate step(std::span<const std::int16_t> prev, std::span<const std::int16_t> next,
                       double dt_s);
    /// Snap the window center back onto the envelope peak (used at beat
    /// onsets so window drift never accumulates across beats).
    void reanchor(std::span<const std::int16_t> frame);

    long center_u() const { return center_u_; }
    long accumulated_u() const { return accumulated_u_; }
    long fallback_count() const { return fallback_count_; }

  private:
    Geometry geom_;
    TrackParams params_;
    long center_u_ = 0;
    long accumulated_u_ = 0;
    long prev_peak_u_ = -1;
    long fallback_count_ = 0;
};

/// Per-frame estimates over [first_tick, last_tick] stepping by decim.
struct PeakTrack {
    std::vector<long> peak_u;     // envelope peak per visited frame
    std::vector<int> delta_p;     // predicted shift between consecutive visits
    std::vector<bool> fallback;   // |delta_p| beyond the plausibility bound
};
PeakTrack track_peak(FrameSource& source, const WallRegion& region, WallSide side,
                     std::int64_t first_tick, std::int64_t last_tick, int decim,
                     const TrackParams& params = {});

/// Distension (posterior minus anterior displacement, mm, starting at 0)
/// plus the per-step shift estimates for both walls.
struct TrackedWindow {
    std::vector<ShiftEstimate> anterior;
    std::vector<ShiftEstimate> posterior;
    SampledSeries distension_mm;
};
TrackedWindow track_window(FrameSource& source, const WallRegion& region,
                           std::int64_t first_tick, std::int64_t last_tick, int decim,
                           const TrackParams& params = {}, bool reanchor_at_start = false);

/// Distension of the whole capture at approximately rate_hz (the PRF divided
/// by an integer). Window centers re-anchor at reanchor_times_s.
SampledSeries distension_series(FrameSource& source, const WallRegion& region, double rate_hz,
                                const TrackParams& params = {},
                                std::span<const double> reanchor_times_s = {});

}  // namespace upwave
