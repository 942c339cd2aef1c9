#include "upwave/wall_track.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "fft.hpp"
#include "spline.hpp"
#include "upwave/errors.hpp"

namespace upwave {
namespace {

long floor_div(long a, long b) {
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

long ceil_div(long a, long b) { return -floor_div(-a, b); }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Cubic-spline interpolation of frame[raw_lo..raw_hi], addressed by
// interpolated index (raw index * factor). Raw bounds are clamped to the
// frame, so callers must check coverage via window().
struct InterpSegment {
    long start_u = 0;
    int factor = 1;
    std::vector<double> v;

    std::span<const double> window(long u_lo, std::size_t n) const {
        const long off = u_lo - start_u;
        if (off < 0 || static_cast<std::size_t>(off) + n > v.size())
            throw Error("track window out of range");
        return {v.data() + off, n};
    }
};

InterpSegment make_segment(std::span<const std::int16_t> frame, long raw_lo, long raw_hi,
                           int factor) {
    const long last = static_cast<long>(frame.size()) - 1;
    raw_lo = std::clamp(raw_lo, 0L, last);
    raw_hi = std::clamp(raw_hi, 0L, last);
    if (raw_hi <= raw_lo) throw Error("track window out of range");
    std::vector<double> y(static_cast<std::size_t>(raw_hi - raw_lo + 1));
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = static_cast<double>(frame[static_cast<std::size_t>(raw_lo) + i]);
    InterpSegment seg;
    seg.start_u = raw_lo * factor;
    seg.factor = factor;
    seg.v = detail::spline_upsample(y, factor);
    return seg;
}

}  // namespace

Geometry Geometry::from_header(const RfStreamHeader& h, int interp_factor) {
    return {static_cast<double>(h.rf_rate_hz), static_cast<double>(h.prf_hz),
            h.speed_of_sound_mps(), interp_factor};
}

ShiftEstimate xcorr_shift(std::span<const double> ref, std::span<const double> cmp,
                          int search_lo, int search_hi) {
    if (search_hi < search_lo) throw Error("bad search range");
    const std::size_t n = ref.size();
    if (n == 0) throw Error("empty series");
    const auto lags = static_cast<std::size_t>(search_hi - search_lo);
    if (cmp.size() != n + lags) throw Error("comparison span does not match search range");

    ShiftEstimate est;
    est.search_lo = search_lo;
    est.search_hi = search_hi;

    double norm_r = 0.0;
    for (double x : ref) norm_r += x * x;
    if (norm_r == 0.0) {
        est.delta = std::clamp(0, search_lo, search_hi);
        est.delta_fine = est.delta;
        return est;
    }

    double norm_c = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm_c += cmp[i] * cmp[i];

    std::vector<double> cs(lags + 1);
    double best = -2.0;
    int best_s = search_lo;
    for (int s = search_lo; s <= search_hi; ++s) {
        const auto off = static_cast<std::size_t>(s - search_lo);
        if (off > 0) {
            norm_c += cmp[off + n - 1] * cmp[off + n - 1] - cmp[off - 1] * cmp[off - 1];
        }
        double dot = 0.0;
        const double* a = ref.data();
        const double* b = cmp.data() + off;
        for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
        const double c = norm_c > 0.0 ? dot / std::sqrt(norm_r * norm_c) : 0.0;
        cs[off] = c;
        // Ties: smallest |lag| wins, then the negative one.
        if (c > best || (c == best && (std::abs(s) < std::abs(best_s) ||
                                       (std::abs(s) == std::abs(best_s) && s < best_s)))) {
            best = c;
            best_s = s;
        }
    }
    est.delta = best_s;
    est.peak_corr = best;
    est.delta_fine = best_s;
    // Parabolic vertex through the peak and its neighbors. Skipped on the
    // search boundary and when the three points are not concave, so the
    // integer estimate is never degraded.
    const auto bi = static_cast<std::size_t>(best_s - search_lo);
    if (bi > 0 && bi < lags) {
        const double cm = cs[bi - 1];
        const double cp = cs[bi + 1];
        const double den = cm + cp - 2.0 * best;
        if (den < 0.0) {
            const double frac = std::clamp((cm - cp) / (2.0 * den), -0.5, 0.5);
            est.delta_fine = best_s + frac;
        }
    }
    return est;
}

ShiftEstimate xcorr_shift(std::span<const std::int16_t> prev,
                          std::span<const std::int16_t> next, long center_u, int search_lo,
                          int search_hi, const TrackParams& params) {
    const int f = params.interp_factor;
    const long w = params.half_window_w;
    const auto ref_seg = make_segment(prev, floor_div(center_u - w, f) - 4,
                                      ceil_div(center_u + w, f) + 4, f);
    const auto cmp_seg = make_segment(next, floor_div(center_u - w + search_lo, f) - 4,
                                      ceil_div(center_u + w + search_hi, f) + 4, f);
    const auto ref = ref_seg.window(center_u - w, static_cast<std::size_t>(2 * w));
    const auto cmp = cmp_seg.window(
        center_u - w + search_lo,
        static_cast<std::size_t>(2 * w + (search_hi - search_lo)));
    return xcorr_shift(ref, cmp, search_lo, search_hi);
}

long envelope_peak_near(std::span<const std::int16_t> frame, long center_u, long span_u,
                        int interp_factor) {
    const int f = interp_factor;
    const long last_raw = static_cast<long>(frame.size()) - 1;
    long raw_lo = floor_div(center_u - span_u, f) - 28;
    long raw_hi = ceil_div(center_u + span_u, f) + 28;
    // Prefer a power-of-two segment so the envelope takes the radix-2 path.
    {
        const auto need = static_cast<std::size_t>(std::max(raw_hi - raw_lo + 1, 2L));
        const long grow = static_cast<long>(next_pow2(need) - need);
        raw_lo -= grow / 2;
        raw_hi += grow - grow / 2;
    }
    raw_lo = std::clamp(raw_lo, 0L, last_raw);
    raw_hi = std::clamp(raw_hi, 0L, last_raw);
    if (raw_hi - raw_lo < 2) return std::clamp(center_u, 0L, last_raw * f);

    std::vector<double> y(static_cast<std::size_t>(raw_hi - raw_lo + 1));
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = static_cast<double>(frame[static_cast<std::size_t>(raw_lo) + i]);
    const auto env = detail::analytic_envelope(y);

    const long lo_allowed =
        std::clamp(ceil_div(center_u - span_u, f), raw_lo, raw_hi) - raw_lo;
    const long hi_allowed =
        std::clamp(floor_div(center_u + span_u, f), raw_lo, raw_hi) - raw_lo;
    if (hi_allowed < lo_allowed) return std::clamp(center_u, 0L, last_raw * f);

    long best_r = lo_allowed;
    for (long i = lo_allowed; i <= hi_allowed; ++i) {
        if (env[static_cast<std::size_t>(i)] > env[static_cast<std::size_t>(best_r)]) best_r = i;
    }

    // Sub-sample refinement: spline the envelope around the raw argmax and
    // pick the best interpolated position within one raw sample.
    const auto m = detail::spline_second_derivs(env);
    long best_u = (raw_lo + best_r) * f;
    double best_v = env[static_cast<std::size_t>(best_r)];
    for (long j = -f; j <= f; ++j) {
        const double pos = static_cast<double>(best_r) + static_cast<double>(j) / f;
        if (pos < 0.0 || pos > static_cast<double>(env.size() - 1)) continue;
        const double v = detail::spline_eval(env, m, pos);
        if (v > best_v) {
            best_v = v;
            best_u = (raw_lo + best_r) * f + j;
        }
    }
    return std::clamp(best_u, center_u - span_u, center_u + span_u);
}

WallRegion identify_walls(FrameSource& source, int channel, const TrackParams& params) {
    if (source.ticks() <= 0) throw Error("unexpected end of stream");
    const auto& h = source.header();
    const Geometry geom = Geometry::from_header(h, params.interp_factor);
    const auto n = static_cast<std::size_t>(h.samples_per_frame);
    const auto navg = static_cast<int>(std::min<std::int64_t>(params.id_frames, source.ticks()));

    std::vector<double> acc(n, 0.0);
    std::vector<double> y(n);
    for (int t = 0; t < navg; ++t) {
        const auto fr = source.frame(t, channel);
        for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<double>(fr[i]);
        const auto env = detail::analytic_envelope(y);
        for (std::size_t i = 0; i < n; ++i) acc[i] += env[i];
    }
    for (double& v : acc) v /= navg;

    const long noise_hi = std::clamp<long>(
        static_cast<long>(geom.raw_index_at_depth(params.snr_noise_depth_mm * 1e-3)), 0,
        static_cast<long>(n));
    const long margin = 28;
    const long lo = std::min<long>(noise_hi + margin, static_cast<long>(n) - 1);
    const long hi = std::max<long>(static_cast<long>(n) - 1 - margin, lo);

    double noise_env = 0.0;
    if (noise_hi > 0) {
        for (long i = 0; i < noise_hi; ++i) noise_env += acc[static_cast<std::size_t>(i)];
        noise_env /= static_cast<double>(noise_hi);
    }

    auto argmax_in = [&](long a, long b, std::span<const double> v) {
        long best = a;
        for (long i = a; i <= b; ++i)
            if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
        return best;
    };

    std::vector<double> work(acc);
    const long r1 = argmax_in(lo, hi, work);
    const double a1 = work[static_cast<std::size_t>(r1)];
    if (noise_hi > 0 && a1 < 4.5 * noise_env) throw Error("no artery found");

    const auto excl = static_cast<long>(
        std::ceil(geom.raw_index_at_depth(params.min_separation_mm * 1e-3) -
                  geom.raw_index_at_depth(0.0)));
    for (long i = std::max(lo, r1 - excl); i <= std::min(hi, r1 + excl); ++i)
        work[static_cast<std::size_t>(i)] = 0.0;
    const long r2 = argmax_in(lo, hi, work);
    const double a2 = work[static_cast<std::size_t>(r2)];
    if (r2 == r1 || a2 < params.min_peak_ratio * a1 ||
        (noise_hi > 0 && a2 < 4.5 * noise_env))
        throw Error("no artery found");

    // Refine both peaks to interpolated resolution on the averaged envelope.
    const auto m = detail::spline_second_derivs(acc);
    auto refine = [&](long r) {
        long best_u = r * params.interp_factor;
        double best_v = acc[static_cast<std::size_t>(r)];
        for (long j = -params.interp_factor; j <= params.interp_factor; ++j) {
            const double pos = static_cast<double>(r) + static_cast<double>(j) / params.interp_factor;
            if (pos < 0.0 || pos > static_cast<double>(n - 1)) continue;
            const double v = detail::spline_eval(acc, m, pos);
            if (v > best_v) {
                best_v = v;
                best_u = r * params.interp_factor + j;
            }
        }
        return best_u;
    };

    WallRegion region;
    region.channel = channel;
    region.anterior_center_u = refine(std::min(r1, r2));
    region.posterior_center_u = refine(std::max(r1, r2));
    region.half_window_w = params.half_window_w;

    // Windows must fit inside the frame with room for interpolation margins.
    const long limit = static_cast<long>(n - 1) * params.interp_factor;
    const long w_margin = params.half_window_w + (params.wide_halfspan + 5) * params.interp_factor;
    if (region.anterior_center_u - w_margin < 0 || region.posterior_center_u + w_margin > limit)
        throw Error("no artery found");

    double snr_acc = 0.0;
    for (int t = 0; t < navg; ++t) {
        snr_acc += snr_db(source.frame(t, channel), region, geom, params);
    }
    region.snr_db = snr_acc / navg;
    if (region.snr_db < params.snr_gate_db - 1e-9) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "SNR gate failed: channel %d at %.1f dB", channel,
                      region.snr_db);
        throw Error(msg);
    }
    return region;
}

double snr_db(std::span<const std::int16_t> frame, const WallRegion& region,
              const Geometry& geom, const TrackParams& params) {
    const long n = static_cast<long>(frame.size());
    const long noise_hi = std::clamp<long>(
        static_cast<long>(geom.raw_index_at_depth(params.snr_noise_depth_mm * 1e-3)), 0, n);
    if (noise_hi <= 0) throw Error("degenerate noise reference zone");

    double noise = 0.0;
    for (long i = 0; i < noise_hi; ++i)
        noise += std::abs(static_cast<double>(frame[static_cast<std::size_t>(i)]));
    noise /= static_cast<double>(noise_hi);

    const int f = geom.interp_factor;
    double echo = 0.0;
    long count = 0;
    for (long u : {region.anterior_center_u, region.posterior_center_u}) {
        const long a = std::clamp(floor_div(u - region.half_window_w, f), 0L, n - 1);
        const long b = std::clamp(ceil_div(u + region.half_window_w, f), 0L, n - 1);
        for (long i = a; i <= b; ++i) {
            echo += std::abs(static_cast<double>(frame[static_cast<std::size_t>(i)]));
            ++count;
        }
    }
    if (count == 0) throw Error("degenerate wall window");
    echo /= static_cast<double>(count);

    if (noise == 0.0) return std::numeric_limits<double>::infinity();
    if (echo == 0.0) return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(echo / noise);
}

WallTracker::WallTracker(const Geometry& geom, const TrackParams& params, long center_u)
    : geom_(geom), params_(params), center_u_(center_u) {}

ShiftEstimate WallTracker::step(std::span<const std::int16_t> prev,
                                std::span<const std::int16_t> next, double dt_s) {
    const int f = params_.interp_factor;
    // The epsilon keeps the bound at exactly 15 samples/frame for the default
    // geometry instead of rounding the representation error up to 16.
    const auto bound = std::max<long>(
        1, static_cast<long>(
               std::ceil(params_.max_wall_speed_mps * dt_s / geom_.m_per_interp() - 1e-9)));
    const auto scale = std::max<long>(1, std::llround(dt_s * geom_.prf_hz));
    const int narrow = static_cast<int>(params_.narrow_halfspan * scale);
    const int wide = static_cast<int>(params_.wide_halfspan * scale);

    if (prev_peak_u_ < 0) {
        prev_peak_u_ = envelope_peak_near(prev, center_u_, params_.half_window_w, f);
    }
    const long next_peak = envelope_peak_near(next, prev_peak_u_, bound + 2 * f, f);
    const long dp = next_peak - prev_peak_u_;

    ShiftEstimate est;
    bool need_wide = std::labs(dp) > bound;
    if (!need_wide) {
        est = xcorr_shift(prev, next, center_u_, static_cast<int>(dp) - narrow,
                          static_cast<int>(dp) + narrow, params_);
        // A best match on the edge of the narrow span means the guess missed.
        if (est.delta == est.search_lo || est.delta == est.search_hi) need_wide = true;
    }
    if (need_wide) {
        est = xcorr_shift(prev, next, center_u_, -wide, wide, params_);
        est.fallback_used = true;
        ++fallback_count_;
    }

    center_u_ += est.delta;
    accumulated_u_ += est.delta;
    prev_peak_u_ = next_peak;
    return est;
}

void WallTracker::reanchor(std::span<const std::int16_t> frame) {
    center_u_ = envelope_peak_near(frame, center_u_, params_.half_window_w,
                                   params_.interp_factor);
    prev_peak_u_ = -1;
}

PeakTrack track_peak(FrameSource& source, const WallRegion& region, WallSide side,
                     std::int64_t first_tick, std::int64_t last_tick, int decim,
                     const TrackParams& params) {
    if (decim < 1 || first_tick < 0 || last_tick >= source.ticks() || first_tick > last_tick)
        throw Error("bad frame range");
    const Geometry geom = Geometry::from_header(source.header(), params.interp_factor);
    const int f = params.interp_factor;
    const double dt = decim / geom.prf_hz;
    const auto bound = std::max<long>(
        1, static_cast<long>(
               std::ceil(params.max_wall_speed_mps * dt / geom.m_per_interp() - 1e-9)));

    PeakTrack out;
    long prev = envelope_peak_near(
        source.frame(first_tick, region.channel),
        side == WallSide::anterior ? region.anterior_center_u : region.posterior_center_u,
        params.half_window_w, f);
    out.peak_u.push_back(prev);
    for (std::int64_t t = first_tick + decim; t <= last_tick; t += decim) {
        // Search wide enough that genuine slips land outside the bound
        // instead of being clipped back into it.
        const long span = std::max(bound + 2 * f, static_cast<long>(params.wide_halfspan) + f);
        const long next = envelope_peak_near(source.frame(t, region.channel), prev, span, f);
        out.delta_p.push_back(static_cast<int>(next - prev));
        out.peak_u.push_back(next);
        out.fallback.push_back(std::labs(next - prev) > bound);
        prev = next;
    }
    return out;
}

TrackedWindow track_window(FrameSource& source, const WallRegion& region,
                           std::int64_t first_tick, std::int64_t last_tick, int decim,
                           const TrackParams& params, bool reanchor_at_start) {
    if (decim < 1 || first_tick < 0 || last_tick >= source.ticks() || first_tick > last_tick)
        throw Error("bad frame range");
    const Geometry geom = Geometry::from_header(source.header(), params.interp_factor);
    const double dt = decim / geom.prf_hz;
    const double mm_per_u = geom.m_per_interp() * 1e3;

    WallTracker ant(geom, params, region.anterior_center_u);
    WallTracker post(geom, params, region.posterior_center_u);

    TrackedWindow out;
    out.distension_mm.rate_hz = geom.prf_hz / decim;
    out.distension_mm.t0_s = static_cast<double>(first_tick) / geom.prf_hz;
    out.distension_mm.values.push_back(0.0);

    const auto first = source.frame(first_tick, region.channel);
    std::vector<std::int16_t> prev(first.begin(), first.end());
    if (reanchor_at_start) {
        ant.reanchor(prev);
        post.reanchor(prev);
    }

    double acc = 0.0;
    for (std::int64_t t = first_tick + decim; t <= last_tick; t += decim) {
        const auto cur = source.frame(t, region.channel);
        const auto ea = ant.step(prev, cur, dt);
        const auto ep = post.step(prev, cur, dt);
        acc += ep.delta_fine - ea.delta_fine;
        out.anterior.push_back(ea);
        out.posterior.push_back(ep);
        out.distension_mm.values.push_back(acc * mm_per_u);
        prev.assign(cur.begin(), cur.end());
    }
    return out;
}

SampledSeries distension_series(FrameSource& source, const WallRegion& region, double rate_hz,
                                const TrackParams& params,
                                std::span<const double> reanchor_times_s) {
    if (source.ticks() <= 0) throw Error("unexpected end of stream");
    const Geometry geom = Geometry::from_header(source.header(), params.interp_factor);
    if (rate_hz <= 0.0) throw Error("target rate must be positive");
    const auto decim = std::max<std::int64_t>(1, std::llround(geom.prf_hz / rate_hz));
    const double dt = static_cast<double>(decim) / geom.prf_hz;
    const double mm_per_u = geom.m_per_interp() * 1e3;

    WallTracker ant(geom, params, region.anterior_center_u);
    WallTracker post(geom, params, region.posterior_center_u);

    SampledSeries out;
    out.rate_hz = geom.prf_hz / static_cast<double>(decim);
    out.t0_s = 0.0;
    out.values.push_back(0.0);

    const auto first = source.frame(0, region.channel);
    std::vector<std::int16_t> prev(first.begin(), first.end());

    std::size_t next_anchor = 0;
    double acc = 0.0;
    for (std::int64_t t = decim; t < source.ticks(); t += decim) {
        const auto cur = source.frame(t, region.channel);
        const auto ea = ant.step(prev, cur, dt);
        const auto ep = post.step(prev, cur, dt);
        acc += ep.delta_fine - ea.delta_fine;
        out.values.push_back(acc * mm_per_u);
        prev.assign(cur.begin(), cur.end());
        const double now = static_cast<double>(t) / geom.prf_hz;
        while (next_anchor < reanchor_times_s.size() && reanchor_times_s[next_anchor] <= now) {
            ant.reanchor(prev);
            post.reanchor(prev);
            ++next_anchor;
        }
    }
    return out;
}

}  // namespace upwave
