#include "upwave/pressure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "upwave/errors.hpp"
#include "upwave/signal_ops.hpp"

namespace upwave {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Envelope of the raw samples covering one wall window, upsampled to
// interpolated resolution. Returns the envelope plus the interp index of its
// first sample, so positions stay in frame coordinates.
struct WindowEnvelope {
    std::vector<double> env;  // one value per interpolated sample
    long first_u = 0;         // interp index of env[0]
};

WindowEnvelope window_envelope(std::span<const int16_t> frame, long center_u, int half_w,
                               int f) {
    const long margin_raw = 8;
    long lo_raw = (center_u - half_w) / f - margin_raw;
    long hi_raw = (center_u + half_w) / f + 1 + margin_raw;
    if (lo_raw < 0 || hi_raw >= static_cast<long>(frame.size()))
        throw Error("track window out of range");

    SampledSeries seg;
    seg.rate_hz = 1.0;
    seg.values.assign(frame.begin() + lo_raw, frame.begin() + hi_raw + 1);
    SampledSeries env = envelope(seg);
    SampledSeries up = interp_spline(env, f);

    WindowEnvelope out;
    out.env = std::move(up.values);
    out.first_u = lo_raw * f;
    return out;
}

// Leading (shallow-side) edge of one wall echo: from the wall's envelope peak
// inside its window, walk back toward the transducer until the envelope drops
// below the threshold, then interpolate the crossing linearly.
double leading_edge_u(const WindowEnvelope& we, long center_u, int half_w,
                      double threshold) {
    long lo = center_u - half_w - we.first_u;
    long hi = center_u + half_w - we.first_u;
    lo = std::max<long>(lo, 0);
    hi = std::min<long>(hi, static_cast<long>(we.env.size()) - 1);
    if (lo > hi) throw Error("track window out of range");

    long peak = lo;
    for (long j = lo; j <= hi; ++j)
        if (we.env[j] > we.env[peak]) peak = j;
    if (we.env[peak] < threshold) throw Error("leading edge threshold never crossed");

    long j = peak;
    while (j > lo && we.env[j - 1] >= threshold) --j;
    // Walking back stopped at the window start with the envelope still above
    // the threshold: the edge lies outside the window, so there is no
    // credible crossing to report.
    if (j == lo) throw Error("leading edge threshold never crossed");
    double frac = 1.0;
    if (we.env[j] > we.env[j - 1])
        frac = std::clamp((threshold - we.env[j - 1]) / (we.env[j] - we.env[j - 1]), 0.0, 1.0);
    return static_cast<double>(j - 1) + frac + static_cast<double>(we.first_u);
}

double bramwell_hill_gain_pa(double pwv_mps, double rho_kg_m3) {
    if (!(pwv_mps > 0.0)) throw Error("non-positive wave speed");
    if (!(rho_kg_m3 > 0.0)) throw Error("non-positive density");
    return 2.0 * rho_kg_m3 * pwv_mps * pwv_mps;
}

}  // namespace

double end_diastolic_diameter(std::span<const int16_t> frame, const WallRegion& region,
                              const Geometry& geom, double threshold_frac) {
    if (!(threshold_frac > 0.0) || threshold_frac >= 1.0)
        throw Error("edge threshold must lie in (0, 1)");
    const int f = geom.interp_factor;
    WindowEnvelope ant = window_envelope(frame, region.anterior_center_u,
                                         region.half_window_w, f);
    WindowEnvelope post = window_envelope(frame, region.posterior_center_u,
                                          region.half_window_w, f);

    auto window_peak = [&](const WindowEnvelope& we, long center_u) {
        long lo = std::max<long>(center_u - region.half_window_w - we.first_u, 0);
        long hi = std::min<long>(center_u + region.half_window_w - we.first_u,
                                 static_cast<long>(we.env.size()) - 1);
        double best = 0.0;
        for (long j = lo; j <= hi; ++j) best = std::max(best, we.env[j]);
        return best;
    };
    // One shared threshold referenced to the stronger wall, so a weaker echo
    // that never reaches it is reported instead of silently mis-measured.
    double peak = std::max(window_peak(ant, region.anterior_center_u),
                           window_peak(post, region.posterior_center_u));
    if (!(peak > 0.0)) throw Error("leading edge threshold never crossed");
    double threshold = threshold_frac * peak;

    double ant_edge = leading_edge_u(ant, region.anterior_center_u, region.half_window_w,
                                     threshold);
    double post_edge = leading_edge_u(post, region.posterior_center_u,
                                      region.half_window_w, threshold);
    double d_m = (post_edge - ant_edge) * geom.m_per_interp();
    if (!(d_m > 0.0)) throw Error("inverted wall geometry");
    return d_m * 1000.0;
}

DiameterWaveform diameter_waveform(const SampledSeries& distension_mm, double d0_mm,
                                   double anchor_time_s,
                                   std::vector<double> beat_onsets_s) {
    if (distension_mm.empty()) throw Error("empty series");
    if (!(d0_mm > 0.0)) throw Error("non-positive diameter");
    double pos = (anchor_time_s - distension_mm.t0_s) * distension_mm.rate_hz;
    auto idx = static_cast<std::int64_t>(std::llround(pos));
    if (idx < 0 || idx >= static_cast<std::int64_t>(distension_mm.size()))
        throw Error("anchor time outside series");

    DiameterWaveform out;
    out.series_mm = distension_mm;
    const double base = distension_mm.values[static_cast<std::size_t>(idx)];
    for (double& v : out.series_mm.values) v = d0_mm + (v - base);
    out.d0_mm = d0_mm;
    out.beat_onsets_s = std::move(beat_onsets_s);
    return out;
}

PressureWaveform pressure_from_diameter(const DiameterWaveform& d, double dbp_mmHg,
                                        double pwv_mps, double rho_kg_m3) {
    if (d.series_mm.empty()) throw Error("empty series");
    if (!(d.d0_mm > 0.0)) throw Error("non-positive diameter");
    const double gain = bramwell_hill_gain_pa(pwv_mps, rho_kg_m3) / kMmHgToPa;

    PressureWaveform out;
    out.series_mmHg.rate_hz = d.series_mm.rate_hz;
    out.series_mmHg.t0_s = d.series_mm.t0_s;
    out.series_mmHg.values.reserve(d.series_mm.size());
    for (double v : d.series_mm.values) {
        if (!(v > 0.0)) throw Error("non-positive diameter");
        out.series_mmHg.values.push_back(dbp_mmHg + gain * std::log(v / d.d0_mm));
    }
    out.dbp_input_mmHg = dbp_mmHg;
    out.pwv_used_mps = pwv_mps;
    out.rho_kg_m3 = rho_kg_m3;
    out.beat_onsets_s = d.beat_onsets_s;
    return out;
}

double diameter_at_pressure(double pressure_mmHg, double d0_mm, double dbp_mmHg,
                            double pwv_mps, double rho_kg_m3) {
    if (!(d0_mm > 0.0)) throw Error("non-positive diameter");
    const double gain = bramwell_hill_gain_pa(pwv_mps, rho_kg_m3);
    return d0_mm * std::exp((pressure_mmHg - dbp_mmHg) * kMmHgToPa / gain);
}

double pulse_pressure(double ds_mm, double dd_mm, double pwv_mps, double rho_kg_m3) {
    if (!(dd_mm > 0.0)) throw Error("non-positive diameter");
    if (ds_mm < dd_mm) throw Error("inverted systole");
    const double gain = bramwell_hill_gain_pa(pwv_mps, rho_kg_m3);
    return gain * std::log(ds_mm / dd_mm) / kMmHgToPa;
}

namespace {

std::vector<BeatRecord> beat_metrics_impl(const PressureWaveform& p,
                                          const DiameterWaveform* d) {
    if (p.series_mmHg.empty()) throw Error("empty series");
    if (p.beat_onsets_s.size() < 2) throw Error("insufficient beats");
    if (d && (d->series_mm.size() != p.series_mmHg.size() ||
              d->series_mm.rate_hz != p.series_mmHg.rate_hz))
        throw Error("pressure and diameter grids differ");

    const auto& s = p.series_mmHg;
    const auto n = static_cast<std::int64_t>(s.size());
    std::vector<BeatRecord> beats;
    for (std::size_t b = 0; b + 1 < p.beat_onsets_s.size(); ++b) {
        auto i0 = static_cast<std::int64_t>(
            std::llround((p.beat_onsets_s[b] - s.t0_s) * s.rate_hz));
        auto i1 = static_cast<std::int64_t>(
            std::llround((p.beat_onsets_s[b + 1] - s.t0_s) * s.rate_hz));
        i0 = std::clamp<std::int64_t>(i0, 0, n);
        i1 = std::clamp<std::int64_t>(i1, 0, n);
        if (i1 - i0 < 2) continue;

        BeatRecord r;
        r.onset_s = p.beat_onsets_s[b];
        double mn = std::numeric_limits<double>::infinity();
        double mx = -mn;
        double acc = 0.0;
        for (std::int64_t i = i0; i < i1; ++i) {
            double v = s.values[static_cast<std::size_t>(i)];
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            acc += v;
        }
        r.dbp_mmHg = mn;
        r.sbp_mmHg = mx;
        r.map_mmHg = acc / static_cast<double>(i1 - i0);
        r.pp_mmHg = mx - mn;
        if (r.pp_mmHg > 1e-9) {
            r.ff = (r.map_mmHg - r.dbp_mmHg) / r.pp_mmHg;
            r.ff_valid = true;
        }
        if (d) {
            double dmn = std::numeric_limits<double>::infinity();
            double dmx = -dmn;
            for (std::int64_t i = i0; i < i1; ++i) {
                double v = d->series_mm.values[static_cast<std::size_t>(i)];
                dmn = std::min(dmn, v);
                dmx = std::max(dmx, v);
            }
            r.dd_mm = dmn;
            r.ds_mm = dmx;
        } else {
            r.dd_mm = std::numeric_limits<double>::quiet_NaN();
            r.ds_mm = std::numeric_limits<double>::quiet_NaN();
        }
        beats.push_back(r);
    }
    return beats;
}

}  // namespace

std::vector<BeatRecord> beat_metrics(const PressureWaveform& p) {
    return beat_metrics_impl(p, nullptr);
}

std::vector<BeatRecord> beat_metrics(const PressureWaveform& p, const DiameterWaveform& d) {
    return beat_metrics_impl(p, &d);
}

StiffnessIndices stiffness_indices(double ds_mm, double dd_mm, double pp_mmHg) {
    if (!(dd_mm > 0.0)) throw Error("non-positive diameter");
    if (ds_mm < dd_mm) throw Error("inverted systole");
    if (!(pp_mmHg > 0.0)) throw Error("non-positive pulse pressure");
    const double dd = ds_mm - dd_mm;
    if (!(dd > 0.0)) throw Error("zero distension");
    StiffnessIndices out;
    out.ep_mmHg = pp_mmHg * dd_mm / dd;
    out.ac_mm2_per_mmHg = kPi / 4.0 * (ds_mm * ds_mm - dd_mm * dd_mm) / pp_mmHg;
    return out;
}

double transform_reference_pp(double pp_fin_mmHg, double ff_c, double ff_fin) {
    if (!(ff_fin > 0.0)) throw Error("non-positive form factor");
    if (!(ff_c > 0.0)) throw Error("non-positive form factor");
    return pp_fin_mmHg * (ff_c / ff_fin);
}

}  // namespace upwave
