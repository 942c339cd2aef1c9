#include "upwave/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "spline.hpp"
#include "upwave/errors.hpp"
#include "upwave/pwv.hpp"

namespace upwave {

namespace {

struct BeatAnnotations {
    std::vector<double> onsets_s;
    std::vector<double> swing;  // one per complete beat (onsets - 1)
    std::vector<double> mean;
};

BeatAnnotations annotate(const EvalSeries& in) {
    if (in.series.empty()) throw Error("empty series");
    BeatAnnotations out;
    out.onsets_s = in.beat_onsets_s;
    if (out.onsets_s.empty()) {
        for (std::size_t idx : detect_beat_feet(in.series))
            out.onsets_s.push_back(in.series.time_at(idx));
    }
    if (out.onsets_s.size() < 2) throw Error("fewer than 2 overlapping beats");

    const std::size_t n_beats = out.onsets_s.size() - 1;
    const bool have_swing = in.beat_swing.size() == n_beats;
    const bool have_mean = in.beat_mean.size() == n_beats;
    out.swing = have_swing ? in.beat_swing : std::vector<double>();
    out.mean = have_mean ? in.beat_mean : std::vector<double>();
    if (have_swing && have_mean) return out;

    const auto& s = in.series;
    const auto n = static_cast<std::int64_t>(s.size());
    std::vector<double> swing, mean;
    for (std::size_t b = 0; b < n_beats; ++b) {
        auto i0 = static_cast<std::int64_t>(std::llround((out.onsets_s[b] - s.t0_s) * s.rate_hz));
        auto i1 = static_cast<std::int64_t>(
            std::llround((out.onsets_s[b + 1] - s.t0_s) * s.rate_hz));
        i0 = std::clamp<std::int64_t>(i0, 0, n);
        i1 = std::clamp<std::int64_t>(i1, 0, n);
        if (i1 - i0 < 2) {
            swing.push_back(std::numeric_limits<double>::quiet_NaN());
            mean.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double mn = std::numeric_limits<double>::infinity();
        double mx = -mn;
        double acc = 0.0;
        for (std::int64_t i = i0; i < i1; ++i) {
            double v = s.values[static_cast<std::size_t>(i)];
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            acc += v;
        }
        swing.push_back(mx - mn);
        mean.push_back(acc / static_cast<double>(i1 - i0));
    }
    if (!have_swing) out.swing = std::move(swing);
    if (!have_mean) out.mean = std::move(mean);
    return out;
}

// Minimum of the first complete beat, excluding the tail so the next beat's
// foot can never win and skew the alignment by a whole period.
double first_cycle_minimum_time(const SampledSeries& s, const std::vector<double>& onsets_s) {
    const double t_lo = onsets_s[0];
    const double t_hi = onsets_s[0] + 0.9 * (onsets_s[1] - onsets_s[0]);
    auto i0 = static_cast<std::int64_t>(std::llround((t_lo - s.t0_s) * s.rate_hz));
    auto i1 = static_cast<std::int64_t>(std::llround((t_hi - s.t0_s) * s.rate_hz));
    i0 = std::clamp<std::int64_t>(i0, 0, static_cast<std::int64_t>(s.size()) - 1);
    i1 = std::clamp<std::int64_t>(i1, 0, static_cast<std::int64_t>(s.size()) - 1);
    std::int64_t best = i0;
    for (std::int64_t i = i0; i <= i1; ++i)
        if (s.values[static_cast<std::size_t>(i)] < s.values[static_cast<std::size_t>(best)])
            best = i;
    return s.time_at(static_cast<std::size_t>(best));
}

double sample_at(const SampledSeries& s, const std::vector<double>& derivs, double t_s) {
    const double pos = (t_s - s.t0_s) * s.rate_hz;
    return detail::spline_eval(s.values, derivs, pos);
}

}  // namespace

BlandAltman bland_altman_stats(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("mismatched series");
    const std::size_t n = a.size();
    if (n < 2) throw Error("fewer than 2 overlapping beats");

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    BlandAltman out;
    out.mean_diff = mean;
    out.sd_diff = sd;
    out.loa_low = mean - 1.96 * sd;
    out.loa_high = mean + 1.96 * sd;
    std::size_t inside = 0;
    for (double v : d)
        if (v >= out.loa_low && v <= out.loa_high) ++inside;
    out.pct_within = 100.0 * static_cast<double>(inside) / static_cast<double>(n);
    return out;
}

EvalReport evaluate(const EvalSeries& measured, const EvalSeries& reference,
                    Alignment alignment) {
    BeatAnnotations m = annotate(measured);
    BeatAnnotations r = annotate(reference);

    EvalReport rep;
    if (alignment == Alignment::first_cycle_minimum) {
        rep.time_shift_s = first_cycle_minimum_time(reference.series, r.onsets_s) -
                           first_cycle_minimum_time(measured.series, m.onsets_s);
    }

    // Common support, sampled at the coarser of the two rates so the grid is
    // the same whichever series comes first.
    SampledSeries ms = measured.series;
    ms.t0_s += rep.time_shift_s;
    for (double& t : m.onsets_s) t += rep.time_shift_s;
    const SampledSeries& rs = reference.series;

    const double start = std::max(ms.t0_s, rs.t0_s);
    const double stop = std::min(ms.t0_s + ms.duration_s(), rs.t0_s + rs.duration_s());
    const double rate = std::min(ms.rate_hz, rs.rate_hz);
    if (!(stop > start)) throw Error("no overlapping support");
    const auto n_grid = static_cast<std::int64_t>(std::floor((stop - start) * rate + 1e-9)) + 1;
    if (n_grid < 2) throw Error("no overlapping support");

    const auto dm = detail::spline_second_derivs(ms.values);
    const auto dr = detail::spline_second_derivs(rs.values);
    double se = 0.0, sm = 0.0, sr = 0.0;
    std::vector<double> gm(static_cast<std::size_t>(n_grid));
    std::vector<double> gr(static_cast<std::size_t>(n_grid));
    for (std::int64_t k = 0; k < n_grid; ++k) {
        const double t = start + static_cast<double>(k) / rate;
        gm[static_cast<std::size_t>(k)] = sample_at(ms, dm, t);
        gr[static_cast<std::size_t>(k)] = sample_at(rs, dr, t);
        const double e = gm[static_cast<std::size_t>(k)] - gr[static_cast<std::size_t>(k)];
        se += e * e;
        sm += gm[static_cast<std::size_t>(k)];
        sr += gr[static_cast<std::size_t>(k)];
    }
    rep.n_grid = static_cast<int>(n_grid);
    rep.rmse = std::sqrt(se / static_cast<double>(n_grid));
    const double mm = sm / static_cast<double>(n_grid);
    const double mr = sr / static_cast<double>(n_grid);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::int64_t k = 0; k < n_grid; ++k) {
        const double a = gm[static_cast<std::size_t>(k)] - mm;
        const double b = gr[static_cast<std::size_t>(k)] - mr;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    rep.pearson_r = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;

    // Pair beats whose (aligned) onsets agree to within half a typical period.
    std::vector<double> gaps;
    for (std::size_t i = 1; i < r.onsets_s.size(); ++i)
        gaps.push_back(r.onsets_s[i] - r.onsets_s[i - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    const double tol = 0.45 * gaps[gaps.size() / 2];

    std::vector<double> pm, pr, um, ur;
    std::size_t i = 0, j = 0;
    while (i + 1 < m.onsets_s.size() && j + 1 < r.onsets_s.size()) {
        const double diff = m.onsets_s[i] - r.onsets_s[j];
        if (std::abs(diff) <= tol) {
            if (std::isfinite(m.swing[i]) && std::isfinite(r.swing[j]) &&
                std::isfinite(m.mean[i]) && std::isfinite(r.mean[j])) {
                pm.push_back(m.swing[i]);
                pr.push_back(r.swing[j]);
                um.push_back(m.mean[i]);
                ur.push_back(r.mean[j]);
            }
            ++i;
            ++j;
        } else if (diff < 0.0) {
            ++i;
        } else {
            ++j;
        }
    }
    rep.n_beat_pairs = static_cast<int>(pm.size());
    if (rep.n_beat_pairs < 2) throw Error("fewer than 2 overlapping beats");

    double acc = 0.0;
    std::vector<double> abs_err(pm.size());
    for (std::size_t k = 0; k < pm.size(); ++k) {
        abs_err[k] = std::abs(pm[k] - pr[k]);
        acc += abs_err[k];
    }
    rep.mae = acc / static_cast<double>(abs_err.size());
    double ss = 0.0;
    for (double v : abs_err) ss += (v - rep.mae) * (v - rep.mae);
    rep.sd_of_error = std::sqrt(ss / static_cast<double>(abs_err.size() - 1));
    rep.bland_altman = bland_altman_stats(um, ur);
    return rep;
}

}  // namespace upwave
