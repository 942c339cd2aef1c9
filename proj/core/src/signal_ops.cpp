#include "upwave/signal_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft.hpp"
#include "iir.hpp"
#include "spline.hpp"
#include "upwave/errors.hpp"

namespace upwave {

namespace detail {

std::vector<double> spline_second_derivs(std::span<const double> y) {
    const std::size_t n = y.size();
    std::vector<double> m(n, 0.0);
    if (n < 3) return m;
    // Interior rows: m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]),
    // natural ends m[0] = m[n-1] = 0. Thomas forward sweep on the interior.
    std::vector<double> diag(n, 0.0), rhs(n, 0.0);
    diag[1] = 4.0;
    rhs[1] = 6.0 * (y[2] - 2.0 * y[1] + y[0]);
    for (std::size_t i = 2; i + 1 < n; ++i) {
        const double w = 1.0 / diag[i - 1];
        diag[i] = 4.0 - w;
        rhs[i] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) - w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
        m[i] = (rhs[i] - m[i + 1]) / diag[i];
        if (i == 1) break;
    }
    return m;
}

double spline_eval(std::span<const double> y, std::span<const double> m, double pos) {
    const std::size_t n = y.size();
    if (n == 1) return y[0];
    double p = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    auto j = static_cast<std::size_t>(p);
    if (j > n - 2) j = n - 2;
    const double t = p - static_cast<double>(j);
    const double a = 1.0 - t;
    return a * y[j] + t * y[j + 1] +
           ((a * a * a - a) * m[j] + (t * t * t - t) * m[j + 1]) / 6.0;
}

std::vector<double> spline_upsample(std::span<const double> y, int factor) {
    const std::size_t n = y.size();
    const auto m = spline_second_derivs(y);
    std::vector<double> out((n - 1) * static_cast<std::size_t>(factor) + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (i % static_cast<std::size_t>(factor) == 0) {
            out[i] = y[i / static_cast<std::size_t>(factor)];  // knots are exact
        } else {
            out[i] = spline_eval(y, m, static_cast<double>(i) / factor);
        }
    }
    return out;
}

std::vector<Biquad> butter_lowpass_sos(int order, double cutoff_hz, double rate_hz) {
    if (order < 2 || order % 2 != 0) throw Error("filter order must be even and >= 2");
    if (cutoff_hz <= 0.0 || cutoff_hz >= rate_hz / 2.0)
        throw Error("filter cutoff must lie strictly below the Nyquist rate");
    const double c = 2.0 * rate_hz;
    const double w = c * std::tan(std::numbers::pi * cutoff_hz / rate_hz);  // prewarped
    std::vector<Biquad> sos;
    sos.reserve(static_cast<std::size_t>(order) / 2);
    for (int k = 0; k < order / 2; ++k) {
        const double zeta = std::sin((2.0 * k + 1.0) * std::numbers::pi / (2.0 * order));
        const double a0 = c * c + 2.0 * zeta * w * c + w * w;
        sos.push_back({w * w / a0, 2.0 * w * w / a0, w * w / a0,
                       (2.0 * w * w - 2.0 * c * c) / a0,
                       (c * c - 2.0 * zeta * w * c + w * w) / a0});
    }
    return sos;
}

namespace {

// One pass through the cascade, direct form II transposed, each section
// seeded with its steady state for a step of the section's first input.
void sos_pass(std::span<const Biquad> sos, std::vector<double>& x) {
    for (const auto& q : sos) {
        const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
        double z1 = (g - q.b0) * x[0];
        double z2 = (q.b2 - q.a2 * g) * x[0];
        for (double& v : x) {
            const double in = v;
            const double out = q.b0 * in + z1;
            z1 = q.b1 * in - q.a1 * out + z2;
            z2 = q.b2 * in - q.a2 * out;
            v = out;
        }
    }
}

}  // namespace

std::vector<double> filtfilt_sos(std::span<const Biquad> sos, std::span<const double> x,
                                 int padlen) {
    const std::size_t n = x.size();
    const auto p = static_cast<std::size_t>(padlen);
    if (n <= p) throw Error("series too short for zero-phase filter");
    std::vector<double> ext(n + 2 * p);
    for (std::size_t i = 0; i < p; ++i) ext[i] = 2.0 * x[0] - x[p - i];
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(p));
    for (std::size_t i = 0; i < p; ++i) ext[p + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    sos_pass(sos, ext);
    std::reverse(ext.begin(), ext.end());
    sos_pass(sos, ext);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + static_cast<std::ptrdiff_t>(p),
            ext.begin() + static_cast<std::ptrdiff_t>(p + n)};
}

}  // namespace detail

SampledSeries envelope(const SampledSeries& s) {
    if (s.empty()) throw Error("empty series");
    SampledSeries out{detail::analytic_envelope(s.values), s.rate_hz, s.t0_s};
    return out;
}

SampledSeries interp_spline(const SampledSeries& s, int factor) {
    if (s.empty()) throw Error("empty series");
    if (factor < 1) throw Error("interpolation factor must be >= 1");
    if (factor == 1) {
        return {s.values, s.rate_hz * factor, s.t0_s};
    }
    if (s.size() < 4) throw Error("series too short for spline interpolation");
    return {detail::spline_upsample(s.values, factor), s.rate_hz * factor, s.t0_s};
}

SampledSeries zero_phase_lowpass(const SampledSeries& s, int order, double cutoff_hz) {
    if (s.empty()) throw Error("empty series");
    const auto sos = detail::butter_lowpass_sos(order, cutoff_hz, s.rate_hz);
    return {detail::filtfilt_sos(sos, s.values, 3 * order), s.rate_hz, s.t0_s};
}

SampledSeries resample_to(const SampledSeries& s, double target_rate_hz) {
    if (s.empty()) throw Error("empty series");
    if (target_rate_hz <= 0.0) throw Error("target rate must be positive");
    if (s.size() == 1) return {s.values, target_rate_hz, s.t0_s};
    const std::size_t n = s.size();
    const double ratio = s.rate_hz / target_rate_hz;
    const auto n_out = static_cast<std::size_t>(
        std::llround(static_cast<double>(n - 1) / ratio)) + 1;
    const auto m = detail::spline_second_derivs(s.values);
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        out[i] = detail::spline_eval(s.values, m, static_cast<double>(i) * ratio);
    }
    return {std::move(out), target_rate_hz, s.t0_s};
}

std::size_t second_derivative_max(const SampledSeries& s, std::size_t lo, std::size_t hi) {
    if (s.size() < 3) throw Error("series too short for curvature search");
    const std::size_t first = std::max<std::size_t>(lo, 1);
    const std::size_t last = std::min(hi, s.size() - 2);
    if (first > last) throw Error("curvature window has no interior samples");
    std::size_t best = first;
    double best_v = -1e300;
    for (std::size_t i = first; i <= last; ++i) {
        const double d2 = s.values[i + 1] - 2.0 * s.values[i] + s.values[i - 1];
        if (d2 > best_v) {
            best_v = d2;
            best = i;
        }
    }
    return best;
}

}  // namespace upwave
