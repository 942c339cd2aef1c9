#pragma once

#include <cstddef>

#include "upwave/series.hpp"

namespace upwave {

/// Magnitude of the analytic signal (discrete Hilbert transform at the exact
/// series length). Rate and origin are preserved.
SampledSeries envelope(const SampledSeries& s);

/// Natural cubic spline upsampling by an integer factor. Output has
/// (n-1)*factor + 1 samples at factor * rate_hz; input samples are
/// reproduced exactly at multiples of factor.
SampledSeries interp_spline(const SampledSeries& s, int factor);

/// Butterworth low-pass applied forward and backward (zero phase shift,
/// squared magnitude response). Order must be even.
SampledSeries zero_phase_lowpass(const SampledSeries& s, int order = 4,
                                 double cutoff_hz = 16.0);

/// Spline resampling onto a new uniform rate spanning the same interval.
SampledSeries resample_to(const SampledSeries& s, double target_rate_hz);

/// Index of the largest central-difference second derivative inside
/// [lo, hi] (both inclusive, clipped to the interior of the series).
std::size_t second_derivative_max(const SampledSeries& s, std::size_t lo, std::size_t hi);

}  // namespace upwave
