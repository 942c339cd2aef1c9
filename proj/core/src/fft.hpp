#pragma once

#include <complex>
#include <span>
#include <vector>

namespace upwave::detail {

/// In-place DFT, any length n >= 1. Radix-2 for powers of two, Bluestein
/// chirp-z otherwise. inverse=true applies the conjugate transform and 1/n.
void fft(std::vector<std::complex<double>>& a, bool inverse);

/// Magnitude of the analytic signal of x, computed with an exact length-n
/// discrete Hilbert transform (no padding, so no wrap-around bias).
std::vector<double> analytic_envelope(std::span<const double> x);

}  // namespace upwave::detail
