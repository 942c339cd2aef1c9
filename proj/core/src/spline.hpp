#pragma once

#include <span>
#include <vector>

namespace upwave::detail {

/// Second derivatives of the natural cubic spline through y at unit knot
/// spacing (Thomas solve of the tridiagonal system, free ends).
std::vector<double> spline_second_derivs(std::span<const double> y);

/// Evaluate the spline at fractional position pos (in sample units).
/// pos is clamped to [0, n-1]; integer positions reproduce y exactly.
double spline_eval(std::span<const double> y, std::span<const double> m, double pos);

/// Dense upsample by an integer factor; output length (n-1)*factor + 1.
std::vector<double> spline_upsample(std::span<const double> y, int factor);

}  // namespace upwave::detail
