#pragma once

#include <span>
#include <vector>

namespace upwave::detail {

/// One second-order section, direct form II transposed, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

/// Low-pass Butterworth of even order as cascaded biquads (bilinear
/// transform with frequency prewarping). order/2 sections.
std::vector<Biquad> butter_lowpass_sos(int order, double cutoff_hz, double rate_hz);

/// Forward-backward filtering through the cascade. The input is extended on
/// both ends by padlen samples of odd reflection, and each pass starts from
/// the filter's step-response steady state scaled to the first sample, so
/// constants pass through unchanged and no start-up transient leaks in.
std::vector<double> filtfilt_sos(std::span<const Biquad> sos, std::span<const double> x,
                                 int padlen);

}  // namespace upwave::detail
