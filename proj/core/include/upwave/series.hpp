#pragma once

#include <cstddef>
#include <vector>

namespace upwave {

/// Uniformly sampled real-valued signal. `t0_s` is the absolute time of
/// values[0]; sample i sits at t0_s + i / rate_hz.
struct SampledSeries {
    std::vector<double> values;
    double rate_hz = 0.0;
    double t0_s = 0.0;

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    double time_at(std::size_t i) const { return t0_s + static_cast<double>(i) / rate_hz; }
    double duration_s() const {
        return values.empty() ? 0.0 : static_cast<double>(values.size() - 1) / rate_hz;
    }
};

}  // namespace upwave
