#pragma once

#include <span>
#include <vector>

#include "upwave/series.hpp"

namespace upwave {

enum class Alignment {
    first_cycle_minimum,  // shift measured in time so first-beat minima coincide
    none,
};

// Agreement statistics over paired per-beat values.
struct BlandAltman {
    double mean_diff = 0.0;
    double sd_diff = 0.0;   // sample standard deviation of the differences
    double loa_low = 0.0;   // mean_diff - 1.96 sd_diff
    double loa_high = 0.0;  // mean_diff + 1.96 sd_diff
    double pct_within = 0.0;  // percent of pairs inside the limits
};

// One side of a comparison: the waveform plus optional per-beat annotations.
// Missing onsets are detected from the waveform; missing per-beat values are
// derived from it (swing = max - min per beat, mean = beat time average).
struct EvalSeries {
    SampledSeries series;
    std::vector<double> beat_onsets_s;
    std::vector<double> beat_swing;  // feeds mae / sd_of_error
    std::vector<double> beat_mean;   // feeds the Bland-Altman block
};

struct EvalReport {
    double rmse = 0.0;         // over the resampled common grid
    double pearson_r = 0.0;    // over the resampled common grid
    double mae = 0.0;          // mean |per-beat swing difference|
    double sd_of_error = 0.0;  // sd of those absolute differences
    BlandAltman bland_altman;  // over signed per-beat mean differences
    int n_beat_pairs = 0;
    int n_grid = 0;
    double time_shift_s = 0.0;  // shift applied to the measured series
};

// mean/sd/limits of agreement of a_i - b_i. Throws when fewer than two pairs.
BlandAltman bland_altman_stats(std::span<const double> a, std::span<const double> b);

// Compares a measured waveform against a reference: optional first-cycle
// minimum time alignment, both series resampled onto their common support at
// the coarser rate, RMSE and Pearson r on that grid, and per-beat agreement
// (MAE, Bland-Altman) over onset-matched beats. Throws when fewer than two
// beats overlap.
EvalReport evaluate(const EvalSeries& measured, const EvalSeries& reference,
                    Alignment alignment = Alignment::first_cycle_minimum);

}  // namespace upwave
