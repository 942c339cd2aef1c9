#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "upwave/series.hpp"
#include "upwave/wall_track.hpp"

namespace upwave {

/// Conversion used throughout: 1 mmHg = 133.322 Pa.
inline constexpr double kMmHgToPa = 133.322;

// Absolute lumen diameter over time, anchored to an end-diastolic baseline.
struct DiameterWaveform {
    SampledSeries series_mm;            // absolute diameter, typically 200 Hz
    double d0_mm = 0.0;                 // end-diastolic anchor diameter
    std::vector<double> beat_onsets_s;  // diastolic feet, seconds from capture start
};

// Absolute pressure over time on the same grid as the diameter it came from.
struct PressureWaveform {
    SampledSeries series_mmHg;
    double dbp_input_mmHg = 0.0;
    double pwv_used_mps = 0.0;
    double rho_kg_m3 = 0.0;
    std::vector<double> beat_onsets_s;
};

// Per-beat summary over one diastole-to-diastole interval.
struct BeatRecord {
    double onset_s = 0.0;
    double dbp_mmHg = 0.0;
    double map_mmHg = 0.0;
    double sbp_mmHg = 0.0;
    double pp_mmHg = 0.0;
    double ff = 0.0;           // form factor (map - dbp) / pp
    double ds_mm = 0.0;        // systolic diameter
    double dd_mm = 0.0;        // diastolic diameter
    bool ff_valid = false;     // false when pp is too small for a meaningful ff
};

struct StiffnessIndices {
    double ep_mmHg = 0.0;      // Peterson elastic modulus
    double ac_mm2_per_mmHg = 0.0;  // area compliance
};

// Lumen diameter from a single RF frame by leading-edge detection on both wall
// echo envelopes. threshold_frac is relative to the stronger wall's envelope
// peak inside its tracking window. Throws when an edge never crosses it.
double end_diastolic_diameter(std::span<const int16_t> frame, const WallRegion& region,
                              const Geometry& geom, double threshold_frac = 0.3);

// Absolute diameter series from a relative distension series: the sample at
// anchor_time_s (nearest grid point) maps to d0_mm.
DiameterWaveform diameter_waveform(const SampledSeries& distension_mm, double d0_mm,
                                   double anchor_time_s,
                                   std::vector<double> beat_onsets_s = {});

// Pressure from diameter: p = dbp + 2 rho pwv^2 ln(d / d0) with d0 the anchor
// diameter, converted to mmHg. Throws on non-positive diameters.
PressureWaveform pressure_from_diameter(const DiameterWaveform& d, double dbp_mmHg,
                                        double pwv_mps, double rho_kg_m3 = 1060.0);

// Inverse map for round-trip checks: diameter that produces pressure_mmHg.
double diameter_at_pressure(double pressure_mmHg, double d0_mm, double dbp_mmHg,
                            double pwv_mps, double rho_kg_m3 = 1060.0);

// Pulse pressure in mmHg from systolic/diastolic diameters. Throws
// "inverted systole" when ds < dd.
double pulse_pressure(double ds_mm, double dd_mm, double pwv_mps,
                      double rho_kg_m3 = 1060.0);

// Per-beat metrics between consecutive onsets; the tail after the last onset
// is dropped. dbp = beat minimum, sbp = beat maximum, map = beat time mean.
std::vector<BeatRecord> beat_metrics(const PressureWaveform& p);
std::vector<BeatRecord> beat_metrics(const PressureWaveform& p, const DiameterWaveform& d);

// Peterson modulus and area compliance from one beat's extremes.
StiffnessIndices stiffness_indices(double ds_mm, double dd_mm, double pp_mmHg);

// Rescales a cuff pulse pressure by the ratio of carotid to cuff-site form
// factors: pp_ref = pp_fin * ff_c / ff_fin.
double transform_reference_pp(double pp_fin_mmHg, double ff_c, double ff_fin);

}  // namespace upwave
