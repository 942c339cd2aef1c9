#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "upwave/evaluate.hpp"
#include "upwave/pressure.hpp"
#include "upwave/pwv.hpp"
#include "upwave/rf_stream.hpp"
#include "upwave/wall_track.hpp"

namespace upwave {

struct SessionConfig {
    double dbp_input_mmHg = 0.0;  // external cuff diastolic; must be positive
    double rho_kg_m3 = 1060.0;
    double assess_duration_s = 10.0;        // span of each wave-speed assessment
    double pwv_reassess_interval_s = 180.0; // assessments repeat at this spacing
    double snr_gate_db = 15.0;
    double diameter_rate_hz = 200.0;
    double d0_threshold_frac = 0.3;  // leading-edge level for the baseline diameter
    int workers = 1;                  // beat-level concurrency; output is identical for any value
    PwvParams pwv;
};

// One reassessment interval: the wave speed and baseline diameter in force
// between start_s and end_s.
struct SegmentSummary {
    double start_s = 0.0;
    double end_s = 0.0;
    double pwv_mean_mps = 0.0;
    double pwv_sd_mps = 0.0;
    int pwv_n_valid = 0;
    double d0_mm = 0.0;
    double anchor_time_s = 0.0;
    bool pwv_carried = false;  // reassessment failed; previous estimate kept
};

struct PipelineResult {
    PressureWaveform pressure;
    DiameterWaveform diameter;
    std::vector<BeatRecord> beats;
    PwvEstimate pwv;  // first assessment
    std::vector<SegmentSummary> segments;
    std::vector<double> channel_snr_db;
    int diameter_channel = 0;
    double duration_s = 0.0;
};

// Full reconstruction: wall identification and SNR gate on every channel,
// wave-speed assessment (repeated every pwv_reassess_interval_s), diameter
// tracking at diameter_rate_hz on the best-SNR channel, pressure via the
// tube law anchored to dbp_input_mmHg, and per-beat records in onset order.
PipelineResult run_pipeline(FrameSource& source, const SessionConfig& config);
PipelineResult run_pipeline(const std::filesystem::path& rf_path, const SessionConfig& config);

// Deterministic text renderings shared by the CLI and the byte-identity
// checks: same result, same bytes.
std::string waveform_csv(const PipelineResult& r);
std::string beats_json(const PipelineResult& r);
std::string summary_json(const PipelineResult& r);
std::string report_json(const EvalReport& r);

// Parses the waveform_csv format back into pressure/diameter series.
struct WaveformCsv {
    SampledSeries pressure_mmHg;
    SampledSeries diameter_mm;
};
WaveformCsv load_waveform_csv(const std::filesystem::path& path);

}  // namespace upwave
