#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "upwave/pressure.hpp"
#include "upwave/rf_stream.hpp"
#include "upwave/series.hpp"

namespace upwave {

/// Unit-normal generator pinned to a fixed algorithm: raw mt19937_64 words
/// mapped to doubles as (x >> 11) * 2^-53 and fed through Box-Muller. Using
/// std::normal_distribution here would make captures differ between standard
/// libraries for the same seed; this keeps them byte-identical everywhere.
class GaussianRng {
  public:
    explicit GaussianRng(std::uint64_t seed) : gen_(seed) {}
    double operator()();

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Synthetic vessel section: a pressure waveform drives an elastic tube whose
/// walls return short ultrasound bursts on every pulse-echo tick.
struct PhantomConfig {
    double dbp_mmHg = 63.0;          // diastolic (waveform minimum)
    double pp_mmHg = 40.0;           // pulse pressure (waveform span)
    double heart_rate_hz = 1.0;
    double pwv_mps = 8.03;           // pulse wave velocity along the array
    double dd_mm = 8.2;              // end-diastolic diameter
    double wall_thickness_mm = 0.4;  // nominal, reporting only
    double vessel_depth_mm = 19.0;   // centerline depth below the probe
    double rho_kg_m3 = 1060.0;
    double duration_s = 12.0;
    double snr_db = 30.0;            // wall-echo SNR; >= 90 disables noise
    double carrier_hz = 5e6;         // burst carrier, 2.5 cycles per echo
    double phase0 = 0.3;             // cardiac phase at t = 0, channel 0
    std::uint64_t seed = 1;
    std::string template_name = "carotid";  // "carotid" | "sine"
    RfStreamHeader stream;
};

/// Everything the synthesizer knows that a measurement would have to recover.
/// Series are channel 0 at the pulse repetition rate.
struct GroundTruth {
    PhantomConfig config;
    double pwv_mps = 0.0;
    double dbp_mmHg = 0.0;
    double sbp_mmHg = 0.0;
    double map_mmHg = 0.0;
    std::vector<double> beat_onset_s;       // waveform feet (minima)
    std::vector<double> per_beat_pp_mmHg;   // one entry per complete beat
    SampledSeries pressure_mmHg;
    SampledSeries diameter_mm;
};

/// Channel-0 pressure over the configured duration at the pulse repetition
/// rate. Periodic, minimum dbp_mmHg, maximum dbp_mmHg + pp_mmHg.
SampledSeries pressure_template(const PhantomConfig& cfg);

/// Tube law: D(t) = dd * exp((P - dbp) / (2 rho pwv^2)), pressures in mmHg.
SampledSeries diameter_from_pressure(const SampledSeries& pressure_mmHg,
                                     const PhantomConfig& cfg);

/// Renders the capture to rf_path, writes the ground-truth sidecar next to
/// it, and returns the truth.
GroundTruth synth_rf(const PhantomConfig& cfg, const std::filesystem::path& rf_path);

std::filesystem::path ground_truth_path(const std::filesystem::path& rf_path);
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

/// Config (de)serialization. Parsing tolerates missing keys, which keep
/// their defaults, so hand-written configs can stay minimal.
std::string phantom_config_to_json(const PhantomConfig& c);
PhantomConfig phantom_config_from_json(const std::string& text);
PhantomConfig load_phantom_config(const std::filesystem::path& path);

}  // namespace upwave
