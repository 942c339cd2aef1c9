#include "upwave/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "upwave/errors.hpp"

namespace upwave {

double GaussianRng::operator()() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite; u2 in [0, 1).
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

namespace {

double wrap_unit(double x) {  // into [0, 1)
    return x - std::floor(x);
}

// Carotid-like shape: three wrapped Gaussian bumps (systolic peak, late
// reflected wave, slow diastolic decay). Evaluated analytically; the
// normalization below pins min -> dbp and max -> dbp + pp.
double carotid_raw(double phi) {
    static constexpr double mu[3] = {0.15, 0.38, 0.65};
    static constexpr double sg[3] = {0.07, 0.09, 0.22};
    static constexpr double am[3] = {1.0, 0.45, 0.28};
    double v = 0.0;
    for (int j = 0; j < 3; ++j) {
        double d = phi - mu[j];
        d -= std::round(d);  // nearest wrapped distance, [-0.5, 0.5]
        v += am[j] * std::exp(-0.5 * (d / sg[j]) * (d / sg[j]));
    }
    return v;
}

struct TemplateEval {
    bool sine = false;
    double dbp = 0.0, pp = 0.0;
    double phi_min = 0.0, gmin = 0.0, gmax = 1.0, gmean = 0.5;

    // Pressure (mmHg) at cardiac phase phi, in cycles; minimum at phi = 0.
    double operator()(double phi) const {
        const double p = wrap_unit(phi);
        if (sine) return dbp + pp * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * p));
        const double g = carotid_raw(wrap_unit(p + phi_min));
        return dbp + pp * (g - gmin) / (gmax - gmin);
    }
    double map() const {
        if (sine) return dbp + 0.5 * pp;
        return dbp + pp * (gmean - gmin) / (gmax - gmin);
    }
};

TemplateEval make_template(const PhantomConfig& cfg) {
    TemplateEval t;
    t.dbp = cfg.dbp_mmHg;
    t.pp = cfg.pp_mmHg;
    if (cfg.template_name == "sine") {
        t.sine = true;
        t.gmean = 0.5;
        return t;
    }
    if (cfg.template_name != "carotid")
        throw Error("unknown pressure template: " + cfg.template_name);
    constexpr int kGrid = 20000;
    double best = 1e300, worst = -1e300, sum = 0.0;
    int best_i = 0;
    for (int i = 0; i < kGrid; ++i) {
        const double g = carotid_raw(static_cast<double>(i) / kGrid);
        sum += g;
        if (g < best) {
            best = g;
            best_i = i;
        }
        worst = std::max(worst, g);
    }
    t.phi_min = static_cast<double>(best_i) / kGrid;
    t.gmin = best;
    t.gmax = worst;
    t.gmean = sum / kGrid;
    return t;
}

double tube_diameter_mm(double p_mmHg, const PhantomConfig& cfg) {
    const double k = 2.0 * cfg.rho_kg_m3 * cfg.pwv_mps * cfg.pwv_mps;
    return cfg.dd_mm * std::exp((p_mmHg - cfg.dbp_mmHg) * kMmHgToPa / k);
}

void validate(const PhantomConfig& cfg) {
    if (cfg.pp_mmHg < 0.0 || cfg.dd_mm <= 0.0 || cfg.pwv_mps <= 0.0 ||
        cfg.heart_rate_hz <= 0.0 || cfg.duration_s <= 0.0 || cfg.rho_kg_m3 <= 0.0 ||
        cfg.carrier_hz <= 0.0)
        throw Error("phantom config has non-positive physiology");
    if (cfg.stream.n_channels < 1) throw Error("phantom needs at least one channel");
    const double fs = cfg.stream.rf_rate_hz;
    const double c_mm_us = cfg.stream.speed_of_sound_mps() * 1e-3;  // mm per us
    const double window_mm = (cfg.stream.samples_per_frame / fs) * 1e6 * c_mm_us / 2.0;
    const double ds_max =
        cfg.dd_mm * std::exp(cfg.pp_mmHg * kMmHgToPa /
                             (2.0 * cfg.rho_kg_m3 * cfg.pwv_mps * cfg.pwv_mps));
    const double burst_half_mm = (1.25 / cfg.carrier_hz) * 1e6 * c_mm_us / 2.0;
    if (cfg.vessel_depth_mm + ds_max / 2.0 + burst_half_mm >= window_mm)
        throw Error("vessel does not fit in the capture window");
    if (cfg.vessel_depth_mm - ds_max / 2.0 - burst_half_mm <= 5.5)
        throw Error("anterior wall too shallow for the noise reference zone");
}

// Adds one wall echo (2.5-cycle Hann-windowed burst) centered at the exact,
// possibly fractional, sample position `ci`.
void add_echo(std::vector<double>& buf, double ci, double amp, double fs, double f0) {
    const double half_s = 1.25 / f0;
    const double half_n = half_s * fs;
    const auto lo = static_cast<long>(std::ceil(ci - half_n));
    const auto hi = static_cast<long>(std::floor(ci + half_n));
    for (long i = std::max(lo, 0L); i <= std::min<long>(hi, static_cast<long>(buf.size()) - 1);
         ++i) {
        const double tau = (static_cast<double>(i) - ci) / fs;
        const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * tau / half_s));
        buf[static_cast<std::size_t>(i)] +=
            amp * w * std::cos(2.0 * std::numbers::pi * f0 * tau);
    }
}

constexpr double kEchoAmp = 0.6 * 32767.0;

// Wall-echo sample index for a reflector at depth z (mm).
double echo_index(double z_mm, const PhantomConfig& cfg) {
    const double tau = 2.0 * (z_mm * 1e-3) / cfg.stream.speed_of_sound_mps();
    return tau * cfg.stream.rf_rate_hz;
}

}  // namespace

SampledSeries pressure_template(const PhantomConfig& cfg) {
    validate(cfg);
    const auto tmpl = make_template(cfg);
    const double prf = cfg.stream.prf_hz;
    const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * prf));
    SampledSeries out{std::vector<double>(n), prf, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = tmpl(cfg.phase0 + cfg.heart_rate_hz * (static_cast<double>(i) / prf));
    }
    return out;
}

SampledSeries diameter_from_pressure(const SampledSeries& pressure_mmHg,
                                     const PhantomConfig& cfg) {
    if (pressure_mmHg.empty()) throw Error("empty series");
    SampledSeries out{std::vector<double>(pressure_mmHg.size()), pressure_mmHg.rate_hz,
                      pressure_mmHg.t0_s};
    for (std::size_t i = 0; i < pressure_mmHg.size(); ++i) {
        out.values[i] = tube_diameter_mm(pressure_mmHg.values[i], cfg);
    }
    return out;
}

GroundTruth synth_rf(const PhantomConfig& cfg, const std::filesystem::path& rf_path) {
    validate(cfg);
    const auto tmpl = make_template(cfg);
    const double fs = cfg.stream.rf_rate_hz;
    const double prf = cfg.stream.prf_hz;
    const double f0 = cfg.carrier_hz;
    const auto ticks = static_cast<std::int64_t>(std::llround(cfg.duration_s * prf));
    const auto spf = static_cast<std::size_t>(cfg.stream.samples_per_frame);

    // Noise level from the definition of wall-echo SNR: mean |echo| inside
    // the two half-window regions around the walls over mean |noise|, with
    // mean |noise| = sigma * sqrt(2/pi) for Gaussian noise.
    double sigma = 0.0;
    if (cfg.snr_db < 90.0) {
        std::vector<double> clean(spf, 0.0);
        const double d0 = tube_diameter_mm(tmpl(cfg.phase0), cfg);
        const double ca = echo_index(cfg.vessel_depth_mm - d0 / 2.0, cfg);
        const double cp = echo_index(cfg.vessel_depth_mm + d0 / 2.0, cfg);
        add_echo(clean, ca, kEchoAmp, fs, f0);
        add_echo(clean, cp, kEchoAmp, fs, f0);
        double acc = 0.0;
        std::size_t count = 0;
        for (double c : {ca, cp}) {
            const auto ci = static_cast<long>(std::llround(c));
            for (long i = ci - 16; i <= ci + 16; ++i) {
                acc += std::abs(clean[static_cast<std::size_t>(i)]);
                ++count;
            }
        }
        const double mean_echo = acc / static_cast<double>(count);
        const double mean_noise = mean_echo * std::pow(10.0, -cfg.snr_db / 20.0);
        sigma = mean_noise * std::sqrt(std::numbers::pi / 2.0);
    }

    GaussianRng rng(cfg.seed);
    RfFileWriter writer(rf_path, cfg.stream);
    std::vector<double> buf(spf);
    std::vector<std::int16_t> tick_buf(cfg.stream.tick_samples());
    GroundTruth truth;
    truth.pressure_mmHg = {std::vector<double>(static_cast<std::size_t>(ticks)), prf, 0.0};
    truth.diameter_mm = {std::vector<double>(static_cast<std::size_t>(ticks)), prf, 0.0};

    for (std::int64_t t = 0; t < ticks; ++t) {
        const double time_s = static_cast<double>(t) / prf;
        for (int ch = 0; ch < cfg.stream.n_channels; ++ch) {
            const double transit = static_cast<double>(ch) * cfg.stream.element_spacing_m() /
                                   cfg.pwv_mps;
            const double p = tmpl(cfg.phase0 + cfg.heart_rate_hz * (time_s - transit));
            const double d = tube_diameter_mm(p, cfg);
            if (ch == 0) {
                truth.pressure_mmHg.values[static_cast<std::size_t>(t)] = p;
                truth.diameter_mm.values[static_cast<std::size_t>(t)] = d;
            }
            std::fill(buf.begin(), buf.end(), 0.0);
            add_echo(buf, echo_index(cfg.vessel_depth_mm - d / 2.0, cfg), kEchoAmp, fs, f0);
            add_echo(buf, echo_index(cfg.vessel_depth_mm + d / 2.0, cfg), kEchoAmp, fs, f0);
            auto* out = tick_buf.data() + static_cast<std::size_t>(ch) * spf;
            for (std::size_t i = 0; i < spf; ++i) {
                double v = buf[i];
                if (sigma > 0.0) v += sigma * rng();
                out[i] = static_cast<std::int16_t>(
                    std::clamp(std::llround(v), -32768LL, 32767LL));
            }
        }
        writer.append_tick(tick_buf);
    }
    writer.close();

    truth.config = cfg;
    truth.pwv_mps = cfg.pwv_mps;
    truth.dbp_mmHg = cfg.dbp_mmHg;
    truth.sbp_mmHg = cfg.dbp_mmHg + cfg.pp_mmHg;
    truth.map_mmHg = tmpl.map();
    const double period = 1.0 / cfg.heart_rate_hz;
    double onset = cfg.phase0 > 0.0 ? (1.0 - cfg.phase0) * period : 0.0;
    while (onset < cfg.duration_s) {
        truth.beat_onset_s.push_back(onset);
        if (onset + period <= cfg.duration_s + 0.5 / prf) {
            const auto lo = static_cast<std::size_t>(std::ceil(onset * prf));
            const auto hi = std::min<std::size_t>(
                static_cast<std::size_t>(std::ceil((onset + period) * prf)),
                truth.pressure_mmHg.size());
            double mn = 1e300, mx = -1e300;
            for (std::size_t i = lo; i < hi; ++i) {
                mn = std::min(mn, truth.pressure_mmHg.values[i]);
                mx = std::max(mx, truth.pressure_mmHg.values[i]);
            }
            truth.per_beat_pp_mmHg.push_back(mx - mn);
        }
        onset += period;
    }

    save_ground_truth(truth, ground_truth_path(rf_path));
    return truth;
}

std::filesystem::path ground_truth_path(const std::filesystem::path& rf_path) {
    auto p = rf_path;
    p += ".truth.json";
    return p;
}

namespace {

using nlohmann::json;

json series_to_json(const SampledSeries& s) {
    return json{{"rate_hz", s.rate_hz}, {"t0_s", s.t0_s}, {"values", s.values}};
}

SampledSeries series_from_json(const json& j) {
    SampledSeries s;
    s.rate_hz = j.at("rate_hz").get<double>();
    s.t0_s = j.at("t0_s").get<double>();
    s.values = j.at("values").get<std::vector<double>>();
    return s;
}

json config_to_json(const PhantomConfig& c) {
    return json{{"dbp_mmHg", c.dbp_mmHg},
                {"pp_mmHg", c.pp_mmHg},
                {"heart_rate_hz", c.heart_rate_hz},
                {"pwv_mps", c.pwv_mps},
                {"dd_mm", c.dd_mm},
                {"wall_thickness_mm", c.wall_thickness_mm},
                {"vessel_depth_mm", c.vessel_depth_mm},
                {"rho_kg_m3", c.rho_kg_m3},
                {"duration_s", c.duration_s},
                {"snr_db", c.snr_db},
                {"carrier_hz", c.carrier_hz},
                {"phase0", c.phase0},
                {"seed", c.seed},
                {"template", c.template_name},
                {"stream",
                 {{"version", c.stream.version},
                  {"n_channels", c.stream.n_channels},
                  {"rf_rate_hz", c.stream.rf_rate_hz},
                  {"prf_hz", c.stream.prf_hz},
                  {"samples_per_frame", c.stream.samples_per_frame},
                  {"element_spacing_um", c.stream.element_spacing_um},
                  {"speed_of_sound_mmps", c.stream.speed_of_sound_mmps}}}};
}

// Missing keys keep their defaults so hand-written configs can stay minimal;
// the sidecar always writes every key.
PhantomConfig config_from_json(const json& j) {
    PhantomConfig c;
    c.dbp_mmHg = j.value("dbp_mmHg", c.dbp_mmHg);
    c.pp_mmHg = j.value("pp_mmHg", c.pp_mmHg);
    c.heart_rate_hz = j.value("heart_rate_hz", c.heart_rate_hz);
    c.pwv_mps = j.value("pwv_mps", c.pwv_mps);
    c.dd_mm = j.value("dd_mm", c.dd_mm);
    c.wall_thickness_mm = j.value("wall_thickness_mm", c.wall_thickness_mm);
    c.vessel_depth_mm = j.value("vessel_depth_mm", c.vessel_depth_mm);
    c.rho_kg_m3 = j.value("rho_kg_m3", c.rho_kg_m3);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.snr_db = j.value("snr_db", c.snr_db);
    c.carrier_hz = j.value("carrier_hz", c.carrier_hz);
    c.phase0 = j.value("phase0", c.phase0);
    c.seed = j.value("seed", c.seed);
    c.template_name = j.value("template", c.template_name);
    if (j.contains("stream")) {
        const auto& s = j.at("stream");
        c.stream.version = s.value("version", c.stream.version);
        c.stream.n_channels = s.value("n_channels", c.stream.n_channels);
        c.stream.rf_rate_hz = s.value("rf_rate_hz", c.stream.rf_rate_hz);
        c.stream.prf_hz = s.value("prf_hz", c.stream.prf_hz);
        c.stream.samples_per_frame = s.value("samples_per_frame", c.stream.samples_per_frame);
        c.stream.element_spacing_um =
            s.value("element_spacing_um", c.stream.element_spacing_um);
        c.stream.speed_of_sound_mmps =
            s.value("speed_of_sound_mmps", c.stream.speed_of_sound_mmps);
    }
    return c;
}

}  // namespace

std::string phantom_config_to_json(const PhantomConfig& c) {
    return config_to_json(c).dump(2) + "\n";
}

PhantomConfig phantom_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed phantom config: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed phantom config: ") + e.what());
    }
}

PhantomConfig load_phantom_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open phantom config: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return phantom_config_from_json(buf.str());
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
    json j{{"config", config_to_json(truth.config)},
           {"pwv_mps", truth.pwv_mps},
           {"dbp_mmHg", truth.dbp_mmHg},
           {"sbp_mmHg", truth.sbp_mmHg},
           {"map_mmHg", truth.map_mmHg},
           {"beat_onset_s", truth.beat_onset_s},
           {"per_beat_pp_mmHg", truth.per_beat_pp_mmHg},
           {"pressure_mmHg", series_to_json(truth.pressure_mmHg)},
           {"diameter_mm", series_to_json(truth.diameter_mm)}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write ground truth: " + path.string());
    out << j.dump();
    if (!out) throw Error("short write on ground truth");
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open ground truth: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed ground truth: ") + e.what());
    }
    try {
        GroundTruth t;
        t.config = config_from_json(j.at("config"));
        t.pwv_mps = j.at("pwv_mps").get<double>();
        t.dbp_mmHg = j.at("dbp_mmHg").get<double>();
        t.sbp_mmHg = j.at("sbp_mmHg").get<double>();
        t.map_mmHg = j.at("map_mmHg").get<double>();
        t.beat_onset_s = j.at("beat_onset_s").get<std::vector<double>>();
        t.per_beat_pp_mmHg = j.at("per_beat_pp_mmHg").get<std::vector<double>>();
        t.pressure_mmHg = series_from_json(j.at("pressure_mmHg"));
        t.diameter_mm = series_from_json(j.at("diameter_mm"));
        return t;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed ground truth: ") + e.what());
    }
}

}  // namespace upwave
