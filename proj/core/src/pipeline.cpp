#include "upwave/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "upwave/errors.hpp"
#include "upwave/signal_ops.hpp"

namespace upwave {

namespace {

// One reassessment interval before rendering: grid slice plus the state in
// force inside it.
struct SegmentPlan {
    std::size_t i0 = 0;  // diameter-grid slice [i0, i1)
    std::size_t i1 = 0;
    PwvEstimate est;
    bool carried = false;
    std::size_t anchor_idx = 0;  // grid index of the anchoring end-diastole
    double d0_mm = 0.0;
};

double segment_start_s(const SegmentPlan& seg, double rate_hz) {
    return static_cast<double>(seg.i0) / rate_hz;
}

// JSON cannot carry infinities; silent captures report a capped SNR instead.
double json_safe(double v) { return std::isfinite(v) ? v : 999.0; }

std::string format_fixed(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

PipelineResult run_pipeline(FrameSource& source, const SessionConfig& config) {
    if (!(config.dbp_input_mmHg > 0.0)) throw Error("dbp input must be positive");
    if (config.snr_gate_db < 0.0) throw Error("snr gate must be non-negative");
    if (!(config.diameter_rate_hz > 0.0)) throw Error("diameter rate must be positive");

    PwvParams params = config.pwv;
    params.track.snr_gate_db = config.snr_gate_db;
    params.assess_duration_s = config.assess_duration_s;
    params.workers = std::max(1, config.workers);

    const Geometry geom = Geometry::from_header(source.header(), params.track.interp_factor);
    const int nch = source.header().n_channels;
    if (nch < 1) throw Error("degenerate RF capture header");

    PipelineResult result;
    std::vector<WallRegion> regions;
    for (int ch = 0; ch < nch; ++ch) {
        regions.push_back(identify_walls(source, ch, params.track));
        result.channel_snr_db.push_back(regions.back().snr_db);
    }
    result.diameter_channel = 0;
    for (int ch = 1; ch < nch; ++ch)
        if (result.channel_snr_db[ch] > result.channel_snr_db[result.diameter_channel])
            result.diameter_channel = ch;
    const WallRegion& dch_region = regions[static_cast<std::size_t>(result.diameter_channel)];

    const std::int64_t ticks = source.ticks();
    result.duration_s = static_cast<double>(ticks) / geom.prf_hz;

    // Continuous diameter-rate distension on the best channel: one pass to
    // find the diastolic feet, a second pass with the window re-anchored at
    // each foot so drift never outlives a beat.
    SampledSeries dist_first =
        distension_series(source, dch_region, config.diameter_rate_hz, params.track);
    SampledSeries filtered =
        zero_phase_lowpass(dist_first, params.filter_order, params.filter_cutoff_hz);
    {
        const auto [mn, mx] = std::minmax_element(filtered.values.begin(), filtered.values.end());
        if (*mx - *mn < params.min_range_mm) throw Error("no beat detected");
    }
    std::vector<std::size_t> feet =
        detect_beat_feet(filtered, params.min_prominence_frac, params.refractory_s);
    if (feet.size() < 2) throw Error("insufficient beats");
    std::vector<double> onsets_s;
    for (std::size_t idx : feet) onsets_s.push_back(filtered.time_at(idx));

    SampledSeries dist =
        distension_series(source, dch_region, config.diameter_rate_hz, params.track, onsets_s);

    // Reassessment segments over the diameter grid.
    const double seg_span_s = std::max(config.pwv_reassess_interval_s, 1.0);
    std::vector<SegmentPlan> segments;
    for (double t = 0.0; t < result.duration_s; t += seg_span_s) {
        SegmentPlan seg;
        seg.i0 = static_cast<std::size_t>(std::ceil(t * dist.rate_hz - 1e-9));
        seg.i1 = std::min<std::size_t>(
            dist.size(),
            static_cast<std::size_t>(std::ceil((t + seg_span_s) * dist.rate_hz - 1e-9)));
        if (seg.i0 >= seg.i1) break;

        // The anchoring end-diastole: first detected foot inside the segment.
        const double t_lo = static_cast<double>(seg.i0) / dist.rate_hz;
        auto it = std::lower_bound(onsets_s.begin(), onsets_s.end(), t_lo - 1e-9);
        const bool has_anchor = it != onsets_s.end() &&
                                *it < static_cast<double>(seg.i1) / dist.rate_hz;
        if (!has_anchor) {
            // A tail too short to contain a beat extends the previous segment.
            if (segments.empty()) throw Error("insufficient beats");
            segments.back().i1 = seg.i1;
            continue;
        }
        seg.anchor_idx = static_cast<std::size_t>(std::llround(*it * dist.rate_hz));

        try {
            const auto first_tick = static_cast<std::int64_t>(std::llround(t * geom.prf_hz));
            seg.est = pwv_session(source, regions, params, first_tick);
        } catch (const Error&) {
            if (segments.empty()) throw;  // first assessment must succeed
            seg.est = segments.back().est;
            seg.carried = true;
        }

        // Baseline diameter from the anchor frame, windows re-centered on the
        // echo peaks so wall motion since identification cannot bias the edge.
        const auto anchor_tick = static_cast<std::int64_t>(
            std::llround(*it * geom.prf_hz));
        const auto fr = source.frame(anchor_tick, dch_region.channel);
        WallRegion at_anchor = dch_region;
        const long span = static_cast<long>(params.track.wide_halfspan) * geom.interp_factor;
        at_anchor.anterior_center_u =
            envelope_peak_near(fr, at_anchor.anterior_center_u, span, geom.interp_factor);
        at_anchor.posterior_center_u =
            envelope_peak_near(fr, at_anchor.posterior_center_u, span, geom.interp_factor);
        seg.d0_mm = end_diastolic_diameter(fr, at_anchor, geom, config.d0_threshold_frac);
        segments.push_back(seg);
    }
    if (segments.empty()) throw Error("insufficient beats");

    // Render diameter and pressure per segment on the shared grid.
    result.diameter.series_mm.rate_hz = dist.rate_hz;
    result.diameter.series_mm.t0_s = dist.t0_s;
    result.diameter.series_mm.values.resize(dist.size());
    result.diameter.d0_mm = segments.front().d0_mm;
    result.diameter.beat_onsets_s = onsets_s;
    result.pressure.series_mmHg.rate_hz = dist.rate_hz;
    result.pressure.series_mmHg.t0_s = dist.t0_s;
    result.pressure.series_mmHg.values.resize(dist.size());
    result.pressure.dbp_input_mmHg = config.dbp_input_mmHg;
    result.pressure.pwv_used_mps = segments.front().est.mean_mps;
    result.pressure.rho_kg_m3 = config.rho_kg_m3;
    result.pressure.beat_onsets_s = onsets_s;

    for (const SegmentPlan& seg : segments) {
        const double base = dist.values[seg.anchor_idx];
        const double gain =
            2.0 * config.rho_kg_m3 * seg.est.mean_mps * seg.est.mean_mps / kMmHgToPa;
        for (std::size_t i = seg.i0; i < seg.i1; ++i) {
            const double d = seg.d0_mm + (dist.values[i] - base);
            if (!(d > 0.0)) throw Error("non-positive diameter");
            result.diameter.series_mm.values[i] = d;
            result.pressure.series_mmHg.values[i] =
                config.dbp_input_mmHg + gain * std::log(d / seg.d0_mm);
        }

        SegmentSummary summary;
        summary.start_s = segment_start_s(seg, dist.rate_hz);
        summary.end_s = static_cast<double>(seg.i1) / dist.rate_hz;
        summary.pwv_mean_mps = seg.est.mean_mps;
        summary.pwv_sd_mps = seg.est.sd_mps;
        summary.pwv_n_valid = seg.est.n_valid;
        summary.d0_mm = seg.d0_mm;
        summary.anchor_time_s = static_cast<double>(seg.anchor_idx) / dist.rate_hz;
        summary.pwv_carried = seg.carried;
        result.segments.push_back(summary);
    }
    result.pwv = segments.front().est;
    result.beats = beat_metrics(result.pressure, result.diameter);
    return result;
}

PipelineResult run_pipeline(const std::filesystem::path& rf_path, const SessionConfig& config) {
    auto source = open_rf(rf_path);
    return run_pipeline(*source, config);
}

std::string waveform_csv(const PipelineResult& r) {
    std::string out = "time_s,pressure_mmHg,diameter_mm\n";
    const auto& p = r.pressure.series_mmHg;
    const auto& d = r.diameter.series_mm;
    for (std::size_t i = 0; i < p.size(); ++i) {
        out += format_fixed(p.time_at(i));
        out += ',';
        out += format_fixed(p.values[i]);
        out += ',';
        out += format_fixed(d.values[i]);
        out += '\n';
    }
    return out;
}

std::string beats_json(const PipelineResult& r) {
    nlohmann::ordered_json beats = nlohmann::ordered_json::array();
    for (const BeatRecord& b : r.beats) {
        nlohmann::ordered_json j;
        j["onset_s"] = b.onset_s;
        j["dbp_mmHg"] = b.dbp_mmHg;
        j["map_mmHg"] = b.map_mmHg;
        j["sbp_mmHg"] = b.sbp_mmHg;
        j["pp_mmHg"] = b.pp_mmHg;
        j["ff"] = b.ff;
        j["ff_valid"] = b.ff_valid;
        j["ds_mm"] = json_safe(b.ds_mm);
        j["dd_mm"] = json_safe(b.dd_mm);
        beats.push_back(std::move(j));
    }
    return beats.dump(2) + "\n";
}

std::string summary_json(const PipelineResult& r) {
    nlohmann::ordered_json j;
    j["duration_s"] = r.duration_s;
    j["dbp_input_mmHg"] = r.pressure.dbp_input_mmHg;
    j["rho_kg_m3"] = r.pressure.rho_kg_m3;
    j["channel_snr_db"] = nlohmann::ordered_json::array();
    for (double v : r.channel_snr_db) j["channel_snr_db"].push_back(json_safe(v));
    j["diameter_channel"] = r.diameter_channel;
    j["d0_mm"] = r.diameter.d0_mm;
    j["n_beats"] = r.beats.size();

    nlohmann::ordered_json pwv;
    pwv["mean_mps"] = r.pwv.mean_mps;
    pwv["sd_mps"] = r.pwv.sd_mps;
    pwv["n_valid"] = r.pwv.n_valid;
    pwv["beats"] = nlohmann::ordered_json::array();
    for (const BeatPwv& b : r.pwv.beats) {
        nlohmann::ordered_json e;
        e["window_start_tick"] = b.window.hi_start_frame;
        e["pwv_mps"] = json_safe(b.pwv_mps);
        e["r2"] = json_safe(b.r2);
        e["valid"] = b.valid;
        e["reject_reason"] = b.reject_reason;
        pwv["beats"].push_back(std::move(e));
    }
    j["pwv"] = std::move(pwv);

    j["segments"] = nlohmann::ordered_json::array();
    for (const SegmentSummary& s : r.segments) {
        nlohmann::ordered_json e;
        e["start_s"] = s.start_s;
        e["end_s"] = s.end_s;
        e["pwv_mean_mps"] = s.pwv_mean_mps;
        e["pwv_sd_mps"] = s.pwv_sd_mps;
        e["pwv_n_valid"] = s.pwv_n_valid;
        e["d0_mm"] = s.d0_mm;
        e["anchor_time_s"] = s.anchor_time_s;
        e["pwv_carried"] = s.pwv_carried;
        j["segments"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

std::string report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["rmse"] = r.rmse;
    j["pearson_r"] = r.pearson_r;
    j["mae"] = r.mae;
    j["sd_of_error"] = r.sd_of_error;
    nlohmann::ordered_json ba;
    ba["mean_diff"] = r.bland_altman.mean_diff;
    ba["sd_diff"] = r.bland_altman.sd_diff;
    ba["loa_low"] = r.bland_altman.loa_low;
    ba["loa_high"] = r.bland_altman.loa_high;
    ba["pct_within"] = r.bland_altman.pct_within;
    j["bland_altman"] = std::move(ba);
    j["n_beat_pairs"] = r.n_beat_pairs;
    j["n_grid"] = r.n_grid;
    j["time_shift_s"] = r.time_shift_s;
    return j.dump(2) + "\n";
}

WaveformCsv load_waveform_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open waveform CSV: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("empty waveform CSV");
    if (line != "time_s,pressure_mmHg,diameter_mm")
        throw Error("unrecognized waveform CSV header");

    std::vector<double> t, p, d;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double a = 0.0, b = 0.0, c = 0.0;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3)
            throw Error("malformed waveform CSV row");
        t.push_back(a);
        p.push_back(b);
        d.push_back(c);
    }
    if (t.size() < 2) throw Error("waveform CSV too short");
    const double dt = t[1] - t[0];
    if (!(dt > 0.0)) throw Error("waveform CSV times must increase");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (std::abs(t[i] - t[i - 1] - dt) > 0.5 * dt)
            throw Error("waveform CSV grid is not uniform");

    WaveformCsv out;
    out.pressure_mmHg.values = std::move(p);
    out.pressure_mmHg.rate_hz = 1.0 / dt;
    out.pressure_mmHg.t0_s = t.front();
    out.diameter_mm.values = std::move(d);
    out.diameter_mm.rate_hz = out.pressure_mmHg.rate_hz;
    out.diameter_mm.t0_s = t.front();
    return out;
}

}  // namespace upwave
