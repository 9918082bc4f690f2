#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ecgmix/errors.hpp"
#include "ecgmix/leads.hpp"
#include "ecgmix/record.hpp"
#include "ecgmix/rng.hpp"

namespace ecgmix {

constexpr double k_target_rate_hz = 500.0;
constexpr double k_default_window_s = 15.0;

struct prep_options {
    double window_seconds = k_default_window_s;
    int window_samples() const {
        return static_cast<int>(std::lround(window_seconds * k_target_rate_hz));
    }
};

// Linear resampling to 500 Hz. Output length = round(len * 500 / src_rate).
// Written as a + w*(b-a) so constant signals survive bit-exactly.
inline std::vector<float> resample_lead(const std::vector<float>& lead, double src_rate) {
    if (lead.empty()) throw invalid_input("resample: empty signal");
    if (src_rate <= 0.0) throw invalid_input("resample: src_rate must be > 0");
    const std::size_t n = lead.size();
    const auto out_n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * k_target_rate_hz / src_rate));
    std::vector<float> out(std::max<std::size_t>(out_n, 1));
    const double step = src_rate / k_target_rate_hz;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double pos = static_cast<double>(i) * step;
        auto j = static_cast<std::size_t>(pos);
        if (j >= n - 1) {
            out[i] = lead[n - 1];
            continue;
        }
        const double frac = pos - static_cast<double>(j);
        out[i] = static_cast<float>(lead[j] + frac * (static_cast<double>(lead[j + 1]) - lead[j]));
    }
    return out;
}

inline std::vector<std::vector<float>> resample(const std::vector<std::vector<float>>& signal, double src_rate) {
    if (signal.empty()) throw invalid_input("resample: empty signal");
    std::vector<std::vector<float>> out;
    out.reserve(signal.size());
    for (const auto& lead : signal) out.push_back(resample_lead(lead, src_rate));
    return out;
}

// Affine map per lead: min -> -1, max -> +1. A constant lead maps to all
// zeros (midpoint) instead of dividing by zero.
inline std::vector<float> minmax_normalize(const std::vector<float>& lead) {
    if (lead.empty()) throw invalid_input("minmax_normalize: empty lead");
    const auto [mn_it, mx_it] = std::minmax_element(lead.begin(), lead.end());
    const float mn = *mn_it, mx = *mx_it;
    std::vector<float> out(lead.size());
    if (mn == mx) return out;  // zeros
    const float range = mx - mn;
    for (std::size_t i = 0; i < lead.size(); ++i) out[i] = (lead[i] - mn) / range * 2.0f - 1.0f;
    return out;
}

// Picks one crop window for the whole record. For duration tau above
// lo = min(10 s, window), a target duration d ~ U(lo, min(tau, window)) is
// drawn and a random contiguous window of d seconds is taken; otherwise the
// whole signal is kept. Returned signal is zero-padded at the end to the
// window length.
struct crop_plan {
    std::size_t start = 0;
    std::size_t length = 0;
};

inline crop_plan plan_crop(std::size_t n_samples, rng& rand, double window_seconds = k_default_window_s) {
    const double tau = static_cast<double>(n_samples) / k_target_rate_hz;
    const double window = window_seconds;
    const double lo = std::min(10.0, window);
    crop_plan plan;
    if (tau > lo) {
        const double hi = std::min(tau, window);
        const double d = rand.uniform(lo, hi);
        auto want = static_cast<std::size_t>(std::llround(d * k_target_rate_hz));
        plan.length = std::min(n_samples, std::max<std::size_t>(want, 1));
        plan.start = rand.uniform_index(n_samples - plan.length + 1);
    } else {
        plan.start = 0;
        plan.length = n_samples;
    }
    return plan;
}

inline std::vector<std::vector<float>> crop_pad(const std::vector<std::vector<float>>& signal,
                                                rng& rand,
                                                double window_seconds = k_default_window_s) {
    if (signal.empty() || signal[0].empty()) throw invalid_input("crop_pad: empty signal");
    const auto window = static_cast<std::size_t>(std::llround(window_seconds * k_target_rate_hz));
    const crop_plan plan = plan_crop(signal[0].size(), rand, window_seconds);
    std::vector<std::vector<float>> out(signal.size());
    for (std::size_t c = 0; c < signal.size(); ++c) {
        out[c].assign(window, 0.0f);
        const std::size_t n = std::min(plan.length, window);
        for (std::size_t i = 0; i < n; ++i) out[c][i] = signal[c][plan.start + i];
    }
    return out;
}

// Local-maximum peak picker: samples above 0.6 * lead max that exceed both
// neighbours, with a 0.3 s refractory window (the taller peak wins).
inline std::vector<std::size_t> detect_peaks(const std::vector<float>& lead, double rate_hz) {
    std::vector<std::size_t> peaks;
    if (lead.size() < 3) return peaks;
    const float mx = *std::max_element(lead.begin(), lead.end());
    if (mx <= 0.0f) return peaks;
    const float thresh = 0.6f * mx;
    const auto refractory = static_cast<std::size_t>(std::llround(0.3 * rate_hz));
    for (std::size_t i = 1; i + 1 < lead.size(); ++i) {
        if (lead[i] < thresh) continue;
        if (!(lead[i] >= lead[i - 1] && lead[i] > lead[i + 1])) continue;
        if (!peaks.empty() && i - peaks.back() < refractory) {
            if (lead[i] > lead[peaks.back()]) peaks.back() = i;
            continue;
        }
        peaks.push_back(i);
    }
    return peaks;
}

// RR statistics from detected peaks on a lead already at 500 Hz. Fewer than
// two peaks yields the all-zero sentinel.
inline void rr_stats_from_lead(const std::vector<float>& lead, double rr_out[5]) {
    for (int i = 0; i < 5; ++i) rr_out[i] = 0.0;
    const auto peaks = detect_peaks(lead, k_target_rate_hz);
    if (peaks.size() < 2) return;
    std::vector<double> rr(peaks.size() - 1);
    for (std::size_t i = 0; i + 1 < peaks.size(); ++i)
        rr[i] = static_cast<double>(peaks[i + 1] - peaks[i]) / k_target_rate_hz;
    double mean = 0.0;
    for (double x : rr) mean += x;
    mean /= static_cast<double>(rr.size());
    double var = 0.0;
    for (double x : rr) var += (x - mean) * (x - mean);
    var /= static_cast<double>(rr.size());
    rr_out[0] = mean;
    rr_out[1] = std::sqrt(var);
    rr_out[2] = *std::min_element(rr.begin(), rr.end());
    rr_out[3] = *std::max_element(rr.begin(), rr.end());
    rr_out[4] = mean > 0.0 ? 60.0 / mean : 0.0;
}

inline double normalize_age(const std::optional<double>& age) {
    if (!age.has_value()) return 0.5;
    return std::clamp(*age, 0.0, 100.0) / 100.0;
}

// Wide features from record metadata plus RR stats on a processed lead II
// (500 Hz). Pass an empty lead when lead II is absent.
inline wide_features make_wide_features(const record& rec, const std::vector<float>& lead2_processed) {
    wide_features wf;
    wf.age_norm = normalize_age(rec.age);
    wf.gender_onehot[0] = rec.sex == gender::male ? 1.0 : 0.0;
    wf.gender_onehot[1] = rec.sex == gender::female ? 1.0 : 0.0;
    wf.gender_onehot[2] = rec.sex == gender::unknown ? 1.0 : 0.0;
    if (!lead2_processed.empty()) rr_stats_from_lead(lead2_processed, wf.rr_stats);
    return wf;
}

// Convenience used by tests and the standalone op contract: features straight
// from a raw record (resample + normalize lead II internally).
inline wide_features extract_wide_features(const record& rec) {
    const int li = rec.lead_index("II");
    if (li < 0) return make_wide_features(rec, {});
    auto lead = minmax_normalize(resample_lead(rec.signal[li], rec.sample_rate));
    return make_wide_features(rec, lead);
}

// Channel selection in combo order; throws missing_lead naming the first
// absent lead.
inline std::vector<std::vector<float>> select_leads(const std::vector<std::vector<float>>& signal,
                                                    const std::vector<std::string>& lead_names,
                                                    const lead_combo& combo) {
    std::vector<std::vector<float>> out;
    out.reserve(combo.leads.size());
    for (const auto& name : combo.leads) {
        int idx = -1;
        for (std::size_t i = 0; i < lead_names.size(); ++i)
            if (lead_names[i] == name) { idx = static_cast<int>(i); break; }
        if (idx < 0) throw missing_lead(name);
        out.push_back(signal[static_cast<std::size_t>(idx)]);
    }
    return out;
}

// Full preprocessing for one record: resample -> per-lead min-max -> one
// shared crop window -> wide features from processed lead II -> combo
// channels.
inline prepared_record prep_record(const record& rec, const lead_combo& combo, rng& rand,
                                   const prep_options& opt = {}) {
    rec.validate();
    auto sig = resample(rec.signal, rec.sample_rate);
    for (auto& lead : sig) lead = minmax_normalize(lead);
    sig = crop_pad(sig, rand, opt.window_seconds);

    prepared_record out;
    out.id = rec.id;
    out.labels = rec.labels;
    out.labels_clean = rec.labels_clean;
    const int li = rec.lead_index("II");
    out.wide = make_wide_features(rec, li >= 0 ? sig[static_cast<std::size_t>(li)] : std::vector<float>{});
    out.channels = select_leads(sig, rec.lead_names, combo);
    return out;
}

inline prepared_dataset prep_dataset(const dataset& ds, const lead_combo& combo, rng& rand,
                                     const prep_options& opt = {}) {
    prepared_dataset out;
    out.n_labels = ds.n_labels;
    out.n_channels = static_cast<int>(combo.leads.size());
    out.window = opt.window_samples();
    out.lead_names = combo.leads;
    out.records.reserve(ds.records.size());
    for (const auto& rec : ds.records) out.records.push_back(prep_record(rec, combo, rand, opt));
    return out;
}

}  // namespace ecgmix
