#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ecgmix/leads.hpp"
#include "ecgmix/record.hpp"
#include "ecgmix/rng.hpp"

namespace ecgmix {

// Synthetic multi-label generator. Each positive label contributes a
// sinusoid at a label-specific frequency in the 1-40 Hz band; a pulse train
// gives the RR-feature extractor something to find; Gaussian noise is added
// on top. Training labels are the clean labels with each bit flipped
// independently with probability noise_rate.
struct synthetic_config {
    int n_samples = 2000;
    int n_labels = 24;
    int n_leads = 2;  // one of the lead combo sizes {2,3,4,6,12}
    double noise_rate = 0.0;
    std::uint64_t seed = 1;

    double duration_s = 15.0;
    double sample_rate = 500.0;
    double prevalence = 0.3;
    double pulse_hz = 1.0;
    double pulse_amplitude = 2.0;
    double pulse_width_s = 0.015;
    double waveform_noise = 0.1;

    void validate() const {
        if (n_samples < 1) throw config_error("synthetic: n_samples must be >= 1");
        if (n_labels < 2) throw config_error("synthetic: n_labels must be >= 2");
        if (noise_rate < 0.0 || noise_rate >= 1.0) throw config_error("synthetic: noise_rate must be in [0,1)");
        if (duration_s <= 0.0 || sample_rate <= 0.0) throw config_error("synthetic: bad signal geometry");
        if (prevalence <= 0.0 || prevalence >= 1.0) throw config_error("synthetic: prevalence must be in (0,1)");
    }
};

inline double label_frequency(int label, int n_labels) {
    if (n_labels < 2) return 3.0;
    return 3.0 + static_cast<double>(label) * (37.0 / static_cast<double>(n_labels - 1));
}

inline dataset generate_synthetic(const synthetic_config& cfg) {
    cfg.validate();
    const lead_combo combo = combo_for(cfg.n_leads);
    rng root(cfg.seed);
    rng flip_rng = root.fork(997);

    dataset ds;
    ds.n_labels = cfg.n_labels;
    ds.records.reserve(static_cast<std::size_t>(cfg.n_samples));
    const auto n_t = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
    const double two_pi = 2.0 * 3.14159265358979323846;

    for (int s = 0; s < cfg.n_samples; ++s) {
        rng rec_rng = root.fork(static_cast<std::uint64_t>(s) + 1);
        record rec;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "syn%06d", s);
        rec.id = buf;
        rec.sample_rate = cfg.sample_rate;
        rec.lead_names = combo.leads;

        rec.labels_clean.resize(static_cast<std::size_t>(cfg.n_labels));
        for (auto& y : rec.labels_clean) y = rec_rng.bernoulli(cfg.prevalence) ? 1 : 0;

        std::vector<double> amp(static_cast<std::size_t>(cfg.n_labels));
        for (auto& a : amp) a = rec_rng.uniform(0.7, 1.3);
        const double pulse_offset = rec_rng.uniform(0.0, 1.0 / cfg.pulse_hz);

        rec.signal.resize(combo.leads.size());
        for (std::size_t lead = 0; lead < combo.leads.size(); ++lead) {
            std::vector<double> phase(static_cast<std::size_t>(cfg.n_labels));
            for (auto& p : phase) p = rec_rng.uniform(0.0, two_pi);
            const double gain = rec_rng.uniform(0.8, 1.2);
            auto& sig = rec.signal[lead];
            sig.resize(n_t);
            for (std::size_t t = 0; t < n_t; ++t) {
                const double tt = static_cast<double>(t) / cfg.sample_rate;
                double v = 0.0;
                for (int l = 0; l < cfg.n_labels; ++l) {
                    if (!rec.labels_clean[static_cast<std::size_t>(l)]) continue;
                    v += amp[static_cast<std::size_t>(l)] *
                         std::sin(two_pi * label_frequency(l, cfg.n_labels) * tt +
                                  phase[static_cast<std::size_t>(l)]);
                }
                v *= gain;
                // pulse train shared across leads
                const double beat = (tt - pulse_offset) * cfg.pulse_hz;
                const double nearest = std::round(beat) / cfg.pulse_hz + pulse_offset;
                const double dt = tt - nearest;
                v += cfg.pulse_amplitude * std::exp(-0.5 * dt * dt / (cfg.pulse_width_s * cfg.pulse_width_s));
                v += cfg.waveform_noise * rec_rng.normal();
                sig[t] = static_cast<float>(v);
            }
        }

        if (rec_rng.uniform() < 0.1) rec.age.reset();
        else rec.age = rec_rng.uniform(20.0, 90.0);
        const double g = rec_rng.uniform();
        rec.sex = g < 0.45 ? gender::male : (g < 0.9 ? gender::female : gender::unknown);

        rec.labels = rec.labels_clean;
        for (auto& y : rec.labels)
            if (flip_rng.bernoulli(cfg.noise_rate)) y = y ? 0 : 1;

        ds.records.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace ecgmix
