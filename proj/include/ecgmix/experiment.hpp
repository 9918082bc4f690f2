#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ecgmix/config.hpp"
#include "ecgmix/metrics.hpp"
#include "ecgmix/signal_prep.hpp"
#include "ecgmix/synth.hpp"
#include "ecgmix/train.hpp"

namespace ecgmix {

// The full comparison: baseline (plain BCE, one network) against the
// co-trained / refined / ensembled pipeline, over stratified folds, several
// seeds and the requested lead combos. Scores are macro-F1 on clean test
// labels.
struct experiment_config {
    synthetic_config synth;
    train_config train;
    model_config model = model_config::base();
    double window_seconds = k_default_window_s;
    int folds = 10;
    int n_seeds = 1;
    std::vector<int> leads = {2};

    void validate() const {
        synth.validate();
        train.validate();
        model.validate();
        if (folds < 2) throw config_error("experiment: folds must be >= 2");
        if (n_seeds < 1) throw config_error("experiment: n_seeds must be >= 1");
        if (leads.empty()) throw config_error("experiment: need at least one lead combo");
    }
};

inline experiment_config experiment_from_config(const config_file& cfg) {
    experiment_config e;
    e.synth = synthetic_from_config(cfg);
    e.train = train_from_config(cfg);
    e.model = model_from_config(cfg);
    e.model.n_labels = e.synth.n_labels;
    e.window_seconds = cfg.get_num("prep", "window_seconds", k_default_window_s);
    e.folds = cfg.get_int("experiment", "folds", 10);
    e.n_seeds = cfg.get_int("experiment", "seeds", 1);
    e.leads = cfg.get_int_list("experiment", "leads", {2});
    return e;
}

struct fold_score {
    int seed = 0;
    int fold = 0;
    int leads = 0;
    std::string method;  // "baseline" | "proposed"
    double macro_f1 = 0.0;
    double mean_auroc = 0.0;
    double clean_fraction = 0.0;  // proposed only: final-epoch lambda_gmm >= 0.5
};

struct method_summary {
    int leads = 0;
    std::vector<double> baseline_scores;  // per (seed, fold)
    std::vector<double> proposed_scores;
    welch_result welch;
};

struct experiment_report {
    std::vector<fold_score> scores;
    std::vector<method_summary> summaries;  // one per lead combo
};

namespace detail {

inline std::vector<std::vector<std::uint8_t>> clean_truth(const prepared_dataset& ds,
                                                          const std::vector<std::size_t>& indices) {
    std::vector<std::vector<std::uint8_t>> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        const auto& rec = ds.records[i];
        out.push_back(rec.labels_clean.empty() ? rec.labels : rec.labels_clean);
    }
    return out;
}

template <typename T>
std::vector<std::vector<double>> proba_rows(effnet1d<T>& net, const prepared_dataset& ds,
                                            const std::vector<std::size_t>& indices, int batch) {
    std::vector<std::vector<double>> out;
    out.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch));
        std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                       indices.begin() + static_cast<std::ptrdiff_t>(end));
        mat<T> p = net.predict_proba(batch_signals<T>(ds, chunk), batch_wide<T>(ds, chunk));
        for (int b = 0; b < p.rows; ++b)
            out.emplace_back(p.row(b), p.row(b) + p.cols);
    }
    return out;
}

template <typename T>
std::vector<std::vector<double>> ensemble_proba_rows(const ensemble_set<T>& ens, const prepared_dataset& ds,
                                                     const std::vector<std::size_t>& indices, int batch) {
    std::vector<std::vector<double>> out;
    out.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch));
        std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                       indices.begin() + static_cast<std::ptrdiff_t>(end));
        mat<T> p = ensemble_proba(ens, batch_signals<T>(ds, chunk), batch_wide<T>(ds, chunk));
        for (int b = 0; b < p.rows; ++b)
            out.emplace_back(p.row(b), p.row(b) + p.cols);
    }
    return out;
}

}  // namespace detail

template <typename T = float>
experiment_report run_experiment(const experiment_config& cfg, std::ostream* progress = nullptr) {
    cfg.validate();
    experiment_report report;

    for (int leads : cfg.leads) {
        method_summary summary;
        summary.leads = leads;
        const lead_combo combo = combo_for(leads);

        for (int seed_idx = 0; seed_idx < cfg.n_seeds; ++seed_idx) {
            std::uint64_t stream = cfg.synth.seed;
            const std::uint64_t run_seed = splitmix64(stream) ^ static_cast<std::uint64_t>(seed_idx);

            synthetic_config synth = cfg.synth;
            synth.seed = run_seed + 1;
            if (synth.n_leads < leads) synth.n_leads = leads;
            const dataset raw = generate_synthetic(synth);

            rng prep_rng(run_seed + 2);
            prep_options opt;
            opt.window_seconds = cfg.window_seconds;
            const prepared_dataset ds = prep_dataset(raw, combo, prep_rng, opt);

            std::vector<std::vector<std::uint8_t>> train_labels;
            train_labels.reserve(ds.records.size());
            for (const auto& rec : ds.records) train_labels.push_back(rec.labels);
            const fold_plan plan = stratified_kfold(train_labels, cfg.folds, run_seed + 3);

            for (int fold = 0; fold < cfg.folds; ++fold) {
                const auto t0 = std::chrono::steady_clock::now();
                const auto& test_indices = plan.folds[static_cast<std::size_t>(fold)];
                std::vector<std::size_t> train_indices;
                for (int f = 0; f < cfg.folds; ++f)
                    if (f != fold)
                        train_indices.insert(train_indices.end(), plan.folds[static_cast<std::size_t>(f)].begin(),
                                             plan.folds[static_cast<std::size_t>(f)].end());

                const auto truth = detail::clean_truth(ds, test_indices);

                train_config tcfg = cfg.train;
                tcfg.seed = run_seed + 100 + static_cast<std::uint64_t>(fold);
                baseline_result<T> base = train_baseline<T>(cfg.model, tcfg, ds, train_indices);
                const auto base_probs = detail::proba_rows(*base.net, ds, test_indices, tcfg.eval_batch);
                const eval_report base_eval = evaluate(base_probs, truth, tcfg.threshold);

                tcfg.seed = run_seed + 200 + static_cast<std::uint64_t>(fold);
                cotrain_result<T> co = cotrain<T>(cfg.model, tcfg, ds, train_indices);
                ensemble_set<T> ens = co.ensemble();
                const auto prop_probs = detail::ensemble_proba_rows(ens, ds, test_indices, tcfg.eval_batch);
                const eval_report prop_eval = evaluate(prop_probs, truth, tcfg.threshold);

                double clean_fraction = 0.0;
                {
                    std::size_t n_clean = 0, n_total = 0;
                    for (const auto* lam : {&co.final_lambda1, &co.final_lambda2}) {
                        for (double v : *lam) n_clean += v >= 0.5 ? 1 : 0;
                        n_total += lam->size();
                    }
                    clean_fraction = n_total > 0 ? static_cast<double>(n_clean) / static_cast<double>(n_total) : 0.0;
                }

                report.scores.push_back({seed_idx, fold, leads, "baseline", base_eval.macro_f1,
                                         base_eval.mean_auroc, 0.0});
                report.scores.push_back({seed_idx, fold, leads, "proposed", prop_eval.macro_f1,
                                         prop_eval.mean_auroc, clean_fraction});
                summary.baseline_scores.push_back(base_eval.macro_f1);
                summary.proposed_scores.push_back(prop_eval.macro_f1);

                if (progress) {
                    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    char buf[256];
                    std::snprintf(buf, sizeof(buf),
                                  "[leads=%d seed=%d fold=%d] baseline=%.4f proposed=%.4f clean_frac=%.3f (%.1fs)",
                                  leads, seed_idx, fold, base_eval.macro_f1, prop_eval.macro_f1, clean_fraction,
                                  secs);
                    (*progress) << buf << std::endl;
                }
            }
        }

        try {
            summary.welch = welch_t(summary.proposed_scores, summary.baseline_scores);
        } catch (const error&) {
            summary.welch = welch_result{0.0, 0.0, 1.0};
        }
        report.summaries.push_back(std::move(summary));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report files: a per-fold CSV (deterministic formatting, used by the
// repeatability check) plus a human-readable summary.
// ---------------------------------------------------------------------------

inline void write_fold_scores_csv(const std::filesystem::path& path, const experiment_report& report) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << "seed,fold,leads,method,macro_f1,mean_auroc,clean_fraction\n";
    for (const auto& s : report.scores) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%s,%.6f,%.6f,%.6f\n", s.seed, s.fold, s.leads,
                      s.method.c_str(), s.macro_f1, s.mean_auroc, s.clean_fraction);
        out << buf;
    }
}

inline void write_report_text(const std::filesystem::path& path, const experiment_report& report,
                              const experiment_config& cfg) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    char buf[512];
    out << "experiment report\n";
    std::snprintf(buf, sizeof(buf),
                  "config: n=%d labels=%d noise_rate=%.2f folds=%d seeds=%d epochs=%d batch=%d warmup=%d "
                  "swa_epochs=%d threshold=%.2f\n",
                  cfg.synth.n_samples, cfg.synth.n_labels, cfg.synth.noise_rate, cfg.folds, cfg.n_seeds,
                  cfg.train.epochs, cfg.train.batch, cfg.train.warmup, cfg.train.swa_epochs,
                  cfg.train.threshold);
    out << buf << "\n";
    for (const auto& s : report.summaries) {
        std::snprintf(buf, sizeof(buf), "leads=%d\n", s.leads);
        out << buf;
        std::snprintf(buf, sizeof(buf), "  baseline macro-F1: %.4f +/- %.4f (n=%zu)\n",
                      mean_of(s.baseline_scores), stddev_of(s.baseline_scores), s.baseline_scores.size());
        out << buf;
        std::snprintf(buf, sizeof(buf), "  proposed macro-F1: %.4f +/- %.4f (n=%zu)\n",
                      mean_of(s.proposed_scores), stddev_of(s.proposed_scores), s.proposed_scores.size());
        out << buf;
        std::snprintf(buf, sizeof(buf), "  welch: t=%.4f df=%.2f p=%.6f\n", s.welch.t, s.welch.df, s.welch.p);
        out << buf;
    }
}

inline void write_experiment_outputs(const std::filesystem::path& dir, const experiment_report& report,
                                     const experiment_config& cfg) {
    std::filesystem::create_directories(dir);
    write_fold_scores_csv(dir / "folds.csv", report);
    write_report_text(dir / "report.txt", report, cfg);
}

}  // namespace ecgmix
