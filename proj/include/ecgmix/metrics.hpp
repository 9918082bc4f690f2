#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ecgmix/errors.hpp"
#include "ecgmix/rng.hpp"

namespace ecgmix {

// ---------------------------------------------------------------------------
// Stratified k-fold via greedy iterative stratification: rarest label first,
// each of its samples goes to the fold that still wants that label most,
// subject to balanced fold capacities. Deterministic per seed.
// ---------------------------------------------------------------------------

struct fold_plan {
    int k = 0;
    std::vector<std::vector<std::size_t>> folds;  // sample indices per fold
};

inline fold_plan stratified_kfold(const std::vector<std::vector<std::uint8_t>>& labels, int k,
                                  std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (k < 2) throw config_error("stratified_kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > n) throw config_error("stratified_kfold: k exceeds sample count");
    const std::size_t n_labels = labels.empty() ? 0 : labels[0].size();

    rng rand(seed);
    fold_plan plan;
    plan.k = k;
    plan.folds.resize(static_cast<std::size_t>(k));

    std::vector<int> capacity(static_cast<std::size_t>(k), static_cast<int>(n) / k);
    for (std::size_t f = 0; f < n % static_cast<std::size_t>(k); ++f) ++capacity[f];

    // how many samples of each label a fold still wants
    std::vector<std::vector<double>> desire(static_cast<std::size_t>(k),
                                            std::vector<double>(n_labels, 0.0));
    std::vector<int> label_remaining(n_labels, 0);
    for (const auto& row : labels)
        for (std::size_t l = 0; l < n_labels; ++l)
            if (row[l]) ++label_remaining[l];
    for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f)
        for (std::size_t l = 0; l < n_labels; ++l)
            desire[f][l] = static_cast<double>(label_remaining[l]) / k;

    std::vector<bool> assigned(n, false);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rand.shuffle(order.begin(), order.end());

    auto place = [&](std::size_t sample, std::size_t fold) {
        plan.folds[fold].push_back(sample);
        assigned[sample] = true;
        --capacity[fold];
        for (std::size_t l = 0; l < n_labels; ++l)
            if (labels[sample][l]) {
                desire[fold][l] -= 1.0;
                --label_remaining[l];
            }
    };

    for (;;) {
        // rarest label that still has unassigned positives
        int best_label = -1;
        for (std::size_t l = 0; l < n_labels; ++l)
            if (label_remaining[l] > 0 &&
                (best_label < 0 || label_remaining[l] < label_remaining[static_cast<std::size_t>(best_label)]))
                best_label = static_cast<int>(l);
        if (best_label < 0) break;
        const auto lbl = static_cast<std::size_t>(best_label);
        for (std::size_t s : order) {
            if (assigned[s] || !labels[s][lbl]) continue;
            std::vector<std::size_t> best_folds;
            double best_desire = -1e300;
            for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
                if (capacity[f] <= 0) continue;
                if (desire[f][lbl] > best_desire + 1e-12) {
                    best_desire = desire[f][lbl];
                    best_folds.assign(1, f);
                } else if (desire[f][lbl] > best_desire - 1e-12) {
                    best_folds.push_back(f);
                }
            }
            if (best_folds.size() > 1) {
                // prefer the emptiest fold, then a seeded pick
                int max_cap = -1;
                std::vector<std::size_t> tied;
                for (std::size_t f : best_folds) {
                    if (capacity[f] > max_cap) {
                        max_cap = capacity[f];
                        tied.assign(1, f);
                    } else if (capacity[f] == max_cap) {
                        tied.push_back(f);
                    }
                }
                best_folds = tied;
            }
            place(s, best_folds[rand.uniform_index(best_folds.size())]);
        }
    }

    // label-free leftovers go wherever the most room is
    for (std::size_t s : order) {
        if (assigned[s]) continue;
        std::vector<std::size_t> best_folds;
        int max_cap = -1;
        for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
            if (capacity[f] > max_cap) {
                max_cap = capacity[f];
                best_folds.assign(1, f);
            } else if (capacity[f] == max_cap) {
                best_folds.push_back(f);
            }
        }
        place(s, best_folds[rand.uniform_index(best_folds.size())]);
    }

    for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
    return plan;
}

// ---------------------------------------------------------------------------
// Multi-label evaluation at a fixed threshold plus rank-based ROC area.
// ---------------------------------------------------------------------------

struct label_metrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0, auroc = 0.5;
    long tp = 0, fp = 0, fn = 0, tn = 0;
    bool no_positives = false;
    bool auroc_defined = true;
};

struct eval_report {
    std::vector<label_metrics> per_label;
    double macro_f1 = 0.0;
    double mean_auroc = 0.0;
    double threshold = 0.3;
};

// Mann-Whitney AUROC with midranks for ties.
inline double rank_auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                         bool& defined) {
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (auto t : truth) n_pos += t ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        defined = false;
        return 0.5;
    }
    defined = true;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t q = i; q <= j; ++q)
            if (truth[order[q]]) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline eval_report evaluate(const std::vector<std::vector<double>>& probs,
                            const std::vector<std::vector<std::uint8_t>>& truth,
                            double threshold = 0.3) {
    if (probs.size() != truth.size()) throw alignment_error("evaluate: sample count mismatch");
    if (probs.empty()) throw invalid_input("evaluate: empty input");
    const std::size_t n_labels = truth[0].size();
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (probs[i].size() != n_labels || truth[i].size() != n_labels)
            throw alignment_error("evaluate: label count mismatch");

    eval_report rep;
    rep.threshold = threshold;
    rep.per_label.resize(n_labels);
    double f1_sum = 0.0, auc_sum = 0.0;
    std::vector<double> scores(probs.size());
    std::vector<std::uint8_t> col(probs.size());
    for (std::size_t l = 0; l < n_labels; ++l) {
        auto& m = rep.per_label[l];
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const bool pos = probs[i][l] >= threshold;
            const bool is = truth[i][l] != 0;
            if (pos && is) ++m.tp;
            else if (pos && !is) ++m.fp;
            else if (!pos && is) ++m.fn;
            else ++m.tn;
            scores[i] = probs[i][l];
            col[i] = truth[i][l];
        }
        m.no_positives = (m.tp + m.fn) == 0;
        m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
        m.recall = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
        m.f1 = (2 * m.tp + m.fp + m.fn) > 0
                   ? 2.0 * static_cast<double>(m.tp) / static_cast<double>(2 * m.tp + m.fp + m.fn)
                   : 0.0;
        m.auroc = rank_auroc(scores, col, m.auroc_defined);
        f1_sum += m.f1;
        auc_sum += m.auroc;
    }
    rep.macro_f1 = f1_sum / static_cast<double>(n_labels);
    rep.mean_auroc = auc_sum / static_cast<double>(n_labels);
    return rep;
}

// Permutation aligning prediction ids to truth ids; alignment_error if they
// are not the same id multiset.
inline std::vector<std::size_t> align_ids(const std::vector<std::string>& pred_ids,
                                          const std::vector<std::string>& truth_ids) {
    if (pred_ids.size() != truth_ids.size()) throw alignment_error("id count mismatch");
    std::vector<std::size_t> order(pred_ids.size());
    std::vector<std::size_t> pred_sorted(pred_ids.size());
    std::iota(pred_sorted.begin(), pred_sorted.end(), 0);
    std::sort(pred_sorted.begin(), pred_sorted.end(),
              [&](std::size_t a, std::size_t b) { return pred_ids[a] < pred_ids[b]; });
    for (std::size_t i = 0; i < truth_ids.size(); ++i) {
        auto it = std::lower_bound(pred_sorted.begin(), pred_sorted.end(), truth_ids[i],
                                   [&](std::size_t a, const std::string& s) { return pred_ids[a] < s; });
        if (it == pred_sorted.end() || pred_ids[*it] != truth_ids[i])
            throw alignment_error("prediction missing id: " + truth_ids[i]);
        order[i] = *it;
    }
    return order;
}

// ---------------------------------------------------------------------------
// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
// freedom; two-sided p via the regularized incomplete beta function.
// ---------------------------------------------------------------------------

struct welch_result {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

namespace detail {

// Continued fraction for the incomplete beta (Lentz's method).
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-16, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                               a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Two-sided p for a t statistic with (possibly fractional) df.
inline double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0) return 1.0;
    return detail::betai(0.5 * df, 0.5, df / (df + t * t));
}

inline double student_t_cdf(double t, double df) {
    const double p = 0.5 * detail::betai(0.5 * df, 0.5, df / (df + t * t));
    return t >= 0.0 ? 1.0 - p : p;
}

inline welch_result welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw invalid_input("welch_t: need at least 2 values per sample");
    const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
    double va = 0.0, vb = 0.0;
    for (double x : a) va += (x - ma) * (x - ma);
    for (double x : b) vb += (x - mb) * (x - mb);
    va /= na - 1.0;
    vb /= nb - 1.0;
    if (va <= 0.0 && vb <= 0.0) throw degenerate_variance("welch_t: zero variance in both samples");
    const double se2 = va / na + vb / nb;
    welch_result r;
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

inline double mean_of(const std::vector<double>& xs) {
    return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double stddev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::sqrt(v / static_cast<double>(xs.size() - 1));
}

}  // namespace ecgmix
