#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ecgmix/errors.hpp"

namespace ecgmix {

// Two-component 1D Gaussian mixture fitted to normalized per-sample losses.
// The lower-mean component is the "clean" one; lambda_gmm is its posterior.
struct sample_partition {
    std::vector<double> lambda_gmm;  // clean probability per sample
    std::vector<bool> is_clean;      // lambda_gmm >= 0.5
    double mean[2] = {0.0, 0.0};     // ordered: mean[0] <= mean[1]
    double var[2] = {1.0, 1.0};
    double weight[2] = {0.5, 0.5};
    std::vector<double> log_likelihood;  // one value per EM iteration

    std::size_t clean_count() const {
        return static_cast<std::size_t>(std::count(is_clean.begin(), is_clean.end(), true));
    }

    static sample_partition all_clean(std::size_t n) {
        sample_partition p;
        p.lambda_gmm.assign(n, 1.0);
        p.is_clean.assign(n, true);
        return p;
    }
};

constexpr double k_gmm_var_floor = 1e-6;
constexpr int k_default_em_iters = 10;

namespace detail {

inline double gauss_log_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * 3.14159265358979323846 * var) + d * d / var);
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

// Min-max normalization of losses to [0, 1]; identical losses are degenerate.
inline std::vector<double> normalize_losses(const std::vector<double>& losses) {
    if (losses.size() < 2) throw invalid_input("fit_gmm2: need at least 2 samples");
    const auto [mn_it, mx_it] = std::minmax_element(losses.begin(), losses.end());
    if (*mx_it <= *mn_it) throw degenerate_losses("all per-sample losses are identical");
    std::vector<double> out(losses.size());
    const double scale = 1.0 / (*mx_it - *mn_it);
    for (std::size_t i = 0; i < losses.size(); ++i) out[i] = (losses[i] - *mn_it) * scale;
    return out;
}

// EM for the two-component mixture, exactly em_iters iterations. Component
// means are initialized at the 10th/90th percentiles, variances at the
// sample variance, weights equal. After fitting, the clean posterior is
// clamped with a suffix maximum over loss order: the raw posterior of the
// tight low component can dip again for extreme low losses when the two
// variances differ, and the division must stay monotone in loss.
inline sample_partition fit_gmm2(const std::vector<double>& losses, int em_iters = k_default_em_iters) {
    const std::vector<double> x = normalize_losses(losses);
    const std::size_t n = x.size();

    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    double mean[2] = {detail::quantile_sorted(sorted, 0.10), detail::quantile_sorted(sorted, 0.90)};
    double sample_mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double sample_var = 0.0;
    for (double v : x) sample_var += (v - sample_mean) * (v - sample_mean);
    sample_var = std::max(sample_var / static_cast<double>(n), k_gmm_var_floor);
    double var[2] = {sample_var, sample_var};
    double weight[2] = {0.5, 0.5};
    if (mean[1] <= mean[0]) mean[1] = mean[0] + 1e-3;

    sample_partition part;
    part.lambda_gmm.assign(n, 0.5);
    std::vector<double> resp0(n);

    for (int iter = 0; iter < em_iters; ++iter) {
        // E step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l0 = std::log(weight[0]) + detail::gauss_log_pdf(x[i], mean[0], var[0]);
            const double l1 = std::log(weight[1]) + detail::gauss_log_pdf(x[i], mean[1], var[1]);
            const double mx = std::max(l0, l1);
            const double s = std::exp(l0 - mx) + std::exp(l1 - mx);
            ll += mx + std::log(s);
            resp0[i] = std::exp(l0 - mx) / s;
        }
        part.log_likelihood.push_back(ll);

        // M step
        double n0 = 0.0, sum0 = 0.0, sum1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            n0 += resp0[i];
            sum0 += resp0[i] * x[i];
            sum1 += (1.0 - resp0[i]) * x[i];
        }
        const double n1 = static_cast<double>(n) - n0;
        if (n0 > 0.0) mean[0] = sum0 / n0;
        if (n1 > 0.0) mean[1] = sum1 / n1;
        double v0 = 0.0, v1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d0 = x[i] - mean[0], d1 = x[i] - mean[1];
            v0 += resp0[i] * d0 * d0;
            v1 += (1.0 - resp0[i]) * d1 * d1;
        }
        var[0] = std::max(n0 > 0.0 ? v0 / n0 : var[0], k_gmm_var_floor);
        var[1] = std::max(n1 > 0.0 ? v1 / n1 : var[1], k_gmm_var_floor);
        weight[0] = std::clamp(n0 / static_cast<double>(n), 1e-12, 1.0 - 1e-12);
        weight[1] = 1.0 - weight[0];
    }

    // final posteriors under the fitted parameters
    for (std::size_t i = 0; i < n; ++i) {
        const double l0 = std::log(weight[0]) + detail::gauss_log_pdf(x[i], mean[0], var[0]);
        const double l1 = std::log(weight[1]) + detail::gauss_log_pdf(x[i], mean[1], var[1]);
        const double mx = std::max(l0, l1);
        resp0[i] = std::exp(l0 - mx) / (std::exp(l0 - mx) + std::exp(l1 - mx));
    }

    // identify the lower-mean component as clean
    const int clean_comp = mean[0] <= mean[1] ? 0 : 1;
    for (int c = 0; c < 2; ++c) {
        part.mean[c] = mean[clean_comp == 0 ? c : 1 - c];
        part.var[c] = var[clean_comp == 0 ? c : 1 - c];
        part.weight[c] = weight[clean_comp == 0 ? c : 1 - c];
    }
    for (std::size_t i = 0; i < n; ++i)
        part.lambda_gmm[i] = clean_comp == 0 ? resp0[i] : 1.0 - resp0[i];

    // monotone clamp: lambda of a lower-loss sample is at least the lambda
    // of every higher-loss sample
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    double running = 0.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        running = std::max(running, part.lambda_gmm[*it]);
        part.lambda_gmm[*it] = running;
    }

    part.is_clean.resize(n);
    for (std::size_t i = 0; i < n; ++i) part.is_clean[i] = part.lambda_gmm[i] >= 0.5;
    return part;
}

}  // namespace ecgmix
