#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ecgmix/gmm.hpp"
#include "ecgmix/nn/network.hpp"
#include "ecgmix/tensor.hpp"

namespace ecgmix {

constexpr double k_default_lambda_n = 0.5;
constexpr double k_default_mixup_alpha = 4.0;
constexpr double k_bce_clamp = 1e-7;

// Per-sample training loss: binary cross-entropy averaged over labels, with
// probabilities clamped to [1e-7, 1 - 1e-7].
template <typename T>
double bce_sample_loss(const T* prob, const T* label, int n_labels) {
    double acc = 0.0;
    for (int j = 0; j < n_labels; ++j) {
        const double p = std::clamp(static_cast<double>(prob[j]), k_bce_clamp, 1.0 - k_bce_clamp);
        const double y = static_cast<double>(label[j]);
        acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return acc / static_cast<double>(n_labels);
}

// Eval-mode per-sample losses over a prepared dataset (or a subset of it).
template <typename T>
std::vector<double> per_sample_loss(effnet1d<T>& net, const prepared_dataset& ds,
                                    const std::vector<std::size_t>& indices, int batch_size = 64) {
    std::vector<double> losses(indices.size(), 0.0);
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                       indices.begin() + static_cast<std::ptrdiff_t>(end));
        tensor3<T> x = batch_signals<T>(ds, chunk);
        mat<T> wide = batch_wide<T>(ds, chunk);
        mat<T> y = batch_labels<T>(ds, chunk, false);
        mat<T> p = net.predict_proba(x, wide);
        for (std::size_t i = 0; i < chunk.size(); ++i)
            losses[start + i] = bce_sample_loss(p.row(static_cast<int>(i)), y.row(static_cast<int>(i)), ds.n_labels);
    }
    return losses;
}

// Clean-label refinement: u = lambda_gmm * Y + (1 - lambda_gmm) * pred_m,
// with pred_m from the same network.
inline std::vector<double> refine_clean(const std::vector<double>& y, const std::vector<double>& pred_m,
                                        double lambda_gmm) {
    std::vector<double> u(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        u[i] = lambda_gmm * y[i] + (1.0 - lambda_gmm) * pred_m[i];
    return u;
}

// Noisy-label co-guessing: the two networks' sigmoid outputs are averaged
// and interpolated with the ground-truth label (no sharpening).
inline std::vector<double> coguess_noisy(const std::vector<double>& pred_1,
                                         const std::vector<double>& pred_2,
                                         const std::vector<double>& y,
                                         double lambda_n = k_default_lambda_n) {
    std::vector<double> u(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        u[i] = lambda_n * 0.5 * (pred_1[i] + pred_2[i]) + (1.0 - lambda_n) * y[i];
    return u;
}

// Interpolation of pooled hidden vectors and refined labels. lambda_mix == 1
// returns the clean member bit-for-bit, 0 the noisy member.
template <typename T>
void manifold_mixup(const T* h_cl, const T* h_nl, int h_dim,
                    const double* u_cl, const double* u_nl, int n_labels,
                    double lambda_mix, T* h_mix, double* u_mix) {
    if (lambda_mix == 1.0) {
        std::copy(h_cl, h_cl + h_dim, h_mix);
        std::copy(u_cl, u_cl + n_labels, u_mix);
        return;
    }
    if (lambda_mix == 0.0) {
        std::copy(h_nl, h_nl + h_dim, h_mix);
        std::copy(u_nl, u_nl + n_labels, u_mix);
        return;
    }
    const T lam = static_cast<T>(lambda_mix);
    for (int i = 0; i < h_dim; ++i) h_mix[i] = lam * h_cl[i] + (T(1) - lam) * h_nl[i];
    for (int i = 0; i < n_labels; ++i) u_mix[i] = lambda_mix * u_cl[i] + (1.0 - lambda_mix) * u_nl[i];
}

// Draw the MixUp coefficient: Beta(alpha, alpha) folded so the clean member
// dominates.
inline double draw_lambda_mix(rng& rand, double alpha = k_default_mixup_alpha) {
    const double lam = rand.beta(alpha, alpha);
    return std::max(lam, 1.0 - lam);
}

// ---------------------------------------------------------------------------
// Combined objective on head logits of mixed pairs: BCE over clean-routed
// pairs plus mean squared error over noisy-routed pairs, both through the
// sigmoid. Either term is 0 when its set is empty.
//
// L_x uses the stable logit form softplus-based BCE; its gradient wrt a
// logit is sigmoid(z) - u.
// ---------------------------------------------------------------------------

struct objective_value {
    double total = 0.0;
    double l_x = 0.0;  // clean-routed BCE
    double l_u = 0.0;  // noisy-routed MSE
};

template <typename T>
objective_value objective(const mat<T>& logits_clean, const std::vector<std::vector<double>>& u_clean,
                          const mat<T>& logits_noisy, const std::vector<std::vector<double>>& u_noisy,
                          mat<T>* dlogits_clean = nullptr, mat<T>* dlogits_noisy = nullptr) {
    objective_value out;
    const int n_cl = logits_clean.rows;
    const int n_nl = logits_noisy.rows;
    if (n_cl > 0) {
        const int n_labels = logits_clean.cols;
        const double norm = 1.0 / (static_cast<double>(n_cl) * n_labels);
        for (int b = 0; b < n_cl; ++b) {
            for (int j = 0; j < n_labels; ++j) {
                const double z = static_cast<double>(logits_clean.at(b, j));
                const double u = u_clean[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
                out.l_x += (u * softplus(-z) + (1.0 - u) * softplus(z)) * norm;
                if (dlogits_clean)
                    dlogits_clean->at(b, j) = static_cast<T>((sigmoid(z) - u) * norm);
            }
        }
    }
    if (n_nl > 0) {
        const int n_labels = logits_noisy.cols;
        const double norm = 1.0 / (static_cast<double>(n_nl) * n_labels);
        for (int b = 0; b < n_nl; ++b) {
            for (int j = 0; j < n_labels; ++j) {
                const double z = static_cast<double>(logits_noisy.at(b, j));
                const double p = sigmoid(z);
                const double u = u_noisy[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
                out.l_u += (p - u) * (p - u) * norm;
                if (dlogits_noisy)
                    dlogits_noisy->at(b, j) = static_cast<T>(2.0 * (p - u) * p * (1.0 - p) * norm);
            }
        }
    }
    out.total = out.l_x + out.l_u;
    return out;
}

}  // namespace ecgmix
