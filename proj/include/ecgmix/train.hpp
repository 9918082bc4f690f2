#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ecgmix/gmm.hpp"
#include "ecgmix/nn/adam.hpp"
#include "ecgmix/nn/network.hpp"
#include "ecgmix/noisy_label.hpp"
#include "ecgmix/swa.hpp"

namespace ecgmix {

struct train_config {
    int epochs = 40;
    int batch = 160;
    int warmup = 2;
    int em_iters = k_default_em_iters;
    double lambda_n = k_default_lambda_n;
    double mixup_alpha = k_default_mixup_alpha;
    double threshold = k_default_threshold;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int swa_epochs = k_default_swa_epochs;
    std::uint64_t seed = 1;
    int eval_batch = 64;
    int swa_refresh_max = k_swa_refresh_samples;
    int checkpoint_every = 1;

    void validate() const {
        if (epochs < 1 || batch < 2 || warmup < 0) throw config_error("train: bad schedule");
        if (em_iters < 1) throw config_error("train: em_iters must be >= 1");
        if (lambda_n < 0.0 || lambda_n > 1.0) throw config_error("train: lambda_n must be in [0,1]");
        if (mixup_alpha <= 0.0) throw config_error("train: mixup alpha must be > 0");
        if (swa_epochs < 1) throw config_error("train: swa_epochs must be >= 1");
        if (lr <= 0.0) throw config_error("train: lr must be > 0");
    }
};

struct epoch_stats {
    int epoch = 0;
    bool dividemix = false;
    double loss1 = 0.0, loss2 = 0.0;
    double clean_frac1 = 1.0, clean_frac2 = 1.0;
};

namespace detail {

// Mean BCE over a labeled batch, stable logit form; fills dlogits.
template <typename T>
double bce_batch(const mat<T>& logits, const mat<T>& y, mat<T>& dlogits) {
    const double norm = 1.0 / (static_cast<double>(logits.rows) * logits.cols);
    double loss = 0.0;
    dlogits = mat<T>(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = static_cast<double>(logits.v[i]);
        const double u = static_cast<double>(y.v[i]);
        loss += (u * softplus(-z) + (1.0 - u) * softplus(z)) * norm;
        dlogits.v[i] = static_cast<T>((sigmoid(z) - u) * norm);
    }
    return loss;
}

inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch));
        if (end - start < 2) break;  // batch statistics need at least 2 samples
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

}  // namespace detail

// One plain supervised epoch (the warmup / baseline objective).
template <typename T>
double train_epoch_bce(effnet1d<T>& net, adam<T>& opt, const prepared_dataset& ds,
                       const std::vector<std::size_t>& train_indices, int batch, rng& shuffle_rng) {
    std::vector<std::size_t> order = train_indices;
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (const auto& chunk : detail::make_batches(order, batch)) {
        tensor3<T> x = batch_signals<T>(ds, chunk);
        mat<T> wide = batch_wide<T>(ds, chunk);
        mat<T> y = batch_labels<T>(ds, chunk, false);
        net.store.zero_grad();
        trunk_cache<T> tc;
        head_cache<T> hc;
        mat<T> logits = net.forward_logits(x, wide, run_mode::train, tc, hc);
        mat<T> dlogits;
        loss_sum += detail::bce_batch(logits, y, dlogits);
        mat<T> dh = net.head_backward(dlogits, hc);
        net.trunk_backward(dh, tc);
        opt.step();
        ++n_batches;
    }
    return n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0;
}

// One DivideMix epoch for network m, using the partner's division of the
// training data. Labels are refined (clean) or co-guessed (noisy), pooled
// hidden vectors are mixed within the batch, and the combined objective is
// minimized.
template <typename T>
double train_epoch_dividemix(effnet1d<T>& net, effnet1d<T>& partner, adam<T>& opt,
                             const prepared_dataset& ds, const std::vector<std::size_t>& train_indices,
                             const sample_partition& division, const train_config& cfg, rng& shuffle_rng,
                             rng& mix_rng) {
    // position of each dataset index inside train_indices, for lambda lookup
    std::vector<std::size_t> order(train_indices.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    const int n_labels = ds.n_labels;
    for (const auto& chunk_pos : detail::make_batches(order, cfg.batch)) {
        const int bsz = static_cast<int>(chunk_pos.size());
        std::vector<std::size_t> chunk(chunk_pos.size());
        for (std::size_t i = 0; i < chunk_pos.size(); ++i) chunk[i] = train_indices[chunk_pos[i]];

        tensor3<T> x = batch_signals<T>(ds, chunk);
        mat<T> wide = batch_wide<T>(ds, chunk);
        mat<T> y = batch_labels<T>(ds, chunk, false);

        std::vector<bool> clean_row(chunk_pos.size());
        for (std::size_t i = 0; i < chunk_pos.size(); ++i)
            clean_row[i] = division.is_clean[chunk_pos[i]];

        // inference-mode predictions for refinement and co-guessing
        mat<T> pred_own = net.predict_proba(x, wide);
        std::vector<std::size_t> noisy_rows;
        for (std::size_t i = 0; i < clean_row.size(); ++i)
            if (!clean_row[i]) noisy_rows.push_back(i);
        mat<T> pred_partner;
        if (!noisy_rows.empty()) {
            std::vector<std::size_t> noisy_ids(noisy_rows.size());
            for (std::size_t i = 0; i < noisy_rows.size(); ++i) noisy_ids[i] = chunk[noisy_rows[i]];
            tensor3<T> xn = batch_signals<T>(ds, noisy_ids);
            mat<T> wn = batch_wide<T>(ds, noisy_ids);
            pred_partner = partner.predict_proba(xn, wn);
        }

        // refined targets
        std::vector<std::vector<double>> targets(chunk_pos.size());
        {
            std::size_t noisy_at = 0;
            for (std::size_t i = 0; i < chunk_pos.size(); ++i) {
                std::vector<double> yi(static_cast<std::size_t>(n_labels));
                std::vector<double> po(static_cast<std::size_t>(n_labels));
                for (int j = 0; j < n_labels; ++j) {
                    yi[static_cast<std::size_t>(j)] = static_cast<double>(y.at(static_cast<int>(i), j));
                    po[static_cast<std::size_t>(j)] = static_cast<double>(pred_own.at(static_cast<int>(i), j));
                }
                if (clean_row[i]) {
                    targets[i] = refine_clean(yi, po, division.lambda_gmm[chunk_pos[i]]);
                } else {
                    std::vector<double> pp(static_cast<std::size_t>(n_labels));
                    for (int j = 0; j < n_labels; ++j)
                        pp[static_cast<std::size_t>(j)] =
                            static_cast<double>(pred_partner.at(static_cast<int>(noisy_at), j));
                    targets[i] = coguess_noisy(po, pp, yi, cfg.lambda_n);
                    ++noisy_at;
                }
            }
        }

        // train-mode pooled hidden vectors
        net.store.zero_grad();
        trunk_cache<T> tc;
        mat<T> h = net.forward_pooled(x, wide, run_mode::train, tc);
        const int h_dim = h.cols;

        // within-batch pairing; one mixing coefficient per batch
        const double lam = draw_lambda_mix(mix_rng, cfg.mixup_alpha);
        std::vector<std::size_t> partner_row(chunk_pos.size());
        for (std::size_t i = 0; i < chunk_pos.size(); ++i)
            partner_row[i] = mix_rng.uniform_index(chunk_pos.size());

        mat<T> h_mix(bsz, h_dim);
        std::vector<std::vector<double>> u_mix(chunk_pos.size(),
                                               std::vector<double>(static_cast<std::size_t>(n_labels)));
        for (std::size_t i = 0; i < chunk_pos.size(); ++i) {
            manifold_mixup(h.row(static_cast<int>(i)), h.row(static_cast<int>(partner_row[i])), h_dim,
                           targets[i].data(), targets[partner_row[i]].data(), n_labels, lam,
                           h_mix.row(static_cast<int>(i)), u_mix[i].data());
        }

        head_cache<T> hc;
        mat<T> logits = net.head_forward(h_mix, hc);

        // route by the origin of the pair's labeled member
        std::vector<int> cl_rows, nl_rows;
        for (std::size_t i = 0; i < clean_row.size(); ++i)
            (clean_row[i] ? cl_rows : nl_rows).push_back(static_cast<int>(i));
        mat<T> logits_cl(static_cast<int>(cl_rows.size()), n_labels);
        mat<T> logits_nl(static_cast<int>(nl_rows.size()), n_labels);
        std::vector<std::vector<double>> u_cl(cl_rows.size()), u_nl(nl_rows.size());
        for (std::size_t i = 0; i < cl_rows.size(); ++i) {
            std::copy(logits.row(cl_rows[i]), logits.row(cl_rows[i]) + n_labels, logits_cl.row(static_cast<int>(i)));
            u_cl[i] = u_mix[static_cast<std::size_t>(cl_rows[i])];
        }
        for (std::size_t i = 0; i < nl_rows.size(); ++i) {
            std::copy(logits.row(nl_rows[i]), logits.row(nl_rows[i]) + n_labels, logits_nl.row(static_cast<int>(i)));
            u_nl[i] = u_mix[static_cast<std::size_t>(nl_rows[i])];
        }

        mat<T> dl_cl(static_cast<int>(cl_rows.size()), n_labels);
        mat<T> dl_nl(static_cast<int>(nl_rows.size()), n_labels);
        const objective_value obj = objective(logits_cl, u_cl, logits_nl, u_nl, &dl_cl, &dl_nl);
        loss_sum += obj.total;

        mat<T> dlogits(bsz, n_labels);
        for (std::size_t i = 0; i < cl_rows.size(); ++i)
            std::copy(dl_cl.row(static_cast<int>(i)), dl_cl.row(static_cast<int>(i)) + n_labels,
                      dlogits.row(cl_rows[i]));
        for (std::size_t i = 0; i < nl_rows.size(); ++i)
            std::copy(dl_nl.row(static_cast<int>(i)), dl_nl.row(static_cast<int>(i)) + n_labels,
                      dlogits.row(nl_rows[i]));

        mat<T> dh_mix = net.head_backward(dlogits, hc);
        mat<T> dh(bsz, h_dim);
        const T lam_t = static_cast<T>(lam);
        for (std::size_t i = 0; i < chunk_pos.size(); ++i) {
            const T* g = dh_mix.row(static_cast<int>(i));
            T* di = dh.row(static_cast<int>(i));
            T* dj = dh.row(static_cast<int>(partner_row[i]));
            for (int d = 0; d < h_dim; ++d) {
                di[d] += lam_t * g[d];
                dj[d] += (T(1) - lam_t) * g[d];
            }
        }
        net.trunk_backward(dh, tc);
        opt.step();
        ++n_batches;
    }
    return n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0;
}

// Division of the training set by one network: eval losses -> 2-component
// GMM. Identical losses mean no division signal; everything is clean.
template <typename T>
sample_partition divide_samples(effnet1d<T>& net, const prepared_dataset& ds,
                                const std::vector<std::size_t>& train_indices, const train_config& cfg) {
    const std::vector<double> losses = per_sample_loss(net, ds, train_indices, cfg.eval_batch);
    try {
        return fit_gmm2(losses, cfg.em_iters);
    } catch (const degenerate_losses&) {
        return sample_partition::all_clean(losses.size());
    }
}

template <typename T>
struct cotrain_result {
    std::unique_ptr<effnet1d<T>> net1, net2, swa1, swa2;
    std::vector<epoch_stats> history;
    std::vector<double> final_lambda1, final_lambda2;  // division after the last epoch

    ensemble_set<T> ensemble() {
        return ensemble_set<T>{{net1.get(), net2.get(), swa1.get(), swa2.get()}};
    }
};

// Hook for per-epoch artifacts (checkpoints, partition dumps, metrics).
template <typename T>
struct cotrain_observer {
    virtual ~cotrain_observer() = default;
    virtual void on_epoch(int epoch, const epoch_stats& stats, effnet1d<T>& net1, effnet1d<T>& net2,
                          const sample_partition* part1, const sample_partition* part2) {
        (void)epoch; (void)stats; (void)net1; (void)net2; (void)part1; (void)part2;
    }
};

// The co-training loop: warmup epochs train both networks on plain BCE, the
// remaining epochs run the division / refinement / mixup objective with each
// network consuming the division produced by the other. SWA absorbs both
// networks over the last swa_epochs epochs.
template <typename T>
cotrain_result<T> cotrain(const model_config& mcfg, const train_config& cfg, const prepared_dataset& ds,
                          const std::vector<std::size_t>& train_indices,
                          cotrain_observer<T>* observer = nullptr) {
    cfg.validate();
    if (static_cast<int>(train_indices.size()) < cfg.batch)
        throw config_error("train: dataset smaller than one batch");

    rng root(cfg.seed);
    cotrain_result<T> out;
    out.net1 = effnet1d<T>::build(mcfg, ds.n_channels, root.fork(1).next_u64());
    out.net2 = effnet1d<T>::build(mcfg, ds.n_channels, root.fork(2).next_u64());
    adam<T> opt1(out.net1->store, cfg.lr, cfg.beta1, cfg.beta2);
    adam<T> opt2(out.net2->store, cfg.lr, cfg.beta1, cfg.beta2);
    rng shuffle1 = root.fork(3), shuffle2 = root.fork(4);
    rng mix1 = root.fork(5), mix2 = root.fork(6);

    swa_accumulator<T> acc1, acc2;
    const int swa_start = cfg.epochs - cfg.swa_epochs + 1;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        epoch_stats stats;
        stats.epoch = epoch;
        sample_partition part1, part2;
        const bool warm = epoch <= cfg.warmup;
        if (warm) {
            stats.loss1 = train_epoch_bce(*out.net1, opt1, ds, train_indices, cfg.batch, shuffle1);
            stats.loss2 = train_epoch_bce(*out.net2, opt2, ds, train_indices, cfg.batch, shuffle2);
        } else {
            stats.dividemix = true;
            part1 = divide_samples(*out.net1, ds, train_indices, cfg);
            part2 = divide_samples(*out.net2, ds, train_indices, cfg);
            // the split made by one network trains the other
            stats.loss1 = train_epoch_dividemix(*out.net1, *out.net2, opt1, ds, train_indices, part2,
                                                cfg, shuffle1, mix1);
            stats.loss2 = train_epoch_dividemix(*out.net2, *out.net1, opt2, ds, train_indices, part1,
                                                cfg, shuffle2, mix2);
            stats.clean_frac1 = static_cast<double>(part2.clean_count()) / static_cast<double>(train_indices.size());
            stats.clean_frac2 = static_cast<double>(part1.clean_count()) / static_cast<double>(train_indices.size());
        }
        if (epoch >= swa_start) {
            acc1.absorb(out.net1->store);
            acc2.absorb(out.net2->store);
        }
        out.history.push_back(stats);
        if (observer)
            observer->on_epoch(epoch, stats, *out.net1, *out.net2, warm ? nullptr : &part1,
                               warm ? nullptr : &part2);
    }

    // division state after the last epoch (reported, not trained on)
    out.final_lambda1 = divide_samples(*out.net1, ds, train_indices, cfg).lambda_gmm;
    out.final_lambda2 = divide_samples(*out.net2, ds, train_indices, cfg).lambda_gmm;

    std::vector<std::size_t> refresh(train_indices.begin(),
                                     train_indices.begin() +
                                         static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                                             train_indices.size(), static_cast<std::size_t>(cfg.swa_refresh_max))));
    out.swa1 = finalize_swa(acc1, mcfg, ds.n_channels, ds, refresh, cfg.eval_batch);
    out.swa2 = finalize_swa(acc2, mcfg, ds.n_channels, ds, refresh, cfg.eval_batch);
    return out;
}

// Single-network baseline: plain BCE on the (possibly noisy) labels, same
// architecture and optimizer.
template <typename T>
struct baseline_result {
    std::unique_ptr<effnet1d<T>> net;
    std::vector<double> epoch_loss;
};

template <typename T>
baseline_result<T> train_baseline(const model_config& mcfg, const train_config& cfg,
                                  const prepared_dataset& ds, const std::vector<std::size_t>& train_indices) {
    cfg.validate();
    if (static_cast<int>(train_indices.size()) < cfg.batch)
        throw config_error("train: dataset smaller than one batch");
    rng root(cfg.seed);
    baseline_result<T> out;
    out.net = effnet1d<T>::build(mcfg, ds.n_channels, root.fork(10).next_u64());
    adam<T> opt(out.net->store, cfg.lr, cfg.beta1, cfg.beta2);
    rng shuffle = root.fork(11);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch)
        out.epoch_loss.push_back(train_epoch_bce(*out.net, opt, ds, train_indices, cfg.batch, shuffle));
    return out;
}

}  // namespace ecgmix
