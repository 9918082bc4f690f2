#pragma once

#include <array>
#include <memory>
#include <vector>

#include "ecgmix/nn/network.hpp"
#include "ecgmix/nn/params.hpp"

namespace ecgmix {

constexpr int k_default_swa_epochs = 13;
constexpr int k_swa_refresh_samples = 2048;

// Running mean of trainable parameters over absorbed checkpoints, kept in
// double regardless of the training precision. Non-trainable buffers (BN
// statistics) are carried over from the last absorbed checkpoint and are
// expected to be refreshed after averaging.
template <typename T>
class swa_accumulator {
  public:
    void absorb(const param_store<T>& store) {
        if (count_ == 0) {
            mean_.resize(store.params.size());
            for (std::size_t i = 0; i < store.params.size(); ++i)
                mean_[i].assign(store.params[i]->size(), 0.0);
            shapes_.reserve(store.params.size());
            for (const auto* p : store.params) shapes_.push_back(p->size());
        }
        if (store.params.size() != mean_.size()) throw shape_error("swa: parameter count mismatch");
        for (std::size_t i = 0; i < store.params.size(); ++i)
            if (store.params[i]->size() != shapes_[i]) throw shape_error("swa: parameter shape mismatch");
        const double k = static_cast<double>(count_ + 1);
        for (std::size_t i = 0; i < store.params.size(); ++i) {
            const auto& p = *store.params[i];
            auto& m = mean_[i];
            for (std::size_t j = 0; j < p.size(); ++j)
                m[j] += (static_cast<double>(p.v[j]) - m[j]) / k;
        }
        last_buffers_.clear();
        for (const auto* b : store.buffers) last_buffers_.push_back(b->v);
        ++count_;
    }

    int count() const { return count_; }

    // Write the averaged weights (and carried-over buffers) into a target
    // network's parameter store.
    void write_to(param_store<T>& store) const {
        if (count_ == 0) throw state_error("swa: nothing absorbed");
        if (store.params.size() != mean_.size()) throw shape_error("swa: parameter count mismatch");
        for (std::size_t i = 0; i < store.params.size(); ++i) {
            auto& p = *store.params[i];
            if (p.size() != shapes_[i]) throw shape_error("swa: parameter shape mismatch");
            for (std::size_t j = 0; j < p.size(); ++j) p.v[j] = static_cast<T>(mean_[i][j]);
        }
        if (store.buffers.size() != last_buffers_.size()) throw shape_error("swa: buffer count mismatch");
        for (std::size_t i = 0; i < store.buffers.size(); ++i) store.buffers[i]->v = last_buffers_[i];
    }

    const std::vector<std::vector<double>>& mean() const { return mean_; }

  private:
    int count_ = 0;
    std::vector<std::vector<double>> mean_;
    std::vector<std::size_t> shapes_;
    std::vector<std::vector<T>> last_buffers_;
};

// One statistics-collection sweep so the averaged weights get matching BN
// running statistics. An empty index list skips the refresh (pure copy).
template <typename T>
void refresh_bn_stats(effnet1d<T>& net, const prepared_dataset& ds,
                      const std::vector<std::size_t>& indices, int batch_size = 64) {
    if (indices.empty()) return;
    net.begin_collect_stats();
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                       indices.begin() + static_cast<std::ptrdiff_t>(end));
        tensor3<T> x = batch_signals<T>(ds, chunk);
        mat<T> wide = batch_wide<T>(ds, chunk);
        trunk_cache<T> tc;
        net.forward_pooled(x, wide, run_mode::collect_stats, tc);
    }
    net.finish_collect_stats();
}

// Materialize the averaged network: averaged weights plus BN statistics
// recomputed over (up to) the given training sample.
template <typename T>
std::unique_ptr<effnet1d<T>> finalize_swa(const swa_accumulator<T>& acc, const model_config& cfg,
                                          int n_channels, const prepared_dataset& ds,
                                          const std::vector<std::size_t>& refresh_indices,
                                          int batch_size = 64) {
    if (acc.count() == 0) throw state_error("finalize_swa: empty accumulator");
    auto net = effnet1d<T>::build(cfg, n_channels, 0);
    acc.write_to(net->store);
    refresh_bn_stats(*net, ds, refresh_indices, batch_size);
    return net;
}

// The four-model ensemble: both co-trained networks and their SWA averages.
template <typename T>
struct ensemble_set {
    std::array<effnet1d<T>*, 4> members{};

    void validate() const {
        for (auto* m : members)
            if (m == nullptr) throw config_error("ensemble: needs exactly 4 networks");
        for (auto* m : members) {
            if (m->n_channels != members[0]->n_channels || m->cfg.n_labels != members[0]->cfg.n_labels)
                throw shape_error("ensemble: member architecture mismatch");
        }
    }
};

// Arithmetic mean of the four members' posterior probabilities, accumulated
// in double so identical members reproduce the single-model output exactly.
template <typename T>
mat<T> ensemble_proba(const ensemble_set<T>& ens, const tensor3<T>& x, const mat<T>& wide) {
    ens.validate();
    mat<double> acc(x.b, ens.members[0]->cfg.n_labels);
    for (auto* m : ens.members) {
        mat<T> p = m->predict_proba(x, wide);
        for (std::size_t i = 0; i < p.size(); ++i) acc.v[i] += static_cast<double>(p.v[i]);
    }
    mat<T> out(acc.rows, acc.cols);
    for (std::size_t i = 0; i < acc.size(); ++i) out.v[i] = static_cast<T>(acc.v[i] / 4.0);
    return out;
}

template <typename T>
prediction ensemble_predict(const ensemble_set<T>& ens, const tensor3<T>& x, const mat<T>& wide,
                            double threshold = k_default_threshold) {
    mat<T> p = ensemble_proba(ens, x, wide);
    prediction out;
    out.probabilities.resize(static_cast<std::size_t>(p.rows));
    out.decisions.resize(static_cast<std::size_t>(p.rows));
    for (int b = 0; b < p.rows; ++b) {
        for (int c = 0; c < p.cols; ++c) {
            const double v = static_cast<double>(p.at(b, c));
            out.probabilities[static_cast<std::size_t>(b)].push_back(v);
            out.decisions[static_cast<std::size_t>(b)].push_back(v >= threshold);
        }
    }
    return out;
}

}  // namespace ecgmix
