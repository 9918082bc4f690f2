#pragma once

#include <cmath>
#include <vector>

#include "ecgmix/nn/params.hpp"

namespace ecgmix {

// Adam with bias correction; no weight decay.
template <typename T>
class adam {
  public:
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit adam(param_store<T>& store, double lr_ = 1e-3, double b1 = 0.9, double b2 = 0.999)
        : lr(lr_), beta1(b1), beta2(b2), store_(&store) {
        m_.resize(store.params.size());
        v_.resize(store.params.size());
        for (std::size_t i = 0; i < store.params.size(); ++i) {
            m_[i].assign(store.params[i]->size(), 0.0);
            v_[i].assign(store.params[i]->size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, t_);
        const double bc2 = 1.0 - std::pow(beta2, t_);
        for (std::size_t i = 0; i < store_->params.size(); ++i) {
            auto& p = *store_->params[i];
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double g = static_cast<double>(p.g[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                const double update = lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
                p.v[j] -= static_cast<T>(update);
            }
        }
    }

    int steps_taken() const { return t_; }

  private:
    param_store<T>* store_;
    std::vector<std::vector<double>> m_, v_;
    int t_ = 0;
};

}  // namespace ecgmix
