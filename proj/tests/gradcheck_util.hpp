#pragma once

// Shared finite-difference harness for the gradient suite. Networks are
// instantiated at long double and checked with Richardson-extrapolated
// central differences, which keeps both truncation and cancellation noise
// well below the 1e-4 acceptance tolerance. Configurations whose global
// max pool sits within the step size of an argmax tie are skipped: the loss
// is not differentiable there and a finite difference spanning the kink is
// meaningless.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ecgmix/nn/network.hpp"
#include "ecgmix/nn/params.hpp"

namespace gradcheck {

using scalar = long double;

constexpr double k_fd_step = 1e-5;
constexpr double k_pool_margin = 1e-3;  // required argmax runner-up gap

inline double central_fd(const std::function<double()>& loss, scalar& value, double h) {
    const scalar keep = value;
    auto at = [&](double offset) {
        value = keep + static_cast<scalar>(offset);
        const double l = loss();
        value = keep;
        return l;
    };
    const double f1 = (at(h) - at(-h)) / (2.0 * h);
    const double f2 = (at(h / 2) - at(-h / 2)) / h;
    return (4.0 * f2 - f1) / 3.0;
}

struct report {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t n_checked = 0;
};

// Max relative error over every trainable parameter of the store.
inline report check_params(ecgmix::param_store<scalar>& store, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double h = k_fd_step) {
    compute_grads();
    // snapshot analytic gradients before FD re-runs disturb them
    std::vector<std::vector<scalar>> grads;
    grads.reserve(store.params.size());
    for (auto* p : store.params) grads.push_back(p->g);

    report rep;
    for (std::size_t pi = 0; pi < store.params.size(); ++pi) {
        auto* p = store.params[pi];
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double analytic = static_cast<double>(grads[pi][i]);
            const double fd = central_fd(loss, p->v[i], h);
            const double err = std::abs(analytic - fd) / (std::abs(analytic) + 1e-8);
            ++rep.n_checked;
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst_param = p->name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return rep;
}

}  // namespace gradcheck
