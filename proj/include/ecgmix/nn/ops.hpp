#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <vector>

#include "ecgmix/nn/params.hpp"
#include "ecgmix/tensor.hpp"

namespace ecgmix {

enum class run_mode { train, eval, collect_stats };

template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
T softplus(T x) {
    if (x > T(0)) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// mish(x) = x * tanh(softplus(x))
template <typename T>
T mish(T x) {
    return x * std::tanh(softplus(x));
}

template <typename T>
T mish_grad(T x) {
    const T t = std::tanh(softplus(x));
    return t + x * (T(1) - t * t) * sigmoid(x);
}

// ---------------------------------------------------------------------------
// 1D convolution, "same" zero padding (pad = (k-1)/2), stride in {1, 2}.
// Output width = ceil(W / stride).
// ---------------------------------------------------------------------------

inline int conv_out_width(int w, int stride) { return (w + stride - 1) / stride; }

template <typename T>
struct conv1d_cache {
    tensor3<T> in;
};

template <typename T>
struct conv1d {
    int c_in = 0, c_out = 0, kernel = 0, stride = 1;
    param<T> weight;  // (c_out, c_in, kernel)
    param<T> bias;    // (c_out)

    void init(const std::string& prefix, int ci, int co, int k, int s, param_store<T>& store, rng& rand) {
        if (k % 2 == 0) throw config_error(prefix + ": kernel must be odd");
        if (s != 1 && s != 2) throw config_error(prefix + ": stride must be 1 or 2");
        c_in = ci; c_out = co; kernel = k; stride = s;
        weight.resize(prefix + ".weight", {co, ci, k});
        bias.resize(prefix + ".bias", {co});
        const T bound = T(1) / std::sqrt(static_cast<T>(ci * k));
        for (auto& x : weight.v) x = static_cast<T>(rand.uniform(-bound, bound));
        store.add(weight);
        store.add(bias);
    }

    tensor3<T> forward(const tensor3<T>& x, conv1d_cache<T>& cache) const {
        if (x.c != c_in) throw shape_error(weight.name + ": expected " + std::to_string(c_in) +
                                           " input channels, got " + std::to_string(x.c));
        const int pad = (kernel - 1) / 2;
        const int ow_n = conv_out_width(x.w, stride);
        tensor3<T> y(x.b, c_out, ow_n);
        for (int b = 0; b < x.b; ++b) {
            for (int co = 0; co < c_out; ++co) {
                T* yr = y.row(b, co);
                const T bv = bias.v[static_cast<std::size_t>(co)];
                for (int ow = 0; ow < ow_n; ++ow) yr[ow] = bv;
                for (int ci = 0; ci < c_in; ++ci) {
                    const T* xr = x.row(b, ci);
                    const T* wr = &weight.v[(static_cast<std::size_t>(co) * c_in + ci) * kernel];
                    for (int k = 0; k < kernel; ++k) {
                        const int off = k - pad;
                        int lo = 0, hi = ow_n - 1;
                        if (off < 0) lo = (-off + stride - 1) / stride;
                        if (off > 0) hi = (x.w - 1 - off) / stride;
                        const T wv = wr[k];
                        const T* xs = xr + off;
                        if (stride == 1) {
                            for (int ow = lo; ow <= hi; ++ow) yr[ow] += wv * xs[ow];
                        } else {
                            for (int ow = lo; ow <= hi; ++ow) yr[ow] += wv * xs[2 * ow];
                        }
                    }
                }
            }
        }
        cache.in = x;
        return y;
    }

    tensor3<T> backward(const tensor3<T>& dy, const conv1d_cache<T>& cache) {
        if (cache.in.size() == 0) throw state_error(weight.name + ": backward without a recorded forward");
        const tensor3<T>& x = cache.in;
        const int pad = (kernel - 1) / 2;
        const int ow_n = dy.w;
        tensor3<T> dx(x.b, x.c, x.w);
        for (int b = 0; b < x.b; ++b) {
            for (int co = 0; co < c_out; ++co) {
                const T* dyr = dy.row(b, co);
                T db = T(0);
                for (int ow = 0; ow < ow_n; ++ow) db += dyr[ow];
                bias.g[static_cast<std::size_t>(co)] += db;
                for (int ci = 0; ci < c_in; ++ci) {
                    const T* xr = x.row(b, ci);
                    T* dxr = dx.row(b, ci);
                    const std::size_t wbase = (static_cast<std::size_t>(co) * c_in + ci) * kernel;
                    for (int k = 0; k < kernel; ++k) {
                        const int off = k - pad;
                        int lo = 0, hi = ow_n - 1;
                        if (off < 0) lo = (-off + stride - 1) / stride;
                        if (off > 0) hi = (x.w - 1 - off) / stride;
                        const T wv = weight.v[wbase + k];
                        T dw = T(0);
                        if (stride == 1) {
                            const T* xs = xr + off;
                            T* dxs = dxr + off;
                            for (int ow = lo; ow <= hi; ++ow) {
                                dw += dyr[ow] * xs[ow];
                                dxs[ow] += wv * dyr[ow];
                            }
                        } else {
                            for (int ow = lo; ow <= hi; ++ow) {
                                const int iw = 2 * ow + off;
                                dw += dyr[ow] * xr[iw];
                                dxr[iw] += wv * dyr[ow];
                            }
                        }
                        weight.g[wbase + k] += dw;
                    }
                }
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Batch normalization over (batch, frames) per channel. Biased variance,
// momentum 0.1, epsilon 1e-5. collect_stats mode aggregates fresh statistics
// across calls (for weight-averaged models) until finish_collect().
// ---------------------------------------------------------------------------

template <typename T>
struct batchnorm_cache {
    tensor3<T> xhat;
    std::vector<T> inv_std;
    run_mode mode = run_mode::train;
};

template <typename T>
struct batchnorm1d {
    int channels = 0;
    T momentum = T(0.1);
    T eps = T(1e-5);
    param<T> gamma, beta;
    buffer<T> running_mean, running_var;

    // collect_stats accumulators
    std::vector<double> acc_sum, acc_sumsq;
    double acc_count = 0.0;

    void init(const std::string& prefix, int c, param_store<T>& store) {
        channels = c;
        gamma.resize(prefix + ".gamma", {c});
        beta.resize(prefix + ".beta", {c});
        running_mean.resize(prefix + ".running_mean", {c});
        running_var.resize(prefix + ".running_var", {c});
        std::fill(gamma.v.begin(), gamma.v.end(), T(1));
        std::fill(running_var.v.begin(), running_var.v.end(), T(1));
        store.add(gamma);
        store.add(beta);
        store.add(running_mean);
        store.add(running_var);
    }

    void begin_collect() {
        acc_sum.assign(static_cast<std::size_t>(channels), 0.0);
        acc_sumsq.assign(static_cast<std::size_t>(channels), 0.0);
        acc_count = 0.0;
    }

    void finish_collect() {
        if (acc_count <= 0.0) return;
        for (int c = 0; c < channels; ++c) {
            const double mean = acc_sum[static_cast<std::size_t>(c)] / acc_count;
            double var = acc_sumsq[static_cast<std::size_t>(c)] / acc_count - mean * mean;
            running_mean.v[static_cast<std::size_t>(c)] = static_cast<T>(mean);
            running_var.v[static_cast<std::size_t>(c)] = static_cast<T>(std::max(var, 0.0));
        }
        acc_sum.clear();
        acc_sumsq.clear();
        acc_count = 0.0;
    }

    tensor3<T> forward(const tensor3<T>& x, run_mode mode, batchnorm_cache<T>& cache) {
        if (x.c != channels) throw shape_error(gamma.name + ": channel mismatch");
        tensor3<T> y(x.b, x.c, x.w);
        cache.mode = mode;
        if (mode == run_mode::eval) {
            for (int c = 0; c < channels; ++c) {
                const T inv = T(1) / std::sqrt(running_var.v[static_cast<std::size_t>(c)] + eps);
                const T mu = running_mean.v[static_cast<std::size_t>(c)];
                const T gc = gamma.v[static_cast<std::size_t>(c)], bc = beta.v[static_cast<std::size_t>(c)];
                for (int b = 0; b < x.b; ++b) {
                    const T* xr = x.row(b, c);
                    T* yr = y.row(b, c);
                    for (int w = 0; w < x.w; ++w) yr[w] = gc * ((xr[w] - mu) * inv) + bc;
                }
            }
            return y;
        }
        using acc_t = std::conditional_t<(sizeof(T) >= sizeof(double)), T, double>;
        const auto group = static_cast<acc_t>(x.b) * static_cast<acc_t>(x.w);
        cache.xhat = tensor3<T>(x.b, x.c, x.w);
        cache.inv_std.resize(static_cast<std::size_t>(channels));
        for (int c = 0; c < channels; ++c) {
            acc_t sum = 0, sumsq = 0;
            for (int b = 0; b < x.b; ++b) {
                const T* xr = x.row(b, c);
                for (int w = 0; w < x.w; ++w) {
                    sum += xr[w];
                    sumsq += static_cast<acc_t>(xr[w]) * xr[w];
                }
            }
            const acc_t mu = sum / group;
            const acc_t var = std::max<acc_t>(sumsq / group - mu * mu, 0);
            const T inv = T(1) / std::sqrt(static_cast<T>(var) + eps);
            cache.inv_std[static_cast<std::size_t>(c)] = inv;
            const T gc = gamma.v[static_cast<std::size_t>(c)], bc = beta.v[static_cast<std::size_t>(c)];
            for (int b = 0; b < x.b; ++b) {
                const T* xr = x.row(b, c);
                T* xh = cache.xhat.row(b, c);
                T* yr = y.row(b, c);
                for (int w = 0; w < x.w; ++w) {
                    xh[w] = (xr[w] - static_cast<T>(mu)) * inv;
                    yr[w] = gc * xh[w] + bc;
                }
            }
            if (mode == run_mode::train) {
                running_mean.v[static_cast<std::size_t>(c)] =
                    (T(1) - momentum) * running_mean.v[static_cast<std::size_t>(c)] + momentum * static_cast<T>(mu);
                running_var.v[static_cast<std::size_t>(c)] =
                    (T(1) - momentum) * running_var.v[static_cast<std::size_t>(c)] + momentum * static_cast<T>(var);
            } else {  // collect_stats
                acc_sum[static_cast<std::size_t>(c)] += static_cast<double>(sum);
                acc_sumsq[static_cast<std::size_t>(c)] += static_cast<double>(sumsq);
            }
        }
        if (mode == run_mode::collect_stats) acc_count += static_cast<double>(x.b) * x.w;
        return y;
    }

    tensor3<T> backward(const tensor3<T>& dy, const batchnorm_cache<T>& cache) {
        if (cache.mode == run_mode::eval) throw state_error("batchnorm backward needs a train-mode forward");
        const tensor3<T>& xhat = cache.xhat;
        const auto n = static_cast<T>(static_cast<double>(dy.b) * dy.w);
        tensor3<T> dx(dy.b, dy.c, dy.w);
        for (int c = 0; c < channels; ++c) {
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (int b = 0; b < dy.b; ++b) {
                const T* dyr = dy.row(b, c);
                const T* xh = xhat.row(b, c);
                for (int w = 0; w < dy.w; ++w) {
                    sum_dy += dyr[w];
                    sum_dy_xhat += dyr[w] * xh[w];
                }
            }
            gamma.g[static_cast<std::size_t>(c)] += sum_dy_xhat;
            beta.g[static_cast<std::size_t>(c)] += sum_dy;
            const T gc = gamma.v[static_cast<std::size_t>(c)];
            const T inv = cache.inv_std[static_cast<std::size_t>(c)];
            const T mean_dy = sum_dy / n;
            const T mean_dy_xhat = sum_dy_xhat / n;
            for (int b = 0; b < dy.b; ++b) {
                const T* dyr = dy.row(b, c);
                const T* xh = xhat.row(b, c);
                T* dxr = dx.row(b, c);
                for (int w = 0; w < dy.w; ++w)
                    dxr[w] = gc * inv * (dyr[w] - mean_dy - xh[w] * mean_dy_xhat);
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Elementwise Mish with cached pre-activation.
// ---------------------------------------------------------------------------

template <typename T>
struct mish_cache {
    tensor3<T> in;
};

template <typename T>
tensor3<T> mish_forward(const tensor3<T>& x, mish_cache<T>& cache) {
    tensor3<T> y(x.b, x.c, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = mish(x.v[i]);
    cache.in = x;
    return y;
}

template <typename T>
tensor3<T> mish_backward(const tensor3<T>& dy, const mish_cache<T>& cache) {
    tensor3<T> dx(dy.b, dy.c, dy.w);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.v[i] = dy.v[i] * mish_grad(cache.in.v[i]);
    return dx;
}

// ---------------------------------------------------------------------------
// Fully connected layer on (batch, features) matrices.
// ---------------------------------------------------------------------------

template <typename T>
struct fc_cache {
    mat<T> in;
};

template <typename T>
struct fc {
    int n_in = 0, n_out = 0;
    param<T> weight;  // (n_out, n_in)
    param<T> bias;    // (n_out)

    void init(const std::string& prefix, int in, int out, param_store<T>& store, rng& rand) {
        n_in = in; n_out = out;
        weight.resize(prefix + ".weight", {out, in});
        bias.resize(prefix + ".bias", {out});
        const T bound = T(1) / std::sqrt(static_cast<T>(in));
        for (auto& x : weight.v) x = static_cast<T>(rand.uniform(-bound, bound));
        store.add(weight);
        store.add(bias);
    }

    mat<T> forward(const mat<T>& x, fc_cache<T>& cache) const {
        if (x.cols != n_in) throw shape_error(weight.name + ": feature mismatch");
        mat<T> y(x.rows, n_out);
        for (int b = 0; b < x.rows; ++b) {
            const T* xr = x.row(b);
            T* yr = y.row(b);
            for (int o = 0; o < n_out; ++o) {
                const T* wr = &weight.v[static_cast<std::size_t>(o) * n_in];
                T acc = bias.v[static_cast<std::size_t>(o)];
                for (int i = 0; i < n_in; ++i) acc += wr[i] * xr[i];
                yr[o] = acc;
            }
        }
        cache.in = x;
        return y;
    }

    mat<T> backward(const mat<T>& dy, const fc_cache<T>& cache) {
        if (cache.in.size() == 0) throw state_error(weight.name + ": backward without a recorded forward");
        const mat<T>& x = cache.in;
        mat<T> dx(x.rows, n_in);
        for (int b = 0; b < x.rows; ++b) {
            const T* dyr = dy.row(b);
            const T* xr = x.row(b);
            T* dxr = dx.row(b);
            for (int o = 0; o < n_out; ++o) {
                const T d = dyr[o];
                bias.g[static_cast<std::size_t>(o)] += d;
                T* wg = &weight.g[static_cast<std::size_t>(o) * n_in];
                const T* wr = &weight.v[static_cast<std::size_t>(o) * n_in];
                for (int i = 0; i < n_in; ++i) {
                    wg[i] += d * xr[i];
                    dxr[i] += d * wr[i];
                }
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Squeeze-and-excitation: mean pool over frames -> FC(C -> C/4) -> Mish ->
// FC(C/4 -> C) -> sigmoid gate, applied channel-wise.
// ---------------------------------------------------------------------------

template <typename T>
struct se_cache {
    tensor3<T> in;
    mat<T> gate;
    mat<T> mid_pre;  // pre-Mish bottleneck activations
    fc_cache<T> fc1_cache, fc2_cache;
};

template <typename T>
struct squeeze_excite {
    int channels = 0;
    fc<T> reduce, expand;

    void init(const std::string& prefix, int c, param_store<T>& store, rng& rand) {
        if (c % 4 != 0) throw config_error(prefix + ": channels must be divisible by 4");
        channels = c;
        reduce.init(prefix + ".reduce", c, c / 4, store, rand);
        expand.init(prefix + ".expand", c / 4, c, store, rand);
    }

    tensor3<T> forward(const tensor3<T>& x, se_cache<T>& cache) const {
        if (x.c != channels) throw shape_error("squeeze_excite: channel mismatch");
        mat<T> z(x.b, x.c);
        const T inv_w = T(1) / static_cast<T>(x.w);
        for (int b = 0; b < x.b; ++b) {
            for (int c = 0; c < x.c; ++c) {
                const T* xr = x.row(b, c);
                T acc = T(0);
                for (int w = 0; w < x.w; ++w) acc += xr[w];
                z.at(b, c) = acc * inv_w;
            }
        }
        mat<T> m1 = reduce.forward(z, cache.fc1_cache);
        cache.mid_pre = m1;
        mat<T> a1(m1.rows, m1.cols);
        for (std::size_t i = 0; i < m1.size(); ++i) a1.v[i] = mish(m1.v[i]);
        mat<T> m2 = expand.forward(a1, cache.fc2_cache);
        cache.gate = mat<T>(m2.rows, m2.cols);
        for (std::size_t i = 0; i < m2.size(); ++i) cache.gate.v[i] = sigmoid(m2.v[i]);
        tensor3<T> y(x.b, x.c, x.w);
        for (int b = 0; b < x.b; ++b) {
            for (int c = 0; c < x.c; ++c) {
                const T g = cache.gate.at(b, c);
                const T* xr = x.row(b, c);
                T* yr = y.row(b, c);
                for (int w = 0; w < x.w; ++w) yr[w] = xr[w] * g;
            }
        }
        cache.in = x;
        return y;
    }

    tensor3<T> backward(const tensor3<T>& dy, const se_cache<T>& cache) {
        if (cache.in.size() == 0) throw state_error("squeeze_excite: backward without a recorded forward");
        const tensor3<T>& x = cache.in;
        tensor3<T> dx(x.b, x.c, x.w);
        mat<T> dgate(x.b, x.c);
        for (int b = 0; b < x.b; ++b) {
            for (int c = 0; c < x.c; ++c) {
                const T g = cache.gate.at(b, c);
                const T* dyr = dy.row(b, c);
                const T* xr = x.row(b, c);
                T* dxr = dx.row(b, c);
                T dg = T(0);
                for (int w = 0; w < x.w; ++w) {
                    dxr[w] = dyr[w] * g;
                    dg += dyr[w] * xr[w];
                }
                dgate.at(b, c) = dg;
            }
        }
        // through sigmoid
        mat<T> dm2(x.b, x.c);
        for (std::size_t i = 0; i < dm2.size(); ++i) {
            const T g = cache.gate.v[i];
            dm2.v[i] = dgate.v[i] * g * (T(1) - g);
        }
        mat<T> da1 = expand.backward(dm2, cache.fc2_cache);
        mat<T> dm1(da1.rows, da1.cols);
        for (std::size_t i = 0; i < dm1.size(); ++i)
            dm1.v[i] = da1.v[i] * mish_grad(cache.mid_pre.v[i]);
        mat<T> dz = reduce.backward(dm1, cache.fc1_cache);
        const T inv_w = T(1) / static_cast<T>(x.w);
        for (int b = 0; b < x.b; ++b) {
            for (int c = 0; c < x.c; ++c) {
                const T d = dz.at(b, c) * inv_w;
                T* dxr = dx.row(b, c);
                for (int w = 0; w < x.w; ++w) dxr[w] += d;
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Global max pooling over frames; gradient flows to the argmax frame only.
// ---------------------------------------------------------------------------

template <typename T>
struct max_pool_cache {
    std::vector<int> argmax;  // (b * c)
    int in_w = 0;
    // smallest gap between the max and the runner-up over all (b, c); a
    // near-tie means the pooled output is close to non-differentiable
    T min_margin = T(0);
};

template <typename T>
mat<T> global_max_pool(const tensor3<T>& x, max_pool_cache<T>& cache) {
    if (x.w < 1) throw shape_error("global_max_pool: empty frame axis");
    mat<T> y(x.b, x.c);
    cache.argmax.assign(static_cast<std::size_t>(x.b) * x.c, 0);
    cache.in_w = x.w;
    cache.min_margin = std::numeric_limits<T>::max();
    for (int b = 0; b < x.b; ++b) {
        for (int c = 0; c < x.c; ++c) {
            const T* xr = x.row(b, c);
            int best = 0;
            T second = std::numeric_limits<T>::lowest();
            for (int w = 1; w < x.w; ++w) {
                if (xr[w] > xr[best]) {
                    second = xr[best];
                    best = w;
                } else if (xr[w] > second) {
                    second = xr[w];
                }
            }
            y.at(b, c) = xr[best];
            cache.argmax[static_cast<std::size_t>(b) * x.c + c] = best;
            if (x.w > 1) cache.min_margin = std::min(cache.min_margin, xr[best] - second);
        }
    }
    if (cache.min_margin == std::numeric_limits<T>::max()) cache.min_margin = T(0);
    return y;
}

template <typename T>
tensor3<T> global_max_pool_backward(const mat<T>& dy, const max_pool_cache<T>& cache) {
    tensor3<T> dx(dy.rows, dy.cols, cache.in_w);
    for (int b = 0; b < dy.rows; ++b)
        for (int c = 0; c < dy.cols; ++c)
            dx.at(b, c, cache.argmax[static_cast<std::size_t>(b) * dy.cols + c]) = dy.at(b, c);
    return dx;
}

}  // namespace ecgmix
