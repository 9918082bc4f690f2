#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "ecgmix/nn/ops.hpp"
#include "ecgmix/rng.hpp"

using namespace ecgmix;

namespace {

// Independent brute-force convolution used as the oracle: direct
// sliding-window sum with explicit zero padding.
tensor3<double> naive_conv(const tensor3<double>& x, const std::vector<double>& w,
                           const std::vector<double>& bias, int c_out, int kernel, int stride) {
    const int pad = (kernel - 1) / 2;
    const int ow_n = (x.w + stride - 1) / stride;
    tensor3<double> y(x.b, c_out, ow_n);
    for (int b = 0; b < x.b; ++b)
        for (int co = 0; co < c_out; ++co)
            for (int ow = 0; ow < ow_n; ++ow) {
                double acc = bias[static_cast<std::size_t>(co)];
                for (int ci = 0; ci < x.c; ++ci)
                    for (int k = 0; k < kernel; ++k) {
                        const int iw = ow * stride + k - pad;
                        if (iw < 0 || iw >= x.w) continue;
                        acc += w[(static_cast<std::size_t>(co) * x.c + ci) * kernel + k] * x.at(b, ci, iw);
                    }
                y.at(b, co, ow) = acc;
            }
    return y;
}

tensor3<double> random_tensor(int b, int c, int w, rng& r) {
    tensor3<double> t(b, c, w);
    for (auto& v : t.v) v = r.normal();
    return t;
}

// Central finite differences against analytic gradients for an arbitrary
// scalar loss over parameters and inputs.
double max_rel_err(const std::vector<double>& analytic, std::vector<double>& values,
                   const std::function<double()>& loss, double eps = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double keep = values[i];
        values[i] = keep + eps;
        const double up = loss();
        values[i] = keep - eps;
        const double down = loss();
        values[i] = keep;
        const double fd = (up - down) / (2.0 * eps);
        const double err = std::abs(analytic[i] - fd) / (std::abs(analytic[i]) + 1e-8);
        worst = std::max(worst, err);
    }
    return worst;
}

// Fixed random projection so the scalar loss has dense gradients.
struct projection {
    std::vector<double> r;
    explicit projection(std::size_t n, rng& rand) : r(n) {
        for (auto& v : r) v = rand.normal();
    }
    template <typename C>
    double dot(const C& t) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) acc += r[i] * t.v[i];
        return acc;
    }
};

}  // namespace

TEST_CASE("mish fixed points and asymptotes") {
    REQUIRE(mish(0.0) == 0.0);
    REQUIRE(std::abs(mish(20.0) - 20.0) < 1e-6);
    REQUIRE(std::abs(mish(-20.0)) < 1e-6);
}

TEST_CASE("mish gradient matches finite differences") {
    rng r(17);
    for (int i = 0; i < 200; ++i) {
        const double x = r.uniform(-6.0, 6.0);
        const double fd = (mish(x + 1e-6) - mish(x - 1e-6)) / 2e-6;
        REQUIRE(mish_grad(x) == Catch::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("conv with identity kernel reproduces the input") {
    rng r(1);
    param_store<double> store;
    conv1d<double> conv;
    conv.init("c", 3, 3, 3, 1, store, r);
    std::fill(conv.weight.v.begin(), conv.weight.v.end(), 0.0);
    for (int c = 0; c < 3; ++c) conv.weight.v[(static_cast<std::size_t>(c) * 3 + c) * 3 + 1] = 1.0;
    std::fill(conv.bias.v.begin(), conv.bias.v.end(), 0.0);

    tensor3<double> x = random_tensor(2, 3, 11, r);
    conv1d_cache<double> cache;
    const auto y = conv.forward(x, cache);
    REQUIRE(y.same_shape(x));
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y.v[i] == Catch::Approx(x.v[i]));
}

TEST_CASE("conv output width follows the ceil rule") {
    rng r(2);
    param_store<double> store;
    conv1d<double> conv;
    conv.init("c", 1, 1, 7, 2, store, r);
    conv1d_cache<double> cache;
    tensor3<double> x(1, 1, 7500);
    REQUIRE(conv.forward(x, cache).w == 3750);
    tensor3<double> odd(1, 1, 59);
    REQUIRE(conv.forward(odd, cache).w == 30);
}

TEST_CASE("conv matches the brute-force sliding-window oracle") {
    rng r(3);
    for (int stride : {1, 2}) {
        param_store<double> store;
        conv1d<double> conv;
        conv.init("c" + std::to_string(stride), 2, 4, 3, stride, store, r);
        tensor3<double> x = random_tensor(1, 2, 8, r);
        conv1d_cache<double> cache;
        const auto y = conv.forward(x, cache);
        const auto ref = naive_conv(x, conv.weight.v, conv.bias.v, 4, 3, stride);
        REQUIRE(y.same_shape(ref));
        for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y.v[i] == Catch::Approx(ref.v[i]).margin(1e-12));
    }
}

TEST_CASE("conv rejects mismatched channels and bad configs") {
    rng r(4);
    param_store<double> store;
    conv1d<double> conv;
    conv.init("c", 2, 3, 3, 1, store, r);
    conv1d_cache<double> cache;
    tensor3<double> bad(1, 5, 10);
    REQUIRE_THROWS_AS(conv.forward(bad, cache), shape_error);

    conv1d<double> even;
    param_store<double> store2;
    REQUIRE_THROWS_AS(even.init("e", 1, 1, 4, 1, store2, r), config_error);
    conv1d<double> stride3;
    param_store<double> store3;
    REQUIRE_THROWS_AS(stride3.init("s", 1, 1, 3, 3, store3, r), config_error);
}

TEST_CASE("conv gradients match finite differences") {
    rng r(5);
    for (int stride : {1, 2}) {
        param_store<double> store;
        conv1d<double> conv;
        conv.init("c", 2, 3, 3, stride, store, r);
        tensor3<double> x = random_tensor(2, 2, 9, r);
        projection proj(static_cast<std::size_t>(2 * 3 * ((9 + stride - 1) / stride)), r);

        auto loss = [&]() {
            conv1d_cache<double> cache;
            return proj.dot(conv.forward(x, cache));
        };

        conv1d_cache<double> cache;
        const auto y = conv.forward(x, cache);
        tensor3<double> dy(y.b, y.c, y.w);
        dy.v.assign(proj.r.begin(), proj.r.end());
        store.zero_grad();
        const auto dx = conv.backward(dy, cache);

        REQUIRE(max_rel_err(conv.weight.g, conv.weight.v, loss) < 1e-4);
        REQUIRE(max_rel_err(conv.bias.g, conv.bias.v, loss) < 1e-4);
        REQUIRE(max_rel_err(dx.v, x.v, loss) < 1e-4);
    }
}

TEST_CASE("conv backward without forward is a state error") {
    rng r(6);
    param_store<double> store;
    conv1d<double> conv;
    conv.init("c", 1, 1, 3, 1, store, r);
    conv1d_cache<double> cache;
    tensor3<double> dy(1, 1, 4);
    REQUIRE_THROWS_AS(conv.backward(dy, cache), state_error);
}

TEST_CASE("batchnorm train output has zero mean and unit variance per channel") {
    rng r(7);
    param_store<double> store;
    batchnorm1d<double> bn;
    bn.init("bn", 3, store);
    tensor3<double> x = random_tensor(4, 3, 50, r);
    for (auto& v : x.v) v = v * 3.0 + 1.5;
    batchnorm_cache<double> cache;
    const auto y = bn.forward(x, run_mode::train, cache);  // gamma=1, beta=0
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sumsq = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int w = 0; w < 50; ++w) {
                sum += y.at(b, c, w);
                sumsq += y.at(b, c, w) * y.at(b, c, w);
            }
        const double n = 4 * 50;
        const double mean = sum / n;
        REQUIRE(std::abs(mean) < 1e-5);
        REQUIRE(std::abs(sumsq / n - mean * mean - 1.0) < 1e-4);
    }
}

TEST_CASE("batchnorm inference is bit-identical across repeats") {
    rng r(8);
    param_store<double> store;
    batchnorm1d<double> bn;
    bn.init("bn", 2, store);
    tensor3<double> x = random_tensor(3, 2, 20, r);
    batchnorm_cache<double> warm;
    bn.forward(x, run_mode::train, warm);
    batchnorm_cache<double> c1, c2;
    const auto y1 = bn.forward(x, run_mode::eval, c1);
    const auto y2 = bn.forward(x, run_mode::eval, c2);
    REQUIRE(y1.v == y2.v);
}

TEST_CASE("batchnorm gradients match finite differences") {
    rng r(9);
    param_store<double> store;
    batchnorm1d<double> bn;
    bn.init("bn", 2, store);
    for (auto& v : bn.gamma.v) v = r.uniform(0.5, 1.5);
    for (auto& v : bn.beta.v) v = r.normal();
    tensor3<double> x = random_tensor(3, 2, 7, r);
    projection proj(x.size(), r);

    auto loss = [&]() {
        batchnorm_cache<double> cache;
        return proj.dot(bn.forward(x, run_mode::train, cache));
    };

    batchnorm_cache<double> cache;
    const auto y = bn.forward(x, run_mode::train, cache);
    tensor3<double> dy(y.b, y.c, y.w);
    dy.v.assign(proj.r.begin(), proj.r.end());
    store.zero_grad();
    const auto dx = bn.backward(dy, cache);

    REQUIRE(max_rel_err(bn.gamma.g, bn.gamma.v, loss) < 1e-4);
    REQUIRE(max_rel_err(bn.beta.g, bn.beta.v, loss) < 1e-4);
    REQUIRE(max_rel_err(dx.v, x.v, loss) < 1e-4);
}

TEST_CASE("batchnorm backward after eval forward is a state error") {
    rng r(10);
    param_store<double> store;
    batchnorm1d<double> bn;
    bn.init("bn", 1, store);
    tensor3<double> x(2, 1, 3);
    batchnorm_cache<double> cache;
    bn.forward(x, run_mode::eval, cache);
    REQUIRE_THROWS_AS(bn.backward(x, cache), state_error);
}

TEST_CASE("squeeze-excite with zero weights gates at 0.5") {
    rng r(11);
    param_store<double> store;
    squeeze_excite<double> se;
    se.init("se", 8, store, r);
    std::fill(se.reduce.weight.v.begin(), se.reduce.weight.v.end(), 0.0);
    std::fill(se.expand.weight.v.begin(), se.expand.weight.v.end(), 0.0);
    tensor3<double> x = random_tensor(2, 8, 5, r);
    se_cache<double> cache;
    const auto y = se.forward(x, cache);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y.v[i] == Catch::Approx(0.5 * x.v[i]));
}

TEST_CASE("squeeze-excite of zero input is zero") {
    rng r(12);
    param_store<double> store;
    squeeze_excite<double> se;
    se.init("se", 4, store, r);
    tensor3<double> x(2, 4, 6);
    se_cache<double> cache;
    const auto y = se.forward(x, cache);
    for (double v : y.v) REQUIRE(v == 0.0);
}

TEST_CASE("squeeze-excite matches a step-by-step oracle") {
    rng r(13);
    param_store<double> store;
    squeeze_excite<double> se;
    se.init("se", 4, store, r);
    tensor3<double> x = random_tensor(1, 4, 3, r);
    se_cache<double> cache;
    const auto y = se.forward(x, cache);

    // direct formula evaluation
    std::vector<double> z(4);
    for (int cc = 0; cc < 4; ++cc) {
        double acc = 0.0;
        for (int w = 0; w < 3; ++w) acc += x.at(0, cc, w);
        z[static_cast<std::size_t>(cc)] = acc / 3.0;
    }
    std::vector<double> mid(1);
    {
        double acc = se.reduce.bias.v[0];
        for (int i = 0; i < 4; ++i) acc += se.reduce.weight.v[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
        mid[0] = mish(acc);
    }
    for (int c = 0; c < 4; ++c) {
        double gate_logit = se.expand.bias.v[static_cast<std::size_t>(c)];
        gate_logit += se.expand.weight.v[static_cast<std::size_t>(c)] * mid[0];
        const double g = sigmoid(gate_logit);
        for (int w = 0; w < 3; ++w) REQUIRE(y.at(0, c, w) == Catch::Approx(x.at(0, c, w) * g).margin(1e-12));
    }
}

TEST_CASE("squeeze-excite rejects channels not divisible by 4") {
    rng r(14);
    param_store<double> store;
    squeeze_excite<double> se;
    REQUIRE_THROWS_AS(se.init("se", 6, store, r), config_error);
}

TEST_CASE("squeeze-excite gradients match finite differences") {
    rng r(15);
    param_store<double> store;
    squeeze_excite<double> se;
    se.init("se", 4, store, r);
    tensor3<double> x = random_tensor(2, 4, 5, r);
    projection proj(x.size(), r);

    auto loss = [&]() {
        se_cache<double> cache;
        return proj.dot(se.forward(x, cache));
    };

    se_cache<double> cache;
    const auto y = se.forward(x, cache);
    tensor3<double> dy(y.b, y.c, y.w);
    dy.v.assign(proj.r.begin(), proj.r.end());
    store.zero_grad();
    const auto dx = se.backward(dy, cache);

    REQUIRE(max_rel_err(se.reduce.weight.g, se.reduce.weight.v, loss) < 1e-4);
    REQUIRE(max_rel_err(se.expand.weight.g, se.expand.weight.v, loss) < 1e-4);
    REQUIRE(max_rel_err(se.reduce.bias.g, se.reduce.bias.v, loss) < 1e-4);
    REQUIRE(max_rel_err(se.expand.bias.g, se.expand.bias.v, loss) < 1e-4);
    REQUIRE(max_rel_err(dx.v, x.v, loss) < 1e-4);
}

TEST_CASE("fc gradients: sum loss gives all-ones weight grads") {
    rng r(16);
    param_store<double> store;
    fc<double> layer;
    layer.init("fc", 3, 2, store, r);
    mat<double> x(1, 3);
    x.fill(1.0);
    fc_cache<double> cache;
    layer.forward(x, cache);
    mat<double> dy(1, 2);
    dy.fill(1.0);  // loss = sum of outputs
    store.zero_grad();
    layer.backward(dy, cache);
    for (double g : layer.weight.g) REQUIRE(g == 1.0);
    for (double g : layer.bias.g) REQUIRE(g == 1.0);
}

TEST_CASE("fc gradient of an unused output row is zero") {
    rng r(17);
    param_store<double> store;
    fc<double> layer;
    layer.init("fc", 3, 2, store, r);
    mat<double> x(2, 3);
    for (auto& v : x.v) v = r.normal();
    fc_cache<double> cache;
    layer.forward(x, cache);
    mat<double> dy(2, 2);
    dy.at(0, 0) = 1.0;
    dy.at(1, 0) = 2.0;  // loss ignores output 1
    store.zero_grad();
    layer.backward(dy, cache);
    for (int i = 0; i < 3; ++i) REQUIRE(layer.weight.g[static_cast<std::size_t>(3 + i)] == 0.0);
    REQUIRE(layer.bias.g[1] == 0.0);
}

TEST_CASE("global max pool picks constants and spikes") {
    tensor3<double> c(1, 2, 5);
    c.fill(0.75);
    max_pool_cache<double> cache;
    auto y = global_max_pool(c, cache);
    REQUIRE(y.at(0, 0) == 0.75);
    REQUIRE(y.at(0, 1) == 0.75);

    tensor3<double> s(1, 1, 6);
    s.at(0, 0, 4) = 3.0;
    auto y2 = global_max_pool(s, cache);
    REQUIRE(y2.at(0, 0) == 3.0);
}

TEST_CASE("global max pool gradient is nonzero only at argmax frames") {
    rng r(18);
    tensor3<double> x = random_tensor(2, 3, 7, r);
    max_pool_cache<double> cache;
    const auto y = global_max_pool(x, cache);
    mat<double> dy(2, 3);
    for (auto& v : dy.v) v = r.normal();
    const auto dx = global_max_pool_backward(dy, cache);

    auto eval = [&]() {
        max_pool_cache<double> cc;
        double acc = 0.0;
        const auto yy = global_max_pool(x, cc);
        for (std::size_t i = 0; i < yy.size(); ++i) acc += dy.v[i] * yy.v[i];
        return acc;
    };

    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c) {
            int nonzero = 0;
            for (int w = 0; w < 7; ++w) {
                const double g = dx.at(b, c, w);
                if (g == 0.0) continue;
                ++nonzero;
                const double eps = 1e-6;
                const double keep = x.at(b, c, w);
                x.at(b, c, w) = keep + eps;
                const double up = eval();
                x.at(b, c, w) = keep - eps;
                const double down = eval();
                x.at(b, c, w) = keep;
                REQUIRE(g == Catch::Approx((up - down) / (2 * eps)).margin(1e-6));
            }
            REQUIRE(nonzero == 1);
        }
}

TEST_CASE("all forward outputs are finite for finite inputs") {
    rng r(19);
    param_store<double> store;
    conv1d<double> conv;
    conv.init("c", 2, 4, 5, 2, store, r);
    batchnorm1d<double> bn;
    bn.init("b", 4, store);
    squeeze_excite<double> se;
    se.init("s", 4, store, r);
    tensor3<double> x = random_tensor(3, 2, 40, r);
    for (auto& v : x.v) v *= 100.0;
    conv1d_cache<double> cc;
    batchnorm_cache<double> bc;
    se_cache<double> sc;
    mish_cache<double> mc;
    auto y = se.forward(mish_forward(bn.forward(conv.forward(x, cc), run_mode::train, bc), mc), sc);
    for (double v : y.v) REQUIRE(std::isfinite(v));
}
