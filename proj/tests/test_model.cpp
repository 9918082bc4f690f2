#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ecgmix/nn/network.hpp"
#include "ecgmix/leads.hpp"
#include "gradcheck_util.hpp"

using namespace ecgmix;

namespace {

// Independent shape oracle: repeated ceil division by the stage strides.
int oracle_final_width(const model_config& cfg, int input_w) {
    int w = input_w;
    for (const auto& s : cfg.stages) {
        w = (w + s.stride - 1) / s.stride;  // first layer of the stage
        // remaining layers use stride 1 and keep the width
    }
    return w;
}

model_config tiny_config() {
    model_config cfg;
    using k = stage_spec::kind;
    cfg.stages = {
        {k::conv, 3, 2, 8, 1, 1},
        {k::fused_mbconv, 3, 1, 8, 1, 2},
        {k::fused_mbconv, 3, 2, 8, 1, 1},
        {k::conv, 1, 1, 12, 1, 1},
    };
    cfg.n_labels = 3;
    cfg.wide_embed = 4;
    cfg.mlp_hidden = 6;
    return cfg;
}

mat<double> random_wide(int b, rng& r) {
    mat<double> wide(b, wide_features::dim);
    for (auto& v : wide.v) v = r.uniform(0.0, 1.0);
    return wide;
}

double bce_loss(const mat<double>& logits, const mat<double>& targets) {
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits.v[i], u = targets.v[i];
        acc += u * softplus(-z) + (1.0 - u) * softplus(z);
    }
    return acc / static_cast<double>(logits.size());
}

}  // namespace

TEST_CASE("base plan matches the published stage table") {
    const model_config cfg = model_config::base();
    REQUIRE(cfg.stages.size() == 8);
    using k = stage_spec::kind;
    const std::vector<stage_spec> want = {
        {k::conv, 7, 2, 32, 1, 1},          {k::fused_mbconv, 5, 2, 32, 2, 2},
        {k::fused_mbconv, 5, 2, 64, 1, 1},  {k::fused_mbconv, 7, 2, 128, 2, 2},
        {k::fused_mbconv, 7, 2, 128, 1, 1}, {k::fused_mbconv, 7, 2, 256, 2, 2},
        {k::fused_mbconv, 7, 2, 256, 2, 2}, {k::conv, 1, 1, 512, 1, 1},
    };
    for (std::size_t i = 0; i < want.size(); ++i) {
        REQUIRE(cfg.stages[i].op == want[i].op);
        REQUIRE(cfg.stages[i].kernel == want[i].kernel);
        REQUIRE(cfg.stages[i].stride == want[i].stride);
        REQUIRE(cfg.stages[i].channels == want[i].channels);
        REQUIRE(cfg.stages[i].layers == want[i].layers);
        REQUIRE(cfg.stages[i].expand == want[i].expand);
    }
    REQUIRE(cfg.n_labels == 24);
}

TEST_CASE("fused block halves the width at stride 2 and doubles channels at expand 2") {
    rng r(1);
    param_store<double> store;
    fmb_block<double> blk;
    blk.init("blk", 4, 8, 3, 2, 2, 0, store, r);
    REQUIRE(blk.conv1.c_out == 8);  // expanded to 2C before the pointwise conv
    tensor3<double> x(2, 4, 100);
    for (auto& v : x.v) v = r.normal();
    mat<double> wide_emb(2, 0);
    fmb_cache<double> cache;
    const auto y = blk.forward(x, wide_emb, run_mode::train, cache);
    REQUIRE(y.w == 50);
    REQUIRE(y.c == 8);
}

TEST_CASE("fused block matches the composition of its sub-operations") {
    rng r(2);
    param_store<double> store;
    fmb_block<double> blk;
    blk.init("blk", 4, 6, 3, 1, 2, 2, store, r);
    tensor3<double> x(2, 4, 10);
    for (auto& v : x.v) v = r.normal();
    mat<double> wide_emb(2, 2);
    for (auto& v : wide_emb.v) v = r.normal();

    fmb_cache<double> cache;
    const auto y = blk.forward(x, wide_emb, run_mode::train, cache);

    // step through the pieces by hand
    conv1d_cache<double> cc;
    batchnorm_cache<double> b1;
    mish_cache<double> mc;
    se_cache<double> sc;
    conv1d_cache<double> pc;
    batchnorm_cache<double> b2;
    auto a = blk.conv1.forward(x, cc);
    a = blk.bn1.forward(a, run_mode::train, b1);
    a = mish_forward(a, mc);
    a = blk.se.forward(a, sc);
    tensor3<double> cat(a.b, a.c + 2, a.w);
    for (int b = 0; b < a.b; ++b) {
        for (int c = 0; c < a.c; ++c)
            std::copy(a.row(b, c), a.row(b, c) + a.w, cat.row(b, c));
        for (int e = 0; e < 2; ++e)
            for (int w = 0; w < a.w; ++w) cat.at(b, a.c + e, w) = wide_emb.at(b, e);
    }
    auto ref = blk.pw.forward(cat, pc);
    ref = blk.bn2.forward(ref, run_mode::train, b2);

    REQUIRE(y.same_shape(ref));
    for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y.v[i] == Catch::Approx(ref.v[i]).margin(1e-10));
}

TEST_CASE("per-stage output channels match the table for every lead combo") {
    const model_config cfg = model_config::base();
    for (int leads : all_combo_names()) {
        auto net = effnet1d<float>::build(cfg, leads, 42);
        const auto channels = net->stage_channels();
        REQUIRE(channels == std::vector<int>{32, 32, 64, 128, 128, 256, 256, 512});
    }
}

TEST_CASE("stage-7 width for a 7500-sample input is 59") {
    const model_config cfg = model_config::base();
    REQUIRE(oracle_final_width(cfg, 7500) == 59);

    // confirm on a real forward: the pooled cache records the final width
    auto net = effnet1d<float>::build(cfg, 2, 7);
    tensor3<float> x(1, 2, 7500);
    rng r(3);
    for (auto& v : x.v) v = static_cast<float>(r.normal());
    mat<float> wide(1, wide_features::dim);
    trunk_cache<float> tc;
    const auto h = net->forward_pooled(x, wide, run_mode::eval, tc);
    REQUIRE(tc.pool.in_w == 59);
    REQUIRE(h.cols == 512);
}

TEST_CASE("logits have exactly n_labels entries and are finite") {
    auto net = effnet1d<double>::build(tiny_config(), 2, 11);
    rng r(4);
    tensor3<double> x(2, 2, 16);
    for (auto& v : x.v) v = r.normal();
    mat<double> wide = random_wide(2, r);
    trunk_cache<double> tc;
    head_cache<double> hc;
    const auto logits = net->forward_logits(x, wide, run_mode::train, tc, hc);
    REQUIRE(logits.rows == 2);
    REQUIRE(logits.cols == 3);
    for (double v : logits.v) REQUIRE(std::isfinite(v));
}

TEST_CASE("zeroed head weights leave only the head bias") {
    auto net = effnet1d<double>::build(tiny_config(), 2, 12);
    for (auto* p : net->store.params)
        if (p->name.rfind("head2", 0) == 0) std::fill(p->v.begin(), p->v.end(), 0.0);
    for (auto* p : net->store.params)
        if (p->name == "head2.bias")
            for (std::size_t i = 0; i < p->v.size(); ++i) p->v[i] = 0.25 * static_cast<double>(i + 1);

    rng r(5);
    tensor3<double> x(2, 2, 16);
    for (auto& v : x.v) v = r.normal();
    mat<double> wide = random_wide(2, r);
    trunk_cache<double> tc;
    head_cache<double> hc;
    const auto logits = net->forward_logits(x, wide, run_mode::eval, tc, hc);
    for (int b = 0; b < 2; ++b)
        for (int j = 0; j < 3; ++j)
            REQUIRE(logits.at(b, j) == Catch::Approx(0.25 * (j + 1)));
}

TEST_CASE("identical records produce identical logits rows in inference mode") {
    auto net = effnet1d<double>::build(tiny_config(), 2, 13);
    rng r(6);
    tensor3<double> x(2, 2, 16);
    for (int c = 0; c < 2; ++c)
        for (int w = 0; w < 16; ++w) {
            const double v = r.normal();
            x.at(0, c, w) = v;
            x.at(1, c, w) = v;
        }
    mat<double> wide(2, wide_features::dim);
    for (int j = 0; j < wide_features::dim; ++j) {
        const double v = r.uniform(0.0, 1.0);
        wide.at(0, j) = v;
        wide.at(1, j) = v;
    }
    trunk_cache<double> tc;
    head_cache<double> hc;
    const auto logits = net->forward_logits(x, wide, run_mode::eval, tc, hc);
    for (int j = 0; j < 3; ++j) REQUIRE(logits.at(0, j) == logits.at(1, j));
}

TEST_CASE("predict applies the 0.3 threshold to sigmoid probabilities") {
    auto net = effnet1d<double>::build(tiny_config(), 2, 14);
    for (auto* p : net->store.params)
        if (p->name.rfind("head2", 0) == 0) std::fill(p->v.begin(), p->v.end(), 0.0);
    const double logit_31 = std::log(0.31 / 0.69);
    const double logit_29 = std::log(0.29 / 0.71);
    for (auto* p : net->store.params)
        if (p->name == "head2.bias") {
            p->v[0] = logit_31;
            p->v[1] = logit_29;
            p->v[2] = 0.0;
        }
    rng r(7);
    tensor3<double> x(1, 2, 16);
    for (auto& v : x.v) v = r.normal();
    const auto pred = net->predict(x, random_wide(1, r));
    REQUIRE(pred.probabilities[0][0] == Catch::Approx(0.31));
    REQUIRE(pred.probabilities[0][1] == Catch::Approx(0.29));
    REQUIRE(pred.probabilities[0][2] == Catch::Approx(0.5));
    REQUIRE(pred.decisions[0][0]);        // 0.31 >= 0.3
    REQUIRE_FALSE(pred.decisions[0][1]);  // 0.29 < 0.3
    REQUIRE(pred.decisions[0][2]);        // sigmoid(0) = 0.5 >= 0.3
    for (double p : pred.probabilities[0]) {
        REQUIRE(p > 0.0);
        REQUIRE(p < 1.0);
    }
}

TEST_CASE("zeroed wide pathway makes logits independent of wide features") {
    auto net = effnet1d<double>::build(tiny_config(), 2, 15);
    for (auto* p : net->store.params)
        if (p->name.rfind("wide", 0) == 0 && p->name.find(".fc.") != std::string::npos)
            std::fill(p->v.begin(), p->v.end(), 0.0);

    rng r(8);
    tensor3<double> x(2, 2, 16);
    for (auto& v : x.v) v = r.normal();
    mat<double> wide_a = random_wide(2, r);
    mat<double> wide_b = random_wide(2, r);
    trunk_cache<double> t1, t2;
    head_cache<double> h1, h2;
    const auto la = net->forward_logits(x, wide_a, run_mode::eval, t1, h1);
    const auto lb = net->forward_logits(x, wide_b, run_mode::eval, t2, h2);
    for (std::size_t i = 0; i < la.size(); ++i) REQUIRE(la.v[i] == lb.v[i]);
}

TEST_CASE("invalid model configs are rejected") {
    model_config cfg = tiny_config();
    cfg.stages.front().kernel = 4;
    REQUIRE_THROWS_AS(effnet1d<float>::build(cfg, 2, 1), config_error);

    model_config cfg2 = tiny_config();
    cfg2.stages.front().op = stage_spec::kind::fused_mbconv;
    REQUIRE_THROWS_AS(effnet1d<float>::build(cfg2, 2, 1), config_error);

    model_config cfg3 = tiny_config();
    cfg3.n_labels = 0;
    REQUIRE_THROWS_AS(effnet1d<float>::build(cfg3, 2, 1), config_error);
}

TEST_CASE("full network gradient matches finite differences") {
    using scalar = gradcheck::scalar;
    int checked_seeds = 0;
    for (std::uint64_t seed = 1; seed <= 12 && checked_seeds < 3; ++seed) {
        auto net = effnet1d<scalar>::build(tiny_config(), 2, seed);
        rng r(100 + seed);
        tensor3<scalar> x(3, 2, 12);
        for (auto& v : x.v) v = static_cast<scalar>(r.normal());
        mat<scalar> wide(3, wide_features::dim);
        for (auto& v : wide.v) v = static_cast<scalar>(r.uniform(0.0, 1.0));
        mat<scalar> targets(3, 3);
        for (auto& v : targets.v) v = static_cast<scalar>(r.uniform(0.0, 1.0));

        // skip near-ties in the pooling layer (non-differentiable point)
        {
            trunk_cache<scalar> probe;
            net->forward_pooled(x, wide, run_mode::train, probe);
            if (static_cast<double>(probe.pool.min_margin) < gradcheck::k_pool_margin) continue;
        }

        auto loss = [&]() {
            trunk_cache<scalar> tc;
            head_cache<scalar> hc;
            const auto logits = net->forward_logits(x, wide, run_mode::train, tc, hc);
            double acc = 0.0;
            for (std::size_t i = 0; i < logits.size(); ++i) {
                const double z = static_cast<double>(logits.v[i]);
                const double u = static_cast<double>(targets.v[i]);
                acc += u * softplus(-z) + (1.0 - u) * softplus(z);
            }
            return acc / static_cast<double>(logits.size());
        };
        auto compute_grads = [&]() {
            trunk_cache<scalar> tc;
            head_cache<scalar> hc;
            const auto logits = net->forward_logits(x, wide, run_mode::train, tc, hc);
            mat<scalar> dlogits(3, 3);
            const scalar norm = scalar(1) / static_cast<scalar>(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i)
                dlogits.v[i] = (sigmoid(logits.v[i]) - targets.v[i]) * norm;
            net->store.zero_grad();
            mat<scalar> dh = net->head_backward(dlogits, hc);
            net->trunk_backward(dh, tc);
        };

        const auto rep = gradcheck::check_params(net->store, loss, compute_grads);
        INFO("seed " << seed << " worst at " << rep.worst_param);
        REQUIRE(rep.max_rel_err < 1e-4);
        ++checked_seeds;
    }
    REQUIRE(checked_seeds == 3);
}

TEST_CASE("channel multiplier scales the plan to multiples of four") {
    model_config cfg = model_config::base();
    cfg.channel_multiplier = 0.25;
    REQUIRE(cfg.scaled(32) == 8);
    REQUIRE(cfg.scaled(512) == 128);
    cfg.channel_multiplier = 0.01;
    REQUIRE(cfg.scaled(32) == 4);  // floor at 4
}

TEST_CASE("model config json round-trip") {
    model_config cfg = tiny_config();
    cfg.channel_multiplier = 0.5;
    const auto j = cfg.to_json();
    const model_config back = model_config::from_json(j);
    REQUIRE(back.stages.size() == cfg.stages.size());
    REQUIRE(back.n_labels == cfg.n_labels);
    REQUIRE(back.wide_embed == cfg.wide_embed);
    REQUIRE(back.channel_multiplier == cfg.channel_multiplier);
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        REQUIRE(back.stages[i].op == cfg.stages[i].op);
        REQUIRE(back.stages[i].kernel == cfg.stages[i].kernel);
        REQUIRE(back.stages[i].channels == cfg.stages[i].channels);
    }
}
