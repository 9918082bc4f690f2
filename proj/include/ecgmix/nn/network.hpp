#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgmix/nn/ops.hpp"
#include "ecgmix/nn/params.hpp"
#include "ecgmix/record.hpp"

namespace ecgmix {

// ---------------------------------------------------------------------------
// Architecture plan. The default is the 8-stage layout: a stem convolution,
// six Fused-MBConv stages, and a 1x1 top convolution. channel_multiplier
// scales stage widths (rounded to a multiple of 4) for small-scale runs.
// ---------------------------------------------------------------------------

struct stage_spec {
    enum class kind { conv, fused_mbconv };
    kind op = kind::conv;
    int kernel = 1;
    int stride = 1;
    int channels = 0;
    int layers = 1;
    int expand = 1;  // fused_mbconv only: 1 or 2
};

struct model_config {
    std::vector<stage_spec> stages;
    int n_labels = 24;
    int wide_dim = wide_features::dim;
    int wide_embed = 32;
    int mlp_hidden = 256;
    double channel_multiplier = 1.0;
    bool use_wide = true;

    static model_config base() {
        model_config c;
        using k = stage_spec::kind;
        c.stages = {
            {k::conv, 7, 2, 32, 1, 1},
            {k::fused_mbconv, 5, 2, 32, 2, 2},
            {k::fused_mbconv, 5, 2, 64, 1, 1},
            {k::fused_mbconv, 7, 2, 128, 2, 2},
            {k::fused_mbconv, 7, 2, 128, 1, 1},
            {k::fused_mbconv, 7, 2, 256, 2, 2},
            {k::fused_mbconv, 7, 2, 256, 2, 2},
            {k::conv, 1, 1, 512, 1, 1},
        };
        return c;
    }

    int scaled(int channels) const {
        if (channel_multiplier == 1.0) return channels;
        const int c = static_cast<int>(std::lround(channels * channel_multiplier / 4.0)) * 4;
        return std::max(4, c);
    }

    void validate() const {
        if (stages.size() < 2) throw config_error("model: need at least stem and top stages");
        if (stages.front().op != stage_spec::kind::conv || stages.back().op != stage_spec::kind::conv)
            throw config_error("model: first and last stages must be plain convolutions");
        for (const auto& s : stages) {
            if (s.kernel % 2 == 0 || s.kernel < 1) throw config_error("model: kernels must be odd");
            if (s.stride != 1 && s.stride != 2) throw config_error("model: strides must be 1 or 2");
            if (s.channels < 1 || s.layers < 1) throw config_error("model: bad stage plan");
            if (s.op == stage_spec::kind::fused_mbconv && s.expand != 1 && s.expand != 2)
                throw config_error("model: expand factor must be 1 or 2");
        }
        if (n_labels < 1) throw config_error("model: n_labels must be >= 1");
        if (wide_embed < 1 || mlp_hidden < 1) throw config_error("model: bad head/wide dims");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["n_labels"] = n_labels;
        j["wide_dim"] = wide_dim;
        j["wide_embed"] = wide_embed;
        j["mlp_hidden"] = mlp_hidden;
        j["channel_multiplier"] = channel_multiplier;
        j["use_wide"] = use_wide;
        j["stages"] = nlohmann::json::array();
        for (const auto& s : stages) {
            j["stages"].push_back({{"op", s.op == stage_spec::kind::conv ? "conv" : "fused_mbconv"},
                                   {"kernel", s.kernel},
                                   {"stride", s.stride},
                                   {"channels", s.channels},
                                   {"layers", s.layers},
                                   {"expand", s.expand}});
        }
        return j;
    }

    static model_config from_json(const nlohmann::json& j) {
        model_config c;
        c.n_labels = j.at("n_labels").get<int>();
        c.wide_dim = j.at("wide_dim").get<int>();
        c.wide_embed = j.at("wide_embed").get<int>();
        c.mlp_hidden = j.at("mlp_hidden").get<int>();
        c.channel_multiplier = j.at("channel_multiplier").get<double>();
        c.use_wide = j.value("use_wide", true);
        c.stages.clear();
        for (const auto& sj : j.at("stages")) {
            stage_spec s;
            s.op = sj.at("op").get<std::string>() == "conv" ? stage_spec::kind::conv
                                                            : stage_spec::kind::fused_mbconv;
            s.kernel = sj.at("kernel").get<int>();
            s.stride = sj.at("stride").get<int>();
            s.channels = sj.at("channels").get<int>();
            s.layers = sj.at("layers").get<int>();
            s.expand = sj.at("expand").get<int>();
            c.stages.push_back(s);
        }
        return c;
    }
};

// ---------------------------------------------------------------------------
// Fused-MBConv: conv(k, s) -> BN -> Mish -> squeeze-excite -> concat wide
// embedding channels -> pointwise conv -> BN. The first conv doubles the
// channel count when expand == 2.
// ---------------------------------------------------------------------------

template <typename T>
struct fmb_cache {
    conv1d_cache<T> conv1;
    batchnorm_cache<T> bn1;
    mish_cache<T> act;
    se_cache<T> se;
    conv1d_cache<T> pw;
    batchnorm_cache<T> bn2;
};

template <typename T>
struct fmb_block {
    int c_in = 0, c_out = 0, wide_embed = 0;
    conv1d<T> conv1;
    batchnorm1d<T> bn1;
    squeeze_excite<T> se;
    conv1d<T> pw;
    batchnorm1d<T> bn2;

    void init(const std::string& prefix, int ci, int co, int kernel, int stride, int expand,
              int wide_embed_dim, param_store<T>& store, rng& rand) {
        c_in = ci;
        c_out = co;
        wide_embed = wide_embed_dim;
        const int ce = ci * expand;
        conv1.init(prefix + ".conv1", ci, ce, kernel, stride, store, rand);
        bn1.init(prefix + ".bn1", ce, store);
        se.init(prefix + ".se", ce, store, rand);
        pw.init(prefix + ".pw", ce + wide_embed, co, 1, 1, store, rand);
        bn2.init(prefix + ".bn2", co, store);
    }

    tensor3<T> forward(const tensor3<T>& x, const mat<T>& wide_emb, run_mode mode, fmb_cache<T>& cache) {
        tensor3<T> a = conv1.forward(x, cache.conv1);
        a = bn1.forward(a, mode, cache.bn1);
        a = mish_forward(a, cache.act);
        a = se.forward(a, cache.se);
        // widen with the broadcast wide embedding
        tensor3<T> cat(a.b, a.c + wide_embed, a.w);
        for (int b = 0; b < a.b; ++b) {
            for (int c = 0; c < a.c; ++c)
                std::copy(a.row(b, c), a.row(b, c) + a.w, cat.row(b, c));
            for (int e = 0; e < wide_embed; ++e) {
                const T v = wide_emb.at(b, e);
                T* r = cat.row(b, a.c + e);
                for (int w = 0; w < a.w; ++w) r[w] = v;
            }
        }
        tensor3<T> y = pw.forward(cat, cache.pw);
        return bn2.forward(y, mode, cache.bn2);
    }

    tensor3<T> backward(const tensor3<T>& dy, const fmb_cache<T>& cache, mat<T>& dwide_emb) {
        tensor3<T> d = bn2.backward(dy, cache.bn2);
        tensor3<T> dcat = pw.backward(d, cache.pw);
        const int ce = dcat.c - wide_embed;
        tensor3<T> da(dcat.b, ce, dcat.w);
        for (int b = 0; b < dcat.b; ++b) {
            for (int c = 0; c < ce; ++c)
                std::copy(dcat.row(b, c), dcat.row(b, c) + dcat.w, da.row(b, c));
            for (int e = 0; e < wide_embed; ++e) {
                const T* r = dcat.row(b, ce + e);
                T acc = T(0);
                for (int w = 0; w < dcat.w; ++w) acc += r[w];
                dwide_emb.at(b, e) += acc;
            }
        }
        da = se.backward(da, cache.se);
        da = mish_backward(da, cache.act);
        da = bn1.backward(da, cache.bn1);
        return conv1.backward(da, cache.conv1);
    }
};

// ---------------------------------------------------------------------------
// The full classifier: stem conv -> Fused-MBConv blocks (wide-conditioned) ->
// top conv -> global max pool -> 2-layer MLP head. The wide pathway is a
// 4-layer FC stack with BN and Mish whose output conditions every block.
// ---------------------------------------------------------------------------

template <typename T>
struct plain_unit_cache {
    conv1d_cache<T> conv;
    batchnorm_cache<T> bn;
    mish_cache<T> act;
};

template <typename T>
struct trunk_cache {
    mat<T> wide_in;
    std::vector<fc_cache<T>> wide_fc;
    std::vector<batchnorm_cache<T>> wide_bn;
    std::vector<mish_cache<T>> wide_act;
    mat<T> wide_emb;
    std::vector<plain_unit_cache<T>> plains;
    std::vector<fmb_cache<T>> blocks;
    max_pool_cache<T> pool;
    int batch = 0;
};

template <typename T>
struct head_cache {
    fc_cache<T> fc1;
    mish_cache<T> act;
    fc_cache<T> fc2;
};

struct prediction {
    std::vector<std::vector<double>> probabilities;  // [batch][label]
    std::vector<std::vector<bool>> decisions;
};

constexpr double k_default_threshold = 0.3;
constexpr int k_wide_layers = 4;

template <typename T>
mat<T> mat_mish_forward(const mat<T>& x, mish_cache<T>& cache) {
    cache.in = tensor3<T>(x.rows, x.cols, 1);
    cache.in.v = x.v;
    mat<T> y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = mish(x.v[i]);
    return y;
}

template <typename T>
mat<T> mat_mish_backward(const mat<T>& dy, const mish_cache<T>& cache) {
    mat<T> dx(dy.rows, dy.cols);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.v[i] = dy.v[i] * mish_grad(cache.in.v[i]);
    return dx;
}

template <typename T>
class effnet1d {
  public:
    model_config cfg;
    int n_channels = 0;
    param_store<T> store;

    struct plain_unit {
        conv1d<T> conv;
        batchnorm1d<T> bn;
    };

    // plan: interleaved plain units and fmb blocks in execution order
    struct step {
        bool is_fmb = false;
        int index = 0;  // into plains_ or blocks_
    };

    effnet1d() = default;
    effnet1d(const effnet1d&) = delete;
    effnet1d& operator=(const effnet1d&) = delete;
    effnet1d(effnet1d&&) = delete;

    static std::unique_ptr<effnet1d> build(const model_config& cfg, int n_channels, std::uint64_t seed) {
        cfg.validate();
        auto net = std::make_unique<effnet1d>();
        net->cfg = cfg;
        net->n_channels = n_channels;
        rng rand(seed);
        net->build_layers(rand);
        return net;
    }

    int pooled_dim() const { return cfg.scaled(cfg.stages.back().channels); }

    // Pooled hidden vector for a batch: (B, pooled_dim).
    mat<T> forward_pooled(const tensor3<T>& x, const mat<T>& wide, run_mode mode, trunk_cache<T>& cache) {
        if (x.c != n_channels) throw shape_error("model: input channel mismatch");
        cache.batch = x.b;
        cache.plains.resize(plains_.size());
        cache.blocks.resize(blocks_.size());
        cache.wide_fc.resize(k_wide_layers);
        cache.wide_bn.resize(k_wide_layers);
        cache.wide_act.resize(k_wide_layers);

        if (cfg.use_wide) {
            if (wide.rows != x.b || wide.cols != cfg.wide_dim)
                throw shape_error("model: wide feature shape mismatch");
            cache.wide_in = wide;
            mat<T> h = wide;
            for (int l = 0; l < k_wide_layers; ++l) {
                h = wide_fc_[static_cast<std::size_t>(l)].forward(h, cache.wide_fc[static_cast<std::size_t>(l)]);
                tensor3<T> t(h.rows, h.cols, 1);
                t.v = h.v;
                t = wide_bn_[static_cast<std::size_t>(l)].forward(t, mode, cache.wide_bn[static_cast<std::size_t>(l)]);
                h.v = t.v;
                h = mat_mish_forward(h, cache.wide_act[static_cast<std::size_t>(l)]);
            }
            cache.wide_emb = h;
        } else {
            cache.wide_emb = mat<T>(x.b, 0);
        }

        tensor3<T> a = x;
        for (const auto& st : plan_) {
            if (st.is_fmb) {
                a = blocks_[static_cast<std::size_t>(st.index)].forward(
                    a, cache.wide_emb, mode, cache.blocks[static_cast<std::size_t>(st.index)]);
            } else {
                auto& u = plains_[static_cast<std::size_t>(st.index)];
                auto& uc = cache.plains[static_cast<std::size_t>(st.index)];
                a = u.conv.forward(a, uc.conv);
                a = u.bn.forward(a, mode, uc.bn);
                a = mish_forward(a, uc.act);
            }
        }
        return global_max_pool(a, cache.pool);
    }

    mat<T> head_forward(const mat<T>& h, head_cache<T>& cache) const {
        mat<T> a = head1_.forward(h, cache.fc1);
        a = mat_mish_forward(a, cache.act);
        return head2_.forward(a, cache.fc2);
    }

    mat<T> forward_logits(const tensor3<T>& x, const mat<T>& wide, run_mode mode,
                          trunk_cache<T>& tc, head_cache<T>& hc) {
        return head_forward(forward_pooled(x, wide, mode, tc), hc);
    }

    // Gradient wrt the pooled hidden vector, given gradient wrt logits.
    mat<T> head_backward(const mat<T>& dlogits, head_cache<T>& cache) {
        mat<T> d = head2_.backward(dlogits, cache.fc2);
        d = mat_mish_backward(d, cache.act);
        return head1_.backward(d, cache.fc1);
    }

    void trunk_backward(const mat<T>& dpooled, trunk_cache<T>& cache) {
        tensor3<T> da = global_max_pool_backward(dpooled, cache.pool);
        mat<T> dwide(cache.batch, cfg.use_wide ? cfg.wide_embed : 0);
        for (auto it = plan_.rbegin(); it != plan_.rend(); ++it) {
            if (it->is_fmb) {
                da = blocks_[static_cast<std::size_t>(it->index)].backward(
                    da, cache.blocks[static_cast<std::size_t>(it->index)], dwide);
            } else {
                auto& u = plains_[static_cast<std::size_t>(it->index)];
                auto& uc = cache.plains[static_cast<std::size_t>(it->index)];
                da = mish_backward(da, uc.act);
                da = u.bn.backward(da, uc.bn);
                da = u.conv.backward(da, uc.conv);
            }
        }
        if (cfg.use_wide) {
            mat<T> d = dwide;
            for (int l = k_wide_layers - 1; l >= 0; --l) {
                d = mat_mish_backward(d, cache.wide_act[static_cast<std::size_t>(l)]);
                tensor3<T> t(d.rows, d.cols, 1);
                t.v = d.v;
                t = wide_bn_[static_cast<std::size_t>(l)].backward(t, cache.wide_bn[static_cast<std::size_t>(l)]);
                d.v = t.v;
                d = wide_fc_[static_cast<std::size_t>(l)].backward(d, cache.wide_fc[static_cast<std::size_t>(l)]);
            }
        }
    }

    // Eval-mode class probabilities.
    mat<T> predict_proba(const tensor3<T>& x, const mat<T>& wide) {
        trunk_cache<T> tc;
        head_cache<T> hc;
        mat<T> logits = forward_logits(x, wide, run_mode::eval, tc, hc);
        mat<T> p(logits.rows, logits.cols);
        for (std::size_t i = 0; i < logits.size(); ++i) p.v[i] = sigmoid(logits.v[i]);
        return p;
    }

    prediction predict(const tensor3<T>& x, const mat<T>& wide, double threshold = k_default_threshold) {
        mat<T> p = predict_proba(x, wide);
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

    // Per-stage output channel counts (after multiplier), for shape checks.
    std::vector<int> stage_channels() const {
        std::vector<int> out;
        for (const auto& s : cfg.stages) out.push_back(cfg.scaled(s.channels));
        return out;
    }

    void begin_collect_stats() {
        for (auto* bn : bns_) bn->begin_collect();
    }
    void finish_collect_stats() {
        for (auto* bn : bns_) bn->finish_collect();
    }

    nlohmann::json meta() const {
        nlohmann::json j;
        j["model"] = cfg.to_json();
        j["n_channels"] = n_channels;
        return j;
    }

  private:
    std::vector<plain_unit> plains_;
    std::vector<fmb_block<T>> blocks_;
    std::vector<step> plan_;
    std::vector<fc<T>> wide_fc_;
    std::vector<batchnorm1d<T>> wide_bn_;
    fc<T> head1_, head2_;
    std::vector<batchnorm1d<T>*> bns_;

    void build_layers(rng& rand) {
        // count layer totals first so vectors never reallocate (param_store
        // keeps raw pointers into them)
        std::size_t n_plain = 0, n_fmb = 0;
        for (const auto& s : cfg.stages) {
            if (s.op == stage_spec::kind::conv) n_plain += static_cast<std::size_t>(s.layers);
            else n_fmb += static_cast<std::size_t>(s.layers);
        }
        plains_.resize(n_plain);
        blocks_.resize(n_fmb);
        wide_fc_.resize(k_wide_layers);
        wide_bn_.resize(k_wide_layers);

        const int wide_embed = cfg.use_wide ? cfg.wide_embed : 0;
        if (cfg.use_wide) {
            int in = cfg.wide_dim;
            for (int l = 0; l < k_wide_layers; ++l) {
                const std::string prefix = "wide" + std::to_string(l);
                wide_fc_[static_cast<std::size_t>(l)].init(prefix + ".fc", in, cfg.wide_embed, store, rand);
                wide_bn_[static_cast<std::size_t>(l)].init(prefix + ".bn", cfg.wide_embed, store);
                in = cfg.wide_embed;
            }
        }

        int c_in = n_channels;
        std::size_t pi = 0, bi = 0;
        for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
            const auto& s = cfg.stages[si];
            const int c_out = cfg.scaled(s.channels);
            for (int l = 0; l < s.layers; ++l) {
                const int stride = l == 0 ? s.stride : 1;
                const std::string prefix = "stage" + std::to_string(si) + ".layer" + std::to_string(l);
                if (s.op == stage_spec::kind::conv) {
                    auto& u = plains_[pi];
                    u.conv.init(prefix + ".conv", c_in, c_out, s.kernel, stride, store, rand);
                    u.bn.init(prefix + ".bn", c_out, store);
                    plan_.push_back({false, static_cast<int>(pi)});
                    ++pi;
                } else {
                    auto& blk = blocks_[bi];
                    blk.init(prefix, c_in, c_out, s.kernel, stride, s.expand, wide_embed, store, rand);
                    plan_.push_back({true, static_cast<int>(bi)});
                    ++bi;
                }
                c_in = c_out;
            }
        }

        head1_.init("head1", pooled_dim(), cfg.mlp_hidden, store, rand);
        head2_.init("head2", cfg.mlp_hidden, cfg.n_labels, store, rand);

        for (auto& u : plains_) bns_.push_back(&u.bn);
        for (auto& b : blocks_) {
            bns_.push_back(&b.bn1);
            bns_.push_back(&b.bn2);
        }
        for (auto& b : wide_bn_) bns_.push_back(&b);
    }
};

// Build a model input batch from prepared records.
template <typename T>
tensor3<T> batch_signals(const prepared_dataset& ds, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw invalid_input("batch_signals: empty batch");
    tensor3<T> x(static_cast<int>(indices.size()), ds.n_channels, ds.window);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& rec = ds.records[indices[i]];
        for (int c = 0; c < ds.n_channels; ++c) {
            const auto& lead = rec.channels[static_cast<std::size_t>(c)];
            T* row = x.row(static_cast<int>(i), c);
            for (int w = 0; w < ds.window; ++w) row[w] = static_cast<T>(lead[static_cast<std::size_t>(w)]);
        }
    }
    return x;
}

template <typename T>
mat<T> batch_wide(const prepared_dataset& ds, const std::vector<std::size_t>& indices) {
    mat<T> wide(static_cast<int>(indices.size()), wide_features::dim);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto flat = ds.records[indices[i]].wide.flatten();
        for (int j = 0; j < wide_features::dim; ++j)
            wide.at(static_cast<int>(i), j) = static_cast<T>(flat[static_cast<std::size_t>(j)]);
    }
    return wide;
}

template <typename T>
mat<T> batch_labels(const prepared_dataset& ds, const std::vector<std::size_t>& indices, bool clean) {
    mat<T> y(static_cast<int>(indices.size()), ds.n_labels);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& rec = ds.records[indices[i]];
        const auto& labels = clean && !rec.labels_clean.empty() ? rec.labels_clean : rec.labels;
        for (int j = 0; j < ds.n_labels; ++j)
            y.at(static_cast<int>(i), j) = static_cast<T>(labels[static_cast<std::size_t>(j)]);
    }
    return y;
}

}  // namespace ecgmix
