#include "vegn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "vegn/common.hpp"

namespace vegn {

Backbone backbone_from_string(const std::string& s) {
    if (s == "egnn") return Backbone::egnn;
    if (s == "fast_egnn") return Backbone::fast_egnn;
    if (s == "fast_rf") return Backbone::fast_rf;
    if (s == "fast_schnet") return Backbone::fast_schnet;
    throw std::invalid_argument("unknown backbone: " + s);
}

std::string backbone_to_string(Backbone b) {
    switch (b) {
        case Backbone::egnn: return "egnn";
        case Backbone::fast_egnn: return "fast_egnn";
        case Backbone::fast_rf: return "fast_rf";
        case Backbone::fast_schnet: return "fast_schnet";
    }
    throw std::logic_error("backbone_to_string: bad enum");
}

void ModelConfig::validate() const {
    if (layers < 0) throw std::invalid_argument("ModelConfig: layers must be >= 0");
    if (hidden < 1) throw std::invalid_argument("ModelConfig: hidden width must be >= 1");
    if (channels < 0) throw std::invalid_argument("ModelConfig: virtual node count must be >= 0");
    if (backbone == Backbone::egnn && channels != 0)
        throw std::invalid_argument("ModelConfig: the egnn backbone runs without virtual nodes");
    if (!(drop_rate >= 0.0 && drop_rate <= 1.0))
        throw std::invalid_argument("ModelConfig: drop rate must be in [0, 1]");
    if (feature_dim < 0 || edge_attr_dim < 0)
        throw std::invalid_argument("ModelConfig: negative input width");
    if (mmd_lambda > 0.0) loss_config().validate();
}

namespace {

struct MlpWidths {
    std::vector<int> phi1, phi2, phi_rx, phi_vx, phi_v, phi_h, phi_z, phi_s;
};

MlpWidths widths_for(const ModelConfig& cfg) {
    const int f = cfg.hidden;
    const int fw = cfg.feat_width();
    const int c = cfg.channels;
    const int a = cfg.edge_attr_dim;
    MlpWidths w;
    switch (cfg.backbone) {
        case Backbone::fast_rf:
            w.phi1 = {1, f, f};
            break;
        case Backbone::fast_schnet:
            w.phi1 = {2 * fw + a, f, f};
            break;
        default:
            w.phi1 = {2 * fw + 1 + a, f, f};
    }
    if (c > 0) {
        int phi2_in = cfg.global_virtual_message ? fw + fw * c + c + c * c : fw + fw + 1 + c;
        w.phi2 = {phi2_in, f, f};
        w.phi_vx = {f, f, 1};
        w.phi_z = {f, f, 1};
        if (fw > 0) w.phi_s = {fw + f, f, fw};
    }
    w.phi_rx = {f, f, 1};
    w.phi_v = {fw, f, 1};
    if (fw > 0) w.phi_h = {(c > 0 ? 3 : 2) * fw, f, fw};
    return w;
}

}  // namespace

ModelParams ModelParams::create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    const int fw = cfg.feat_width();
    if (fw > 0) p.embed = Mlp::create(p.store, "embed", {cfg.feature_dim, fw}, seed);
    if (cfg.has_virtual()) {
        std::vector<double> s0(static_cast<std::size_t>(cfg.channels) * fw);
        double bound = std::sqrt(6.0 / (cfg.channels + std::max(fw, 1)));
        std::mt19937_64 rng(mix_seed(seed, fnv1a(std::string("s_init"))));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& x : s0) x = dist(rng);
        p.s_init = p.store.create("s_init", cfg.channels, fw, std::move(s0));
    }
    const MlpWidths w = widths_for(cfg);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string pre = "layer" + std::to_string(l);
        LayerParams lp;
        lp.phi1 = Mlp::create(p.store, pre + ".phi1", w.phi1, seed);
        lp.phi_rx = Mlp::create(p.store, pre + ".phi_rx", w.phi_rx, seed);
        lp.phi_v = Mlp::create(p.store, pre + ".phi_v", w.phi_v, seed);
        if (fw > 0) lp.phi_h = Mlp::create(p.store, pre + ".phi_h", w.phi_h, seed);
        if (cfg.has_virtual()) {
            lp.phi2 = Mlp::create(p.store, pre + ".phi2", w.phi2, seed);
            lp.phi_vx = Mlp::create(p.store, pre + ".phi_vx", w.phi_vx, seed);
            lp.phi_z = Mlp::create(p.store, pre + ".phi_z", w.phi_z, seed);
            if (fw > 0) lp.phi_s = Mlp::create(p.store, pre + ".phi_s", w.phi_s, seed);
        }
        p.layers.push_back(std::move(lp));
    }
    return p;
}

ModelParams ModelParams::attach(const ModelConfig& cfg, ParamStore store) {
    cfg.validate();
    ModelParams p;
    p.store = std::move(store);
    const int fw = cfg.feat_width();
    if (fw > 0) p.embed = Mlp::attach(p.store, "embed", {cfg.feature_dim, fw});
    if (cfg.has_virtual()) p.s_init = p.store.get("s_init");
    const MlpWidths w = widths_for(cfg);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string pre = "layer" + std::to_string(l);
        LayerParams lp;
        lp.phi1 = Mlp::attach(p.store, pre + ".phi1", w.phi1);
        lp.phi_rx = Mlp::attach(p.store, pre + ".phi_rx", w.phi_rx);
        lp.phi_v = Mlp::attach(p.store, pre + ".phi_v", w.phi_v);
        if (fw > 0) lp.phi_h = Mlp::attach(p.store, pre + ".phi_h", w.phi_h);
        if (cfg.has_virtual()) {
            lp.phi2 = Mlp::attach(p.store, pre + ".phi2", w.phi2);
            lp.phi_vx = Mlp::attach(p.store, pre + ".phi_vx", w.phi_vx);
            lp.phi_z = Mlp::attach(p.store, pre + ".phi_z", w.phi_z);
            if (fw > 0) lp.phi_s = Mlp::attach(p.store, pre + ".phi_s", w.phi_s);
        }
        p.layers.push_back(std::move(lp));
    }
    return p;
}

ModelParams ModelParams::clone(const ModelConfig& cfg) const { return attach(cfg, store.clone()); }

VirtualSet init_virtual(const Tensor& x, int channels, const Tensor& learned_s) {
    if (channels < 1)
        throw std::invalid_argument("init_virtual: needs C >= 1 (skip the virtual path for C = 0)");
    if (x.rows() < 1) throw std::invalid_argument("init_virtual: empty graph");
    if (learned_s.rows() != channels)
        throw std::invalid_argument("init_virtual: learned feature row count != C");
    Tensor xbar = scale(reduce_sum_rows(x), 1.0 / x.rows());
    VirtualSet vs;
    vs.z = broadcast_row(xbar, channels);
    vs.s = learned_s;
    return vs;
}

namespace {

// Center of mass of the current coordinates; with a reducer, the sum and the
// node count go through one packed collective round so every device sees the
// center of the whole graph.
Tensor global_center(const Tensor& x, LayerReducer* reducer) {
    Tensor local_sum = reduce_sum_rows(x);
    if (!reducer) return scale(local_sum, 1.0 / x.rows());
    Tensor packed = concat_cols({local_sum, Tensor::scalar(static_cast<double>(x.rows()))});
    Tensor reduced = reducer->reduce(packed);
    return scale(slice_cols(reduced, 0, 3), 1.0 / reducer->global_nodes());
}

}  // namespace

LayerState init_state(const GeometricGraph& g, const ModelConfig& cfg, const ModelParams& params,
                      LayerReducer* reducer) {
    const int n = g.num_nodes();
    LayerState st;
    st.x = g.x;
    st.v0 = g.v;
    st.h = cfg.feat_width() > 0 ? params.embed.apply(g.h) : Tensor::zeros(n, 0);
    if (cfg.has_virtual()) {
        if (!reducer) {
            st.vs = init_virtual(g.x, cfg.channels, params.s_init);
        } else {
            st.vs.z = broadcast_row(global_center(g.x, reducer), cfg.channels);
            st.vs.s = params.s_init;
        }
    }
    return st;
}

namespace {

struct EdgeIndex {
    std::vector<int> src;
    std::vector<int> dst;
    std::vector<double> alpha;  // 1/|N(i)|, zero for isolated nodes
};

EdgeIndex index_edges(const GeometricGraph& g) {
    EdgeIndex idx;
    idx.src.reserve(g.edges.size());
    idx.dst.reserve(g.edges.size());
    std::vector<int> deg(g.num_nodes(), 0);
    for (const Edge& e : g.edges) {
        idx.src.push_back(e.src);
        idx.dst.push_back(e.dst);
        ++deg[e.src];
    }
    idx.alpha.resize(g.num_nodes());
    for (int i = 0; i < g.num_nodes(); ++i) idx.alpha[i] = deg[i] > 0 ? 1.0 / deg[i] : 0.0;
    return idx;
}

// Real-real messages and their aggregates. Returns the per-node coordinate
// term (already alpha-scaled except for the SchNet plain sum) and the
// per-node mean message for the feature update.
struct RealMessages {
    Tensor coord_term;  // N x 3
    Tensor mean_msg;    // N x F (empty when featureless update is off)
};

RealMessages real_real_stage(const LayerState& st, const GeometricGraph& g, const EdgeIndex& idx,
                             const ModelConfig& cfg, const LayerParams& lp) {
    const int n = g.num_nodes();
    Tensor xs = gather_rows(st.x, idx.src);
    Tensor xd = gather_rows(st.x, idx.dst);
    Tensor xdiff = sub(xs, xd);

    std::vector<Tensor> parts;
    if (cfg.feat_width() > 0) {
        parts.push_back(gather_rows(st.h, idx.src));
        parts.push_back(gather_rows(st.h, idx.dst));
    }
    if (cfg.backbone != Backbone::fast_schnet) parts.push_back(row_sqnorm(xdiff));
    if (cfg.backbone != Backbone::fast_rf && cfg.edge_attr_dim > 0) parts.push_back(g.edge_attr);

    Tensor msg = lp.phi1.apply(concat_cols(parts));
    Tensor coord = scatter_add_rows(row_scale(xdiff, lp.phi_rx.apply(msg)), idx.src, n);

    RealMessages out;
    out.coord_term =
        cfg.backbone == Backbone::fast_schnet ? coord : scale_rows(coord, idx.alpha);
    if (cfg.feat_width() > 0)
        out.mean_msg = scale_rows(scatter_add_rows(msg, idx.src, n), idx.alpha);
    return out;
}

Tensor flatten_rows(const Tensor& a) {
    std::vector<Tensor> rows;
    rows.reserve(a.rows());
    for (int r = 0; r < a.rows(); ++r) rows.push_back(slice_rows(a, r, r + 1));
    return concat_cols(rows);
}

// Per-channel real-virtual messages plus everything the aggregations need.
struct VirtualMessages {
    std::vector<Tensor> per_channel;  // C tensors, N x F
    std::vector<Tensor> diff;         // C tensors, N x 3 (x_i - z_c)
    Tensor x_term_sum;                // N x 3, sum over channels of (x_i - z_c) phi_vx(m_ic)
    Tensor msg_sum;                   // N x F, sum over channels of m_ic
};

VirtualMessages real_virtual_stage(const LayerState& st, const ModelConfig& cfg,
                                   const LayerParams& lp, const Tensor& mv) {
    const int n = st.x.rows();
    const int c = cfg.channels;
    VirtualMessages out;

    Tensor shared_msg;
    if (cfg.global_virtual_message) {
        std::vector<Tensor> parts;
        if (cfg.feat_width() > 0) {
            parts.push_back(st.h);
            parts.push_back(broadcast_row(flatten_rows(st.vs.s), n));
        }
        std::vector<Tensor> dists;
        for (int k = 0; k < c; ++k)
            dists.push_back(row_sqnorm(sub_rowvec(st.x, slice_rows(st.vs.z, k, k + 1))));
        parts.push_back(concat_cols(dists));
        parts.push_back(broadcast_row(flatten_rows(mv), n));
        shared_msg = lp.phi2.apply(concat_cols(parts));
    }

    for (int k = 0; k < c; ++k) {
        Tensor dif = sub_rowvec(st.x, slice_rows(st.vs.z, k, k + 1));
        Tensor msg;
        if (cfg.global_virtual_message) {
            msg = shared_msg;
        } else {
            std::vector<Tensor> parts;
            if (cfg.feat_width() > 0) {
                parts.push_back(st.h);
                parts.push_back(broadcast_row(slice_rows(st.vs.s, k, k + 1), n));
            }
            parts.push_back(row_sqnorm(dif));
            // m^v is symmetric, so row k is column k.
            parts.push_back(broadcast_row(slice_rows(mv, k, k + 1), n));
            msg = lp.phi2.apply(concat_cols(parts));
        }
        Tensor xw = row_scale(dif, lp.phi_vx.apply(msg));
        out.x_term_sum = k == 0 ? xw : add(out.x_term_sum, xw);
        if (cfg.feat_width() > 0) out.msg_sum = k == 0 ? msg : add(out.msg_sum, msg);
        out.per_channel.push_back(std::move(msg));
        out.diff.push_back(std::move(dif));
    }
    return out;
}

}  // namespace

LayerState apply_layer(const LayerState& st, const GeometricGraph& g, const ModelConfig& cfg,
                       const LayerParams& lp, int layer_index, LayerReducer* reducer) {
    const int c = cfg.has_virtual() ? cfg.channels : 0;
    const std::string where = "layer " + std::to_string(layer_index);
    EdgeIndex idx = index_edges(g);

    RealMessages rm = real_real_stage(st, g, idx, cfg, lp);

    Tensor mv;
    VirtualMessages vm;
    if (c > 0) {
        Tensor xbar = global_center(st.x, reducer);
        Tensor centered = sub_rowvec(st.vs.z, xbar);
        mv = matmul(centered, transpose(centered));
        check_finite(mv, where + " virtual global message");
        vm = real_virtual_stage(st, cfg, lp, mv);
    }

    LayerState next;
    next.v0 = st.v0;

    Tensor xacc = add(st.x, rm.coord_term);
    if (c > 0) xacc = add(xacc, scale(vm.x_term_sum, 1.0 / c));
    next.x = add(xacc, row_scale(st.v0, lp.phi_v.apply(st.h)));
    check_finite(next.x, where + " real aggregation");

    if (cfg.feat_width() > 0) {
        std::vector<Tensor> parts{st.h, rm.mean_msg};
        if (c > 0) parts.push_back(scale(vm.msg_sum, 1.0 / c));
        next.h = add(st.h, lp.phi_h.apply(concat_cols(parts)));
        check_finite(next.h, where + " feature aggregation");
    } else {
        next.h = st.h;
    }

    if (c > 0) {
        const int fw = cfg.feat_width();
        const int f = cfg.hidden;
        std::vector<Tensor> zdeltas, msums;
        for (int k = 0; k < c; ++k) {
            zdeltas.push_back(
                scale(reduce_sum_rows(row_scale(vm.diff[k], lp.phi_z.apply(vm.per_channel[k]))),
                      -1.0));
            if (fw > 0) msums.push_back(reduce_sum_rows(vm.per_channel[k]));
        }
        if (reducer) {
            // One packed round per layer: C z-deltas then C message sums.
            std::vector<Tensor> pieces = zdeltas;
            pieces.insert(pieces.end(), msums.begin(), msums.end());
            Tensor reduced = reducer->reduce(concat_cols(pieces));
            for (int k = 0; k < c; ++k) {
                zdeltas[k] = slice_cols(reduced, 3 * k, 3 * k + 3);
                if (fw > 0) msums[k] = slice_cols(reduced, 3 * c + f * k, 3 * c + f * (k + 1));
            }
        }
        const int total_n = reducer ? reducer->global_nodes() : g.num_nodes();
        const double inv_n = 1.0 / total_n;
        std::vector<Tensor> zrows, srows;
        for (int k = 0; k < c; ++k) {
            zrows.push_back(add(slice_rows(st.vs.z, k, k + 1), scale(zdeltas[k], inv_n)));
            if (fw > 0) {
                Tensor srow = slice_rows(st.vs.s, k, k + 1);
                srows.push_back(
                    add(srow, lp.phi_s.apply(concat_cols({srow, scale(msums[k], inv_n)}))));
            }
        }
        next.vs.z = concat_rows(zrows);
        next.vs.s = fw > 0 ? concat_rows(srows) : st.vs.s;
        check_finite(next.vs.z, where + " virtual aggregation");
        check_finite(next.vs.s, where + " virtual aggregation");
        if (reducer) reducer->replicas_checkpoint(next.vs.z, next.vs.s);
    }
    return next;
}

ForwardResult forward(const GeometricGraph& g, const ModelConfig& cfg, const ModelParams& params) {
    cfg.validate();
    if (cfg.backbone == Backbone::egnn) return plain_egnn_forward(g, cfg, params);
    LayerState st = init_state(g, cfg, params);
    for (int l = 0; l < cfg.layers; ++l) st = apply_layer(st, g, cfg, params.layers[l], l);
    ForwardResult out;
    out.x = st.x;
    out.h = st.h;
    if (cfg.has_virtual()) {
        out.z = st.vs.z;
        out.s = st.vs.s;
    }
    return out;
}

ForwardResult plain_egnn_forward(const GeometricGraph& g, const ModelConfig& cfg,
                                 const ModelParams& params) {
    const int n = g.num_nodes();
    EdgeIndex idx = index_edges(g);
    Tensor x = g.x;
    Tensor h = cfg.feat_width() > 0 ? params.embed.apply(g.h) : Tensor::zeros(n, 0);
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams& lp = params.layers[l];
        const std::string where = "layer " + std::to_string(l);
        Tensor xs = gather_rows(x, idx.src);
        Tensor xd = gather_rows(x, idx.dst);
        Tensor xdiff = sub(xs, xd);
        std::vector<Tensor> parts;
        if (cfg.feat_width() > 0) {
            parts.push_back(gather_rows(h, idx.src));
            parts.push_back(gather_rows(h, idx.dst));
        }
        parts.push_back(row_sqnorm(xdiff));
        if (cfg.edge_attr_dim > 0) parts.push_back(g.edge_attr);
        Tensor msg = lp.phi1.apply(concat_cols(parts));
        Tensor coord =
            scale_rows(scatter_add_rows(row_scale(xdiff, lp.phi_rx.apply(msg)), idx.src, n),
                       idx.alpha);
        Tensor xnew = add(add(x, coord), row_scale(g.v, lp.phi_v.apply(h)));
        check_finite(xnew, where + " real aggregation");
        if (cfg.feat_width() > 0) {
            Tensor mean_msg = scale_rows(scatter_add_rows(msg, idx.src, n), idx.alpha);
            h = add(h, lp.phi_h.apply(concat_cols({h, mean_msg})));
            check_finite(h, where + " feature aggregation");
        }
        x = xnew;
    }
    ForwardResult out;
    out.x = x;
    out.h = h;
    return out;
}

std::vector<double> reconstruct_pair_gram(const std::vector<double>& y,
                                          const std::vector<double>& d, int channels) {
    if (y.size() != static_cast<std::size_t>(channels) ||
        d.size() != static_cast<std::size_t>(channels) * channels)
        throw std::invalid_argument("reconstruct_pair_gram: size mismatch");
    std::vector<double> a(d.size());
    for (int m = 0; m < channels; ++m)
        for (int n = 0; n < channels; ++n)
            a[static_cast<std::size_t>(m) * channels + n] =
                d[static_cast<std::size_t>(m) * channels + n] +
                0.5 * ((y[m] - d[static_cast<std::size_t>(m) * channels + m]) +
                       (y[n] - d[static_cast<std::size_t>(n) * channels + n]));
    return a;
}

}  // namespace vegn
