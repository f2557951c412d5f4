#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vegn/geometry.hpp"
#include "vegn/losses.hpp"
#include "vegn/mlp.hpp"
#include "vegn/param_store.hpp"
#include "vegn/tensor.hpp"

namespace vegn {

enum class Backbone { egnn, fast_egnn, fast_rf, fast_schnet };

Backbone backbone_from_string(const std::string& s);
std::string backbone_to_string(Backbone b);

struct ModelConfig {
    Backbone backbone = Backbone::fast_egnn;
    int layers = 4;
    int hidden = 64;       // MLP hidden width; also the node feature width
    int channels = 3;      // virtual node count C; 0 means plain message passing
    double drop_rate = 0.0;
    double mmd_lambda = 0.03;
    double mmd_sigma = 1.5;
    int mmd_samples = 3;
    int feature_dim = 2;   // width of the dataset's H
    int edge_attr_dim = 1;
    // Concatenated-form real-virtual message (one shared message per node
    // over the whole virtual set) instead of the default per-channel form.
    bool global_virtual_message = false;

    // Node feature width inside the network; the radial-field variant runs
    // featureless.
    int feat_width() const { return backbone == Backbone::fast_rf ? 0 : hidden; }
    bool has_virtual() const { return channels > 0; }
    LossConfig loss_config() const { return LossConfig{mmd_lambda, mmd_sigma, mmd_samples}; }

    void validate() const;
};

// Ordered set of virtual nodes. Row c of `z` (C x 3) holds the coordinates
// and row c of `s` (C x F) the invariant features of virtual node c. The
// channel order is meaningful and never re-sorted.
struct VirtualSet {
    Tensor z;
    Tensor s;

    int channels() const { return z.rows(); }
};

struct LayerParams {
    Mlp phi1;     // real-real message
    Mlp phi2;     // real-virtual message
    Mlp phi_rx;   // scalar weight of (x_i - x_j) terms
    Mlp phi_vx;   // scalar weight of (x_i - z_c) terms
    Mlp phi_v;    // scalar weight of the input velocity
    Mlp phi_h;    // feature update (absent when featureless)
    Mlp phi_z;    // scalar weight of (z_c - x_i) terms
    Mlp phi_s;    // virtual feature update (absent when featureless)
};

struct ModelParams {
    ParamStore store;
    Mlp embed;             // input feature embedding (absent when featureless)
    Tensor s_init;         // learnable initial virtual features, C x F
    std::vector<LayerParams> layers;

    static ModelParams create(const ModelConfig& cfg, std::uint64_t seed);
    // Rebind MLP handles onto an existing store with identical layout.
    static ModelParams attach(const ModelConfig& cfg, ParamStore store);
    ModelParams clone(const ModelConfig& cfg) const;
};

// Every virtual coordinate starts at the center of mass of the real nodes;
// features start from the learned per-model matrix. C must be >= 1.
VirtualSet init_virtual(const Tensor& x, int channels, const Tensor& learned_s);

struct LayerState {
    Tensor x;       // N x 3
    Tensor h;       // N x feat_width (zero cols when featureless)
    VirtualSet vs;  // empty tensors when C == 0
    Tensor v0;      // input velocities, used at every layer
};

struct ForwardResult {
    Tensor x;  // N x 3
    Tensor h;
    Tensor z;  // C x 3 (empty when C == 0)
    Tensor s;  // C x F
};

// Reduction hook for the distributed runtime. The layer loop funnels every
// cross-device sum through `reduce` (a packed 1 x k row per round, summed
// elementwise over devices) and reports the refreshed virtual state through
// `replicas_checkpoint`. Single-device execution passes nullptr and uses the
// local partial sums directly, which is the identity reduction.
class LayerReducer {
  public:
    virtual ~LayerReducer() = default;
    virtual Tensor reduce(const Tensor& local_row) = 0;
    virtual void replicas_checkpoint(const Tensor& z, const Tensor& s) = 0;
    virtual int global_nodes() const = 0;
};

LayerState init_state(const GeometricGraph& g, const ModelConfig& cfg, const ModelParams& params,
                      LayerReducer* reducer = nullptr);

// One message-passing layer: real-real messages, virtual global message,
// real-virtual messages, real aggregation, virtual aggregation. The center
// of mass is recomputed from the current coordinates (globally, when a
// reducer is given), and the virtual aggregation sums run over all nodes on
// all devices in one packed round.
LayerState apply_layer(const LayerState& state, const GeometricGraph& g, const ModelConfig& cfg,
                       const LayerParams& lp, int layer_index, LayerReducer* reducer = nullptr);

ForwardResult forward(const GeometricGraph& g, const ModelConfig& cfg, const ModelParams& params);

// Standalone plain-EGNN stack (no virtual machinery at all). The generic
// path with C == 0 must match this bit for bit.
ForwardResult plain_egnn_forward(const GeometricGraph& g, const ModelConfig& cfg,
                                 const ModelParams& params);

// Appendix identity: reconstructs (Z - x_i)^T (Z - x_i) from the per-channel
// squared distances y_c = |z_c - x_i|^2 and the centered Gram matrix
// D = (Z - xbar)^T (Z - xbar).
std::vector<double> reconstruct_pair_gram(const std::vector<double>& y,
                                          const std::vector<double>& d, int channels);

}  // namespace vegn
