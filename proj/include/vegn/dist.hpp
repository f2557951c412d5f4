#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vegn/collective.hpp"
#include "vegn/geometry.hpp"
#include "vegn/model.hpp"
#include "vegn/nbody.hpp"

namespace vegn {

// Node-to-device assignment. Every node maps to exactly one device and every
// device is nonempty.
struct Partition {
    int devices = 1;
    std::vector<int> assign;

    // Seeded permutation followed by a strided split: sizes differ by at
    // most one and every node lands on each device with probability 1/D.
    static Partition random(int n, int devices, std::uint64_t seed);

    // Axis-aligned spatial bins balanced by quantile cuts over a near-cubic
    // factorization of D. Slabs that are degenerate on the cut axis fall
    // back to a deterministic spread within the slab.
    static Partition grid(const Tensor& x, int devices);

    std::vector<std::vector<int>> device_nodes() const;  // ascending ids per device
    void validate(int n) const;
};

// Worker-side inputs: one graph sample plus its prediction target. Charges
// (when present) generate the c_i * c_j edge attribute on local edges.
struct DistSample {
    Tensor x;
    Tensor v;
    Tensor h;
    Tensor x_tgt;
    std::vector<double> charges;

    int num_nodes() const { return x.rows(); }
};

DistSample dist_sample_from_nbody(const NbodySample& s);

// Per-device subgraph: the local radius graph over this device's nodes only
// (cross-device edges are lost), then the configured edge-dropping transform.
// An infinite radius yields the complete local digraph.
struct WorkerView {
    int device = 0;
    int global_n = 0;
    std::vector<int> global_ids;  // local -> global, ascending
    GeometricGraph local;
    Tensor target_local;
};

WorkerView build_worker_view(const DistSample& sample, const Partition& part, int device,
                             double radius, double drop_rate);

// Smallest radius in {r0, r0 + 0.001, ...} whose summed local edge count
// reaches `target_edges` (directed counts), capped at `max_steps` increments.
struct CutoffResult {
    double radius = 0.0;
    long long edges = 0;
    bool capped = false;
};
CutoffResult adjust_cutoff(const DistSample& sample, const Partition& part, double r0,
                           long long target_edges, int max_steps = 100);

struct DeviceOutputs {
    Tensor x;  // local nodes
    Tensor h;
    Tensor z;  // replicated virtual coordinates
    Tensor s;
};

// LayerReducer backed by a collective: packed rows are all-reduced and the
// refreshed virtual state is checksum-verified across replicas.
class CollectiveReducer : public LayerReducer {
  public:
    CollectiveReducer(Collective& coll, int rank, int global_n)
        : coll_(coll), rank_(rank), global_n_(global_n) {}
    Tensor reduce(const Tensor& local_row) override {
        return all_reduce_sum(local_row, coll_, rank_);
    }
    void replicas_checkpoint(const Tensor& z, const Tensor& s) override;
    int global_nodes() const override { return global_n_; }

  private:
    Collective& coll_;
    int rank_;
    int global_n_;
};

// Forward pass of one worker; collectives synchronize the virtual state.
DeviceOutputs dist_forward_device(const WorkerView& view, const ModelConfig& cfg,
                                  const ModelParams& params, Collective& coll, int rank);

// Per-device objective: L_d = SSE_d / (3 N) + (lambda / D) * MMD(Z, sample of
// the local ground truth), so the device sum equals the global objective.
Tensor dist_loss_device(const DeviceOutputs& out, const WorkerView& view, const LossConfig& loss,
                        int devices, std::uint64_t step_seed);

// Sums every device's gradients in one collective round; afterwards all
// replicas hold identical gradient bytes.
void sync_param_grads(ParamStore& store, Collective& coll, int rank);

// Runs fn(rank) on `world` concurrent workers and rethrows the first failure.
void run_parallel(int world, const std::function<void(int)>& fn);

// Inference-mode distributed forward over all devices.
struct DistForwardResult {
    std::vector<WorkerView> views;
    std::vector<DeviceOutputs> outputs;
};
DistForwardResult dist_forward_all(const DistSample& sample, const Partition& part,
                                   const ModelConfig& cfg,
                                   const std::vector<ModelParams>& replicas, Collective& coll,
                                   double radius);

// Scatter per-device rows back into a global N x 3 matrix.
Tensor assemble_global_rows(const std::vector<WorkerView>& views,
                            const std::vector<DeviceOutputs>& outputs, int global_n);

}  // namespace vegn
