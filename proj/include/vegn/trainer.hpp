#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vegn/dist.hpp"
#include "vegn/model.hpp"
#include "vegn/nbody.hpp"
#include "vegn/param_store.hpp"

namespace vegn {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-12;  // decoupled
};

// Bias-corrected Adam with decoupled weight decay. Deterministic given the
// gradient sequence; steps with non-finite gradients are skipped and
// reported through the return value.
class Adam {
  public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    bool step(ParamStore& params);

    const AdamConfig& config() const { return cfg_; }
    long long steps_taken() const { return t_; }

  private:
    AdamConfig cfg_;
    long long t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct TrainConfig {
    int epochs = 2500;
    int patience = 200;   // epochs without validation improvement before stopping
    int batch = 16;       // gradient-accumulation count
    int eval_period = 1;  // validate every k epochs
    std::uint64_t seed = 0;
    AdamConfig adam;

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mse = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

struct TrainResult {
    ParamStore best_params;  // values of the best-validation checkpoint
    std::vector<EpochMetrics> history;
    int best_epoch = -1;
    double best_val = std::numeric_limits<double>::infinity();
};

struct DistTrainOptions {
    int devices = 1;
    std::string partition = "random";  // random | grid
    std::string radius_mode = "fixed"; // fixed | dynamic
    double radius = std::numeric_limits<double>::infinity();
    std::string transport = "inproc";
};

TrainResult train(const std::vector<NbodySample>& train_split,
                  const std::vector<NbodySample>& val_split, const ModelConfig& cfg,
                  const TrainConfig& tc);

// Algorithm of the distributed runtime: per sample, each device runs the
// layer loop on its local subgraph with synchronized virtual nodes, computes
// its local loss, backpropagates (collective backward included), then
// gradients are summed across devices and every replica applies the same
// optimizer step. With one device this reproduces `train` exactly.
TrainResult train_distributed(const std::vector<NbodySample>& train_split,
                              const std::vector<NbodySample>& val_split, const ModelConfig& cfg,
                              const TrainConfig& tc, const DistTrainOptions& opts);

struct EvalOptions {
    std::uint64_t seed = 0;
    bool rotations = true;
    bool translations = false;
    bool reflections = false;
    int warmup = 2;  // untimed forward passes before the clock starts
};

struct EvalResult {
    double mse = 0.0;
    double seconds = 0.0;
    int samples = 0;
};

// Rotation-augmented test protocol: each sample is transformed (input and
// target alike) before the forward pass. Wall time covers the forward passes
// over the whole split, after the warm-up. Parameters are never mutated.
EvalResult evaluate(const std::vector<NbodySample>& split, const ModelConfig& cfg,
                    const ModelParams& params, const EvalOptions& opts);

// Autoregressive evaluation: predictions are fed back as the next input;
// velocities are re-estimated from consecutive predicted frames. Returns one
// N x 3 position tensor per step.
std::vector<Tensor> rollout(const NbodySample& start, const ModelConfig& cfg,
                            const ModelParams& params, int steps, double step_time);

// Shared scheduling helpers, so the single-device and distributed loops see
// identical sample orders and seeds.
std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch);
std::uint64_t step_sample_seed(std::uint64_t seed, long long sample_counter);
std::uint64_t partition_seed(std::uint64_t seed, long long sample_counter);

}  // namespace vegn
