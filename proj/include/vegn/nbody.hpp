#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vegn/geometry.hpp"
#include "vegn/tensor.hpp"

namespace vegn {

// Charged-particle system under softened Coulomb forces, unit masses,
// integrated with leapfrog (kick-drift-kick).
struct SimConfig {
    int particles = 30;
    double dt_sim = 1e-3;
    int substeps = 10;   // integrator steps per recorded frame
    double epsilon = 0.1;

    void validate() const;
};

struct Trajectory {
    std::vector<double> charges;   // +1 / -1 per particle
    std::vector<Tensor> positions; // one N x 3 tensor per recorded frame
    std::vector<Tensor> velocities;

    int frames() const { return static_cast<int>(positions.size()); }
};

// Initial positions i.i.d. normal(0, 1), velocities normal(0, 0.5), charges
// uniform +-1; frame 0 is the initial condition.
Trajectory simulate(const SimConfig& cfg, int frames, std::uint64_t seed);

// Supervision unit: graph at the input frame, positions delta_frames later.
struct NbodySample {
    std::vector<double> charges;
    Tensor x_in;   // N x 3
    Tensor v_in;   // N x 3
    Tensor x_tgt;  // N x 3
};

struct DatasetConfig {
    int n_train = 1000;
    int n_val = 200;
    int n_test = 200;
    int particles = 30;
    int t_input = 30;      // input frame index
    int delta_frames = 10; // prediction interval in frames
    SimConfig sim;
    std::uint64_t seed = 0;

    int frames_needed() const { return t_input + delta_frames + 1; }
};

struct Dataset {
    DatasetConfig config;
    std::vector<NbodySample> train;
    std::vector<NbodySample> val;
    std::vector<NbodySample> test;

    const std::vector<NbodySample>& split(const std::string& name) const;
};

// One sample per independent trajectory; the three splits draw from disjoint
// seed streams.
Dataset build_dataset(const DatasetConfig& cfg);

// Graph view of a sample: H is the one-hot charge sign (N x 2), edges are the
// fully connected digraph in ascending (i, j) order with e_ij = c_i * c_j.
// Sparsification by edge dropping is a runtime transform on top of this.
GeometricGraph sample_graph(const NbodySample& s);

// Feature convention shared with sample_graph, reused by rollout.
Tensor charge_features(const std::vector<double>& charges);
std::vector<Edge> complete_edges(int n);
Tensor charge_products(const std::vector<double>& charges, const std::vector<Edge>& edges);

// Magic "VEGN1", text manifest (counts, shapes, field names), then raw
// little-endian 64-bit arrays in manifest order. Round-trips bit-exactly.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace vegn
