#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vegn/model.hpp"
#include "vegn/nbody.hpp"

namespace vegn {

struct SuiteResult {
    std::string name;
    bool pass = false;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    std::vector<std::string> lines;  // per-case detail
};

// Proposition-style transform test: forward(gG) against g(forward(G)) over
// random E(3) transforms, plus virtual-coordinate invariance (and real-node
// equivariance) under node permutations. The negative control feeds the
// network unrotated velocities, which must break the bound.
SuiteResult run_equivariance_suite(const ModelConfig& cfg, std::uint64_t seed, int graphs,
                                   int transforms, int permutations, int nodes, double tolerance,
                                   bool negative_control = false);

// Full-objective gradient check (MSE + lambda MMD) against central finite
// differences. The negative control inserts an op whose backward rule is
// deliberately wrong.
SuiteResult run_gradcheck_suite(const ModelConfig& cfg, std::uint64_t seed, int nodes,
                                double tolerance, bool negative_control = false);

// Distributed oracle: summed per-device gradients against a single-process
// run over the union of the local graphs, and partition independence of the
// outputs when every real edge is dropped.
SuiteResult run_dist_oracle_suite(std::uint64_t seed, double grad_tolerance,
                                  double output_tolerance, bool negative_control = false);

// Kernel invariance under E(3) plus the analytic zero cases of the truncated
// statistic, and the separating-gradient property.
SuiteResult run_mmd_suite(std::uint64_t seed, double tolerance, bool negative_control = false);

// Random graph used across the suites: normal positions and velocities,
// +-1 charges (one-hot features, product edge attributes), complete digraph
// thinned by the config's drop rate.
NbodySample random_cloud(int nodes, std::uint64_t seed);

}  // namespace vegn
