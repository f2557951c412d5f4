#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vegn/tensor.hpp"

namespace vegn {

struct LossConfig {
    double mmd_lambda = 0.03;
    double mmd_sigma = 1.5;
    int mmd_samples = 3;  // real nodes sampled for the MMD term

    void validate() const;
};

// k(x, y) = exp(-|x - y|^2 / (2 sigma^2)) on two 3-vectors.
double rbf_kernel(const std::array<double, 3>& x, const std::array<double, 3>& y, double sigma);

// Kernel matrix between row sets: out(i, j) = k(a_i, b_j). Differentiable.
Tensor rbf_kernel_matrix(const Tensor& a, const Tensor& b, double sigma);

// Truncated two-sample statistic between virtual coordinates (rows of
// z_rows, C x 3) and sampled real coordinates (rows of x_ref, Ns x 3):
//   (1/C^2) sum_ij k(z_i, z_j) - (1/(Ns C)) sum_ij k(x_i, z_j).
// The constant real-real term is dropped, so values may be negative.
Tensor mmd_loss(const Tensor& z_rows, const Tensor& x_ref, double sigma);

// Mean over all entries of the squared error.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// k distinct indices drawn uniformly from [0, n).
std::vector<int> sample_rows(int n, int k, std::uint64_t seed);

// MSE + lambda * MMD, with the MMD real side drawn from the ground truth.
// lambda == 0 skips the MMD term entirely.
Tensor total_loss(const Tensor& x_pred, const Tensor& x_gt, const Tensor& z_rows,
                  const LossConfig& cfg, std::uint64_t sampler_seed);

}  // namespace vegn
