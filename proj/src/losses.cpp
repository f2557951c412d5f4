#include "vegn/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "vegn/common.hpp"

namespace vegn {

void LossConfig::validate() const {
    if (mmd_lambda < 0.0) throw std::invalid_argument("LossConfig: lambda must be >= 0");
    if (!(mmd_sigma > 0.0)) throw std::invalid_argument("LossConfig: sigma must be > 0");
    if (mmd_samples < 1) throw std::invalid_argument("LossConfig: sample count must be >= 1");
}

double rbf_kernel(const std::array<double, 3>& x, const std::array<double, 3>& y, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("rbf_kernel: sigma must be > 0");
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
        double d = x[k] - y[k];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

Tensor rbf_kernel_matrix(const Tensor& a, const Tensor& b, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("rbf_kernel_matrix: sigma must be > 0");
    if (a.cols() != b.cols()) shape_error("rbf_kernel_matrix", a, b);
    // |a_i - b_j|^2 = |a_i|^2 + |b_j|^2 - 2 a_i . b_j
    Tensor cross = scale(matmul(a, transpose(b)), -2.0);
    Tensor d2 = add_rowvec(add_colvec(cross, row_sqnorm(a)), transpose(row_sqnorm(b)));
    return exp_elem(scale(d2, -1.0 / (2.0 * sigma * sigma)));
}

Tensor mmd_loss(const Tensor& z_rows, const Tensor& x_ref, double sigma) {
    if (z_rows.rows() < 1) throw std::invalid_argument("mmd_loss: need at least one virtual node");
    if (x_ref.rows() < 1) throw std::invalid_argument("mmd_loss: need at least one real sample");
    const int c = z_rows.rows();
    const int ns = x_ref.rows();
    Tensor kzz = rbf_kernel_matrix(z_rows, z_rows, sigma);
    Tensor kxz = rbf_kernel_matrix(x_ref, z_rows, sigma);
    return sub(scale(reduce_sum_all(kzz), 1.0 / (static_cast<double>(c) * c)),
               scale(reduce_sum_all(kxz), 1.0 / (static_cast<double>(ns) * c)));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        shape_error("mse_loss", pred, target);
    Tensor d = sub(pred, target);
    return scale(reduce_sum_all(mul(d, d)), 1.0 / pred.size());
}

std::vector<int> sample_rows(int n, int k, std::uint64_t seed) {
    if (k < 1 || k > n) throw std::invalid_argument("sample_rows: need 1 <= k <= n");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: first k entries are a uniform sample without
    // replacement.
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    return idx;
}

Tensor total_loss(const Tensor& x_pred, const Tensor& x_gt, const Tensor& z_rows,
                  const LossConfig& cfg, std::uint64_t sampler_seed) {
    cfg.validate();
    Tensor loss = mse_loss(x_pred, x_gt);
    if (cfg.mmd_lambda == 0.0 || z_rows.empty()) return loss;
    int ns = std::min(cfg.mmd_samples, x_gt.rows());
    Tensor ref = gather_rows(x_gt, sample_rows(x_gt.rows(), ns, sampler_seed));
    return add(loss, scale(mmd_loss(z_rows, ref, cfg.mmd_sigma), cfg.mmd_lambda));
}

}  // namespace vegn
