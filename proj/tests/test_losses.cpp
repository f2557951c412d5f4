#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "vegn/common.hpp"
#include "vegn/geometry.hpp"
#include "vegn/losses.hpp"

using namespace vegn;

namespace {

Tensor random_rows(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> d(static_cast<std::size_t>(n) * 3);
    for (auto& x : d) x = g(rng);
    return Tensor::from_data(n, 3, std::move(d));
}

// Direct double-loop evaluation of the truncated statistic.
double mmd_oracle(const Tensor& z, const Tensor& x, double sigma) {
    const int c = z.rows(), ns = x.rows();
    auto k = [&](const Tensor& a, int i, const Tensor& b, int j) {
        double d2 = 0;
        for (int t = 0; t < 3; ++t) {
            double d = a(i, t) - b(j, t);
            d2 += d * d;
        }
        return std::exp(-d2 / (2 * sigma * sigma));
    };
    double t1 = 0, t2 = 0;
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) t1 += k(z, i, z, j);
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < c; ++j) t2 += k(x, i, z, j);
    return t1 / (c * c) - t2 / (double(ns) * c);
}

}  // namespace

TEST_CASE("rbf kernel basics") {
    std::array<double, 3> x{0.5, -1.0, 2.0};
    CHECK(rbf_kernel(x, x, 1.5) == 1.0);

    // |x - y|^2 = 2 sigma^2  ->  exp(-1)
    double sigma = 1.5;
    std::array<double, 3> y{x[0] + sigma * std::sqrt(2.0), x[1], x[2]};
    CHECK(rbf_kernel(x, y, sigma) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(rbf_kernel(x, y, sigma) == doctest::Approx(0.367879).epsilon(1e-5));
    CHECK(rbf_kernel(x, y, sigma) == rbf_kernel(y, x, sigma));
    CHECK_THROWS(rbf_kernel(x, y, 0.0));
}

TEST_CASE("mmd analytic zero cases hold exactly") {
    Tensor z1 = Tensor::from_data(1, 3, {0.4, 1.2, -0.7});
    CHECK(mmd_loss(z1, z1.clone_values(), 1.5).value() == 0.0);

    Tensor z2 = Tensor::from_data(2, 3, {0.4, 1.2, -0.7, 0.4, 1.2, -0.7});
    Tensor x1 = Tensor::from_data(1, 3, {0.4, 1.2, -0.7});
    CHECK(mmd_loss(z2, x1, 1.5).value() == 0.0);
}

TEST_CASE("mmd matches the double-loop oracle") {
    for (int trial = 0; trial < 10; ++trial) {
        Tensor z = random_rows(3, mix_seed(1, trial));
        Tensor x = random_rows(3, mix_seed(2, trial));
        CHECK(mmd_loss(z, x, 1.5).value() ==
              doctest::Approx(mmd_oracle(z, x, 1.5)).epsilon(1e-12));
    }
}

TEST_CASE("mmd is invariant under joint rigid transforms") {
    RotationOptions ro;
    ro.allow_reflection = true;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor z = random_rows(4, mix_seed(3, trial));
        Tensor x = random_rows(5, mix_seed(4, trial));
        double base = mmd_loss(z, x, 1.5).value();
        E3Transform g = random_rotation(mix_seed(5, trial), ro);
        double moved = mmd_loss(apply_to_points(z, g), apply_to_points(x, g), 1.5).value();
        CHECK(std::abs(moved - base) < 1e-12);
    }
}

TEST_CASE("mmd gradient separates coincident virtual nodes") {
    Tensor z = Tensor::leaf(3, 3, std::vector<double>(9, 0.25));
    Tensor x = random_rows(3, 99);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(mmd_loss(z, x, 1.5));
    double l1 = 0;
    for (double g : z.grad()) l1 += std::abs(g);
    CHECK(l1 > 1e-8);
}

TEST_CASE("mse basics") {
    Tensor a = random_rows(6, 11);
    CHECK(mse_loss(a, a.clone_values()).value() == 0.0);

    Tensor ones = Tensor::full(6, 3, 1.0);
    Tensor zeros = Tensor::zeros(6, 3);
    CHECK(mse_loss(ones, zeros).value() == 1.0);

    CHECK_THROWS(mse_loss(a, Tensor::zeros(5, 3)));

    RotationOptions ro;
    ro.allow_reflection = true;
    Tensor b = random_rows(6, 12);
    double base = mse_loss(a, b).value();
    for (int trial = 0; trial < 5; ++trial) {
        E3Transform g = random_rotation(mix_seed(7, trial), ro);
        double moved = mse_loss(apply_to_points(a, g), apply_to_points(b, g)).value();
        CHECK(std::abs(moved - base) < 1e-12);
    }
}

TEST_CASE("row sampler draws distinct rows uniformly") {
    auto idx = sample_rows(10, 3, 5);
    CHECK(idx.size() == 3);
    CHECK(std::set<int>(idx.begin(), idx.end()).size() == 3);
    CHECK(sample_rows(10, 3, 5) == idx);  // deterministic
    CHECK_THROWS(sample_rows(3, 4, 5));

    // marginal inclusion frequency of row 0 is 3/10
    int hits = 0;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        auto s = sample_rows(10, 3, mix_seed(1000, t));
        for (int i : s)
            if (i == 0) ++hits;
    }
    double freq = static_cast<double>(hits) / trials;
    CHECK(freq > 0.27);
    CHECK(freq < 0.33);
}

TEST_CASE("total loss with zero weight is exactly the mse") {
    Tensor pred = random_rows(8, 21);
    Tensor gt = random_rows(8, 22);
    Tensor z = random_rows(2, 23);
    LossConfig cfg;
    cfg.mmd_lambda = 0.0;
    CHECK(total_loss(pred, gt, z, cfg, 7).value() == mse_loss(pred, gt).value());

    cfg.mmd_lambda = 0.03;
    double with_mmd = total_loss(pred, gt, z, cfg, 7).value();
    CHECK(with_mmd != mse_loss(pred, gt).value());
    // sampling only affects the mmd term through the seed
    CHECK(total_loss(pred, gt, z, cfg, 7).value() == with_mmd);
}

TEST_CASE("loss config validation") {
    LossConfig bad;
    bad.mmd_sigma = -1.0;
    CHECK_THROWS(bad.validate());
    bad = LossConfig{};
    bad.mmd_samples = 0;
    CHECK_THROWS(bad.validate());
    bad = LossConfig{};
    bad.mmd_lambda = -0.1;
    CHECK_THROWS(bad.validate());
}
