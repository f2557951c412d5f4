#include <cmath>
#include <random>

#include "doctest.h"
#include "vegn/common.hpp"
#include "vegn/tensor.hpp"

using namespace vegn;

namespace {

Tensor random_leaf(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (auto& x : data) x = dist(rng);
    return Tensor::leaf(rows, cols, std::move(data));
}

// Central-difference check of a scalar-valued tensor expression against the
// tape gradient, sweeping every entry of every input.
void check_op_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& make_scalar,
                        std::vector<Tensor> inputs, double tol = 1e-6) {
    for (auto& in : inputs)
        std::fill(in.grad().begin(), in.grad().end(), 0.0);
    double base;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = make_scalar(inputs);
        REQUIRE(loss.size() == 1);
        base = loss.value();
        tape.backward(loss);
    }
    (void)base;
    const double h = 1e-5;
    for (auto& in : inputs) {
        for (std::size_t i = 0; i < in.data().size(); ++i) {
            double orig = in.data()[i];
            in.data()[i] = orig + h;
            double fp = make_scalar(inputs).value();
            in.data()[i] = orig - h;
            double fm = make_scalar(inputs).value();
            in.data()[i] = orig;
            double numeric = (fp - fm) / (2 * h);
            double analytic = in.grad()[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-7});
            CHECK(std::abs(numeric - analytic) / denom < tol);
        }
    }
}

Tensor sum_sq(const Tensor& t) { return reduce_sum_all(mul(t, t)); }

}  // namespace

TEST_CASE("matmul identity returns the operand") {
    Tensor eye = Tensor::from_data(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor a = Tensor::from_data(3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    Tensor out = matmul(eye, a);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) CHECK(out(i, j) == a(i, j));
}

TEST_CASE("row_sqnorm of a 3-4-5 row") {
    Tensor a = Tensor::from_data(1, 3, {3, 4, 0});
    CHECK(row_sqnorm(a)(0, 0) == 25.0);
}

TEST_CASE("reduce_mean_rows averages rows") {
    Tensor a = Tensor::from_data(2, 1, {1, 3});
    CHECK(reduce_mean_rows(a)(0, 0) == 2.0);
}

TEST_CASE("shape mismatch errors name the op and shapes") {
    Tensor a = Tensor::zeros(2, 3);
    Tensor b = Tensor::zeros(2, 3);
    try {
        matmul(a, b);
        FAIL("expected error");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("2x3") != std::string::npos);
    }
}

TEST_CASE("backward of linear function") {
    Tensor w = Tensor::leaf(1, 1, {5.0});
    Tensor x = Tensor::from_data(1, 1, {2.0});
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = mul(w, x);
    tape.backward(loss);
    CHECK(w.grad()[0] == 2.0);
}

TEST_CASE("backward of elementwise quadratic") {
    Tensor w = Tensor::leaf(1, 2, {1.0, -3.0});
    Tape tape;
    TapeScope scope(tape);
    tape.backward(reduce_sum_all(mul(w, w)));
    CHECK(w.grad()[0] == 2.0);
    CHECK(w.grad()[1] == -6.0);
}

TEST_CASE("backward twice on a consumed tape fails") {
    Tensor w = Tensor::leaf(1, 1, {1.0});
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = mul(w, w);
    }
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), std::runtime_error);
}

TEST_CASE("backward requires a scalar recorded on this tape") {
    Tensor w = Tensor::leaf(2, 2);
    Tape tape;
    TapeScope scope(tape);
    Tensor y = mul(w, w);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // not scalar
    Tape other;
    Tensor loss = reduce_sum_all(y);
    CHECK_THROWS_AS(other.backward(loss), std::invalid_argument);  // wrong tape
}

TEST_CASE("unreachable parameters keep zero gradients") {
    Tensor used = Tensor::leaf(1, 1, {2.0});
    Tensor unused = Tensor::leaf(1, 1, {3.0});
    Tape tape;
    TapeScope scope(tape);
    tape.backward(mul(used, used));
    CHECK(used.grad()[0] == 4.0);
    CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("gradient accumulation is linear over separate backwards") {
    Tensor w = random_leaf(2, 3, 99);
    auto loss1 = [&] { return reduce_sum_all(mul(w, w)); };
    auto loss2 = [&] { return reduce_sum_all(silu(w)); };

    std::fill(w.grad().begin(), w.grad().end(), 0.0);
    {
        Tape t1;
        TapeScope s1(t1);
        t1.backward(loss1());
    }
    {
        Tape t2;
        TapeScope s2(t2);
        t2.backward(loss2());
    }
    std::vector<double> separate = w.grad();

    std::fill(w.grad().begin(), w.grad().end(), 0.0);
    {
        Tape t3;
        TapeScope s3(t3);
        t3.backward(add(loss1(), loss2()));
    }
    for (std::size_t i = 0; i < separate.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(separate[i]).epsilon(1e-14));
}

TEST_CASE("every op matches central finite differences") {
    SUBCASE("matmul") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return sum_sq(matmul(in[0], in[1])); },
            {random_leaf(3, 4, 1), random_leaf(4, 2, 2)});
    }
    SUBCASE("transpose") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return sum_sq(transpose(in[0])); },
            {random_leaf(3, 4, 3)});
    }
    SUBCASE("add sub mul") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) {
                return sum_sq(mul(add(in[0], in[1]), sub(in[0], in[1])));
            },
            {random_leaf(3, 3, 4), random_leaf(3, 3, 5)});
    }
    SUBCASE("add_rowvec sub_rowvec") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) {
                return sum_sq(sub_rowvec(add_rowvec(in[0], in[1]), in[2]));
            },
            {random_leaf(4, 3, 6), random_leaf(1, 3, 7), random_leaf(1, 3, 8)});
    }
    SUBCASE("add_colvec") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return sum_sq(add_colvec(in[0], in[1])); },
            {random_leaf(4, 3, 9), random_leaf(4, 1, 10)});
    }
    SUBCASE("broadcast_row") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return sum_sq(broadcast_row(in[0], 5)); },
            {random_leaf(1, 4, 11)});
    }
    SUBCASE("concat and slice") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) {
                Tensor c = concat_cols({in[0], in[1]});
                Tensor r = concat_rows({c, c});
                return sum_sq(mul(slice_cols(r, 1, 4), slice_cols(r, 0, 3)));
            },
            {random_leaf(3, 2, 12), random_leaf(3, 3, 13)});
    }
    SUBCASE("slice_rows") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return sum_sq(slice_rows(in[0], 1, 3)); },
            {random_leaf(4, 2, 14)});
    }
    SUBCASE("row_sqnorm") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return sum_sq(row_sqnorm(in[0])); },
            {random_leaf(4, 3, 15)});
    }
    SUBCASE("row_scale") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return sum_sq(row_scale(in[0], in[1])); },
            {random_leaf(4, 3, 16), random_leaf(4, 1, 17)});
    }
    SUBCASE("scale and scale_rows") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) {
                return sum_sq(scale_rows(scale(in[0], 0.7), {0.5, -1.5, 2.0}));
            },
            {random_leaf(3, 3, 18)});
    }
    SUBCASE("reductions") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) {
                Tensor a = reduce_sum_rows(in[0]);
                Tensor b = reduce_mean_rows(in[0]);
                return reduce_sum_all(mul(a, b));
            },
            {random_leaf(4, 3, 19)});
    }
    SUBCASE("silu") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return reduce_sum_all(silu(in[0])); },
            {random_leaf(3, 4, 20)});
    }
    SUBCASE("exp") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) { return reduce_sum_all(exp_elem(in[0])); },
            {random_leaf(3, 4, 21)});
    }
    SUBCASE("gather scatter") {
        check_op_gradients(
            [](const std::vector<Tensor>& in) {
                Tensor g = gather_rows(in[0], {0, 2, 2, 1});
                return sum_sq(scatter_add_rows(g, {1, 0, 1, 2}, 3));
            },
            {random_leaf(3, 3, 22)});
    }
}

TEST_CASE("ops are bit-reproducible across runs") {
    auto run = [] {
        Tensor a = random_leaf(16, 8, 1234);
        Tensor b = random_leaf(8, 16, 4321);
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = reduce_sum_all(silu(matmul(a, b)));
        tape.backward(loss);
        std::vector<double> out = a.grad();
        out.push_back(loss.value());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("finite checks flag poisoned tensors") {
    Tensor bad = Tensor::from_data(1, 2, {1.0, std::nan("")});
    CHECK_THROWS_WITH_AS(check_finite(bad, "stage 3"),
                         doctest::Contains("stage 3"), std::runtime_error);
    CHECK(all_finite(Tensor::zeros(2, 2)));
}

TEST_CASE("zero-width tensors flow through the mlp path") {
    Tensor x = Tensor::zeros(4, 0);
    Tensor w = Tensor::leaf(0, 3);
    Tensor b = random_leaf(1, 3, 30);
    Tape tape;
    TapeScope scope(tape);
    Tensor out = add_rowvec(matmul(x, w), b);
    CHECK(out.rows() == 4);
    CHECK(out.cols() == 3);
    for (int j = 0; j < 3; ++j) CHECK(out(0, j) == b(0, j));
    tape.backward(reduce_sum_all(out));
    CHECK(b.grad()[0] == 4.0);
}
