#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vegn {

class Tape;

namespace detail {

// Shared storage behind a Tensor. `g` is kept value-shaped whenever the
// tensor participates in differentiation (op results under an active tape,
// parameters, grad-check leaves); otherwise it stays empty and backward
// skips it.
struct Block {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;
    std::vector<double> g;
    bool track = false;
    const Tape* origin = nullptr;

    std::size_t size() const { return v.size(); }
    void ensure_grad() {
        if (!track) {
            g.assign(v.size(), 0.0);
            track = true;
        }
    }
};

}  // namespace detail

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, row vectors 1xk.
// Copies are shallow (shared storage); ops allocate fresh blocks.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols);
    static Tensor full(int rows, int cols, double value);
    static Tensor from_data(int rows, int cols, std::vector<double> data);
    static Tensor scalar(double value);
    static Tensor row(std::vector<double> data);
    // Leaf that accumulates gradients (parameters, grad-check inputs).
    static Tensor leaf(int rows, int cols);
    static Tensor leaf(int rows, int cols, std::vector<double> data);

    bool empty() const { return !blk_; }
    int rows() const { return blk_ ? blk_->rows : 0; }
    int cols() const { return blk_ ? blk_->cols : 0; }
    int size() const { return blk_ ? static_cast<int>(blk_->v.size()) : 0; }

    double operator()(int r, int c) const { return blk_->v[static_cast<std::size_t>(r) * blk_->cols + c]; }
    double value() const;  // 1x1 only

    std::vector<double>& data() { return blk_->v; }
    const std::vector<double>& data() const { return blk_->v; }
    bool tracked() const { return blk_ && blk_->track; }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;

    // Deep copy of values only (leaf, untracked).
    Tensor clone_values() const;

    std::shared_ptr<detail::Block> block() const { return blk_; }

  private:
    explicit Tensor(std::shared_ptr<detail::Block> b) : blk_(std::move(b)) {}
    std::shared_ptr<detail::Block> blk_;
    friend class Tape;
    friend Tensor make_op_result(int rows, int cols);
};

// Reverse-mode tape. Records one node per op in append order; backward
// replays in exact reverse order, and every node sums its contributions in
// ascending index order, so two runs on identical inputs produce identical
// bits. One tape per sample; consumed after backward.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Accumulates d(loss)/d(x) into every tracked block reachable from loss.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    void record(const char* op, std::function<void()> pull);

    static Tape* active();

  private:
    struct Node {
        const char* op;
        std::function<void()> pull;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
    friend class TapeScope;
};

// RAII activation of a tape on the current thread.
class TapeScope {
  public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* prev_;
};

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b);
[[noreturn]] void shape_error(const char* op, const Tensor& a);

// Fresh zeroed tensor that participates in the active tape (if any).
// Building block for ops defined outside this translation unit.
Tensor make_op_result(int rows, int cols);

// Op set. Every op computes its exact forward value and, when a tape is
// active, records a backward node.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& r);   // r is 1 x cols, broadcast over rows
Tensor sub_rowvec(const Tensor& a, const Tensor& r);
Tensor add_colvec(const Tensor& a, const Tensor& c);   // c is rows x 1, broadcast over cols
Tensor broadcast_row(const Tensor& r, int rows);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int c0, int c1);    // half-open [c0, c1)
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor row_sqnorm(const Tensor& a);                    // n x 1, squared L2 norm per row
Tensor row_scale(const Tensor& a, const Tensor& w);    // row i scaled by w(i,0); w differentiable
Tensor scale(const Tensor& a, double s);
Tensor scale_rows(const Tensor& a, const std::vector<double>& s);  // constant per-row factors
Tensor reduce_sum_rows(const Tensor& a);               // 1 x cols
Tensor reduce_mean_rows(const Tensor& a);
Tensor reduce_sum_all(const Tensor& a);                // 1 x 1
Tensor silu(const Tensor& a);
Tensor exp_elem(const Tensor& a);
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& idx, int out_rows);

// Throws std::runtime_error naming `context` if any entry is NaN/Inf.
void check_finite(const Tensor& a, const std::string& context);

bool all_finite(const Tensor& a);

}  // namespace vegn
