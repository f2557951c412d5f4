#include "vegn/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

extern "C" void openblas_set_num_threads(int);

namespace vegn {

namespace {

// Worker threads each run their own tape; BLAS must not add hidden
// parallelism or reduction-order nondeterminism on top.
struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init_once;

thread_local Tape* g_active_tape = nullptr;

std::shared_ptr<detail::Block> make_block(int rows, int cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("tensor: negative dimension");
    auto b = std::make_shared<detail::Block>();
    b->rows = rows;
    b->cols = cols;
    b->v.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    return b;
}

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << t.rows() << "x" << t.cols();
    return os.str();
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    if (m == 0 || n == 0) return;
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
                k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace

Tensor make_op_result(int rows, int cols) {
    auto b = make_block(rows, cols);
    if (Tape* t = Tape::active()) {
        b->track = true;
        b->g.assign(b->v.size(), 0.0);
        b->origin = t;
    }
    return Tensor(std::move(b));
}

Tensor Tensor::zeros(int rows, int cols) { return Tensor(make_block(rows, cols)); }

Tensor Tensor::full(int rows, int cols, double value) {
    auto b = make_block(rows, cols);
    for (auto& x : b->v) x = value;
    return Tensor(std::move(b));
}

Tensor Tensor::from_data(int rows, int cols, std::vector<double> data) {
    if (data.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("tensor: data length does not match shape");
    auto b = make_block(rows, cols);
    b->v = std::move(data);
    return Tensor(std::move(b));
}

Tensor Tensor::scalar(double value) { return from_data(1, 1, {value}); }

Tensor Tensor::row(std::vector<double> data) {
    int n = static_cast<int>(data.size());
    return from_data(1, n, std::move(data));
}

Tensor Tensor::leaf(int rows, int cols) {
    auto b = make_block(rows, cols);
    b->ensure_grad();
    return Tensor(std::move(b));
}

Tensor Tensor::leaf(int rows, int cols, std::vector<double> data) {
    Tensor t = from_data(rows, cols, std::move(data));
    t.blk_->ensure_grad();
    return t;
}

double Tensor::value() const {
    if (!blk_ || blk_->v.size() != 1) throw std::logic_error("Tensor::value: not a 1x1 tensor");
    return blk_->v[0];
}

std::vector<double>& Tensor::grad() {
    if (!tracked()) throw std::logic_error("Tensor::grad: tensor has no gradient buffer");
    return blk_->g;
}

const std::vector<double>& Tensor::grad() const {
    if (!tracked()) throw std::logic_error("Tensor::grad: tensor has no gradient buffer");
    return blk_->g;
}

Tensor Tensor::clone_values() const {
    if (!blk_) return Tensor();
    return from_data(rows(), cols(), blk_->v);
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const char* op, std::function<void()> pull) {
    nodes_.push_back(Node{op, std::move(pull)});
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw std::runtime_error("Tape::backward: tape already consumed");
    if (loss.empty() || loss.size() != 1)
        throw std::invalid_argument("Tape::backward: loss must be a 1-element tensor");
    if (!loss.tracked() || loss.block()->origin != this)
        throw std::invalid_argument("Tape::backward: loss was not recorded on this tape");
    consumed_ = true;
    loss.block()->g[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->pull();
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
    if (tape.consumed()) throw std::logic_error("TapeScope: tape already consumed");
    g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes (" + shape_str(a) +
                                " vs " + shape_str(b) + ")");
}

void shape_error(const char* op, const Tensor& a) {
    throw std::invalid_argument(std::string(op) + ": bad shape (" + shape_str(a) + ")");
}

namespace {

void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
    if (!ok) shape_error(op, a, b);
}

void require(bool ok, const char* op, const Tensor& a) {
    if (!ok) shape_error(op, a);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(!a.empty() && !b.empty() && a.cols() == b.rows(), "matmul", a, b);
    Tensor out = make_op_result(a.rows(), b.cols());
    gemm(false, false, a.rows(), b.cols(), a.cols(), 1.0, a.data().data(), a.cols(),
         b.data().data(), b.cols(), 0.0, out.data().data(), out.cols());
    if (Tape* t = Tape::active()) {
        auto ab = a.block(), bb = b.block(), ob = out.block();
        t->record("matmul", [ab, bb, ob] {
            int m = ab->rows, k = ab->cols, n = bb->cols;
            if (ab->track)
                gemm(false, true, m, k, n, 1.0, ob->g.data(), n, bb->v.data(), n, 1.0,
                     ab->g.data(), k);
            if (bb->track)
                gemm(true, false, k, n, m, 1.0, ab->v.data(), k, ob->g.data(), n, 1.0,
                     bb->g.data(), n);
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require(!a.empty(), "transpose", a);
    int n = a.rows(), m = a.cols();
    Tensor out = make_op_result(m, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) out.data()[static_cast<std::size_t>(c) * n + r] = a(r, c);
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("transpose", [ab, ob, n, m] {
            if (!ab->track) return;
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < m; ++c)
                    ab->g[static_cast<std::size_t>(r) * m + c] +=
                        ob->g[static_cast<std::size_t>(c) * n + r];
        });
    }
    return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise_binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    require(!a.empty() && !b.empty() && a.rows() == b.rows() && a.cols() == b.cols(), name, a, b);
    Tensor out = make_op_result(a.rows(), a.cols());
    const std::size_t n = a.data().size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = fwd(a.data()[i], b.data()[i]);
    if (Tape* t = Tape::active()) {
        auto ab = a.block(), bb = b.block(), ob = out.block();
        t->record(name, [ab, bb, ob, bwd, n] {
            for (std::size_t i = 0; i < n; ++i) {
                double ga, gb;
                bwd(ab->v[i], bb->v[i], ob->g[i], ga, gb);
                if (ab->track) ab->g[i] += ga;
                if (bb->track) bb->g[i] += gb;
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double go, double& ga, double& gb) {
            ga = go;
            gb = go;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double go, double& ga, double& gb) {
            ga = go;
            gb = -go;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double go, double& ga, double& gb) {
            ga = go * y;
            gb = go * x;
        });
}

namespace {

Tensor rowvec_broadcast(const char* name, const Tensor& a, const Tensor& r, double sign) {
    require(!a.empty() && !r.empty() && r.rows() == 1 && r.cols() == a.cols(), name, a, r);
    Tensor out = make_op_result(a.rows(), a.cols());
    int n = a.rows(), m = a.cols();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(i) * m + j] = a(i, j) + sign * r(0, j);
    if (Tape* t = Tape::active()) {
        auto ab = a.block(), rb = r.block(), ob = out.block();
        t->record(name, [ab, rb, ob, n, m, sign] {
            if (ab->track)
                for (std::size_t i = 0; i < ab->g.size(); ++i) ab->g[i] += ob->g[i];
            if (rb->track)
                for (int j = 0; j < m; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < n; ++i) s += ob->g[static_cast<std::size_t>(i) * m + j];
                    rb->g[j] += sign * s;
                }
        });
    }
    return out;
}

}  // namespace

Tensor add_rowvec(const Tensor& a, const Tensor& r) { return rowvec_broadcast("add_rowvec", a, r, 1.0); }

Tensor sub_rowvec(const Tensor& a, const Tensor& r) { return rowvec_broadcast("sub_rowvec", a, r, -1.0); }

Tensor add_colvec(const Tensor& a, const Tensor& c) {
    require(!a.empty() && !c.empty() && c.cols() == 1 && c.rows() == a.rows(), "add_colvec", a, c);
    Tensor out = make_op_result(a.rows(), a.cols());
    int n = a.rows(), m = a.cols();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(i) * m + j] = a(i, j) + c(i, 0);
    if (Tape* t = Tape::active()) {
        auto ab = a.block(), cb = c.block(), ob = out.block();
        t->record("add_colvec", [ab, cb, ob, n, m] {
            if (ab->track)
                for (std::size_t i = 0; i < ab->g.size(); ++i) ab->g[i] += ob->g[i];
            if (cb->track)
                for (int i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < m; ++j) s += ob->g[static_cast<std::size_t>(i) * m + j];
                    cb->g[i] += s;
                }
        });
    }
    return out;
}

Tensor broadcast_row(const Tensor& r, int rows) {
    require(!r.empty() && r.rows() == 1 && rows >= 0, "broadcast_row", r);
    int m = r.cols();
    Tensor out = make_op_result(rows, m);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < m; ++j) out.data()[static_cast<std::size_t>(i) * m + j] = r(0, j);
    if (Tape* t = Tape::active()) {
        auto rb = r.block();
        auto ob = out.block();
        t->record("broadcast_row", [rb, ob, rows, m] {
            if (!rb->track) return;
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int i = 0; i < rows; ++i) s += ob->g[static_cast<std::size_t>(i) * m + j];
                rb->g[j] += s;
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    int n = parts[0].rows();
    int total = 0;
    for (const auto& p : parts) {
        require(!p.empty() && p.rows() == n, "concat_cols", parts[0], p);
        total += p.cols();
    }
    Tensor out = make_op_result(n, total);
    int off = 0;
    for (const auto& p : parts) {
        int m = p.cols();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                out.data()[static_cast<std::size_t>(i) * total + off + j] = p(i, j);
        off += m;
    }
    if (Tape* t = Tape::active()) {
        std::vector<std::shared_ptr<detail::Block>> blocks;
        blocks.reserve(parts.size());
        for (const auto& p : parts) blocks.push_back(p.block());
        auto ob = out.block();
        t->record("concat_cols", [blocks, ob, n, total] {
            int off2 = 0;
            for (const auto& b : blocks) {
                int m = b->cols;
                if (b->track)
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < m; ++j)
                            b->g[static_cast<std::size_t>(i) * m + j] +=
                                ob->g[static_cast<std::size_t>(i) * total + off2 + j];
                off2 += m;
            }
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    int m = parts[0].cols();
    int total = 0;
    for (const auto& p : parts) {
        require(!p.empty() && p.cols() == m, "concat_rows", parts[0], p);
        total += p.rows();
    }
    Tensor out = make_op_result(total, m);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto& src = p.data();
        for (std::size_t i = 0; i < src.size(); ++i) out.data()[off + i] = src[i];
        off += src.size();
    }
    if (Tape* t = Tape::active()) {
        std::vector<std::shared_ptr<detail::Block>> blocks;
        blocks.reserve(parts.size());
        for (const auto& p : parts) blocks.push_back(p.block());
        auto ob = out.block();
        t->record("concat_rows", [blocks, ob] {
            std::size_t off2 = 0;
            for (const auto& b : blocks) {
                if (b->track)
                    for (std::size_t i = 0; i < b->g.size(); ++i) b->g[i] += ob->g[off2 + i];
                off2 += b->v.size();
            }
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    require(!a.empty() && c0 >= 0 && c0 <= c1 && c1 <= a.cols(), "slice_cols", a);
    int n = a.rows(), m = c1 - c0, w = a.cols();
    Tensor out = make_op_result(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(i) * m + j] = a(i, c0 + j);
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("slice_cols", [ab, ob, n, m, w, c0] {
            if (!ab->track) return;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ab->g[static_cast<std::size_t>(i) * w + c0 + j] +=
                        ob->g[static_cast<std::size_t>(i) * m + j];
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    require(!a.empty() && r0 >= 0 && r0 <= r1 && r1 <= a.rows(), "slice_rows", a);
    int n = r1 - r0, m = a.cols();
    Tensor out = make_op_result(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(i) * m + j] = a(r0 + i, j);
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("slice_rows", [ab, ob, n, m, r0] {
            if (!ab->track) return;
            std::size_t base = static_cast<std::size_t>(r0) * m;
            for (std::size_t i = 0; i < ob->g.size(); ++i) ab->g[base + i] += ob->g[i];
        });
    }
    return out;
}

Tensor row_sqnorm(const Tensor& a) {
    require(!a.empty(), "row_sqnorm", a);
    int n = a.rows(), m = a.cols();
    Tensor out = make_op_result(n, 1);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
            double x = a(i, j);
            s += x * x;
        }
        out.data()[i] = s;
    }
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("row_sqnorm", [ab, ob, n, m] {
            if (!ab->track) return;
            for (int i = 0; i < n; ++i) {
                double go = ob->g[i];
                for (int j = 0; j < m; ++j)
                    ab->g[static_cast<std::size_t>(i) * m + j] +=
                        2.0 * ab->v[static_cast<std::size_t>(i) * m + j] * go;
            }
        });
    }
    return out;
}

Tensor row_scale(const Tensor& a, const Tensor& w) {
    require(!a.empty() && !w.empty() && w.cols() == 1 && w.rows() == a.rows(), "row_scale", a, w);
    int n = a.rows(), m = a.cols();
    Tensor out = make_op_result(n, m);
    for (int i = 0; i < n; ++i) {
        double f = w(i, 0);
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(i) * m + j] = a(i, j) * f;
    }
    if (Tape* t = Tape::active()) {
        auto ab = a.block(), wb = w.block(), ob = out.block();
        t->record("row_scale", [ab, wb, ob, n, m] {
            for (int i = 0; i < n; ++i) {
                double f = wb->v[i];
                double acc = 0.0;
                for (int j = 0; j < m; ++j) {
                    std::size_t k = static_cast<std::size_t>(i) * m + j;
                    if (ab->track) ab->g[k] += ob->g[k] * f;
                    acc += ob->g[k] * ab->v[k];
                }
                if (wb->track) wb->g[i] += acc;
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double s) {
    require(!a.empty(), "scale", a);
    Tensor out = make_op_result(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] * s;
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("scale", [ab, ob, s] {
            if (!ab->track) return;
            for (std::size_t i = 0; i < ab->g.size(); ++i) ab->g[i] += ob->g[i] * s;
        });
    }
    return out;
}

Tensor scale_rows(const Tensor& a, const std::vector<double>& s) {
    require(!a.empty() && s.size() == static_cast<std::size_t>(a.rows()), "scale_rows", a);
    int n = a.rows(), m = a.cols();
    Tensor out = make_op_result(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(i) * m + j] = a(i, j) * s[i];
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        auto factors = s;
        t->record("scale_rows", [ab, ob, factors, n, m] {
            if (!ab->track) return;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    std::size_t k = static_cast<std::size_t>(i) * m + j;
                    ab->g[k] += ob->g[k] * factors[i];
                }
        });
    }
    return out;
}

namespace {

Tensor reduce_rows_impl(const char* name, const Tensor& a, double factor) {
    require(!a.empty(), name, a);
    int n = a.rows(), m = a.cols();
    Tensor out = make_op_result(1, m);
    for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += a(i, j);
        out.data()[j] = s * factor;
    }
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record(name, [ab, ob, n, m, factor] {
            if (!ab->track) return;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ab->g[static_cast<std::size_t>(i) * m + j] += ob->g[j] * factor;
        });
    }
    return out;
}

}  // namespace

Tensor reduce_sum_rows(const Tensor& a) { return reduce_rows_impl("reduce_sum_rows", a, 1.0); }

Tensor reduce_mean_rows(const Tensor& a) {
    require(!a.empty() && a.rows() > 0, "reduce_mean_rows", a);
    return reduce_rows_impl("reduce_mean_rows", a, 1.0 / a.rows());
}

Tensor reduce_sum_all(const Tensor& a) {
    require(!a.empty(), "reduce_sum_all", a);
    Tensor out = make_op_result(1, 1);
    double s = 0.0;
    for (double x : a.data()) s += x;
    out.data()[0] = s;
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("reduce_sum_all", [ab, ob] {
            if (!ab->track) return;
            double go = ob->g[0];
            for (std::size_t i = 0; i < ab->g.size(); ++i) ab->g[i] += go;
        });
    }
    return out;
}

Tensor silu(const Tensor& a) {
    require(!a.empty(), "silu", a);
    Tensor out = make_op_result(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        double x = a.data()[i];
        out.data()[i] = x / (1.0 + std::exp(-x));
    }
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("silu", [ab, ob] {
            if (!ab->track) return;
            for (std::size_t i = 0; i < ab->g.size(); ++i) {
                double x = ab->v[i];
                double sig = 1.0 / (1.0 + std::exp(-x));
                ab->g[i] += ob->g[i] * sig * (1.0 + x * (1.0 - sig));
            }
        });
    }
    return out;
}

Tensor exp_elem(const Tensor& a) {
    require(!a.empty(), "exp", a);
    Tensor out = make_op_result(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = std::exp(a.data()[i]);
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        t->record("exp", [ab, ob] {
            if (!ab->track) return;
            for (std::size_t i = 0; i < ab->g.size(); ++i) ab->g[i] += ob->g[i] * ob->v[i];
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
    require(!a.empty(), "gather_rows", a);
    int n = static_cast<int>(idx.size()), m = a.cols();
    for (int i : idx)
        if (i < 0 || i >= a.rows()) throw std::out_of_range("gather_rows: index out of range");
    Tensor out = make_op_result(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(i) * m + j] = a(idx[i], j);
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        auto map = idx;
        t->record("gather_rows", [ab, ob, map, n, m] {
            if (!ab->track) return;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ab->g[static_cast<std::size_t>(map[i]) * m + j] +=
                        ob->g[static_cast<std::size_t>(i) * m + j];
        });
    }
    return out;
}

Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& idx, int out_rows) {
    require(!a.empty() && idx.size() == static_cast<std::size_t>(a.rows()), "scatter_add_rows", a);
    for (int i : idx)
        if (i < 0 || i >= out_rows) throw std::out_of_range("scatter_add_rows: index out of range");
    int n = a.rows(), m = a.cols();
    Tensor out = make_op_result(out_rows, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data()[static_cast<std::size_t>(idx[i]) * m + j] += a(i, j);
    if (Tape* t = Tape::active()) {
        auto ab = a.block();
        auto ob = out.block();
        auto map = idx;
        t->record("scatter_add_rows", [ab, ob, map, n, m] {
            if (!ab->track) return;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ab->g[static_cast<std::size_t>(i) * m + j] +=
                        ob->g[static_cast<std::size_t>(map[i]) * m + j];
        });
    }
    return out;
}

bool all_finite(const Tensor& a) {
    if (a.empty()) return true;
    for (double x : a.data())
        if (!std::isfinite(x)) return false;
    return true;
}

void check_finite(const Tensor& a, const std::string& context) {
    if (!all_finite(a)) throw std::runtime_error("non-finite values in " + context);
}

}  // namespace vegn
