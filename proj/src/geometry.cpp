#include "vegn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include "vegn/common.hpp"

namespace vegn {

void GeometricGraph::validate() const {
    if (x.rows() != v.rows() || x.cols() != 3 || v.cols() != 3)
        throw std::invalid_argument("GeometricGraph: X and V must be N x 3");
    if (h.rows() != x.rows()) throw std::invalid_argument("GeometricGraph: H row count mismatch");
    if (!edge_attr.empty() && edge_attr.rows() != num_edges())
        throw std::invalid_argument("GeometricGraph: edge attribute row count mismatch");
    check_finite(x, "graph positions");
    check_finite(v, "graph velocities");
    const int n = num_nodes();
    for (const Edge& e : edges) {
        if (e.src == e.dst) throw std::invalid_argument("GeometricGraph: self-loop");
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
            throw std::invalid_argument("GeometricGraph: edge endpoint out of range");
    }
}

namespace {

constexpr double kOrthoTol = 1e-12;

void check_orthogonal(const std::array<double, 9>& o) {
    // max-norm of O^T O - I
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += o[k * 3 + i] * o[k * 3 + j];
            if (std::abs(s - (i == j ? 1.0 : 0.0)) > kOrthoTol)
                throw std::invalid_argument("E3Transform: matrix is not orthogonal");
        }
}

}  // namespace

E3Transform::E3Transform() : o{1, 0, 0, 0, 1, 0, 0, 0, 1}, t{0, 0, 0} {}

E3Transform::E3Transform(const std::array<double, 9>& o_, const std::array<double, 3>& t_)
    : o(o_), t(t_) {
    check_orthogonal(o);
}

double E3Transform::det() const {
    return o[0] * (o[4] * o[8] - o[5] * o[7]) - o[1] * (o[3] * o[8] - o[5] * o[6]) +
           o[2] * (o[3] * o[7] - o[4] * o[6]);
}

std::array<double, 3> E3Transform::apply_point(const std::array<double, 3>& p) const {
    std::array<double, 3> out{};
    for (int j = 0; j < 3; ++j) out[j] = p[0] * o[j] + p[1] * o[3 + j] + p[2] * o[6 + j] + t[j];
    return out;
}

std::array<double, 3> center_of_mass(const Tensor& x) {
    if (x.empty() || x.rows() < 1 || x.cols() != 3)
        throw std::invalid_argument("center_of_mass: need at least one 3D point");
    std::array<double, 3> c{0.0, 0.0, 0.0};
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < 3; ++j) c[j] += x(i, j);
    for (int j = 0; j < 3; ++j) c[j] /= x.rows();
    return c;
}

std::vector<Edge> radius_graph(const Tensor& x, double r) {
    if (x.cols() != 3) throw std::invalid_argument("radius_graph: positions must be N x 3");
    if (!(r > 0.0)) throw std::invalid_argument("radius_graph: cutoff must be positive");
    check_finite(x, "radius_graph positions");
    const int n = x.rows();
    std::vector<Edge> edges;
    if (n < 2) return edges;

    // Uniform grid with cell size r; candidates live in the 27 surrounding
    // cells. Degenerate spreads fall back to a single cell, which is just the
    // all-pairs scan.
    std::array<double, 3> lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
                             std::numeric_limits<double>::max()};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) lo[j] = std::min(lo[j], x(i, j));

    auto cell_of = [&](int i, int axis) {
        double d = (x(i, axis) - lo[axis]) / r;
        return static_cast<long long>(std::floor(d));
    };
    std::map<std::array<long long, 3>, std::vector<int>> grid;
    for (int i = 0; i < n; ++i)
        grid[{cell_of(i, 0), cell_of(i, 1), cell_of(i, 2)}].push_back(i);

    const double r2 = r * r;
    for (int i = 0; i < n; ++i) {
        std::array<long long, 3> c{cell_of(i, 0), cell_of(i, 1), cell_of(i, 2)};
        std::vector<int> cand;
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy)
                for (long long dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
                    if (it == grid.end()) continue;
                    cand.insert(cand.end(), it->second.begin(), it->second.end());
                }
        std::sort(cand.begin(), cand.end());
        for (int j : cand) {
            if (j == i) continue;
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) {
                double d = x(i, k) - x(j, k);
                d2 += d * d;
            }
            if (d2 > 0.0 && d2 <= r2) edges.push_back({i, j});
        }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

GeometricGraph drop_longest_edges(const GeometricGraph& g, double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("drop_longest_edges: rate must be in [0, 1]");
    GeometricGraph out = g;
    if (g.edges.empty() || p == 0.0) return out;

    // Group directed edges into undirected units keyed by the sorted pair, so
    // a connection is removed atomically in both directions.
    struct Unit {
        double len2;
        int a, b;                 // a < b
        std::vector<int> members; // indices into g.edges
    };
    std::map<std::pair<int, int>, Unit> units;
    for (int e = 0; e < g.num_edges(); ++e) {
        int a = std::min(g.edges[e].src, g.edges[e].dst);
        int b = std::max(g.edges[e].src, g.edges[e].dst);
        auto& u = units[{a, b}];
        if (u.members.empty()) {
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) {
                double d = g.x(a, k) - g.x(b, k);
                d2 += d * d;
            }
            u.len2 = d2;
            u.a = a;
            u.b = b;
        }
        u.members.push_back(e);
    }
    std::vector<const Unit*> order;
    order.reserve(units.size());
    for (const auto& [key, u] : units) order.push_back(&u);
    std::sort(order.begin(), order.end(), [](const Unit* l, const Unit* r) {
        if (l->len2 != r->len2) return l->len2 < r->len2;
        if (l->a != r->a) return l->a < r->a;
        return l->b < r->b;
    });

    const std::size_t total = order.size();
    const std::size_t n_drop = static_cast<std::size_t>(std::ceil(p * static_cast<double>(total)));
    const std::size_t n_keep = total - std::min(n_drop, total);

    std::vector<char> keep_edge(g.edges.size(), 0);
    for (std::size_t u = 0; u < n_keep; ++u)
        for (int e : order[u]->members) keep_edge[e] = 1;

    out.edges.clear();
    std::vector<double> attr;
    const int aw = g.edge_attr.empty() ? 0 : g.edge_attr.cols();
    for (int e = 0; e < g.num_edges(); ++e) {
        if (!keep_edge[e]) continue;
        out.edges.push_back(g.edges[e]);
        for (int k = 0; k < aw; ++k) attr.push_back(g.edge_attr(e, k));
    }
    if (!g.edge_attr.empty())
        out.edge_attr = Tensor::from_data(static_cast<int>(out.edges.size()), aw, std::move(attr));
    return out;
}

E3Transform random_rotation(std::uint64_t seed, const RotationOptions& opts) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double q0 = gauss(rng), q1 = gauss(rng), q2 = gauss(rng), q3 = gauss(rng);
    double norm = std::sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3);
    if (norm < 1e-12) {
        q0 = 1.0;
        norm = 1.0;
    }
    q0 /= norm;
    q1 /= norm;
    q2 /= norm;
    q3 /= norm;

    std::array<double, 9> o{
        1 - 2 * (q2 * q2 + q3 * q3), 2 * (q1 * q2 - q0 * q3),     2 * (q1 * q3 + q0 * q2),
        2 * (q1 * q2 + q0 * q3),     1 - 2 * (q1 * q1 + q3 * q3), 2 * (q2 * q3 - q0 * q1),
        2 * (q1 * q3 - q0 * q2),     2 * (q2 * q3 + q0 * q1),     1 - 2 * (q1 * q1 + q2 * q2)};

    if (opts.allow_reflection) {
        std::uniform_int_distribution<int> coin(0, 1);
        if (coin(rng) == 1)
            for (int r = 0; r < 3; ++r) o[r * 3] = -o[r * 3];  // negate first output axis
    }

    std::array<double, 3> t{0.0, 0.0, 0.0};
    if (opts.translation_max > 0.0) {
        std::uniform_real_distribution<double> shift(-opts.translation_max, opts.translation_max);
        for (int k = 0; k < 3; ++k) t[k] = shift(rng);
    }
    return E3Transform(o, t);
}

Tensor apply_to_points(const Tensor& x, const E3Transform& g3) {
    if (x.cols() != 3) throw std::invalid_argument("apply_to_points: need N x 3");
    Tensor out = Tensor::zeros(x.rows(), 3);
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < 3; ++j)
            out.data()[static_cast<std::size_t>(i) * 3 + j] =
                x(i, 0) * g3.o[j] + x(i, 1) * g3.o[3 + j] + x(i, 2) * g3.o[6 + j] + g3.t[j];
    return out;
}

Tensor apply_to_vectors(const Tensor& v, const E3Transform& g3) {
    if (v.cols() != 3) throw std::invalid_argument("apply_to_vectors: need N x 3");
    Tensor out = Tensor::zeros(v.rows(), 3);
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < 3; ++j)
            out.data()[static_cast<std::size_t>(i) * 3 + j] =
                v(i, 0) * g3.o[j] + v(i, 1) * g3.o[3 + j] + v(i, 2) * g3.o[6 + j];
    return out;
}

GeometricGraph apply_transform(const GeometricGraph& g, const E3Transform& g3) {
    GeometricGraph out = g;
    out.x = apply_to_points(g.x, g3);
    out.v = apply_to_vectors(g.v, g3);
    return out;
}

}  // namespace vegn
