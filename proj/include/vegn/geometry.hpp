#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vegn/tensor.hpp"

namespace vegn {

struct Edge {
    int src;
    int dst;
};

inline bool operator==(const Edge& a, const Edge& b) { return a.src == b.src && a.dst == b.dst; }
inline bool operator<(const Edge& a, const Edge& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
}

// One sample of a geometric graph: positions X (N x 3), velocities V (N x 3),
// node features H (N x F), and directed attributed edges. Both directions of
// a connected pair are stored; edge attributes are a matrix with one row per
// edge (zero columns when the dataset carries no attributes).
struct GeometricGraph {
    Tensor x;
    Tensor v;
    Tensor h;
    std::vector<Edge> edges;
    Tensor edge_attr;  // |E| x A, A >= 0

    int num_nodes() const { return x.rows(); }
    int num_edges() const { return static_cast<int>(edges.size()); }

    // No self-loops, endpoints in range, X and V finite.
    void validate() const;
};

// Rigid transform x -> xO + t on row-vector coordinates. O is stored
// row-major; the constructor rejects matrices that are not orthogonal to
// within 1e-12.
struct E3Transform {
    std::array<double, 9> o;
    std::array<double, 3> t;

    E3Transform();  // identity
    E3Transform(const std::array<double, 9>& o, const std::array<double, 3>& t);

    double det() const;
    std::array<double, 3> apply_point(const std::array<double, 3>& p) const;
};

std::array<double, 3> center_of_mass(const Tensor& x);  // error on zero rows

// Directed edges (i, j), i != j, with 0 < |x_i - x_j| <= r, both directions,
// in ascending (i, j) order. Uses a uniform-grid bucket search.
std::vector<Edge> radius_graph(const Tensor& x, double r);

// Sorts connectivity by (length, src, dst) and removes the ceil(p * count)
// longest entries. Edges that appear in both directions are treated as one
// undirected unit and dropped atomically, so `p` matches the fraction of
// graph connections removed regardless of the directed representation. The
// input graph is left untouched.
GeometricGraph drop_longest_edges(const GeometricGraph& g, double p);

struct RotationOptions {
    bool allow_reflection = false;
    double translation_max = 10.0;  // t sampled uniform in [-max, max]^3; 0 disables
};

// O uniform over SO(3) via a normalized random quaternion; with reflections
// enabled one axis is negated with probability 1/2 to cover O(3).
E3Transform random_rotation(std::uint64_t seed, const RotationOptions& opts = {});

// X -> XO + t, V -> VO; features and edges unchanged.
GeometricGraph apply_transform(const GeometricGraph& g, const E3Transform& g3);
Tensor apply_to_points(const Tensor& x, const E3Transform& g3);
Tensor apply_to_vectors(const Tensor& v, const E3Transform& g3);

}  // namespace vegn
