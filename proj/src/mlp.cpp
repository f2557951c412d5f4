#include "vegn/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "vegn/common.hpp"

namespace vegn {

Mlp Mlp::create(ParamStore& store, const std::string& prefix, const std::vector<int>& widths,
                std::uint64_t seed) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output width");
    Mlp mlp;
    mlp.widths = widths;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        int fan_in = widths[l], fan_out = widths[l + 1];
        std::string wname = prefix + ".w" + std::to_string(l);
        std::string bname = prefix + ".b" + std::to_string(l);
        double a = std::sqrt(6.0 / (fan_in + fan_out));
        std::mt19937_64 rng(mix_seed(seed, fnv1a(wname)));
        std::uniform_real_distribution<double> dist(-a, a);
        std::vector<double> wdata(static_cast<std::size_t>(fan_in) * fan_out);
        for (auto& x : wdata) x = dist(rng);
        mlp.w.push_back(store.create(wname, fan_in, fan_out, std::move(wdata)));
        mlp.b.push_back(store.create(bname, 1, fan_out));
    }
    return mlp;
}

Mlp Mlp::attach(ParamStore& store, const std::string& prefix, const std::vector<int>& widths) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output width");
    Mlp mlp;
    mlp.widths = widths;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        mlp.w.push_back(store.get(prefix + ".w" + std::to_string(l)));
        mlp.b.push_back(store.get(prefix + ".b" + std::to_string(l)));
    }
    return mlp;
}

Tensor Mlp::apply(const Tensor& x) const {
    if (x.cols() != widths.front()) shape_error("mlp", x, w.front());
    Tensor h = x;
    for (std::size_t l = 0; l < w.size(); ++l) {
        h = add_rowvec(matmul(h, w[l]), b[l]);
        if (l + 1 < w.size()) h = silu(h);
    }
    return h;
}

}  // namespace vegn
