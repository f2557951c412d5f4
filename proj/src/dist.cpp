#include "vegn/dist.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "vegn/common.hpp"
#include "vegn/losses.hpp"

namespace vegn {

void Partition::validate(int n) const {
    if (devices < 1) throw std::invalid_argument("Partition: device count must be >= 1");
    if (assign.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("Partition: assignment size mismatch");
    std::vector<int> counts(devices, 0);
    for (int d : assign) {
        if (d < 0 || d >= devices) throw std::invalid_argument("Partition: device id out of range");
        ++counts[d];
    }
    for (int c : counts)
        if (c == 0) throw std::invalid_argument("Partition: empty device");
}

Partition Partition::random(int n, int devices, std::uint64_t seed) {
    if (devices < 1) throw std::invalid_argument("partition_random: need at least one device");
    if (n < devices) throw std::invalid_argument("partition_random: fewer nodes than devices");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    Partition p;
    p.devices = devices;
    p.assign.resize(n);
    for (int k = 0; k < n; ++k) p.assign[perm[k]] = k % devices;
    return p;
}

namespace {

// Near-cubic factorization: D = fx * fy * fz with factors as balanced as the
// integer divisors allow.
std::array<int, 3> axis_factors(int devices) {
    std::array<int, 3> best{devices, 1, 1};
    int best_spread = devices;
    for (int a = 1; a * a * a <= devices; ++a) {
        if (devices % a) continue;
        int rest = devices / a;
        for (int b = a; b * b <= rest; ++b) {
            if (rest % b) continue;
            int c = rest / b;
            int spread = c - a;
            if (spread < best_spread) {
                best_spread = spread;
                best = {c, b, a};
            }
        }
    }
    return best;
}

void grid_split(const Tensor& x, std::vector<int>& nodes, int axis,
                const std::array<int, 3>& factors, int base, int stride, Partition& out) {
    int parts = factors[axis];
    if (parts == 1 || nodes.empty()) {
        if (axis == 2) {
            for (int id : nodes) out.assign[id] = base;
            return;
        }
        grid_split(x, nodes, axis + 1, factors, base, stride, out);
        return;
    }
    double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
    for (int id : nodes) {
        lo = std::min(lo, x(id, axis));
        hi = std::max(hi, x(id, axis));
    }
    std::vector<int> sorted = nodes;
    if (hi > lo) {
        std::stable_sort(sorted.begin(), sorted.end(), [&](int a, int b) {
            if (x(a, axis) != x(b, axis)) return x(a, axis) < x(b, axis);
            return a < b;
        });
    } else {
        // Degenerate coordinates on this axis: spread the slab evenly with a
        // seeded shuffle instead of a spatial cut.
        std::mt19937_64 rng(mix_seed(0xC0DEDBADULL, static_cast<std::uint64_t>(base * 3 + axis)));
        std::shuffle(sorted.begin(), sorted.end(), rng);
    }
    const std::size_t n = sorted.size();
    for (int p = 0; p < parts; ++p) {
        std::size_t b = n * p / parts, e = n * (p + 1) / parts;
        std::vector<int> chunk(sorted.begin() + b, sorted.begin() + e);
        int sub_stride = stride / parts;
        if (axis == 2) {
            for (int id : chunk) out.assign[id] = base + p;
        } else {
            grid_split(x, chunk, axis + 1, factors, base + p * sub_stride, sub_stride, out);
        }
    }
}

}  // namespace

Partition Partition::grid(const Tensor& x, int devices) {
    if (devices < 1) throw std::invalid_argument("partition_grid: need at least one device");
    const int n = x.rows();
    if (n < devices) throw std::invalid_argument("partition_grid: fewer nodes than devices");
    Partition p;
    p.devices = devices;
    p.assign.assign(n, 0);
    std::array<int, 3> factors = axis_factors(devices);
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    grid_split(x, all, 0, factors, 0, devices, p);
    p.validate(n);
    return p;
}

std::vector<std::vector<int>> Partition::device_nodes() const {
    std::vector<std::vector<int>> out(devices);
    for (int id = 0; id < static_cast<int>(assign.size()); ++id) out[assign[id]].push_back(id);
    return out;
}

DistSample dist_sample_from_nbody(const NbodySample& s) {
    DistSample d;
    d.x = s.x_in.clone_values();
    d.v = s.v_in.clone_values();
    d.h = charge_features(s.charges);
    d.x_tgt = s.x_tgt.clone_values();
    d.charges = s.charges;
    return d;
}

namespace {

Tensor gather_plain(const Tensor& src, const std::vector<int>& ids) {
    const int m = src.cols();
    std::vector<double> out;
    out.reserve(ids.size() * m);
    for (int id : ids)
        for (int j = 0; j < m; ++j) out.push_back(src(id, j));
    return Tensor::from_data(static_cast<int>(ids.size()), m, std::move(out));
}

}  // namespace

WorkerView build_worker_view(const DistSample& sample, const Partition& part, int device,
                             double radius, double drop_rate) {
    part.validate(sample.num_nodes());
    if (device < 0 || device >= part.devices)
        throw std::invalid_argument("build_worker_view: device out of range");
    WorkerView view;
    view.device = device;
    view.global_n = sample.num_nodes();
    for (int id = 0; id < sample.num_nodes(); ++id)
        if (part.assign[id] == device) view.global_ids.push_back(id);

    view.local.x = gather_plain(sample.x, view.global_ids);
    view.local.v = gather_plain(sample.v, view.global_ids);
    view.local.h = sample.h.empty() ? Tensor::zeros(static_cast<int>(view.global_ids.size()), 0)
                                    : gather_plain(sample.h, view.global_ids);
    view.target_local = gather_plain(sample.x_tgt, view.global_ids);

    if (std::isfinite(radius)) {
        view.local.edges = radius_graph(view.local.x, radius);
    } else {
        view.local.edges = complete_edges(static_cast<int>(view.global_ids.size()));
    }
    if (!sample.charges.empty()) {
        std::vector<double> local_charges;
        local_charges.reserve(view.global_ids.size());
        for (int id : view.global_ids) local_charges.push_back(sample.charges[id]);
        view.local.edge_attr = charge_products(local_charges, view.local.edges);
    } else {
        view.local.edge_attr = Tensor::zeros(static_cast<int>(view.local.edges.size()), 0);
    }
    if (drop_rate > 0.0) view.local = drop_longest_edges(view.local, drop_rate);
    return view;
}

CutoffResult adjust_cutoff(const DistSample& sample, const Partition& part, double r0,
                           long long target_edges, int max_steps) {
    if (!(r0 > 0.0)) throw std::invalid_argument("adjust_cutoff: base radius must be positive");
    auto nodes = part.device_nodes();
    std::vector<Tensor> local_x;
    local_x.reserve(nodes.size());
    for (const auto& ids : nodes) local_x.push_back(gather_plain(sample.x, ids));

    CutoffResult res;
    for (int step = 0; step <= max_steps; ++step) {
        res.radius = r0 + 0.001 * step;
        res.edges = 0;
        for (const Tensor& x : local_x)
            res.edges += static_cast<long long>(radius_graph(x, res.radius).size());
        if (res.edges >= target_edges) return res;
    }
    res.capped = true;
    return res;
}

void CollectiveReducer::replicas_checkpoint(const Tensor& z, const Tensor& s) {
    std::uint64_t h = fnv1a(z.data().data(), z.data().size() * sizeof(double));
    h = fnv1a(s.data().data(), s.data().size() * sizeof(double), h);
    coll_.verify_same(rank_, h);
}

DeviceOutputs dist_forward_device(const WorkerView& view, const ModelConfig& cfg,
                                  const ModelParams& params, Collective& coll, int rank) {
    CollectiveReducer reducer(coll, rank, view.global_n);
    LayerState st = init_state(view.local, cfg, params, &reducer);
    for (int l = 0; l < cfg.layers; ++l)
        st = apply_layer(st, view.local, cfg, params.layers[l], l, &reducer);
    DeviceOutputs out;
    out.x = st.x;
    out.h = st.h;
    if (cfg.has_virtual()) {
        out.z = st.vs.z;
        out.s = st.vs.s;
    }
    return out;
}

Tensor dist_loss_device(const DeviceOutputs& out, const WorkerView& view, const LossConfig& loss,
                        int devices, std::uint64_t step_seed) {
    loss.validate();
    Tensor diff = sub(out.x, view.target_local);
    Tensor l = scale(reduce_sum_all(mul(diff, diff)), 1.0 / (3.0 * view.global_n));
    if (loss.mmd_lambda == 0.0 || out.z.empty()) return l;
    const int local_n = view.target_local.rows();
    const int ns = std::min(loss.mmd_samples, local_n);
    Tensor ref = gather_rows(view.target_local,
                             sample_rows(local_n, ns, mix_seed(step_seed, view.device)));
    return add(l, scale(mmd_loss(out.z, ref, loss.mmd_sigma), loss.mmd_lambda / devices));
}

void sync_param_grads(ParamStore& store, Collective& coll, int rank) {
    store.unpack_grads(coll.reduce_sum(rank, store.pack_grads()));
}

void run_parallel(int world, const std::function<void(int)>& fn) {
    if (world == 1) {
        fn(0);
        return;
    }
    std::vector<std::thread> threads;
    std::exception_ptr first_error;
    std::mutex mu;
    threads.reserve(world);
    for (int rank = 0; rank < world; ++rank) {
        threads.emplace_back([&, rank] {
            try {
                fn(rank);
            } catch (...) {
                std::lock_guard<std::mutex> lk(mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

DistForwardResult dist_forward_all(const DistSample& sample, const Partition& part,
                                   const ModelConfig& cfg,
                                   const std::vector<ModelParams>& replicas, Collective& coll,
                                   double radius) {
    const int world = part.devices;
    if (static_cast<int>(replicas.size()) != world)
        throw std::invalid_argument("dist_forward_all: replica count mismatch");
    DistForwardResult res;
    res.views.resize(world);
    res.outputs.resize(world);
    run_parallel(world, [&](int rank) {
        res.views[rank] = build_worker_view(sample, part, rank, radius, cfg.drop_rate);
        res.outputs[rank] = dist_forward_device(res.views[rank], cfg, replicas[rank], coll, rank);
    });
    return res;
}

Tensor assemble_global_rows(const std::vector<WorkerView>& views,
                            const std::vector<DeviceOutputs>& outputs, int global_n) {
    Tensor out = Tensor::zeros(global_n, 3);
    for (std::size_t d = 0; d < views.size(); ++d) {
        const auto& ids = views[d].global_ids;
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (int j = 0; j < 3; ++j)
                out.data()[static_cast<std::size_t>(ids[r]) * 3 + j] = outputs[d].x(static_cast<int>(r), j);
    }
    return out;
}

}  // namespace vegn
