#include "vegn/nbody.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "vegn/common.hpp"

namespace vegn {

void SimConfig::validate() const {
    if (particles < 2) throw std::invalid_argument("SimConfig: need at least two particles");
    if (!(dt_sim > 0.0)) throw std::invalid_argument("SimConfig: dt must be positive");
    if (substeps < 1) throw std::invalid_argument("SimConfig: substeps must be >= 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("SimConfig: softening must be positive");
}

namespace {

// F_i = sum_j c_i c_j (x_i - x_j) / (|x_i - x_j|^2 + eps^2)^(3/2).
// Each pair is evaluated once and applied antisymmetrically, which keeps
// total momentum conserved up to rounding.
void accelerations(const std::vector<double>& x, const std::vector<double>& q, double eps2,
                   std::vector<double>& a) {
    const int n = static_cast<int>(q.size());
    std::fill(a.begin(), a.end(), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double dx = x[i * 3 + 0] - x[j * 3 + 0];
            double dy = x[i * 3 + 1] - x[j * 3 + 1];
            double dz = x[i * 3 + 2] - x[j * 3 + 2];
            double r2 = dx * dx + dy * dy + dz * dz + eps2;
            double inv = q[i] * q[j] / (r2 * std::sqrt(r2));
            double fx = dx * inv, fy = dy * inv, fz = dz * inv;
            a[i * 3 + 0] += fx;
            a[i * 3 + 1] += fy;
            a[i * 3 + 2] += fz;
            a[j * 3 + 0] -= fx;
            a[j * 3 + 1] -= fy;
            a[j * 3 + 2] -= fz;
        }
    }
}

}  // namespace

Trajectory simulate(const SimConfig& cfg, int frames, std::uint64_t seed) {
    cfg.validate();
    if (frames < 1) throw std::invalid_argument("simulate: need at least one frame");
    const int n = cfg.particles;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> pos_dist(0.0, 1.0);
    std::normal_distribution<double> vel_dist(0.0, 0.5);
    std::uniform_int_distribution<int> sign(0, 1);

    Trajectory tr;
    tr.charges.resize(n);
    std::vector<double> x(static_cast<std::size_t>(n) * 3), v(static_cast<std::size_t>(n) * 3);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) x[i * 3 + k] = pos_dist(rng);
        for (int k = 0; k < 3; ++k) v[i * 3 + k] = vel_dist(rng);
        tr.charges[i] = sign(rng) == 0 ? -1.0 : 1.0;
    }

    const double eps2 = cfg.epsilon * cfg.epsilon;
    const double half_dt = 0.5 * cfg.dt_sim;
    std::vector<double> a(static_cast<std::size_t>(n) * 3);
    accelerations(x, tr.charges, eps2, a);

    auto record = [&] {
        tr.positions.push_back(Tensor::from_data(n, 3, x));
        tr.velocities.push_back(Tensor::from_data(n, 3, v));
    };
    record();
    for (int f = 1; f < frames; ++f) {
        for (int s = 0; s < cfg.substeps; ++s) {
            for (std::size_t k = 0; k < v.size(); ++k) v[k] += a[k] * half_dt;
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += v[k] * cfg.dt_sim;
            accelerations(x, tr.charges, eps2, a);
            for (std::size_t k = 0; k < v.size(); ++k) v[k] += a[k] * half_dt;
        }
        record();
    }
    return tr;
}

namespace {

// Disjoint per-trajectory seed streams: split id 1/2/3 for train/val/test.
std::uint64_t trajectory_seed(std::uint64_t base, int split_id, int index) {
    return mix_seed(mix_seed(base, 0x5eedULL + split_id), static_cast<std::uint64_t>(index));
}

NbodySample make_sample(const DatasetConfig& cfg, int split_id, int index) {
    SimConfig sim = cfg.sim;
    sim.particles = cfg.particles;
    Trajectory tr = simulate(sim, cfg.frames_needed(), trajectory_seed(cfg.seed, split_id, index));
    NbodySample s;
    s.charges = tr.charges;
    s.x_in = tr.positions[cfg.t_input];
    s.v_in = tr.velocities[cfg.t_input];
    s.x_tgt = tr.positions[cfg.t_input + cfg.delta_frames];
    return s;
}

}  // namespace

Dataset build_dataset(const DatasetConfig& cfg) {
    if (cfg.t_input < 0 || cfg.delta_frames < 0)
        throw std::invalid_argument("build_dataset: negative frame offsets");
    Dataset ds;
    ds.config = cfg;
    ds.config.sim.particles = cfg.particles;
    for (int i = 0; i < cfg.n_train; ++i) ds.train.push_back(make_sample(cfg, 1, i));
    for (int i = 0; i < cfg.n_val; ++i) ds.val.push_back(make_sample(cfg, 2, i));
    for (int i = 0; i < cfg.n_test; ++i) ds.test.push_back(make_sample(cfg, 3, i));
    return ds;
}

const std::vector<NbodySample>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("Dataset: unknown split " + name);
}

Tensor charge_features(const std::vector<double>& charges) {
    const int n = static_cast<int>(charges.size());
    std::vector<double> h(static_cast<std::size_t>(n) * 2, 0.0);
    for (int i = 0; i < n; ++i) h[i * 2 + (charges[i] > 0 ? 0 : 1)] = 1.0;
    return Tensor::from_data(n, 2, std::move(h));
}

std::vector<Edge> complete_edges(int n) {
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(n) * (n - 1));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) edges.push_back({i, j});
    return edges;
}

Tensor charge_products(const std::vector<double>& charges, const std::vector<Edge>& edges) {
    std::vector<double> attr;
    attr.reserve(edges.size());
    for (const Edge& e : edges) attr.push_back(charges[e.src] * charges[e.dst]);
    return Tensor::from_data(static_cast<int>(edges.size()), 1, std::move(attr));
}

GeometricGraph sample_graph(const NbodySample& s) {
    GeometricGraph g;
    g.x = s.x_in.clone_values();
    g.v = s.v_in.clone_values();
    g.h = charge_features(s.charges);
    g.edges = complete_edges(s.x_in.rows());
    g.edge_attr = charge_products(s.charges, g.edges);
    return g;
}

namespace {

constexpr const char* kMagic = "VEGN1";

struct ArrayRef {
    std::string name;
    const std::vector<double>* data;
    std::vector<int> shape;
};

void collect_arrays(const Dataset& ds, const std::string& split,
                    const std::vector<NbodySample>& samples, std::vector<ArrayRef>& out) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const NbodySample& s = samples[i];
        const std::string base = split + "." + std::to_string(i);
        int n = s.x_in.rows();
        out.push_back({base + ".charges", &s.charges, {n}});
        out.push_back({base + ".x_in", &s.x_in.data(), {n, 3}});
        out.push_back({base + ".v_in", &s.v_in.data(), {n, 3}});
        out.push_back({base + ".x_tgt", &s.x_tgt.data(), {n, 3}});
    }
    (void)ds;
}

std::string fmt_double(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_dataset: cannot open " + path);
    const DatasetConfig& c = ds.config;
    f << kMagic << "\n";
    f << "version 1\n";
    f << "n_particles " << c.particles << "\n";
    f << "t_input " << c.t_input << "\n";
    f << "delta_frames " << c.delta_frames << "\n";
    f << "dt_sim " << fmt_double(c.sim.dt_sim) << "\n";
    f << "substeps " << c.sim.substeps << "\n";
    f << "epsilon " << fmt_double(c.sim.epsilon) << "\n";
    f << "seed " << c.seed << "\n";
    f << "counts " << c.n_train << " " << c.n_val << " " << c.n_test << "\n";

    std::vector<ArrayRef> arrays;
    collect_arrays(ds, "train", ds.train, arrays);
    collect_arrays(ds, "val", ds.val, arrays);
    collect_arrays(ds, "test", ds.test, arrays);
    f << "arrays " << arrays.size() << "\n";
    for (const auto& a : arrays) {
        f << a.name;
        for (int d : a.shape) f << " " << d;
        f << "\n";
    }
    f << "DATA\n";
    for (const auto& a : arrays)
        f.write(reinterpret_cast<const char*>(a.data->data()),
                static_cast<std::streamsize>(a.data->size() * sizeof(double)));
    if (!f) throw std::runtime_error("write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_dataset: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != kMagic)
        throw std::runtime_error("read_dataset: bad magic in " + path);

    Dataset ds;
    DatasetConfig& c = ds.config;
    auto expect_kv = [&](const std::string& key) -> std::istringstream {
        if (!std::getline(f, line))
            throw std::runtime_error("read_dataset: truncated header in " + path);
        std::istringstream is(line);
        std::string k;
        is >> k;
        if (k != key) throw std::runtime_error("read_dataset: expected key '" + key + "' in " + path);
        return is;
    };
    int version = 0;
    expect_kv("version") >> version;
    if (version != 1) throw std::runtime_error("read_dataset: unsupported version in " + path);
    expect_kv("n_particles") >> c.particles;
    expect_kv("t_input") >> c.t_input;
    expect_kv("delta_frames") >> c.delta_frames;
    expect_kv("dt_sim") >> c.sim.dt_sim;
    expect_kv("substeps") >> c.sim.substeps;
    expect_kv("epsilon") >> c.sim.epsilon;
    expect_kv("seed") >> c.seed;
    expect_kv("counts") >> c.n_train >> c.n_val >> c.n_test;
    c.sim.particles = c.particles;

    std::size_t n_arrays = 0;
    expect_kv("arrays") >> n_arrays;
    struct Spec {
        std::string name;
        std::vector<int> shape;
        std::size_t count;
    };
    std::vector<Spec> specs;
    specs.reserve(n_arrays);
    for (std::size_t i = 0; i < n_arrays; ++i) {
        if (!std::getline(f, line))
            throw std::runtime_error("read_dataset: truncated manifest in " + path);
        std::istringstream is(line);
        Spec sp;
        is >> sp.name;
        int d;
        sp.count = 1;
        while (is >> d) {
            sp.shape.push_back(d);
            sp.count *= static_cast<std::size_t>(d);
        }
        if (sp.name.empty() || sp.shape.empty())
            throw std::runtime_error("read_dataset: malformed manifest line in " + path);
        specs.push_back(std::move(sp));
    }
    if (!std::getline(f, line) || line != "DATA")
        throw std::runtime_error("read_dataset: missing DATA section in " + path);

    auto read_array = [&](const Spec& sp) {
        std::vector<double> v(sp.count);
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(sp.count * sizeof(double)));
        if (!f) throw std::runtime_error("read_dataset: truncated file " + path);
        return v;
    };

    std::size_t cursor = 0;
    auto read_split = [&](const std::string& split, int count, std::vector<NbodySample>& out) {
        for (int i = 0; i < count; ++i) {
            const std::string base = split + "." + std::to_string(i);
            NbodySample s;
            for (const char* field : {"charges", "x_in", "v_in", "x_tgt"}) {
                if (cursor >= specs.size())
                    throw std::runtime_error("read_dataset: manifest shorter than counts in " + path);
                const Spec& sp = specs[cursor++];
                if (sp.name != base + "." + field)
                    throw std::runtime_error("read_dataset: unexpected array " + sp.name + " in " +
                                             path);
                std::vector<double> v = read_array(sp);
                if (std::string(field) == "charges") {
                    s.charges = std::move(v);
                } else {
                    Tensor t = Tensor::from_data(sp.shape[0], sp.shape[1], std::move(v));
                    if (std::string(field) == "x_in")
                        s.x_in = t;
                    else if (std::string(field) == "v_in")
                        s.v_in = t;
                    else
                        s.x_tgt = t;
                }
            }
            out.push_back(std::move(s));
        }
    };
    read_split("train", c.n_train, ds.train);
    read_split("val", c.n_val, ds.val);
    read_split("test", c.n_test, ds.test);
    return ds;
}

}  // namespace vegn
