#include "vegn/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace vegn {

Tensor& ParamStore::create(const std::string& name, int rows, int cols) {
    if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    auto [it, ok] = params_.emplace(name, Tensor::leaf(rows, cols));
    (void)ok;
    return it->second;
}

Tensor& ParamStore::create(const std::string& name, int rows, int cols, std::vector<double> data) {
    if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    auto [it, ok] = params_.emplace(name, Tensor::leaf(rows, cols, std::move(data)));
    (void)ok;
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : params_) {
        auto& g = t.grad();
        std::fill(g.begin(), g.end(), 0.0);
    }
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.data().size();
    return n;
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const auto& [name, t] : params_) out.create(name, t.rows(), t.cols(), t.data());
    return out;
}

void ParamStore::assign_values(const ParamStore& other) {
    if (other.params_.size() != params_.size())
        throw std::invalid_argument("ParamStore::assign_values: entry count mismatch");
    for (auto& [name, t] : params_) {
        const Tensor& src = other.get(name);
        if (src.rows() != t.rows() || src.cols() != t.cols())
            throw std::invalid_argument("ParamStore::assign_values: shape mismatch for " + name);
        t.data() = src.data();
    }
}

std::vector<double> ParamStore::pack_grads() const {
    std::vector<double> flat;
    flat.reserve(scalar_count());
    for (const auto& [name, t] : params_) {
        const auto& g = t.grad();
        flat.insert(flat.end(), g.begin(), g.end());
    }
    return flat;
}

void ParamStore::unpack_grads(const std::vector<double>& flat) {
    if (flat.size() != scalar_count())
        throw std::invalid_argument("ParamStore::unpack_grads: size mismatch");
    std::size_t off = 0;
    for (auto& [name, t] : params_) {
        auto& g = t.grad();
        std::copy(flat.begin() + off, flat.begin() + off + g.size(), g.begin());
        off += g.size();
    }
}

void ParamStore::scale_grads(double s) {
    for (auto& [name, t] : params_)
        for (auto& x : t.grad()) x *= s;
}

void ParamStore::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ParamStore::save: cannot open " + path);
    f << "VEGNCKPT 1\n" << params_.size() << "\n";
    for (const auto& [name, t] : params_) f << name << " " << t.rows() << " " << t.cols() << "\n";
    f << "DATA\n";
    for (const auto& [name, t] : params_) {
        const auto& v = t.data();
        f.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("ParamStore::save: write failed for " + path);
}

void ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ParamStore::load: cannot open " + path);
    std::string magic, version;
    f >> magic >> version;
    if (magic != "VEGNCKPT" || version != "1")
        throw std::runtime_error("ParamStore::load: bad checkpoint header in " + path);
    std::size_t count = 0;
    f >> count;
    if (count != params_.size())
        throw std::runtime_error("ParamStore::load: checkpoint/config mismatch (parameter count)");
    std::vector<std::string> names;
    names.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        int rows = 0, cols = 0;
        f >> name >> rows >> cols;
        if (!f) throw std::runtime_error("ParamStore::load: truncated manifest in " + path);
        auto it = params_.find(name);
        if (it == params_.end())
            throw std::runtime_error("ParamStore::load: checkpoint/config mismatch (unknown parameter " +
                                     name + ")");
        if (it->second.rows() != rows || it->second.cols() != cols)
            throw std::runtime_error("ParamStore::load: checkpoint/config mismatch (shape of " + name +
                                     ")");
        names.push_back(name);
    }
    std::string tag;
    f >> tag;
    if (tag != "DATA") throw std::runtime_error("ParamStore::load: missing DATA section in " + path);
    f.get();  // newline after DATA
    for (const auto& name : names) {
        auto& v = params_.at(name).data();
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
        if (!f) throw std::runtime_error("ParamStore::load: truncated data in " + path);
    }
}

}  // namespace vegn
