#pragma once

#include <map>
#include <string>
#include <vector>

#include "vegn/tensor.hpp"

namespace vegn {

// Named trainable parameters with persistent gradient buffers. Iteration is
// always lexicographic by name (std::map order), which fixes the checkpoint
// layout and the packing order used by distributed gradient sync.
class ParamStore {
  public:
    Tensor& create(const std::string& name, int rows, int cols);
    Tensor& create(const std::string& name, int rows, int cols, std::vector<double> data);

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grads();

    std::size_t count() const { return params_.size(); }
    std::size_t scalar_count() const;

    std::map<std::string, Tensor>& items() { return params_; }
    const std::map<std::string, Tensor>& items() const { return params_; }

    // Values deep-copied; gradients reset to zero in the copy.
    ParamStore clone() const;
    // Copies values from `other` into matching entries (shapes must agree).
    void assign_values(const ParamStore& other);

    // Gradients packed/unpacked in lexicographic name order.
    std::vector<double> pack_grads() const;
    void unpack_grads(const std::vector<double>& flat);
    void scale_grads(double s);

    // Checkpoint: text manifest (name, shape) followed by raw little-endian
    // 64-bit values concatenated in lexicographic name order.
    void save(const std::string& path) const;
    void load(const std::string& path);  // entries must match by name and shape

  private:
    std::map<std::string, Tensor> params_;
};

}  // namespace vegn
