#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vegn/tensor.hpp"

namespace vegn {

// Rendezvous-style collective shared by D workers. Every participant
// contributes a buffer per round and receives the elementwise sum, always
// accumulated in ascending device order so all replicas see identical bits.
class Collective {
  public:
    virtual ~Collective() = default;

    virtual int world() const = 0;

    // Blocks until all ranks arrive; shapes must agree across devices.
    virtual std::vector<double> reduce_sum(int rank, const std::vector<double>& local) = 0;

    // Replica-consistency barrier: throws on every rank if checksums differ.
    virtual void verify_same(int rank, std::uint64_t checksum) = 0;

    struct Stats {
        std::uint64_t data_rounds = 0;
        std::uint64_t data_scalars_per_device = 0;  // cumulative payload per device
        std::uint64_t verify_rounds = 0;
        std::uint64_t bytes_per_device = 0;         // payload bytes contributed per device
    };
    virtual Stats stats() const = 0;
};

// Shared-memory transport: workers are threads in one process, rounds are a
// mutex/condvar rendezvous.
std::unique_ptr<Collective> make_inproc_collective(int world);

// Local byte-stream transport: each worker talks to a hub thread over a
// socketpair; the hub sums in rank order and broadcasts the result.
std::unique_ptr<Collective> make_socket_collective(int world);

std::unique_ptr<Collective> make_collective(const std::string& transport, int world);

// all-reduce as a differentiable op. Forward: every device's output is the
// across-device sum of the local inputs. Backward: the incoming output
// gradients are themselves all-reduced, so every contributing device
// receives the full gradient sum. Both directions are tape-recorded.
Tensor all_reduce_sum(const Tensor& local, Collective& coll, int rank);

}  // namespace vegn
