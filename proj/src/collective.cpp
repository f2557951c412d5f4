#include "vegn/collective.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace vegn {

namespace {

class InprocCollective final : public Collective {
  public:
    explicit InprocCollective(int world) : world_(world), data_slots_(world), sum_slots_(world) {
        if (world < 1) throw std::invalid_argument("Collective: world size must be >= 1");
    }

    int world() const override { return world_; }

    std::vector<double> reduce_sum(int rank, const std::vector<double>& local) override {
        std::unique_lock<std::mutex> lk(mu_);
        const std::uint64_t gen = generation_;
        data_slots_[rank] = &local;
        if (++arrived_ == world_) {
            round_error_.clear();
            const std::size_t n = data_slots_[0]->size();
            for (int d = 1; d < world_; ++d)
                if (data_slots_[d]->size() != n)
                    round_error_ = "all_reduce: shape disagreement across devices";
            if (round_error_.empty()) {
                result_.assign(n, 0.0);
                for (int d = 0; d < world_; ++d) {
                    const auto& src = *data_slots_[d];
                    for (std::size_t i = 0; i < n; ++i) result_[i] += src[i];
                }
                stats_.data_rounds += 1;
                stats_.data_scalars_per_device += n;
                stats_.bytes_per_device += n * sizeof(double);
            }
            arrived_ = 0;
            ++generation_;
            cv_.notify_all();
        } else {
            cv_.wait(lk, [&] { return generation_ != gen; });
        }
        if (!round_error_.empty()) throw std::runtime_error(round_error_);
        return result_;
    }

    void verify_same(int rank, std::uint64_t checksum) override {
        std::unique_lock<std::mutex> lk(mu_);
        const std::uint64_t gen = generation_;
        sum_slots_[rank] = checksum;
        if (++arrived_ == world_) {
            round_error_.clear();
            for (int d = 1; d < world_; ++d)
                if (sum_slots_[d] != sum_slots_[0])
                    round_error_ = "collective: replica divergence detected (checksum mismatch)";
            stats_.verify_rounds += 1;
            arrived_ = 0;
            ++generation_;
            cv_.notify_all();
        } else {
            cv_.wait(lk, [&] { return generation_ != gen; });
        }
        if (!round_error_.empty()) throw std::runtime_error(round_error_);
    }

    Stats stats() const override {
        std::unique_lock<std::mutex> lk(mu_);
        return stats_;
    }

  private:
    const int world_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::vector<const std::vector<double>*> data_slots_;
    std::vector<std::uint64_t> sum_slots_;
    std::vector<double> result_;
    std::string round_error_;
    int arrived_ = 0;
    std::uint64_t generation_ = 0;
    Stats stats_;
};

void write_all(int fd, const void* buf, std::size_t n) {
    const char* p = static_cast<const char*>(buf);
    while (n > 0) {
        ssize_t w = ::write(fd, p, n);
        if (w < 0) throw std::runtime_error("socket collective: write failed");
        p += w;
        n -= static_cast<std::size_t>(w);
    }
}

bool read_all(int fd, void* buf, std::size_t n) {
    char* p = static_cast<char*>(buf);
    while (n > 0) {
        ssize_t r = ::read(fd, p, n);
        if (r == 0) return false;  // peer closed
        if (r < 0) throw std::runtime_error("socket collective: read failed");
        p += r;
        n -= static_cast<std::size_t>(r);
    }
    return true;
}

// Wire format per round, worker -> hub: [u8 kind][u64 count][payload];
// hub -> worker: [u8 status][payload]. kind 0 = f64 reduce, 1 = checksum.
class SocketCollective final : public Collective {
  public:
    explicit SocketCollective(int world) : world_(world), worker_fd_(world), hub_fd_(world) {
        if (world < 1) throw std::invalid_argument("Collective: world size must be >= 1");
        for (int d = 0; d < world_; ++d) {
            int pair[2];
            if (::socketpair(AF_UNIX, SOCK_STREAM, 0, pair) != 0)
                throw std::runtime_error("socket collective: socketpair failed");
            worker_fd_[d] = pair[0];
            hub_fd_[d] = pair[1];
        }
        hub_ = std::thread([this] { hub_loop(); });
    }

    ~SocketCollective() override {
        for (int fd : worker_fd_) ::close(fd);
        if (hub_.joinable()) hub_.join();
        for (int fd : hub_fd_) ::close(fd);
    }

    int world() const override { return world_; }

    std::vector<double> reduce_sum(int rank, const std::vector<double>& local) override {
        std::uint8_t kind = 0;
        std::uint64_t count = local.size();
        write_all(worker_fd_[rank], &kind, 1);
        write_all(worker_fd_[rank], &count, 8);
        write_all(worker_fd_[rank], local.data(), local.size() * sizeof(double));
        std::uint8_t status = 1;
        if (!read_all(worker_fd_[rank], &status, 1) || status != 0)
            throw std::runtime_error("all_reduce: shape disagreement across devices");
        std::vector<double> out(local.size());
        if (!read_all(worker_fd_[rank], out.data(), out.size() * sizeof(double)))
            throw std::runtime_error("socket collective: hub closed mid-round");
        return out;
    }

    void verify_same(int rank, std::uint64_t checksum) override {
        std::uint8_t kind = 1;
        std::uint64_t count = 1;
        write_all(worker_fd_[rank], &kind, 1);
        write_all(worker_fd_[rank], &count, 8);
        write_all(worker_fd_[rank], &checksum, 8);
        std::uint8_t status = 1;
        std::uint64_t echo = 0;
        if (!read_all(worker_fd_[rank], &status, 1) ||
            !read_all(worker_fd_[rank], &echo, 8) || status != 0)
            throw std::runtime_error("collective: replica divergence detected (checksum mismatch)");
    }

    Stats stats() const override {
        std::unique_lock<std::mutex> lk(stats_mu_);
        return stats_;
    }

  private:
    void hub_loop() {
        std::vector<std::vector<double>> bufs(world_);
        std::vector<std::uint64_t> sums(world_);
        for (;;) {
            std::uint8_t kind0 = 0;
            std::uint64_t count0 = 0;
            if (!read_all(hub_fd_[0], &kind0, 1)) return;  // workers done
            if (!read_all(hub_fd_[0], &count0, 8)) return;
            bool mismatch = false;
            if (kind0 == 0) {
                bufs[0].resize(count0);
                if (!read_all(hub_fd_[0], bufs[0].data(), count0 * 8)) return;
                for (int d = 1; d < world_; ++d) {
                    std::uint8_t kind;
                    std::uint64_t count;
                    if (!read_all(hub_fd_[d], &kind, 1) || !read_all(hub_fd_[d], &count, 8)) return;
                    bufs[d].resize(count);
                    if (!read_all(hub_fd_[d], bufs[d].data(), count * 8)) return;
                    if (kind != kind0 || count != count0) mismatch = true;
                }
                std::vector<double> sum;
                if (!mismatch) {
                    sum.assign(count0, 0.0);
                    for (int d = 0; d < world_; ++d)
                        for (std::size_t i = 0; i < count0; ++i) sum[i] += bufs[d][i];
                    std::unique_lock<std::mutex> lk(stats_mu_);
                    stats_.data_rounds += 1;
                    stats_.data_scalars_per_device += count0;
                    stats_.bytes_per_device += count0 * sizeof(double);
                }
                for (int d = 0; d < world_; ++d) {
                    std::uint8_t status = mismatch ? 1 : 0;
                    write_all(hub_fd_[d], &status, 1);
                    if (!mismatch) write_all(hub_fd_[d], sum.data(), sum.size() * 8);
                }
            } else {
                if (!read_all(hub_fd_[0], &sums[0], 8)) return;
                for (int d = 1; d < world_; ++d) {
                    std::uint8_t kind;
                    std::uint64_t count;
                    if (!read_all(hub_fd_[d], &kind, 1) || !read_all(hub_fd_[d], &count, 8)) return;
                    if (!read_all(hub_fd_[d], &sums[d], 8)) return;
                    if (kind != kind0) mismatch = true;
                }
                for (int d = 1; d < world_; ++d)
                    if (sums[d] != sums[0]) mismatch = true;
                {
                    std::unique_lock<std::mutex> lk(stats_mu_);
                    stats_.verify_rounds += 1;
                }
                for (int d = 0; d < world_; ++d) {
                    std::uint8_t status = mismatch ? 1 : 0;
                    write_all(hub_fd_[d], &status, 1);
                    write_all(hub_fd_[d], &sums[0], 8);
                }
            }
        }
    }

    const int world_;
    std::vector<int> worker_fd_;
    std::vector<int> hub_fd_;
    std::thread hub_;
    mutable std::mutex stats_mu_;
    Stats stats_;
};

}  // namespace

std::unique_ptr<Collective> make_inproc_collective(int world) {
    return std::make_unique<InprocCollective>(world);
}

std::unique_ptr<Collective> make_socket_collective(int world) {
    return std::make_unique<SocketCollective>(world);
}

std::unique_ptr<Collective> make_collective(const std::string& transport, int world) {
    if (transport == "inproc") return make_inproc_collective(world);
    if (transport == "socket") return make_socket_collective(world);
    throw std::invalid_argument("unknown transport: " + transport);
}

Tensor all_reduce_sum(const Tensor& local, Collective& coll, int rank) {
    if (local.empty()) throw std::invalid_argument("all_reduce_sum: empty tensor");
    Tensor out = make_op_result(local.rows(), local.cols());
    std::vector<double> reduced = coll.reduce_sum(rank, local.data());
    if (reduced.size() != local.data().size())
        throw std::runtime_error("all_reduce_sum: reduced size mismatch");
    out.data() = std::move(reduced);
    if (Tape* t = Tape::active()) {
        auto lb = local.block();
        auto ob = out.block();
        Collective* c = &coll;
        t->record("all_reduce_sum", [lb, ob, c, rank] {
            // Every rank participates even if its input is untracked; the
            // others are blocked on this round.
            std::vector<double> gsum = c->reduce_sum(rank, ob->g);
            if (lb->track)
                for (std::size_t i = 0; i < gsum.size(); ++i) lb->g[i] += gsum[i];
        });
    }
    return out;
}

}  // namespace vegn
