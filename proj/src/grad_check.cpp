#include "vegn/grad_check.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "vegn/tensor.hpp"

namespace vegn {

GradCheckReport grad_check(ParamStore& store, const std::function<Tensor()>& f,
                           const GradCheckOptions& opts) {
    store.zero_grads();
    std::map<std::string, std::vector<double>> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = f();
        if (loss.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
        if (!all_finite(loss)) throw std::runtime_error("grad_check: non-finite function value");
        tape.backward(loss);
    }
    for (const auto& [name, t] : store.items()) analytic[name] = t.grad();

    auto eval = [&]() {
        Tensor v = f();
        if (v.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
        double x = v.value();
        if (!std::isfinite(x)) throw std::runtime_error("grad_check: non-finite function value");
        return x;
    };

    GradCheckReport report;
    for (auto& [name, t] : store.items()) {
        GradCheckEntry entry;
        entry.name = name;
        auto& v = t.data();
        const auto& a = analytic.at(name);
        for (std::size_t i = 0; i < v.size(); ++i) {
            double orig = v[i];
            v[i] = orig + opts.step;
            double fp = eval();
            v[i] = orig - opts.step;
            double fm = eval();
            v[i] = orig;
            double numeric = (fp - fm) / (2.0 * opts.step);
            double mag = std::max(std::abs(a[i]), std::abs(numeric));
            double rel = mag > opts.zero_floor ? std::abs(a[i] - numeric) / mag : 0.0;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a[i]));
            entry.max_abs_numeric = std::max(entry.max_abs_numeric, std::abs(numeric));
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.max_abs_numeric = std::max(report.max_abs_numeric, entry.max_abs_numeric);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err < opts.tolerance;
    return report;
}

}  // namespace vegn
