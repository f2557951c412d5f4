#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vegn/param_store.hpp"

namespace vegn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_analytic = 0.0;
    double max_abs_numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double max_abs_numeric = 0.0;
    bool pass = false;
};

struct GradCheckOptions {
    double step = 1e-5;        // central-difference half-width
    double tolerance = 1e-6;
    // Entries where both |analytic| and |numeric| stay below this floor are
    // treated as matching zeros (finite differences are noise-limited there).
    double zero_floor = 1e-7;
};

// Compares the tape gradient of `f` (a deterministic scalar function of the
// parameters in `store`) against central finite differences, parameter by
// parameter. `f` must build its value on the active tape.
GradCheckReport grad_check(ParamStore& store, const std::function<Tensor()>& f,
                           const GradCheckOptions& opts = {});

}  // namespace vegn
