#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "convseg/errors.hpp"

namespace convseg {

// Central finite differences against an analytic gradient.
// Relative error per coordinate: |analytic - numeric| / max(1, |numeric|).
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

inline GradCheckResult gradient_check(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x,
                                      const std::vector<double>& analytic,
                                      double h = 1e-6) {
    GradCheckResult res;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw DivergenceError("non-finite value while probing coordinate " +
                                  std::to_string(i));
        const double numeric = (fp - fm) / (2.0 * h);
        const double rel = std::abs(analytic[i] - numeric) /
                           std::max(1.0, std::abs(numeric));
        if (rel > res.max_rel_error) {
            res.max_rel_error = rel;
            res.worst_index = i;
        }
    }
    return res;
}

// True if any coordinate sits within `margin` of zero, i.e. on a relu/max
// kink where finite differences are invalid.
inline bool near_kink(const std::vector<double>& x, double margin = 1e-5) {
    for (double v : x)
        if (std::abs(v) < margin) return true;
    return false;
}

}  // namespace convseg
