#pragma once

#include <cmath>
#include <functional>

#include "synernet/datagen.hpp"

namespace testsupport {

// Central finite difference of a scalar functional; the oracle side of every
// gradient assertion. Kept independent of the library's backward passes.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double analytic, double numeric, double floor = 1e-4) {
    return std::fabs(analytic - numeric) /
           std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Small fast benchmark for unit tests.
inline synernet::Benchmark tiny_benchmark(uint64_t seed = 11) {
    synernet::BenchmarkConfig cfg;
    cfg.n_seen = 2;
    cfg.n_ood = 3;
    cfg.d_raw = 8;
    cfg.d_embed = 8;
    cfg.d_tok = 8;
    cfg.samples_per_class = 36;
    cfg.spread = 0.6;
    return synernet::generate_benchmark(cfg, seed);
}

}  // namespace testsupport
