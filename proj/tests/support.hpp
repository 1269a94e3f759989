#pragma once

// Shared helpers for the test suites. The Gaussian sampler is deliberately
// independent of the library under test (plain Box-Muller over the
// standard-pinned mt19937_64 stream), so generated fixtures cannot inherit a
// library bug.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

#include "treebio/tree_record.hpp"

namespace testsupport {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline double gaussian(std::mt19937_64& rng) {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline treebio::TreeRecord record(double h, double b,
                                  std::optional<double> d = std::nullopt,
                                  std::optional<double> cd = std::nullopt) {
    treebio::TreeRecord r;
    r.height_m = h;
    r.biomass_kg = b;
    r.diameter_cm = d;
    r.crown_diameter_m = cd;
    return r;
}

}  // namespace testsupport
