#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "treebio/errors.hpp"
#include "treebio/numeric.hpp"
#include "treebio/tree_record.hpp"

namespace treebio {

/// Deterministic seeded train/test partition. The index vector is shuffled
/// with a seeded Fisher-Yates pass, the first round(test_fraction * n)
/// positions become the test set, and both sides keep the original record
/// order. The same seed always yields the same partition, on any platform.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& d, double test_fraction,
                                                    std::uint64_t seed) {
    if (d.empty()) throw EmptyDataset();
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw BadFraction(test_fraction);

    const std::size_t n = d.records.size();
    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    deterministic_shuffle(order, rng);

    std::vector<bool> in_test(n, false);
    for (std::size_t i = 0; i < n_test; ++i) in_test[order[i]] = true;

    Dataset train, test;
    train.provenance = d.provenance + " [train]";
    test.provenance = d.provenance + " [test]";
    train.records.reserve(n - n_test);
    test.records.reserve(n_test);
    for (std::size_t i = 0; i < n; ++i)
        (in_test[i] ? test : train).records.push_back(d.records[i]);
    return {std::move(train), std::move(test)};
}

}  // namespace treebio
