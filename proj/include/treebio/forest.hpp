#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "treebio/errors.hpp"
#include "treebio/numeric.hpp"
#include "treebio/tree_record.hpp"

namespace treebio {

// ---------------------------------------------------------------------------
// Bagged regression trees over log-transformed inputs, predicting mean
// log-biomass per leaf. Randomness enters only through the seeded bootstrap;
// every candidate split of every feature is searched exhaustively, so two
// runs with the same seed and config produce identical forests. A canonical
// pre-sort of the training rows makes the result independent of input file
// ordering as well.
// ---------------------------------------------------------------------------

enum class Feature { log_height, log_diameter, log_crown };

inline const char* feature_label(Feature f) {
    switch (f) {
        case Feature::log_height: return "log_height";
        case Feature::log_diameter: return "log_diameter";
        case Feature::log_crown: return "log_crown";
    }
    return "?";
}

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 12;
    int min_leaf = 5;
    std::uint64_t seed = 0;
    std::vector<Feature> features = {Feature::log_height};
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;  // leaf mean of log targets
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(std::span<const double> features) const {
        std::int32_t idx = 0;
        for (;;) {
            const TreeNode& node = nodes[static_cast<std::size_t>(idx)];
            if (node.feature < 0) return node.value;
            idx = features[static_cast<std::size_t>(node.feature)] <= node.threshold
                      ? node.left
                      : node.right;
        }
    }
};

namespace detail {

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

struct TreeBuilder {
    const std::vector<std::vector<double>>& rows;
    const std::vector<double>& targets;
    int max_depth;
    std::size_t min_leaf;
    std::vector<TreeNode> nodes;

    /// Exhaustive variance-reduction search: candidate thresholds are the
    /// midpoints of consecutive distinct sorted feature values; both sides
    /// must keep at least min_leaf samples. Features are scanned in config
    /// order, thresholds ascending, and only strictly better SSE replaces
    /// the incumbent, so the choice is deterministic.
    SplitChoice best_split(const std::vector<std::size_t>& members) const {
        SplitChoice best;
        const std::size_t m = members.size();
        std::vector<std::size_t> order(members);
        std::vector<double> prefix_y(m + 1), prefix_y2(m + 1);

        for (std::size_t f = 0; f < rows[0].size(); ++f) {
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return rows[a][f] < rows[b][f];
            });
            for (std::size_t i = 0; i < m; ++i) {
                const double y = targets[order[i]];
                prefix_y[i + 1] = prefix_y[i] + y;
                prefix_y2[i + 1] = prefix_y2[i] + y * y;
            }
            for (std::size_t s = min_leaf; s + min_leaf <= m; ++s) {
                const double lo = rows[order[s - 1]][f];
                const double hi = rows[order[s]][f];
                if (!(lo < hi)) continue;
                const auto nl = static_cast<double>(s);
                const auto nr = static_cast<double>(m - s);
                const double sl = prefix_y[s];
                const double sr = prefix_y[m] - sl;
                const double sse = (prefix_y2[s] - sl * sl / nl) +
                                   (prefix_y2[m] - prefix_y2[s] - sr * sr / nr);
                if (sse < best.sse) {
                    best.found = true;
                    best.feature = f;
                    best.threshold = 0.5 * (lo + hi);
                    best.sse = sse;
                }
            }
        }
        return best;
    }

    std::int32_t build(std::vector<std::size_t>& members, int depth) {
        const auto node_index = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();

        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i : members) {
            sum += targets[i];
            sum2 += targets[i] * targets[i];
        }
        const auto count = static_cast<double>(members.size());
        const double mean_value = sum / count;
        const double sse = sum2 - sum * sum / count;

        SplitChoice split;
        if (depth < max_depth && members.size() >= 2 * min_leaf && sse > 0.0)
            split = best_split(members);

        if (!split.found) {
            nodes[static_cast<std::size_t>(node_index)].value = mean_value;
            return node_index;
        }

        std::vector<std::size_t> left, right;
        left.reserve(members.size());
        right.reserve(members.size());
        for (std::size_t i : members) {
            (rows[i][split.feature] <= split.threshold ? left : right).push_back(i);
        }
        members.clear();
        members.shrink_to_fit();

        const std::int32_t left_index = build(left, depth + 1);
        const std::int32_t right_index = build(right, depth + 1);
        TreeNode& node = nodes[static_cast<std::size_t>(node_index)];
        node.feature = static_cast<std::int32_t>(split.feature);
        node.threshold = split.threshold;
        node.left = left_index;
        node.right = right_index;
        return node_index;
    }
};

inline double feature_value(Feature f, const PredictorInputs& in) {
    switch (f) {
        case Feature::log_height:
            if (!in.height_m) throw MissingField("forest", "h_m");
            if (!(*in.height_m > 0.0)) throw NonpositiveInput("forest: height must be positive");
            return std::log(*in.height_m);
        case Feature::log_diameter:
            if (!in.diameter_cm) throw MissingField("forest", "d_cm");
            if (!(*in.diameter_cm > 0.0))
                throw NonpositiveInput("forest: diameter must be positive");
            return std::log(*in.diameter_cm);
        case Feature::log_crown:
            if (!in.crown_diameter_m) throw MissingField("forest", "cd_m");
            if (!(*in.crown_diameter_m > 0.0))
                throw NonpositiveInput("forest: crown diameter must be positive");
            return std::log(*in.crown_diameter_m);
    }
    throw InputError("forest: unknown feature");
}

inline std::vector<double> feature_row(const std::vector<Feature>& features,
                                       const PredictorInputs& in) {
    std::vector<double> row(features.size());
    for (std::size_t f = 0; f < features.size(); ++f) row[f] = feature_value(features[f], in);
    return row;
}

}  // namespace detail

/// Fits one regression tree on the given rows (no bootstrap). Exposed so the
/// split search can be tested against an enumeration oracle directly.
inline RegressionTree fit_regression_tree(const std::vector<std::vector<double>>& rows,
                                          const std::vector<double>& targets, int max_depth,
                                          int min_leaf) {
    if (rows.empty()) throw EmptyDataset("fit_regression_tree: no samples");
    if (rows.size() != targets.size()) throw LengthMismatch(rows.size(), targets.size());
    if (min_leaf < 1 || max_depth < 0)
        throw InputError("fit_regression_tree: min_leaf must be >= 1 and max_depth >= 0");
    detail::TreeBuilder builder{rows, targets, max_depth,
                                static_cast<std::size_t>(min_leaf), {}};
    std::vector<std::size_t> members(rows.size());
    std::iota(members.begin(), members.end(), 0);
    builder.build(members, 0);
    return RegressionTree{std::move(builder.nodes)};
}

struct ForestModel {
    std::vector<RegressionTree> trees;
    ForestConfig config;
};

/// Trains the bagged ensemble. Each tree sees a bootstrap resample drawn
/// from an RNG seeded by (config.seed, tree index), so results do not
/// depend on training order or scheduling. The contract sorts rows by
/// (feature values, log target) before resampling, which makes the model a
/// function of the record multiset rather than the record order.
inline ForestModel fit_forest(const Dataset& dataset, const ForestConfig& config) {
    if (dataset.empty()) throw EmptyDataset("fit_forest: empty dataset");
    if (config.n_trees < 1 || config.min_leaf < 1 || config.max_depth < 1)
        throw InputError("forest config: n_trees, min_leaf, and max_depth must be >= 1");
    if (config.features.empty()) throw InputError("forest config: feature set is empty");

    const std::size_t n = dataset.records.size();
    std::vector<std::vector<double>> rows(n);
    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        const TreeRecord& r = dataset.records[i];
        rows[i] = detail::feature_row(config.features,
                                      PredictorInputs::from_record(r));
        if (!(r.biomass_kg > 0.0)) throw NonpositiveInput("forest: biomass must be positive");
        targets[i] = std::log(r.biomass_kg);
    }

    // canonical pre-sort: order is (features..., target), lexicographic
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rows[a] != rows[b]) return rows[a] < rows[b];
        return targets[a] < targets[b];
    });
    std::vector<std::vector<double>> sorted_rows(n);
    std::vector<double> sorted_targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        sorted_rows[i] = rows[order[i]];
        sorted_targets[i] = targets[order[i]];
    }

    ForestModel model;
    model.config = config;
    model.trees.reserve(static_cast<std::size_t>(config.n_trees));
    std::vector<std::vector<double>> boot_rows(n);
    std::vector<double> boot_targets(n);
    for (int t = 0; t < config.n_trees; ++t) {
        std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(t)));
        for (std::size_t i = 0; i < n; ++i) {
            const auto pick = static_cast<std::size_t>(bounded_rand(rng, n));
            boot_rows[i] = sorted_rows[pick];
            boot_targets[i] = sorted_targets[pick];
        }
        model.trees.push_back(
            fit_regression_tree(boot_rows, boot_targets, config.max_depth, config.min_leaf));
    }
    return model;
}

/// exp of the mean of per-tree leaf values.
inline double predict_forest(const ForestModel& model, const PredictorInputs& inputs) {
    const std::vector<double> row = detail::feature_row(model.config.features, inputs);
    double sum = 0.0;
    for (const RegressionTree& tree : model.trees) sum += tree.predict(row);
    return std::exp(sum / static_cast<double>(model.trees.size()));
}

inline double predict_forest(const ForestModel& model, const TreeRecord& record) {
    return predict_forest(model, PredictorInputs::from_record(record));
}

}  // namespace treebio
