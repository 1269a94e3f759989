#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "treebio/errors.hpp"
#include "treebio/numeric.hpp"
#include "treebio/tree_record.hpp"

namespace treebio {

// ---------------------------------------------------------------------------
// Tree-level metrics (R^2 with outlier exclusion, RMSE, Bias), binned
// residual summaries, and plot-level RE / %RMSE against a reference model.
// RMSE and Bias always use all points; only R^2 applies the 3x-MAE
// exclusion, which is attached specifically to that metric.
// ---------------------------------------------------------------------------

/// Scale on which residuals enter the 3x-MAE outlier rule. Biomass is
/// heavy-tailed, so the default is natural-log space; raw space is kept for
/// exact-table comparisons.
enum class ResidualScale { log_space, raw };

struct EvalReport {
    double r2 = 0.0;
    double rmse_kg = 0.0;
    double bias = 0.0;
    std::size_t n_used = 0;               // points entering R^2
    std::size_t n_outliers_excluded = 0;  // dropped by the 3x-MAE rule
};

namespace detail {

inline void check_lengths(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw LengthMismatch(y.size(), yhat.size());
}

inline std::vector<double> rule_residuals(std::span<const double> y,
                                          std::span<const double> yhat, ResidualScale scale) {
    std::vector<double> res(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (scale == ResidualScale::log_space) {
            if (!(y[i] > 0.0) || !(yhat[i] > 0.0))
                throw NonpositiveInput(
                    "outlier rule on log scale requires positive values; use raw scale");
            res[i] = std::log(yhat[i]) - std::log(y[i]);
        } else {
            res[i] = yhat[i] - y[i];
        }
    }
    return res;
}

}  // namespace detail

/// Coefficient of determination 1 - RSS/TSS on the retained set. With
/// exclude_outliers, a point is dropped when its absolute residual (on
/// `scale`) exceeds three times the mean absolute residual, which is
/// computed once over all points.
inline std::pair<double, std::size_t> r_squared(std::span<const double> y,
                                                std::span<const double> yhat,
                                                bool exclude_outliers,
                                                ResidualScale scale = ResidualScale::log_space) {
    detail::check_lengths(y, yhat);
    if (y.size() < 2) throw TooFewPoints("r_squared: need at least 2 points");

    std::vector<bool> keep(y.size(), true);
    std::size_t n_excluded = 0;
    if (exclude_outliers) {
        const std::vector<double> res = detail::rule_residuals(y, yhat, scale);
        double mae = 0.0;
        for (double r : res) mae += std::abs(r);
        mae /= static_cast<double>(res.size());
        for (std::size_t i = 0; i < res.size(); ++i) {
            if (std::abs(res[i]) > 3.0 * mae) {
                keep[i] = false;
                ++n_excluded;
            }
        }
    }

    const std::size_t n_used = y.size() - n_excluded;
    if (n_used < 2) throw TooFewPoints("r_squared: fewer than 2 points after exclusion");

    double y_mean = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (keep[i]) y_mean += y[i];
    y_mean /= static_cast<double>(n_used);

    double rss = 0.0, tss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!keep[i]) continue;
        rss += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        tss += (y[i] - y_mean) * (y[i] - y_mean);
    }
    if (tss == 0.0) throw ZeroVariance();
    return {1.0 - rss / tss, n_excluded};
}

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
    detail::check_lengths(y, yhat);
    if (y.empty()) throw TooFewPoints("rmse: need at least 1 point");
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return std::sqrt(ss / static_cast<double>(y.size()));
}

/// Mean of (yhat - y) / y. Negative means underestimation.
inline double bias(std::span<const double> y, std::span<const double> yhat) {
    detail::check_lengths(y, yhat);
    if (y.empty()) throw TooFewPoints("bias: need at least 1 point");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) throw ZeroGroundTruth(i);
        sum += (yhat[i] - y[i]) / y[i];
    }
    return sum / static_cast<double>(y.size());
}

inline EvalReport evaluate_predictions(std::span<const double> y, std::span<const double> yhat,
                                       bool exclude_outliers = true,
                                       ResidualScale scale = ResidualScale::log_space) {
    EvalReport report;
    auto [r2, n_excluded] = r_squared(y, yhat, exclude_outliers, scale);
    report.r2 = r2;
    report.n_outliers_excluded = n_excluded;
    report.n_used = y.size() - n_excluded;
    report.rmse_kg = rmse(y, yhat);
    report.bias = bias(y, yhat);
    return report;
}

// -- binned residual summaries ------------------------------------------------

struct ResidualBin {
    double bin_low = 0.0;   // smallest input value in the bin (raw units)
    double bin_high = 0.0;  // largest input value in the bin
    double mean_residual = 0.0;
    double half_std = 0.0;  // half the population standard deviation
    std::size_t count = 0;
};

struct BinnedResiduals {
    std::vector<ResidualBin> bins;
    std::string axis;  // label of the (log-scaled) input axis
};

namespace detail {

/// Equal-count partition boundaries: group k spans [k*n/bins, (k+1)*n/bins).
inline std::vector<std::size_t> equal_count_starts(std::size_t n, std::size_t bins) {
    std::vector<std::size_t> starts(bins + 1);
    for (std::size_t k = 0; k <= bins; ++k) starts[k] = k * n / bins;
    return starts;
}

/// Indices sorted ascending by key; ties keep original order.
inline std::vector<std::size_t> stable_order_by(std::span<const double> key) {
    std::vector<std::size_t> order(key.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    return order;
}

}  // namespace detail

/// Percentile (equal-count) bins on the log-input axis; each bin reports the
/// mean residual and half its population standard deviation.
inline BinnedResiduals binned_residuals(std::span<const double> inputs,
                                        std::span<const double> residuals, int n_bins,
                                        std::string axis = {}) {
    if (inputs.size() != residuals.size()) throw LengthMismatch(inputs.size(), residuals.size());
    if (n_bins < 1) throw InputError("binned_residuals: n_bins must be >= 1");
    if (inputs.size() < static_cast<std::size_t>(n_bins))
        throw TooFewPoints("binned_residuals: fewer points than bins");
    for (double v : inputs)
        if (!(v > 0.0)) throw NonpositiveInput("binned_residuals: inputs must be positive");

    const auto order = detail::stable_order_by(inputs);
    const auto starts =
        detail::equal_count_starts(inputs.size(), static_cast<std::size_t>(n_bins));

    BinnedResiduals out;
    out.axis = std::move(axis);
    out.bins.reserve(static_cast<std::size_t>(n_bins));
    for (std::size_t k = 0; k < static_cast<std::size_t>(n_bins); ++k) {
        std::vector<double> r;
        ResidualBin bin;
        bin.bin_low = inputs[order[starts[k]]];
        bin.bin_high = inputs[order[starts[k + 1] - 1]];
        for (std::size_t i = starts[k]; i < starts[k + 1]; ++i)
            r.push_back(residuals[order[i]]);
        bin.count = r.size();
        bin.mean_residual = mean(r);
        bin.half_std = 0.5 * population_std(r);
        out.bins.push_back(bin);
    }
    return out;
}

// -- plot-level (stand) metrics ----------------------------------------------------

/// RE = sum_i [ref(tree_i) - candidate(tree_i)] / sum_i ref(tree_i): over- and
/// underestimation cancel inside the sums. The reference is normally a
/// fitted LR3 model; any per-record predictor works.
template <typename Candidate, typename Reference>
double stand_relative_error(std::span<const TreeRecord> plot_trees, Candidate&& candidate,
                            Reference&& reference) {
    if (plot_trees.empty()) throw EmptyPlot();
    double residual_sum = 0.0;
    double reference_sum = 0.0;
    for (const TreeRecord& tree : plot_trees) {
        const double ref = reference(tree);
        residual_sum += ref - candidate(tree);
        reference_sum += ref;
    }
    return residual_sum / reference_sum;
}

struct PlotGroup {
    std::string plot_id;
    std::vector<TreeRecord> trees;
};

/// Denominator convention for %RMSE over per-plot totals: the mean reference
/// total (default) or the literal sum of totals. Both conventions appear in
/// the field literature, so the switch is explicit.
enum class PctRmseDenominator { mean_total, sum_total };

template <typename Candidate, typename Reference>
double relative_rmse(std::span<const PlotGroup> plots, Candidate&& candidate,
                     Reference&& reference,
                     PctRmseDenominator denom = PctRmseDenominator::mean_total) {
    if (plots.empty()) throw EmptyInput("relative_rmse: no plots");
    double sq_sum = 0.0;
    double ref_total_sum = 0.0;
    for (const PlotGroup& plot : plots) {
        if (plot.trees.empty()) throw EmptyPlot();
        double ref_total = 0.0, cand_total = 0.0;
        for (const TreeRecord& tree : plot.trees) {
            ref_total += reference(tree);
            cand_total += candidate(tree);
        }
        sq_sum += (ref_total - cand_total) * (ref_total - cand_total);
        ref_total_sum += ref_total;
    }
    const auto n = static_cast<double>(plots.size());
    const double rmse_totals = std::sqrt(sq_sum / n);
    const double denominator =
        denom == PctRmseDenominator::mean_total ? ref_total_sum / n : ref_total_sum;
    return rmse_totals / denominator;
}

struct StandReport {
    std::vector<std::pair<std::string, double>> per_plot_re;
    double overall_re = 0.0;  // computed on the pooled tree set, not averaged REs
    double pct_rmse = 0.0;
};

template <typename Candidate, typename Reference>
StandReport evaluate_stands(std::span<const PlotGroup> plots, Candidate&& candidate,
                            Reference&& reference,
                            PctRmseDenominator denom = PctRmseDenominator::mean_total) {
    if (plots.empty()) throw EmptyInput("evaluate_stands: no plots");
    StandReport report;
    std::vector<TreeRecord> pooled;
    for (const PlotGroup& plot : plots) {
        report.per_plot_re.emplace_back(
            plot.plot_id, stand_relative_error(plot.trees, candidate, reference));
        pooled.insert(pooled.end(), plot.trees.begin(), plot.trees.end());
    }
    report.overall_re = stand_relative_error(pooled, candidate, reference);
    report.pct_rmse = relative_rmse(plots, candidate, reference, denom);
    return report;
}

}  // namespace treebio
