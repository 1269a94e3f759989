#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "treebio/errors.hpp"
#include "treebio/evaluation.hpp"
#include "treebio/numeric.hpp"
#include "treebio/tree_record.hpp"

namespace treebio {

// ---------------------------------------------------------------------------
// Decomposition of estimation uncertainty, both indices on natural-log
// scale:
//
//   model uncertainty   — records sorted by an input parameter are grouped
//                         into equal-count buckets; per bucket the ratio
//                         std(ln B) / mean(ln B); overall = mean of ratios.
//                         Measures variability the chosen input cannot
//                         explain, independent of any regressor.
//
//   fitting uncertainty — records fall into equal-width pockets on the
//                         log(input) axis; per record the absolute
//                         deviation of the predicted log biomass from the
//                         pocket-mean observed log biomass; per pocket
//                         MAE / mean(ln B); overall = mean over nonempty
//                         pockets. Measures how far a fitted curve sits
//                         from the conditional average.
//
// The >= 2 kg inclusion rule keeps ln B >= ln 2 > 0, which makes the ratios
// well-defined; smaller biomass values are rejected rather than allowed to
// flip the ratio's sign.
// ---------------------------------------------------------------------------

/// Input parameter records are sorted or pocketed by.
enum class SortKey { height, diameter, crown_diameter, height_times_crown };

inline const char* sort_key_label(SortKey k) {
    switch (k) {
        case SortKey::height: return "h";
        case SortKey::diameter: return "d";
        case SortKey::crown_diameter: return "cd";
        case SortKey::height_times_crown: return "hcd";
    }
    return "?";
}

struct UncertaintyBin {
    double key_low = 0.0;   // sort-key range covered (raw units)
    double key_high = 0.0;
    std::size_t count = 0;
    double ratio = 0.0;
};

struct UncertaintyReport {
    std::string kind;  // "model" or "fitting"
    SortKey sort_key = SortKey::height;
    int n_bins = 0;
    std::vector<UncertaintyBin> per_bin;  // empty pockets are omitted
    double overall = 0.0;                 // arithmetic mean of per_bin ratios
};

/// Extracts the sort-key value from a record, in raw units.
inline double sort_key_value(const TreeRecord& r, SortKey key) {
    switch (key) {
        case SortKey::height:
            return r.height_m;
        case SortKey::diameter:
            if (!r.diameter_cm) throw MissingField("uncertainty", "d_cm");
            return *r.diameter_cm;
        case SortKey::crown_diameter:
            if (!r.crown_diameter_m) throw MissingField("uncertainty", "cd_m");
            return *r.crown_diameter_m;
        case SortKey::height_times_crown:
            if (!r.crown_diameter_m) throw MissingField("uncertainty", "cd_m");
            return r.height_m * *r.crown_diameter_m;
    }
    throw InputError("uncertainty: unknown sort key");
}

namespace detail {

inline std::vector<double> sort_key_values(const Dataset& d, SortKey key) {
    std::vector<double> out(d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i)
        out[i] = sort_key_value(d.records[i], key);
    return out;
}

inline std::vector<double> log_biomass_guarded(const Dataset& d) {
    std::vector<double> out(d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const double b = d.records[i].biomass_kg;
        if (!(b > 1.0))
            throw NonpositiveLogBiomass("record with biomass " + format_double(b) +
                                        " kg has ln B <= 0; apply the >= 2 kg filter first");
        out[i] = std::log(b);
    }
    return out;
}

constexpr double kMinBucketMeanLogBiomass = 0.1;

inline double ratio_guard_mean(double mean_log_b) {
    if (mean_log_b < kMinBucketMeanLogBiomass)
        throw NonpositiveLogBiomass("bucket mean ln B below the 0.1 guard; ratios undefined");
    return mean_log_b;
}

}  // namespace detail

/// Model uncertainty: per equal-count bucket std(ln B) / mean(ln B),
/// averaged over buckets. Sorting is stable, so ties keep original order
/// and the result is permutation-insensitive.
inline UncertaintyReport model_uncertainty(const Dataset& dataset, SortKey sort_key,
                                           int n_bins = 10) {
    if (n_bins < 1) throw InputError("model_uncertainty: n_bins must be >= 1");
    const std::size_t n = dataset.records.size();
    if (n < static_cast<std::size_t>(n_bins))
        throw TooFewPoints("model_uncertainty: fewer records than buckets");

    const std::vector<double> keys = detail::sort_key_values(dataset, sort_key);
    const std::vector<double> log_b = detail::log_biomass_guarded(dataset);
    const auto order = detail::stable_order_by(keys);
    const auto starts = detail::equal_count_starts(n, static_cast<std::size_t>(n_bins));

    UncertaintyReport report;
    report.kind = "model";
    report.sort_key = sort_key;
    report.n_bins = n_bins;
    double ratio_sum = 0.0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(n_bins); ++k) {
        std::vector<double> bucket;
        for (std::size_t i = starts[k]; i < starts[k + 1]; ++i)
            bucket.push_back(log_b[order[i]]);
        UncertaintyBin bin;
        bin.key_low = keys[order[starts[k]]];
        bin.key_high = keys[order[starts[k + 1] - 1]];
        bin.count = bucket.size();
        bin.ratio = population_std(bucket) / detail::ratio_guard_mean(mean(bucket));
        ratio_sum += bin.ratio;
        report.per_bin.push_back(bin);
    }
    report.overall = ratio_sum / static_cast<double>(n_bins);
    return report;
}

/// Fitting uncertainty for one model's predictions (biomass, kg), aligned
/// with the dataset records. Pockets are equal-width on the log(sort key)
/// axis; empty pockets are skipped in the overall average.
inline UncertaintyReport fitting_uncertainty(const Dataset& dataset,
                                             std::span<const double> predictions_kg,
                                             SortKey sort_key, int n_bins = 10) {
    if (n_bins < 1) throw InputError("fitting_uncertainty: n_bins must be >= 1");
    const std::size_t n = dataset.records.size();
    if (predictions_kg.size() != n) throw LengthMismatch(predictions_kg.size(), n);
    if (n < static_cast<std::size_t>(n_bins))
        throw TooFewPoints("fitting_uncertainty: fewer records than pockets");

    const std::vector<double> keys = detail::sort_key_values(dataset, sort_key);
    const std::vector<double> log_b = detail::log_biomass_guarded(dataset);
    std::vector<double> log_pred(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(predictions_kg[i] > 0.0))
            throw NonpositiveInput("fitting_uncertainty: predictions must be positive");
        log_pred[i] = std::log(predictions_kg[i]);
    }

    double log_lo = std::log(keys[0]), log_hi = log_lo;
    for (double k : keys) {
        if (!(k > 0.0))
            throw NonpositiveInput("fitting_uncertainty: sort key must be positive");
        log_lo = std::min(log_lo, std::log(k));
        log_hi = std::max(log_hi, std::log(k));
    }
    if (log_hi == log_lo && n_bins > 1)
        throw AllPocketsEmpty("fitting_uncertainty: sort-key axis has zero range");

    const double width = (log_hi - log_lo) / n_bins;
    auto pocket_of = [&](double key) {
        if (width == 0.0) return std::size_t{0};
        const auto p = static_cast<std::ptrdiff_t>((std::log(key) - log_lo) / width);
        return static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(p, 0, n_bins - 1));
    };

    std::vector<std::vector<std::size_t>> pockets(static_cast<std::size_t>(n_bins));
    for (std::size_t i = 0; i < n; ++i) pockets[pocket_of(keys[i])].push_back(i);

    UncertaintyReport report;
    report.kind = "fitting";
    report.sort_key = sort_key;
    report.n_bins = n_bins;
    double ratio_sum = 0.0;
    std::size_t nonempty = 0;
    for (std::size_t k = 0; k < pockets.size(); ++k) {
        const auto& members = pockets[k];
        if (members.empty()) continue;
        double mean_log_b = 0.0;
        for (std::size_t i : members) mean_log_b += log_b[i];
        mean_log_b /= static_cast<double>(members.size());

        double mae = 0.0;
        UncertaintyBin bin;
        bin.key_low = std::exp(log_lo + width * static_cast<double>(k));
        bin.key_high = std::exp(log_lo + width * static_cast<double>(k + 1));
        for (std::size_t i : members) mae += std::abs(log_pred[i] - mean_log_b);
        mae /= static_cast<double>(members.size());

        bin.count = members.size();
        bin.ratio = mae / detail::ratio_guard_mean(mean_log_b);
        ratio_sum += bin.ratio;
        ++nonempty;
        report.per_bin.push_back(bin);
    }
    if (nonempty == 0) throw AllPocketsEmpty("fitting_uncertainty: no populated pockets");
    report.overall = ratio_sum / static_cast<double>(nonempty);
    return report;
}

}  // namespace treebio
