#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"
#include "treebio/evaluation.hpp"

using namespace treebio;
using testsupport::record;
using testsupport::uniform;

namespace {

// ----------------------------------------------------------------- R^2

TEST(RSquared, PerfectPredictionsGiveOne) {
    const std::vector<double> y = {1.0, 2.0, 3.0, 4.0};
    auto [r2, excluded] = r_squared(y, y, true, ResidualScale::raw);
    EXPECT_DOUBLE_EQ(r2, 1.0);
    EXPECT_EQ(excluded, 0u);
}

TEST(RSquared, MeanPredictorGivesZero) {
    const std::vector<double> y = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> yhat(4, 2.5);
    auto [r2, excluded] = r_squared(y, yhat, false);
    EXPECT_DOUBLE_EQ(r2, 0.0);
    EXPECT_EQ(excluded, 0u);
}

TEST(RSquared, ThreeTimesMaeRuleExcludesTheOutlier) {
    // residuals (raw): [0,0,0,0,90]; MAE = 18; 90 > 54 so the point drops
    const std::vector<double> y = {1.0, 2.0, 3.0, 4.0, 100.0};
    const std::vector<double> yhat = {1.0, 2.0, 3.0, 4.0, 10.0};
    auto [r2, excluded] = r_squared(y, yhat, true, ResidualScale::raw);
    EXPECT_EQ(excluded, 1u);
    EXPECT_DOUBLE_EQ(r2, 1.0);

    auto [r2_kept, none] = r_squared(y, yhat, false);
    EXPECT_EQ(none, 0u);
    EXPECT_LT(r2_kept, 1.0);
}

TEST(RSquared, LogScaleRuleRequiresPositiveValues) {
    const std::vector<double> y = {1.0, -2.0, 3.0};
    const std::vector<double> yhat = {1.0, 2.0, 3.0};
    EXPECT_THROW(r_squared(y, yhat, true, ResidualScale::log_space), NonpositiveInput);
    // raw scale accepts the same data
    EXPECT_NO_THROW(r_squared(y, yhat, true, ResidualScale::raw));
}

TEST(RSquared, AffineInvariance) {
    std::mt19937_64 rng(11);
    std::vector<double> y(30), yhat(30);
    for (int i = 0; i < 30; ++i) {
        y[i] = uniform(rng, 1.0, 100.0);
        yhat[i] = y[i] + uniform(rng, -10.0, 10.0);
    }
    auto [base, base_excl] = r_squared(y, yhat, true, ResidualScale::raw);
    for (double s : {0.5, 2.0, 10.0}) {
        const double t = 7.25;
        std::vector<double> ys(30), yhs(30);
        for (int i = 0; i < 30; ++i) {
            ys[i] = s * y[i] + t;
            yhs[i] = s * yhat[i] + t;
        }
        auto [scaled, scaled_excl] = r_squared(ys, yhs, true, ResidualScale::raw);
        EXPECT_NEAR(scaled, base, 1e-10);
        EXPECT_EQ(scaled_excl, base_excl);
    }
}

TEST(RSquared, ErrorPaths) {
    const std::vector<double> y = {1.0, 2.0};
    const std::vector<double> three = {1.0, 2.0, 3.0};
    EXPECT_THROW(r_squared(y, three, false), LengthMismatch);
    const std::vector<double> constant = {4.0, 4.0, 4.0};
    EXPECT_THROW(r_squared(constant, constant, false), ZeroVariance);
    const std::vector<double> single = {1.0};
    EXPECT_THROW(r_squared(single, single, false), TooFewPoints);
}

// ----------------------------------------------------------------- RMSE

TEST(Rmse, Identities) {
    const std::vector<double> y = {3.0, 7.0, 9.0};
    EXPECT_DOUBLE_EQ(rmse(y, y), 0.0);

    const std::vector<double> zeros = {0.0, 0.0};
    const std::vector<double> yhat = {3.0, 4.0};
    EXPECT_NEAR(rmse(zeros, yhat), 3.5355339059327378, 1e-12);

    const std::vector<double> y1 = {2.0};
    const std::vector<double> y2 = {5.0};
    EXPECT_DOUBLE_EQ(rmse(y1, y2), 3.0);
}

TEST(Rmse, ScalesLinearly) {
    std::mt19937_64 rng(3);
    std::vector<double> y(20), yhat(20);
    for (int i = 0; i < 20; ++i) {
        y[i] = uniform(rng, 0.0, 50.0);
        yhat[i] = uniform(rng, 0.0, 50.0);
    }
    const double base = rmse(y, yhat);
    for (double s : {-2.0, 0.5, 10.0}) {
        std::vector<double> ys(20), yhs(20);
        for (int i = 0; i < 20; ++i) {
            ys[i] = s * y[i];
            yhs[i] = s * yhat[i];
        }
        EXPECT_NEAR(rmse(ys, yhs), std::abs(s) * base, 1e-10);
    }
}

// ----------------------------------------------------------------- bias

TEST(Bias, Identities) {
    const std::vector<double> y = {10.0, 20.0};
    EXPECT_DOUBLE_EQ(bias(y, y), 0.0);

    // +10% and -10% relative errors cancel
    const std::vector<double> y2 = {100.0, 200.0};
    const std::vector<double> yhat2 = {110.0, 180.0};
    EXPECT_NEAR(bias(y2, yhat2), 0.0, 1e-15);

    // overestimation is positive
    const std::vector<double> y3 = {100.0};
    const std::vector<double> yhat3 = {150.0};
    EXPECT_DOUBLE_EQ(bias(y3, yhat3), 0.5);
}

TEST(Bias, ScaleInvariantForPositiveScale) {
    std::mt19937_64 rng(5);
    std::vector<double> y(15), yhat(15);
    for (int i = 0; i < 15; ++i) {
        y[i] = uniform(rng, 1.0, 80.0);
        yhat[i] = uniform(rng, 1.0, 80.0);
    }
    const double base = bias(y, yhat);
    for (double s : {0.5, 2.0, 10.0}) {
        std::vector<double> ys(15), yhs(15);
        for (int i = 0; i < 15; ++i) {
            ys[i] = s * y[i];
            yhs[i] = s * yhat[i];
        }
        EXPECT_NEAR(bias(ys, yhs), base, 1e-12);
    }
}

TEST(Bias, ZeroGroundTruthThrows) {
    const std::vector<double> y = {1.0, 0.0};
    const std::vector<double> yhat = {1.0, 1.0};
    EXPECT_THROW(bias(y, yhat), ZeroGroundTruth);
}

// ----------------------------------------------------------------- binned residuals

TEST(BinnedResiduals, ZeroResidualsGiveZeroBins) {
    const std::vector<double> inputs = {1.0, 2.0, 5.0, 9.0};
    const std::vector<double> residuals(4, 0.0);
    const BinnedResiduals out = binned_residuals(inputs, residuals, 2);
    ASSERT_EQ(out.bins.size(), 2u);
    for (const ResidualBin& b : out.bins) {
        EXPECT_DOUBLE_EQ(b.mean_residual, 0.0);
        EXPECT_DOUBLE_EQ(b.half_std, 0.0);
    }
}

TEST(BinnedResiduals, TwoBinToyCase) {
    // bins {1,2} and {4,8}: means 1 and 4; population std of {3,5} is 1
    const std::vector<double> inputs = {1.0, 2.0, 4.0, 8.0};
    const std::vector<double> residuals = {1.0, 1.0, 3.0, 5.0};
    const BinnedResiduals out = binned_residuals(inputs, residuals, 2);
    ASSERT_EQ(out.bins.size(), 2u);
    EXPECT_DOUBLE_EQ(out.bins[0].mean_residual, 1.0);
    EXPECT_DOUBLE_EQ(out.bins[0].half_std, 0.0);
    EXPECT_EQ(out.bins[0].count, 2u);
    EXPECT_DOUBLE_EQ(out.bins[0].bin_low, 1.0);
    EXPECT_DOUBLE_EQ(out.bins[0].bin_high, 2.0);
    EXPECT_DOUBLE_EQ(out.bins[1].mean_residual, 4.0);
    EXPECT_DOUBLE_EQ(out.bins[1].half_std, 0.5);
}

TEST(BinnedResiduals, SingleBinIsGlobalSummary) {
    const std::vector<double> inputs = {1.0, 3.0, 9.0};
    const std::vector<double> residuals = {2.0, 4.0, 6.0};
    const BinnedResiduals out = binned_residuals(inputs, residuals, 1);
    ASSERT_EQ(out.bins.size(), 1u);
    EXPECT_DOUBLE_EQ(out.bins[0].mean_residual, 4.0);
    // population std of {2,4,6} = sqrt(8/3)
    EXPECT_NEAR(out.bins[0].half_std, 0.5 * std::sqrt(8.0 / 3.0), 1e-12);
}

TEST(BinnedResiduals, CountsSumToNAndBinsAreOrdered) {
    std::mt19937_64 rng(21);
    std::vector<double> inputs(103), residuals(103);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        inputs[i] = std::exp(uniform(rng, 0.0, 5.0));
        residuals[i] = uniform(rng, -3.0, 3.0);
    }
    const BinnedResiduals out = binned_residuals(inputs, residuals, 10);
    std::size_t total = 0;
    double previous_high = 0.0;
    for (const ResidualBin& b : out.bins) {
        total += b.count;
        EXPECT_GE(b.bin_low, previous_high);
        EXPECT_LE(b.bin_low, b.bin_high);
        previous_high = b.bin_high;
    }
    EXPECT_EQ(total, inputs.size());
}

TEST(BinnedResiduals, ErrorPaths) {
    const std::vector<double> two = {1.0, 2.0};
    const std::vector<double> r2 = {0.0, 0.0};
    EXPECT_THROW(binned_residuals(two, r2, 3), TooFewPoints);
    const std::vector<double> nonpositive = {1.0, -2.0};
    EXPECT_THROW(binned_residuals(nonpositive, r2, 1), NonpositiveInput);
    const std::vector<double> r3 = {0.0, 0.0, 0.0};
    EXPECT_THROW(binned_residuals(two, r3, 1), LengthMismatch);
}

// ----------------------------------------------------------------- stand metrics

double cone_reference(const TreeRecord& r) {
    return M_PI / 12.0 * 500.0 * (*r.diameter_cm / 100.0) * (*r.diameter_cm / 100.0) *
           r.height_m;
}

TEST(StandRelativeError, SelfComparisonIsZero) {
    std::vector<TreeRecord> trees = {record(10, 100, 20), record(20, 500, 35)};
    EXPECT_DOUBLE_EQ(stand_relative_error(trees, cone_reference, cone_reference), 0.0);
}

TEST(StandRelativeError, ZeroPredictorGivesOne) {
    std::vector<TreeRecord> trees = {record(10, 100, 20), record(20, 500, 35)};
    auto zero = [](const TreeRecord&) { return 0.0; };
    EXPECT_DOUBLE_EQ(stand_relative_error(trees, zero, cone_reference), 1.0);
}

TEST(StandRelativeError, OffsettingErrorsCancel) {
    // reference totals [100, 300]; candidate [120, 280] -> (-20 + 20) / 400
    std::vector<TreeRecord> trees = {record(1, 1), record(2, 1)};
    auto reference = [](const TreeRecord& r) { return r.height_m == 1.0 ? 100.0 : 300.0; };
    auto candidate = [](const TreeRecord& r) { return r.height_m == 1.0 ? 120.0 : 280.0; };
    EXPECT_DOUBLE_EQ(stand_relative_error(trees, candidate, reference), 0.0);
}

TEST(StandRelativeError, EmptyPlotThrows) {
    std::vector<TreeRecord> none;
    auto zero = [](const TreeRecord&) { return 0.0; };
    EXPECT_THROW(stand_relative_error(none, zero, zero), EmptyPlot);
}

TEST(StandRelativeError, ConcatenationIsTotalWeightedCombination) {
    std::mt19937_64 rng(77);
    std::vector<TreeRecord> plot_a, plot_b;
    for (int i = 0; i < 12; ++i)
        plot_a.push_back(record(uniform(rng, 5, 40), 1.0, uniform(rng, 6, 80)));
    for (int i = 0; i < 7; ++i)
        plot_b.push_back(record(uniform(rng, 5, 40), 1.0, uniform(rng, 6, 80)));
    auto candidate = [](const TreeRecord& r) { return 12.0 * r.height_m; };

    auto total_ref = [&](const std::vector<TreeRecord>& trees) {
        double s = 0;
        for (const auto& t : trees) s += cone_reference(t);
        return s;
    };
    const double re_a = stand_relative_error(plot_a, candidate, cone_reference);
    const double re_b = stand_relative_error(plot_b, candidate, cone_reference);
    std::vector<TreeRecord> pooled = plot_a;
    pooled.insert(pooled.end(), plot_b.begin(), plot_b.end());
    const double re_pooled = stand_relative_error(pooled, candidate, cone_reference);

    const double ta = total_ref(plot_a), tb = total_ref(plot_b);
    EXPECT_NEAR(re_pooled, (re_a * ta + re_b * tb) / (ta + tb), 1e-12);
}

TEST(RelativeRmse, SelfComparisonIsZero) {
    std::vector<PlotGroup> plots = {{"a", {record(10, 1, 20), record(12, 1, 25)}},
                                    {"b", {record(8, 1, 15)}}};
    EXPECT_DOUBLE_EQ(relative_rmse(plots, cone_reference, cone_reference), 0.0);
}

TEST(RelativeRmse, SinglePlotHandCase) {
    // reference total 1000, candidate total 900 -> 100 / 1000
    std::vector<PlotGroup> plots = {{"only", {record(1, 1), record(2, 1)}}};
    auto reference = [](const TreeRecord& r) { return r.height_m == 1.0 ? 400.0 : 600.0; };
    auto candidate = [](const TreeRecord& r) { return r.height_m == 1.0 ? 350.0 : 550.0; };
    EXPECT_DOUBLE_EQ(relative_rmse(plots, candidate, reference), 0.10);
}

TEST(RelativeRmse, DenominatorSwitch) {
    std::vector<PlotGroup> plots = {{"a", {record(1, 1)}}, {"b", {record(2, 1)}}};
    auto reference = [](const TreeRecord& r) { return r.height_m == 1.0 ? 100.0 : 300.0; };
    auto candidate = [](const TreeRecord& r) { return r.height_m == 1.0 ? 90.0 : 290.0; };
    const double by_mean =
        relative_rmse(plots, candidate, reference, PctRmseDenominator::mean_total);
    const double by_sum =
        relative_rmse(plots, candidate, reference, PctRmseDenominator::sum_total);
    EXPECT_DOUBLE_EQ(by_mean, 10.0 / 200.0);
    EXPECT_DOUBLE_EQ(by_sum, 10.0 / 400.0);
}

TEST(RelativeRmse, EmptyInputsThrow) {
    auto zero = [](const TreeRecord&) { return 1.0; };
    std::vector<PlotGroup> none;
    EXPECT_THROW(relative_rmse(none, zero, zero), EmptyInput);
    std::vector<PlotGroup> with_empty = {{"a", {}}};
    EXPECT_THROW(relative_rmse(with_empty, zero, zero), EmptyPlot);
}

TEST(EvaluateStands, OverallReUsesPooledTrees) {
    std::vector<PlotGroup> plots = {{"a", {record(1, 1)}}, {"b", {record(2, 1)}}};
    auto reference = [](const TreeRecord& r) { return r.height_m == 1.0 ? 100.0 : 300.0; };
    auto candidate = [](const TreeRecord& r) { return r.height_m == 1.0 ? 50.0 : 330.0; };
    const StandReport report = evaluate_stands(plots, candidate, reference);
    ASSERT_EQ(report.per_plot_re.size(), 2u);
    EXPECT_DOUBLE_EQ(report.per_plot_re[0].second, 0.5);
    EXPECT_DOUBLE_EQ(report.per_plot_re[1].second, -0.1);
    // pooled: (50 - 30) / 400, not the average of 0.5 and -0.1
    EXPECT_DOUBLE_EQ(report.overall_re, 20.0 / 400.0);
}

}  // namespace
