#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "support.hpp"
#include "treebio/allometry.hpp"

using namespace treebio;
using testsupport::gaussian;
using testsupport::record;
using testsupport::uniform;

namespace {

Dataset dataset_from(std::vector<TreeRecord> records) {
    Dataset d;
    d.records = std::move(records);
    return d;
}

// ln(pi * 500 / 12), the cone-law intercept with density 500 kg/m^3 and
// both lengths in meters
constexpr double kConeIntercept = 4.8744313344835914;

TEST(FitLogLinear, NoiselessHeightPowerLawIsExact) {
    // ln B = 2 ln H + 1
    std::vector<TreeRecord> records;
    for (double h : {2.0, 3.5, 5.0, 8.0, 13.0, 21.0})
        records.push_back(record(h, std::exp(2.0 * std::log(h) + 1.0)));
    const LogLinearModel m = fit_loglinear(AllometryKind::lr2_h, dataset_from(records));
    EXPECT_NEAR(m.coef_a, 2.0, 1e-10);
    EXPECT_NEAR(m.coef_b, 1.0, 1e-10);
    EXPECT_DOUBLE_EQ(m.coef_c, 0.0);
    EXPECT_LE(m.residual_sigma, 1e-10);
    EXPECT_EQ(m.n_train, records.size());
}

TEST(FitLogLinear, ConeLawRecoversSlopesAndIntercept) {
    // B = (pi/12) * rho * D^2 * H with rho = 500 kg/m^3; both H and D are in
    // meters here, converted explicitly before fitting (the d_cm slot holds
    // meters for this brute-force fixture)
    std::mt19937_64 rng(101);
    std::vector<TreeRecord> records;
    for (int i = 0; i < 50; ++i) {
        const double h = uniform(rng, 2.0, 40.0);
        const double d_m = uniform(rng, 0.05, 1.5);
        const double b = M_PI / 12.0 * 500.0 * d_m * d_m * h;
        records.push_back(record(h, b, d_m));
    }
    const LogLinearModel m = fit_loglinear(AllometryKind::lr3_hd, dataset_from(records));
    EXPECT_NEAR(m.coef_a, 1.0, 1e-8);
    EXPECT_NEAR(m.coef_b, 2.0, 1e-8);
    EXPECT_NEAR(m.coef_c, kConeIntercept, 1e-8);
    EXPECT_LE(m.residual_sigma, 1e-9);
}

TEST(FitLogLinear, ProductRegressorUsesSingleSlope) {
    // ln B = 1.5 ln(H * CD) + 0.25, exactly representable by LR_HCD
    std::vector<TreeRecord> records;
    for (double h : {3.0, 6.0, 9.0, 14.0}) {
        const double cd = 0.4 * h + 1.0;
        records.push_back(
            record(h, std::exp(1.5 * std::log(h * cd) + 0.25), std::nullopt, cd));
    }
    const LogLinearModel m = fit_loglinear(AllometryKind::lr_hcd, dataset_from(records));
    EXPECT_NEAR(m.coef_a, 1.5, 1e-10);
    EXPECT_NEAR(m.coef_b, 0.25, 1e-10);
}

TEST(FitLogLinear, DiameterOnlyVariant) {
    std::vector<TreeRecord> records;
    for (double d : {6.0, 11.0, 17.0, 30.0, 55.0})
        records.push_back(record(10.0, std::exp(2.4 * std::log(d) - 1.2), d));
    const LogLinearModel m = fit_loglinear(AllometryKind::lr_d, dataset_from(records));
    EXPECT_NEAR(m.coef_a, 2.4, 1e-10);
    EXPECT_NEAR(m.coef_b, -1.2, 1e-10);
}

TEST(FitLogLinear, ErrorPaths) {
    // missing crown diameter for LR_HCD
    const Dataset no_cd = dataset_from({record(5, 10), record(7, 20), record(9, 30)});
    EXPECT_THROW(fit_loglinear(AllometryKind::lr_hcd, no_cd), MissingField);

    // missing diameter for LR3
    EXPECT_THROW(fit_loglinear(AllometryKind::lr3_hd, no_cd), MissingField);

    // collinear design: H and D in lockstep makes ln H and ln D collinear
    std::vector<TreeRecord> collinear;
    for (double h : {2.0, 4.0, 8.0, 16.0}) collinear.push_back(record(h, h * h, 3.0 * h));
    EXPECT_THROW(fit_loglinear(AllometryKind::lr3_hd, dataset_from(collinear)), RankDeficient);

    // too few records for the parameter count
    EXPECT_THROW(fit_loglinear(AllometryKind::lr2_h, dataset_from({record(5, 10)})),
                 RankDeficient);

    // nonpositive height rejected at fit time
    Dataset bad = dataset_from({record(5, 10), record(7, 20)});
    bad.records[0].height_m = -5.0;
    EXPECT_THROW(fit_loglinear(AllometryKind::lr2_h, bad), NonpositiveInput);
}

TEST(PredictLogLinear, IdentityCoefficients) {
    LogLinearModel m;
    m.kind = AllometryKind::lr2_h;
    m.coef_a = 1.0;
    m.coef_b = 0.0;
    EXPECT_NEAR(predict_loglinear(m, record(7.0, 1.0)), 7.0, 1e-12);
}

TEST(PredictLogLinear, ConeFormulaPointPrediction) {
    LogLinearModel m;
    m.kind = AllometryKind::lr3_hd;
    m.coef_a = 1.0;
    m.coef_b = 2.0;
    m.coef_c = kConeIntercept;
    // H = 20 m, D = 0.3 m -> (pi/12) * 500 * 0.09 * 20
    EXPECT_NEAR(predict_loglinear(m, record(20.0, 1.0, 0.3)), 235.61944901923448, 1e-9);
}

TEST(PredictLogLinear, RoundTripsNoiselessTrainingPoints) {
    std::vector<TreeRecord> records;
    for (double h : {4.0, 7.0, 12.0, 19.0, 31.0})
        records.push_back(record(h, std::exp(1.8 * std::log(h) - 0.4)));
    const Dataset d = dataset_from(records);
    const LogLinearModel m = fit_loglinear(AllometryKind::lr2_h, d);
    for (const TreeRecord& r : d.records)
        EXPECT_NEAR(predict_loglinear(m, r) / r.biomass_kg, 1.0, 1e-8);
}

TEST(PredictLogLinear, ErrorPaths) {
    LogLinearModel m;
    m.kind = AllometryKind::lr3_hd;
    EXPECT_THROW(predict_loglinear(m, record(5.0, 1.0)), MissingField);
    PredictorInputs bad;
    bad.height_m = -2.0;
    bad.diameter_cm = 10.0;
    EXPECT_THROW(predict_loglinear(m, bad), NonpositiveInput);
}

TEST(FitLogLinear, ResidualsOrthogonalToDesignColumns) {
    std::mt19937_64 rng(555);
    std::vector<TreeRecord> records;
    for (int i = 0; i < 80; ++i) {
        const double h = uniform(rng, 2.0, 50.0);
        const double d = uniform(rng, 5.0, 120.0);
        const double b =
            std::exp(0.9 * std::log(h) + 1.7 * std::log(d) - 2.0 + 0.3 * gaussian(rng));
        records.push_back(record(h, b, d));
    }
    const Dataset data = dataset_from(records);
    const LogLinearModel m = fit_loglinear(AllometryKind::lr3_hd, data);

    double dot_h = 0, dot_d = 0, dot_1 = 0, norm = 0;
    for (const TreeRecord& r : data.records) {
        const double res = std::log(r.biomass_kg) -
                           (m.coef_a * std::log(r.height_m) +
                            m.coef_b * std::log(*r.diameter_cm) + m.coef_c);
        dot_h += res * std::log(r.height_m);
        dot_d += res * std::log(*r.diameter_cm);
        dot_1 += res;
        norm += res * res;
    }
    const double scale = std::sqrt(norm) * std::sqrt(static_cast<double>(records.size()));
    EXPECT_LE(std::abs(dot_h) / scale, 1e-8);
    EXPECT_LE(std::abs(dot_d) / scale, 1e-8);
    EXPECT_LE(std::abs(dot_1) / scale, 1e-8);
}

TEST(FitLogLinear, CoefficientsConvergeAsNoiseShrinks) {
    std::mt19937_64 rng(777);
    const int n = 60;
    std::vector<double> heights(n), noise(n);
    for (int i = 0; i < n; ++i) {
        heights[i] = uniform(rng, 2.0, 45.0);
        noise[i] = gaussian(rng);
    }
    double previous = std::numeric_limits<double>::infinity();
    for (double amplitude : {1e-2, 1e-4, 1e-6}) {
        std::vector<TreeRecord> records;
        for (int i = 0; i < n; ++i) {
            const double log_b = 2.0 * std::log(heights[i]) + 1.0 + amplitude * noise[i];
            records.push_back(record(heights[i], std::exp(log_b)));
        }
        const LogLinearModel m = fit_loglinear(AllometryKind::lr2_h, dataset_from(records));
        const double perturbation = std::abs(m.coef_a - 2.0) + std::abs(m.coef_b - 1.0);
        EXPECT_LT(perturbation, previous);
        previous = perturbation;
    }
    EXPECT_LT(previous, 1e-6);
}

TEST(FitLogLinear, HeightRescalingShiftsOnlyIntercept) {
    std::mt19937_64 rng(888);
    std::vector<TreeRecord> records;
    for (int i = 0; i < 40; ++i) {
        const double h = uniform(rng, 3.0, 35.0);
        records.push_back(record(h, std::exp(1.6 * std::log(h) + 0.8 + 0.2 * gaussian(rng))));
    }
    const LogLinearModel base = fit_loglinear(AllometryKind::lr2_h, dataset_from(records));

    const double s = 3.5;
    std::vector<TreeRecord> scaled = records;
    for (TreeRecord& r : scaled) r.height_m *= s;
    const LogLinearModel rescaled = fit_loglinear(AllometryKind::lr2_h, dataset_from(scaled));

    EXPECT_NEAR(rescaled.coef_a, base.coef_a, 1e-10);
    EXPECT_NEAR(rescaled.coef_b, base.coef_b - base.coef_a * std::log(s), 1e-10);
}

}  // namespace
