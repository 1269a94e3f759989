#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>

#include "treebio/errors.hpp"
#include "treebio/tree_record.hpp"

namespace treebio {

// ---------------------------------------------------------------------------
// Log-log linear allometric models, fitted by ordinary least squares:
//
//   LR_HCD : ln B = a ln(H * CD) + b     (single slope on the product)
//   LR2_H  : ln B = a ln H + b
//   LR3_HD : ln B = a ln H + b ln D + c
//   LR_D   : ln B = a ln D + b           (diameter-only variant)
//
// The intercept is always the final coefficient internally; the kind keeps
// the per-model labels (b vs c) straight in reports. Predictions are exp of
// the fitted log-space value with no lognormal correction.
// ---------------------------------------------------------------------------

enum class AllometryKind { lr_hcd, lr2_h, lr3_hd, lr_d };

inline const char* allometry_label(AllometryKind k) {
    switch (k) {
        case AllometryKind::lr_hcd: return "lr_hcd";
        case AllometryKind::lr2_h: return "lr2_h";
        case AllometryKind::lr3_hd: return "lr3_hd";
        case AllometryKind::lr_d: return "lr_d";
    }
    return "?";
}

struct LogLinearModel {
    AllometryKind kind = AllometryKind::lr2_h;
    double coef_a = 0.0;          // first slope
    double coef_b = 0.0;          // second slope (LR3) or intercept (2-param kinds)
    double coef_c = 0.0;          // intercept (LR3); zero otherwise
    double residual_sigma = 0.0;  // root mean squared log residual, population form
    std::size_t n_train = 0;
};

namespace detail {

inline std::size_t slope_count(AllometryKind kind) {
    return kind == AllometryKind::lr3_hd ? 2 : 1;
}

inline double require_positive(std::optional<double> v, AllometryKind kind, const char* field) {
    if (!v) throw MissingField(allometry_label(kind), field);
    if (!(*v > 0.0))
        throw NonpositiveInput(std::string(allometry_label(kind)) + ": field '" + field +
                               "' must be positive");
    return *v;
}

/// Log-space regressor values for one input set, in design-matrix order.
inline Eigen::VectorXd log_regressors(AllometryKind kind, const PredictorInputs& in) {
    Eigen::VectorXd row(slope_count(kind));
    switch (kind) {
        case AllometryKind::lr_hcd: {
            const double h = require_positive(in.height_m, kind, "h_m");
            const double cd = require_positive(in.crown_diameter_m, kind, "cd_m");
            row(0) = std::log(h * cd);
            break;
        }
        case AllometryKind::lr2_h:
            row(0) = std::log(require_positive(in.height_m, kind, "h_m"));
            break;
        case AllometryKind::lr3_hd:
            row(0) = std::log(require_positive(in.height_m, kind, "h_m"));
            row(1) = std::log(require_positive(in.diameter_cm, kind, "d_cm"));
            break;
        case AllometryKind::lr_d:
            row(0) = std::log(require_positive(in.diameter_cm, kind, "d_cm"));
            break;
    }
    return row;
}

}  // namespace detail

/// Ordinary least squares in log-log space. Fitting uses the units stored on
/// the records (DBH in cm); unit changes shift only the intercept.
inline LogLinearModel fit_loglinear(AllometryKind kind, const Dataset& dataset) {
    const std::size_t p = detail::slope_count(kind);
    const std::size_t n = dataset.records.size();
    if (n < p + 1)
        throw RankDeficient("fit_loglinear: need at least " + std::to_string(p + 1) +
                            " records, got " + std::to_string(n));

    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
    Eigen::VectorXd target(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const TreeRecord& r = dataset.records[i];
        if (!(r.biomass_kg > 0.0))
            throw NonpositiveInput("fit_loglinear: biomass must be positive");
        design.row(static_cast<Eigen::Index>(i)).head(static_cast<Eigen::Index>(p)) =
            detail::log_regressors(kind, PredictorInputs::from_record(r));
        design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = 1.0;
        target(static_cast<Eigen::Index>(i)) = std::log(r.biomass_kg);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < static_cast<Eigen::Index>(p + 1))
        throw RankDeficient("fit_loglinear: collinear log-space design");
    const Eigen::VectorXd coef = qr.solve(target);

    LogLinearModel model;
    model.kind = kind;
    model.n_train = n;
    if (kind == AllometryKind::lr3_hd) {
        model.coef_a = coef(0);
        model.coef_b = coef(1);
        model.coef_c = coef(2);
    } else {
        model.coef_a = coef(0);
        model.coef_b = coef(1);
    }
    const Eigen::VectorXd residual = target - design * coef;
    model.residual_sigma = std::sqrt(residual.squaredNorm() / static_cast<double>(n));
    return model;
}

inline double predict_loglinear(const LogLinearModel& model, const PredictorInputs& inputs) {
    const Eigen::VectorXd reg = detail::log_regressors(model.kind, inputs);
    double log_b;
    if (model.kind == AllometryKind::lr3_hd)
        log_b = model.coef_a * reg(0) + model.coef_b * reg(1) + model.coef_c;
    else
        log_b = model.coef_a * reg(0) + model.coef_b;
    return std::exp(log_b);
}

inline double predict_loglinear(const LogLinearModel& model, const TreeRecord& record) {
    return predict_loglinear(model, PredictorInputs::from_record(record));
}

}  // namespace treebio
