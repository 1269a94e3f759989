#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "treebio/errors.hpp"

namespace treebio {

// ---------------------------------------------------------------------------
// Exact Gaussian process regression with a one-dimensional RBF kernel
// k(x, x') = exp(-(x - x')^2 / (2 l^2)), a constant mean offset b0, and
// homoscedastic noise sigma. The kernel has unit amplitude, so prior
// variance is 1 and posterior variances live in [0, 1].
//
// Training is an exact dense solve, O(n^3) per hyperparameter evaluation.
// The supported ceiling is the curated inventory scale (~8.3k records);
// there is no sparse or inducing-point approximation.
// ---------------------------------------------------------------------------

/// Axis transform applied elementwise to inputs (heights) and targets
/// (biomass) before regression. Log mode requires strictly positive values.
enum class Transform { raw, natural_log };

struct TransformSpec {
    Transform mode = Transform::natural_log;
};

inline const char* transform_label(Transform t) {
    return t == Transform::natural_log ? "log" : "raw";
}

namespace detail {

inline double forward_value(TransformSpec spec, double v, const char* axis) {
    if (spec.mode == Transform::natural_log) {
        if (!(v > 0.0))
            throw NonpositiveInput(std::string(axis) + " must be positive under log transform");
        return std::log(v);
    }
    return v;
}

inline std::vector<double> forward_values(TransformSpec spec, std::span<const double> v,
                                          const char* axis) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = forward_value(spec, v[i], axis);
    return out;
}

inline double inverse_target(TransformSpec spec, double v) {
    return spec.mode == Transform::natural_log ? std::exp(v) : v;
}

}  // namespace detail

struct GprHyperparams {
    double length_scale_l = 1.0;
    double mean_offset_b0 = 0.0;
    double noise_sigma = 0.0;
};

inline double rbf_kernel(double x, double x2, double l) {
    if (!(l > 0.0)) throw NonpositiveLengthScale(l);
    const double d = (x - x2) / l;
    return std::exp(-0.5 * d * d);
}

/// The three Gram blocks of the joint covariance over (train, query):
/// `train_noisy` is n x n with ones-plus-sigma^2 diagonal, `cross` is
/// m x n with cross[i][j] = k(query[i], train[j]), `query` is m x m.
struct GramMatrices {
    Eigen::MatrixXd train_noisy;
    Eigen::MatrixXd cross;
    Eigen::MatrixXd query;
};

inline GramMatrices build_gram(std::span<const double> train_x, std::span<const double> query_x,
                               const GprHyperparams& hyper) {
    if (train_x.empty()) throw EmptyTraining("build_gram: no training points");
    if (!(hyper.length_scale_l > 0.0)) throw NonpositiveLengthScale(hyper.length_scale_l);
    if (hyper.noise_sigma < 0.0) throw InputError("noise sigma must be nonnegative");

    const auto n = static_cast<Eigen::Index>(train_x.size());
    const auto m = static_cast<Eigen::Index>(query_x.size());
    const double l = hyper.length_scale_l;
    const double sigma2 = hyper.noise_sigma * hyper.noise_sigma;

    GramMatrices g;
    g.train_noisy.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        g.train_noisy(i, i) = 1.0 + sigma2;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double k = rbf_kernel(train_x[static_cast<std::size_t>(i)],
                                        train_x[static_cast<std::size_t>(j)], l);
            g.train_noisy(i, j) = k;
            g.train_noisy(j, i) = k;
        }
    }
    g.cross.resize(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            g.cross(i, j) = rbf_kernel(query_x[static_cast<std::size_t>(i)],
                                       train_x[static_cast<std::size_t>(j)], l);
    g.query.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        g.query(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double k = rbf_kernel(query_x[static_cast<std::size_t>(i)],
                                        query_x[static_cast<std::size_t>(j)], l);
            g.query(i, j) = k;
            g.query(j, i) = k;
        }
    }
    return g;
}

namespace detail {

inline Eigen::MatrixXd noisy_train_gram(std::span<const double> x, double l, double sigma,
                                        double jitter) {
    GprHyperparams hyper;
    hyper.length_scale_l = l;
    hyper.noise_sigma = sigma;
    Eigen::MatrixXd a = build_gram(x, {}, hyper).train_noisy;
    a.diagonal().array() += jitter;
    return a;
}

struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

/// Cholesky-factorizes K + sigma^2 I + jitter I, growing the jitter by
/// factors of 10 up to jitter_max when the factorization reports a
/// non-positive pivot. Duplicate heights are common in inventory data, so
/// the escalation path is routinely exercised.
inline Factorization factorize_noisy_gram(std::span<const double> x, double l, double sigma,
                                          double jitter_initial, double jitter_max) {
    double jitter = jitter_initial;
    for (;;) {
        Eigen::MatrixXd a = noisy_train_gram(x, l, sigma, jitter);
        Factorization f;
        f.llt.compute(a);
        f.jitter = jitter;
        if (f.llt.info() == Eigen::Success) return f;
        const double next = jitter == 0.0 ? 1e-8 : jitter * 10.0;
        if (next > jitter_max) throw FactorizationFailure(jitter);
        jitter = next;
    }
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

/// Negative log marginal likelihood up to the constant terms dropped by the
/// training loss, evaluated through a Cholesky factorization:
///   L(l, b0) = (y-b0)^T (K + sigma^2 I)^{-1} (y-b0) + log det(K + sigma^2 I).
inline double marginal_loss_cholesky(double l, double b0, std::span<const double> x,
                                     std::span<const double> y, double sigma,
                                     double jitter = 0.0) {
    if (x.size() != y.size()) throw LengthMismatch(x.size(), y.size());
    Eigen::MatrixXd a = detail::noisy_train_gram(x, l, sigma, jitter);
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw FactorizationFailure(jitter);
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(y.data(),
                                                          static_cast<Eigen::Index>(y.size()));
    r.array() -= b0;
    const Eigen::VectorXd alpha = llt.solve(r);
    return r.dot(alpha) + detail::log_det_from_llt(llt);
}

/// Same loss in its spectral form: with k_i the eigenvalues of K (noise
/// free) and beta the components of y - b0 in the eigenbasis of K,
///   L(l, b0) = sum_i beta_i^2 / (k_i + sigma^2) + log(k_i + sigma^2).
/// Both routes agree because K + sigma^2 I shares K's eigenvectors.
inline double marginal_loss_eigen(double l, double b0, std::span<const double> x,
                                  std::span<const double> y, double sigma, double jitter = 0.0) {
    if (x.size() != y.size()) throw LengthMismatch(x.size(), y.size());
    Eigen::MatrixXd k = detail::noisy_train_gram(x, l, 0.0, jitter);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
    if (eig.info() != Eigen::Success) throw FactorizationFailure(jitter);
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(y.data(),
                                                          static_cast<Eigen::Index>(y.size()));
    r.array() -= b0;
    const Eigen::VectorXd beta = eig.eigenvectors().transpose() * r;
    const double sigma2 = sigma * sigma;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < beta.size(); ++i) {
        const double denom = eig.eigenvalues()(i) + sigma2;
        if (!(denom > 0.0)) throw FactorizationFailure(jitter);
        loss += beta(i) * beta(i) / denom + std::log(denom);
    }
    return loss;
}

/// Default loss route used by the optimizer.
inline double nll(double l, double b0, std::span<const double> x, std::span<const double> y,
                  double sigma, double jitter = 0.0) {
    return marginal_loss_cholesky(l, b0, x, y, sigma, jitter);
}

/// Deterministic two-stage hyperparameter search: a log-spaced grid over
/// l in [grid_low_factor, grid_high_factor] x range(x) with b0 solved in
/// closed form per l, followed by step-halving descent on log(l).
struct SearchConfig {
    int grid_points = 25;
    double grid_low_factor = 0.01;
    double grid_high_factor = 10.0;
    double refine_tolerance = 1e-8;  // relative nll change that stops refinement
    int refine_max_iterations = 100;
    double jitter_initial = 1e-8;
    double jitter_max = 1e-2;
};

/// A trained GP. Immutable after construction; safe for concurrent
/// predict_gpr calls. The cached factorization is of K + sigma^2 I plus the
/// jitter recorded in jitter_used.
struct GprModel {
    std::vector<double> train_x;  // transformed inputs
    std::vector<double> train_y;  // transformed targets
    GprHyperparams hyper;
    TransformSpec transform;
    double jitter_used = 0.0;
    double refine_final_step = 0.0;  // log-space step at search termination
    Eigen::LLT<Eigen::MatrixXd> factorization;
    Eigen::VectorXd alpha;  // (K + sigma^2 I)^{-1} (y - b0)
};

struct GprPrediction {
    std::vector<double> mean;             // target units after inverse transform
    std::vector<double> latent_mean;      // posterior mean in transformed space
    std::vector<double> latent_variance;  // diagonal of the posterior covariance
    Eigen::MatrixXd covariance;           // full posterior covariance when requested
    std::vector<double> query_x;          // transformed query inputs
};

namespace detail {

struct LossAtScale {
    double nll = std::numeric_limits<double>::infinity();
    double b0 = 0.0;
    double jitter = 0.0;
};

/// Evaluates the loss at fixed l with b0 at its closed-form optimum.
/// b0 only enters the quadratic term, which is minimized by the
/// generalized mean b0 = (1^T A^{-1} y) / (1^T A^{-1} 1) with A the noisy
/// Gram matrix; one factorization serves both solves.
inline LossAtScale eval_scale(std::span<const double> x, std::span<const double> y, double l,
                              double sigma, const SearchConfig& cfg) {
    auto fac = factorize_noisy_gram(x, l, sigma, cfg.jitter_initial, cfg.jitter_max);
    const auto n = static_cast<Eigen::Index>(x.size());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    const Eigen::VectorXd u = fac.llt.solve(ones);
    const Eigen::VectorXd v = fac.llt.solve(yv);

    LossAtScale out;
    out.jitter = fac.jitter;
    out.b0 = u.dot(yv) / u.dot(ones);
    const Eigen::VectorXd alpha = v - out.b0 * u;
    const Eigen::VectorXd r = yv.array() - out.b0;
    out.nll = r.dot(alpha) + log_det_from_llt(fac.llt);
    return out;
}

}  // namespace detail

/// Builds a usable model from known hyperparameters and *transformed*
/// training arrays (no search). Used by the persistence loader and by tests
/// that pin (l, b0, sigma) directly.
inline GprModel make_gpr_model_from_transformed(std::vector<double> train_x,
                                                std::vector<double> train_y,
                                                const GprHyperparams& hyper,
                                                TransformSpec transform = {},
                                                double jitter_initial = 1e-8,
                                                double jitter_max = 1e-2) {
    if (train_x.size() != train_y.size()) throw LengthMismatch(train_x.size(), train_y.size());
    if (train_x.empty()) throw EmptyTraining("gpr: no training points");

    GprModel model;
    model.train_x = std::move(train_x);
    model.train_y = std::move(train_y);
    model.hyper = hyper;
    model.transform = transform;

    auto fac = detail::factorize_noisy_gram(model.train_x, hyper.length_scale_l,
                                            hyper.noise_sigma, jitter_initial, jitter_max);
    model.jitter_used = fac.jitter;
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(
        model.train_y.data(), static_cast<Eigen::Index>(model.train_y.size()));
    r.array() -= hyper.mean_offset_b0;
    model.alpha = fac.llt.solve(r);
    model.factorization = std::move(fac.llt);
    return model;
}

/// Same, but taking raw-unit training data and applying the transform.
inline GprModel make_gpr_model(std::span<const double> x, std::span<const double> y,
                               const GprHyperparams& hyper, TransformSpec transform = {},
                               double jitter_initial = 1e-8, double jitter_max = 1e-2) {
    return make_gpr_model_from_transformed(detail::forward_values(transform, x, "gpr input"),
                                           detail::forward_values(transform, y, "gpr target"),
                                           hyper, transform, jitter_initial, jitter_max);
}

/// Fits (l, b0) by minimizing the marginal-likelihood loss. sigma is a fixed
/// configuration value, not optimized. Deterministic given the config.
inline GprModel fit_gpr(std::span<const double> x, std::span<const double> y, double sigma,
                        const SearchConfig& cfg = {}, TransformSpec transform = {}) {
    if (x.size() != y.size()) throw LengthMismatch(x.size(), y.size());
    if (x.size() < 2) throw EmptyTraining("fit_gpr: need at least 2 training points");
    if (sigma < 0.0) throw InputError("noise sigma must be nonnegative");
    if (cfg.grid_points < 1) throw SearchRangeInvalid("grid_points must be >= 1");
    if (!(cfg.grid_low_factor > 0.0) || !(cfg.grid_high_factor > cfg.grid_low_factor))
        throw SearchRangeInvalid("grid factors must satisfy 0 < low < high");
    if (!(cfg.refine_tolerance > 0.0) || cfg.refine_max_iterations < 0)
        throw SearchRangeInvalid("refinement settings invalid");

    const std::vector<double> tx = detail::forward_values(transform, x, "gpr input");
    const std::vector<double> ty = detail::forward_values(transform, y, "gpr target");

    const auto [min_it, max_it] = std::minmax_element(tx.begin(), tx.end());
    double range = *max_it - *min_it;
    if (range == 0.0) {
        if (sigma == 0.0 && cfg.jitter_initial == 0.0)
            throw DegenerateData("all inputs identical with zero noise and zero jitter");
        range = 1.0;  // duplicate-only inputs: fall back to a unit search scale
    }

    const double log_lo = std::log(cfg.grid_low_factor * range);
    const double log_hi = std::log(cfg.grid_high_factor * range);
    const double grid_step =
        cfg.grid_points > 1 ? (log_hi - log_lo) / (cfg.grid_points - 1) : (log_hi - log_lo);

    double best_log_l = log_lo;
    detail::LossAtScale best;
    for (int i = 0; i < cfg.grid_points; ++i) {
        const double log_l = log_lo + grid_step * i;
        const auto eval = detail::eval_scale(tx, ty, std::exp(log_l), sigma, cfg);
        if (eval.nll < best.nll) {
            best = eval;
            best_log_l = log_l;
        }
    }

    // Step-halving descent on log(l); b0 stays at its closed-form optimum.
    // Terminates once the nll change across a step falls below the relative
    // tolerance, whether or not that step is an improvement.
    double step = grid_step > 0.0 ? grid_step : std::log(10.0);
    for (int iter = 0; iter < cfg.refine_max_iterations; ++iter) {
        const auto up = detail::eval_scale(tx, ty, std::exp(best_log_l + step), sigma, cfg);
        const auto down = detail::eval_scale(tx, ty, std::exp(best_log_l - step), sigma, cfg);
        const bool up_better = up.nll <= down.nll;
        const auto& cand = up_better ? up : down;
        const double rel = std::abs(best.nll - cand.nll) / std::max(1.0, std::abs(best.nll));
        if (cand.nll < best.nll) {
            best_log_l += up_better ? step : -step;
            best = cand;
            if (rel < cfg.refine_tolerance) break;
        } else {
            if (rel < cfg.refine_tolerance) break;
            step *= 0.5;
            if (step < 1e-15) break;
        }
    }

    GprHyperparams hyper;
    hyper.length_scale_l = std::exp(best_log_l);
    hyper.mean_offset_b0 = best.b0;
    hyper.noise_sigma = sigma;

    GprModel model = make_gpr_model_from_transformed(tx, ty, hyper, transform,
                                                     best.jitter, cfg.jitter_max);
    model.refine_final_step = step;
    return model;
}

/// Posterior mean and covariance at the query points:
///   mean = b0 + kappa (K + sigma^2 I)^{-1} (y - b0)
///   cov  = K_hat - kappa (K + sigma^2 I)^{-1} kappa^T
/// Under the log transform the returned mean is exp of the log-space mean
/// with no lognormal variance correction; the log-space moments are exposed
/// alongside. Query inputs are in raw units.
inline GprPrediction predict_gpr(const GprModel& model, std::span<const double> query_x,
                                 bool want_full_cov = false) {
    GprPrediction pred;
    pred.query_x = detail::forward_values(model.transform, query_x, "gpr query input");
    const auto m = static_cast<Eigen::Index>(pred.query_x.size());
    if (m == 0) return pred;

    const GprHyperparams& hyper = model.hyper;
    pred.mean.resize(static_cast<std::size_t>(m));
    pred.latent_mean.resize(static_cast<std::size_t>(m));
    pred.latent_variance.resize(static_cast<std::size_t>(m));

    if (want_full_cov) {
        GramMatrices gram = build_gram(model.train_x, pred.query_x, hyper);
        const Eigen::VectorXd latent_mean =
            (gram.cross * model.alpha).array() + hyper.mean_offset_b0;
        // V = L^{-1} kappa^T, so kappa A^{-1} kappa^T = V^T V.
        const Eigen::MatrixXd v =
            model.factorization.matrixL().solve(gram.cross.transpose());
        pred.covariance = gram.query - v.transpose() * v;
        // symmetrize away factorization round-off
        pred.covariance = ((pred.covariance + pred.covariance.transpose()) * 0.5).eval();
        for (Eigen::Index i = 0; i < m; ++i) {
            pred.latent_mean[static_cast<std::size_t>(i)] = latent_mean(i);
            pred.mean[static_cast<std::size_t>(i)] =
                detail::inverse_target(model.transform, latent_mean(i));
            pred.latent_variance[static_cast<std::size_t>(i)] = pred.covariance(i, i);
        }
        return pred;
    }

    // diagonal-only path, chunked: never materializes the m x m query block
    const auto n = static_cast<Eigen::Index>(model.train_x.size());
    const double l = hyper.length_scale_l;
    constexpr Eigen::Index kChunk = 512;
    Eigen::MatrixXd cross_t(n, std::min(kChunk, m));  // kappa^T for one chunk
    for (Eigen::Index start = 0; start < m; start += kChunk) {
        const Eigen::Index width = std::min(kChunk, m - start);
        for (Eigen::Index c = 0; c < width; ++c)
            for (Eigen::Index j = 0; j < n; ++j)
                cross_t(j, c) = rbf_kernel(pred.query_x[static_cast<std::size_t>(start + c)],
                                           model.train_x[static_cast<std::size_t>(j)], l);
        const auto block = cross_t.leftCols(width);
        const Eigen::VectorXd mean_chunk =
            (block.transpose() * model.alpha).array() + hyper.mean_offset_b0;
        const Eigen::MatrixXd v = model.factorization.matrixL().solve(block);
        for (Eigen::Index c = 0; c < width; ++c) {
            const auto out = static_cast<std::size_t>(start + c);
            pred.latent_mean[out] = mean_chunk(c);
            pred.mean[out] = detail::inverse_target(model.transform, mean_chunk(c));
            pred.latent_variance[out] = 1.0 - v.col(c).squaredNorm();
        }
    }
    return pred;
}

}  // namespace treebio
