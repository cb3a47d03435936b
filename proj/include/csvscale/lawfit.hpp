#ifndef CSVSCALE_LAWFIT_HPP
#define CSVSCALE_LAWFIT_HPP

// Sigmoid downstream law
//
//   A(C) = gamma + (1 - gamma) / (1 + exp(-alpha (C - beta)))
//
// and least-squares estimation of (alpha, beta) with gamma held fixed, using
// Levenberg-Marquardt with Marquardt's diagonal scaling of the damping term.
// The diagonal scaling makes every iterate equivariant under an affine
// rescaling of the scores, which the optimizer relies on for its epoch-0
// equivalence with the all-token baseline.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csvscale/errors.hpp"

namespace csvscale {

struct ScalingLawParams {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

struct LmFitConfig {
    double damping_init = 1e-3;
    double damping_up = 10.0;
    double damping_down = 10.0;
    std::size_t max_iters = 200;
    double param_tol = 1e-10;
    double mse_rel_tol = 1e-12;

    void validate() const {
        if (!(damping_init > 0) || !(damping_up > 0) || !(damping_down > 0) || !(param_tol > 0) ||
            !(mse_rel_tol > 0))
            throw ValidationError("LM config values must be positive");
        if (max_iters < 1) throw ValidationError("LM max_iters must be >= 1");
    }
};

struct LmFitResult {
    ScalingLawParams params;
    double mse = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t below_gamma = 0;  // observations under the random-guess floor
    std::vector<double> accepted_mse;  // MSE after the start and after each accepted step
};

/// Logistic function, evaluated without overflow for any finite z.
inline double logistic(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double predict_accuracy(const ScalingLawParams& p, double score) {
    return p.gamma + (1.0 - p.gamma) * logistic(p.alpha * (score - p.beta));
}

/// dA/dC at `score`.
inline double accuracy_slope(const ScalingLawParams& p, double score) {
    const double s = logistic(p.alpha * (score - p.beta));
    return (1.0 - p.gamma) * p.alpha * s * (1.0 - s);
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline double law_mse(const ScalingLawParams& p, std::span<const double> scores,
                       std::span<const double> observed) {
    double sse = 0.0;
    for (std::size_t m = 0; m < scores.size(); ++m) {
        const double r = predict_accuracy(p, scores[m]) - observed[m];
        sse += r * r;
    }
    return scores.empty() ? 0.0 : sse / static_cast<double>(scores.size());
}

namespace detail {

inline void check_fit_inputs(std::span<const double> scores, std::span<const double> observed,
                             double gamma) {
    if (scores.size() != observed.size())
        throw ValidationError("fit: " + std::to_string(scores.size()) + " scores but " +
                              std::to_string(observed.size()) + " observations");
    if (scores.size() < 3)
        throw FitError("fit: need at least 3 models, got " + std::to_string(scores.size()));
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("fit: gamma must lie in [0,1)");
    for (std::size_t m = 0; m < scores.size(); ++m)
        if (!std::isfinite(scores[m]) || !std::isfinite(observed[m]))
            throw ValidationError("fit: non-finite score or observation at model " +
                                  std::to_string(m));
    const auto [smin, smax] = std::minmax_element(scores.begin(), scores.end());
    if (*smax - *smin <= 0.0)
        throw FitError("fit: unidentifiable, all capability scores are equal");
    const auto [omin, omax] = std::minmax_element(observed.begin(), observed.end());
    if (*omax - *omin <= 0.0)
        throw FitError("fit: unidentifiable, all observed accuracies are equal");
}

}  // namespace detail

/// Fits (alpha, beta) by Levenberg-Marquardt. Default start: alpha = -4/range,
/// beta = median(scores). Returns the lowest-MSE parameters encountered;
/// `converged` is false when max_iters ran out first.
inline LmFitResult fit_levenberg_marquardt(std::span<const double> scores,
                                           std::span<const double> observed, double gamma,
                                           const LmFitConfig& config = {},
                                           std::optional<std::pair<double, double>> init = {}) {
    config.validate();
    detail::check_fit_inputs(scores, observed, gamma);
    const std::size_t n = scores.size();
    const auto [smin, smax] = std::minmax_element(scores.begin(), scores.end());

    LmFitResult res;
    for (double a : observed)
        if (a < gamma) ++res.below_gamma;

    ScalingLawParams p{-4.0 / (*smax - *smin),
                       median(std::vector<double>(scores.begin(), scores.end())), gamma};
    if (init) {
        p.alpha = init->first;
        p.beta = init->second;
    }
    auto sse_at = [&](const ScalingLawParams& q) {
        double sse = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            const double r = predict_accuracy(q, scores[m]) - observed[m];
            sse += r * r;
        }
        return sse;
    };

    double sse = sse_at(p);
    if (!std::isfinite(sse)) throw FitError("fit: non-finite objective at the initial point");
    res.accepted_mse.push_back(sse / static_cast<double>(n));
    double lambda = config.damping_init;
    constexpr double kMaxDamping = 1e16;

    for (std::size_t iter = 1; iter <= config.max_iters && !res.converged; ++iter) {
        res.iterations = iter;
        // Normal equations of the linearized residuals.
        double jaa = 0, jab = 0, jbb = 0, ga = 0, gb = 0;
        for (std::size_t m = 0; m < n; ++m) {
            const double d = scores[m] - p.beta;
            const double s = logistic(p.alpha * d);
            const double ds = (1.0 - gamma) * s * (1.0 - s);
            const double da = ds * d;
            const double db = -ds * p.alpha;
            const double r = p.gamma + (1.0 - gamma) * s - observed[m];
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        if (ga == 0.0 && gb == 0.0) {
            res.converged = true;
            break;
        }
        const double da_scale = jaa > 0 ? jaa : 1.0;
        const double db_scale = jbb > 0 ? jbb : 1.0;
        bool accepted = false;
        while (!accepted && lambda <= kMaxDamping) {
            const double maa = jaa + lambda * da_scale;
            const double mbb = jbb + lambda * db_scale;
            const double det = maa * mbb - jab * jab;
            if (!(det > 0) || !std::isfinite(det)) {
                lambda *= config.damping_up;
                continue;
            }
            const double step_a = -(mbb * ga - jab * gb) / det;
            const double step_b = -(maa * gb - jab * ga) / det;
            const ScalingLawParams trial{p.alpha + step_a, p.beta + step_b, gamma};
            const double trial_sse = sse_at(trial);
            if (std::isfinite(trial_sse) && trial_sse < sse) {
                const double drop = sse - trial_sse;
                // Both thresholds scale with the score axis.
                const bool small_step =
                    std::abs(step_a) <= config.param_tol * std::abs(p.alpha) &&
                    std::abs(step_b) <=
                        config.param_tol * (std::abs(p.beta) + 1.0 / std::abs(p.alpha));
                p = trial;
                sse = trial_sse;
                res.accepted_mse.push_back(sse / static_cast<double>(n));
                lambda /= config.damping_down;
                accepted = true;
                if (small_step || drop <= config.mse_rel_tol * (sse + drop) || sse == 0.0)
                    res.converged = true;
            } else {
                lambda *= config.damping_up;
            }
        }
        // No damping level reduces the objective: stationary to working precision.
        if (!accepted) res.converged = true;
    }
    res.params = p;
    res.mse = sse / static_cast<double>(n);
    return res;
}

/// Runs the fit from alpha0 = -4/range and +4/range (beta0 = median) and keeps
/// the lower-MSE result; ties go to the negative start.
inline LmFitResult fit_multistart(std::span<const double> scores, std::span<const double> observed,
                                  double gamma, const LmFitConfig& config = {}) {
    detail::check_fit_inputs(scores, observed, gamma);
    const auto [smin, smax] = std::minmax_element(scores.begin(), scores.end());
    const double a0 = 4.0 / (*smax - *smin);
    const double b0 = median(std::vector<double>(scores.begin(), scores.end()));
    std::optional<LmFitResult> best;
    std::string last_error;
    for (double sign : {-1.0, 1.0}) {
        try {
            auto r = fit_levenberg_marquardt(scores, observed, gamma, config,
                                             std::make_pair(sign * a0, b0));
            if (!best || r.mse < best->mse) best = std::move(r);
        } catch (const FitError& e) {
            last_error = e.what();
        }
    }
    if (!best) throw FitError("fit: both starts failed: " + last_error);
    return *best;
}

}  // namespace csvscale

#endif  // CSVSCALE_LAWFIT_HPP
