#ifndef CSVSCALE_SALIENCE_HPP
#define CSVSCALE_SALIENCE_HPP

// Per-token salience weights w = act(theta . h + bias) over frozen feature
// rows, the weighted per-character capability score
//
//   C_m = (1 / N_c) * sum_s sum_i w_{s,i} * nll_{m,s,i}
//
// and the exact gradient of sum_m (A(C_m) - observed_m)^2 with respect to
// (theta, bias) with the law parameters held fixed.

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csvscale/jsonl.hpp"
#include "csvscale/lawfit.hpp"
#include "csvscale/parallel.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

enum class Activation { sigmoid, softplus };

inline std::string_view to_string(Activation a) {
    return a == Activation::sigmoid ? "sigmoid" : "softplus";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "softplus") return Activation::softplus;
    throw ValidationError("unknown activation \"" + std::string(s) + "\"");
}

inline double activate(Activation a, double u) {
    if (a == Activation::sigmoid) return logistic(u);
    // log(1 + e^u) without overflow
    return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

inline double activation_derivative(Activation a, double u) {
    if (a == Activation::sigmoid) {
        const double s = logistic(u);
        return s * (1.0 - s);
    }
    return logistic(u);
}

struct SalienceScorer {
    std::vector<double> theta;
    double bias = 0.0;
    Activation activation = Activation::sigmoid;

    static SalienceScorer zeros(std::size_t dim, Activation act = Activation::sigmoid) {
        return {std::vector<double>(dim, 0.0), 0.0, act};
    }

    std::size_t dim() const { return theta.size(); }

    double pre_activation(std::span<const double> h) const {
        double u = bias;
        for (std::size_t k = 0; k < theta.size(); ++k) u += theta[k] * h[k];
        return u;
    }

    double weight(std::span<const double> h) const { return activate(activation, pre_activation(h)); }
};

/// One weight per target token, grouped per corpus sample.
using WeightVector = std::vector<std::vector<double>>;

inline void check_scorer(const SalienceScorer& scorer, const Corpus& corpus) {
    if (scorer.dim() != corpus.feature_dim())
        throw ValidationError("scorer dimension " + std::to_string(scorer.dim()) +
                              " does not match corpus feature dimension " +
                              std::to_string(corpus.feature_dim()));
    if (!all_finite(scorer.theta) || !std::isfinite(scorer.bias))
        throw ValidationError("scorer has non-finite parameters");
}

inline WeightVector score_weights(const SalienceScorer& scorer, const Corpus& corpus) {
    check_scorer(scorer, corpus);
    WeightVector w(corpus.samples.size());
    for (std::size_t s = 0; s < corpus.samples.size(); ++s) {
        const auto& f = corpus.features[s];
        w[s].resize(f.rows());
        for (std::size_t i = 0; i < f.rows(); ++i) {
            const double v = scorer.weight(f.row(i));
            if (!std::isfinite(v))
                throw ValidationError("non-finite salience weight at sample " + f.sample_id +
                                      " token " + std::to_string(i));
            w[s][i] = v;
        }
    }
    return w;
}

inline double capability_score(const WeightVector& weights,
                               std::span<const std::vector<double>> mapped_losses,
                               std::size_t n_chars) {
    if (n_chars == 0) throw ValidationError("capability_score: zero characters");
    if (weights.size() != mapped_losses.size())
        throw ValidationError("capability_score: " + std::to_string(weights.size()) +
                              " weight groups but " + std::to_string(mapped_losses.size()) +
                              " loss groups");
    double acc = 0.0;
    for (std::size_t s = 0; s < weights.size(); ++s) {
        if (weights[s].size() != mapped_losses[s].size())
            throw ValidationError("capability_score: sample " + std::to_string(s) + " has " +
                                  std::to_string(weights[s].size()) + " weights but " +
                                  std::to_string(mapped_losses[s].size()) + " losses");
        for (std::size_t i = 0; i < weights[s].size(); ++i) acc += weights[s][i] * mapped_losses[s][i];
    }
    return acc / static_cast<double>(n_chars);
}

inline std::vector<double> capability_scores(const WeightVector& weights,
                                             std::span<const MappedModel> models,
                                             std::size_t n_chars, std::size_t threads = 1) {
    std::vector<double> out(models.size());
    parallel_for(models.size(), threads, [&](std::size_t m) {
        out[m] = capability_score(weights, models[m].target_losses, n_chars);
    });
    return out;
}

/// Sum of squared residuals of the law over `models` for a given scorer.
inline double squared_error(const SalienceScorer& scorer, const Corpus& corpus,
                            std::span<const MappedModel> models, const ScalingLawParams& params,
                            std::span<const double> observed) {
    const auto w = score_weights(scorer, corpus);
    const auto c = capability_scores(w, models, corpus.n_chars);
    double sse = 0.0;
    for (std::size_t m = 0; m < c.size(); ++m) {
        const double r = predict_accuracy(params, c[m]) - observed[m];
        sse += r * r;
    }
    return sse;
}

struct ScorerGradient {
    std::vector<double> theta;
    double bias = 0.0;
};

/// Exact gradient of sum_m (A(C_m) - observed_m)^2 over (theta, bias).
inline ScorerGradient mse_gradient_theta(const SalienceScorer& scorer, const Corpus& corpus,
                                         std::span<const MappedModel> models,
                                         const ScalingLawParams& params,
                                         std::span<const double> observed,
                                         std::size_t threads = 1) {
    check_scorer(scorer, corpus);
    if (models.size() != observed.size())
        throw ValidationError("gradient: " + std::to_string(models.size()) + " models but " +
                              std::to_string(observed.size()) + " observations");
    const auto weights = score_weights(scorer, corpus);
    const auto scores = capability_scores(weights, models, corpus.n_chars, threads);
    const double inv_chars = 1.0 / static_cast<double>(corpus.n_chars);

    // d(sse)/dC_m / N_c, in fixed model order.
    std::vector<double> coef(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        const double r = predict_accuracy(params, scores[m]) - observed[m];
        coef[m] = 2.0 * r * accuracy_slope(params, scores[m]) * inv_chars;
        if (!std::isfinite(coef[m]))
            throw FitError("gradient: non-finite residual factor for model " + models[m].model_id);
    }

    ScorerGradient g{std::vector<double>(scorer.dim(), 0.0), 0.0};
    for (std::size_t s = 0; s < corpus.samples.size(); ++s) {
        const auto& f = corpus.features[s];
        for (std::size_t i = 0; i < f.rows(); ++i) {
            double dw = 0.0;
            for (std::size_t m = 0; m < models.size(); ++m)
                dw += coef[m] * models[m].target_losses[s][i];
            const auto h = f.row(i);
            const double du = dw * activation_derivative(scorer.activation, scorer.pre_activation(h));
            if (!std::isfinite(du))
                throw FitError("gradient: non-finite value at sample " + f.sample_id + " token " +
                               std::to_string(i));
            for (std::size_t k = 0; k < h.size(); ++k) g.theta[k] += du * h[k];
            g.bias += du;
        }
    }
    return g;
}

// ---- checkpoint ----

inline ordered_json scorer_to_json(const SalienceScorer& scorer) {
    ordered_json obj;
    obj["d"] = scorer.dim();
    obj["activation"] = std::string(to_string(scorer.activation));
    obj["bias"] = scorer.bias;
    obj["theta"] = scorer.theta;
    return obj;
}

inline SalienceScorer scorer_from_json(const json& obj) {
    SalienceScorer s;
    const auto d = detail::require(obj, "d").get<std::size_t>();
    s.activation = parse_activation(detail::require(obj, "activation").get<std::string>());
    s.bias = detail::require(obj, "bias").get<double>();
    s.theta = detail::parse_doubles(detail::require(obj, "theta"), "theta");
    if (s.theta.size() != d)
        throw ValidationError("scorer checkpoint: d = " + std::to_string(d) + " but theta has " +
                              std::to_string(s.theta.size()) + " entries");
    if (!all_finite(s.theta) || !std::isfinite(s.bias))
        throw ValidationError("scorer checkpoint: non-finite parameter");
    return s;
}

inline void save_scorer(const SalienceScorer& scorer, const std::filesystem::path& path) {
    write_text_file(path, scorer_to_json(scorer).dump() + "\n");
}

inline SalienceScorer load_scorer(const std::filesystem::path& path) {
    try {
        return scorer_from_json(json::parse(read_text_file(path)));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace csvscale

#endif  // CSVSCALE_SALIENCE_HPP
