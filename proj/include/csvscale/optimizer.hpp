#ifndef CSVSCALE_OPTIMIZER_HPP
#define CSVSCALE_OPTIMIZER_HPP

// Alternating optimization of the salience scorer and the sigmoid law.
// Each epoch: (1) weights from the current scorer, (2) refit (alpha, beta)
// on the train models with the scorer fixed, (3) full-batch gradient steps
// on (theta, bias) with the law fixed. The epoch with the lowest validation
// MSE is kept.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csvscale/fit_report.hpp"
#include "csvscale/lawfit.hpp"
#include "csvscale/salience.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

struct OptimizationConfig {
    double learning_rate = 1e-3;
    std::size_t max_steps = 300;
    std::size_t sgd_steps_per_epoch = 1;
    std::optional<std::size_t> epochs;  // defaults to max_steps
    std::uint64_t seed = 0;
    std::size_t early_stop_patience = 50;
    Activation activation = Activation::sigmoid;
    bool standardize_features = true;
    std::size_t threads = 1;

    std::size_t epoch_count() const { return epochs.value_or(max_steps); }

    void validate() const {
        // A zero rate is accepted: it freezes the scorer at its initialization.
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ValidationError("learning_rate must be finite and >= 0");
        if (max_steps < 1 || sgd_steps_per_epoch < 1 || early_stop_patience < 1 ||
            epoch_count() < 1)
            throw ValidationError("optimization counts must be >= 1");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mse_train = 0.0;
    double mse_val = 0.0;
};

struct OptimizationResult {
    FitReport report;
    SalienceScorer scorer;
    std::vector<EpochRecord> trace;
    std::vector<std::string> warnings;
};

/// Models of one split with their observed accuracies, in input order.
struct SplitModels {
    std::vector<MappedModel> models;
    std::vector<double> observed;
};

struct PartitionedModels {
    SplitModels train, val, test;
    std::vector<std::string> warnings;
};

/// Sorts mapped models into splits by their eval for `task_id`. Models
/// without an eval are skipped with a warning; evals without losses likewise.
inline PartitionedModels partition_models(std::span<const MappedModel> mapped,
                                          std::span<const ModelEval> evals,
                                          std::string_view task_id) {
    PartitionedModels out;
    std::vector<const MappedModel*> order;
    for (const auto& m : mapped) order.push_back(&m);
    std::sort(order.begin(), order.end(),
              [](const MappedModel* a, const MappedModel* b) { return a->model_id < b->model_id; });
    for (const auto* m : order) {
        auto e = find_eval(evals, m->model_id, task_id);
        if (!e) {
            out.warnings.push_back("model " + m->model_id + " has losses but no eval for task " +
                                   std::string(task_id));
            continue;
        }
        SplitModels& dst = e->split == Split::train ? out.train
                            : e->split == Split::val ? out.val
                                                     : out.test;
        dst.models.push_back(*m);
        dst.observed.push_back(e->accuracy);
    }
    for (const auto& e : evals) {
        if (e.task_id != task_id) continue;
        if (std::none_of(mapped.begin(), mapped.end(),
                         [&](const MappedModel& m) { return m.model_id == e.model_id; }))
            out.warnings.push_back("model " + e.model_id +
                                   " has an eval but no complete losses; excluded");
    }
    return out;
}

inline std::vector<ScoredModel> score_models(const SalienceScorer& scorer, const Corpus& corpus,
                                             std::span<const MappedModel> models,
                                             std::size_t threads = 1) {
    const auto w = score_weights(scorer, corpus);
    const auto c = capability_scores(w, models, corpus.n_chars, threads);
    std::vector<ScoredModel> out;
    out.reserve(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) out.push_back({models[m].model_id, c[m]});
    return out;
}

/// Predictions and MSE of a trained scorer + law on one split.
inline SplitEvaluation evaluate_on_split(const SalienceScorer& scorer, const ScalingLawParams& params,
                                         const Corpus& corpus, std::span<const MappedModel> models,
                                         std::span<const ModelEval> evals, std::string_view task_id,
                                         Split split, std::size_t threads = 1) {
    const auto scored = score_models(scorer, corpus, models, threads);
    return evaluate_on_split(params, scored, evals, task_id, split);
}

/// Per-dimension mean and standard deviation of the feature rows over the whole corpus.
struct FeatureScaling {
    std::vector<double> mean, scale;

    static FeatureScaling identity(std::size_t dim) {
        return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
    }

    static FeatureScaling fit(const Corpus& corpus) {
        const std::size_t d = corpus.feature_dim();
        FeatureScaling fs{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        std::size_t n = 0;
        for (const auto& f : corpus.features)
            for (std::size_t i = 0; i < f.rows(); ++i, ++n)
                for (std::size_t k = 0; k < d; ++k) fs.mean[k] += f.row(i)[k];
        for (auto& m : fs.mean) m /= static_cast<double>(std::max<std::size_t>(n, 1));
        for (const auto& f : corpus.features)
            for (std::size_t i = 0; i < f.rows(); ++i)
                for (std::size_t k = 0; k < d; ++k) {
                    const double c = f.row(i)[k] - fs.mean[k];
                    fs.scale[k] += c * c;
                }
        for (auto& s : fs.scale) {
            s = std::sqrt(s / static_cast<double>(std::max<std::size_t>(n, 1)));
            if (!(s > 0.0)) s = 1.0;  // constant column
        }
        return fs;
    }

    Corpus apply(const Corpus& corpus) const {
        Corpus out = corpus;
        for (auto& f : out.features)
            for (std::size_t j = 0; j < f.values.size(); ++j) {
                const std::size_t k = j % f.dim;
                f.values[j] = (f.values[j] - mean[k]) / scale[k];
            }
        return out;
    }

    /// Scorer over raw features equivalent to `z` over standardized ones.
    SalienceScorer to_raw(const SalienceScorer& z) const {
        SalienceScorer raw = z;
        for (std::size_t k = 0; k < z.theta.size(); ++k) {
            raw.theta[k] = z.theta[k] / scale[k];
            raw.bias -= z.theta[k] * mean[k] / scale[k];
        }
        return raw;
    }
};

inline OptimizationResult run_alternating_optimization(const Corpus& corpus,
                                                       std::span<const MappedModel> mapped,
                                                       std::span<const ModelEval> evals,
                                                       const TaskConfig& task,
                                                       const OptimizationConfig& config = {},
                                                       const LmFitConfig& lm_config = {}) {
    config.validate();
    lm_config.validate();
    auto parts = partition_models(mapped, evals, task.task_id);
    if (parts.train.models.size() < 3)
        throw FitError("task " + task.task_id + ": need at least 3 train models with complete "
                       "losses and evals, have " + std::to_string(parts.train.models.size()));
    if (parts.val.models.empty())
        throw FitError("task " + task.task_id + ": validation split is empty");

    OptimizationResult result;
    result.warnings = std::move(parts.warnings);
    // The scorer is trained on standardized features; zero init is the same
    // scorer in both parameterizations.
    const FeatureScaling scaling = config.standardize_features
                                       ? FeatureScaling::fit(corpus)
                                       : FeatureScaling::identity(corpus.feature_dim());
    const Corpus scaled_storage = config.standardize_features ? scaling.apply(corpus) : Corpus{};
    const Corpus& work = config.standardize_features ? scaled_storage : corpus;
    SalienceScorer scorer = SalienceScorer::zeros(corpus.feature_dim(), config.activation);

    struct Best {
        double mse_val = std::numeric_limits<double>::infinity();
        std::size_t epoch = 0;
        SalienceScorer scorer;
        LmFitResult fit;
    } best;

    const std::size_t epochs = config.epoch_count();
    std::size_t steps = 0;
    for (std::size_t epoch = 0;; ++epoch) {
        // Step 1: weights and scores under the current scorer.
        const auto weights = score_weights(scorer, work);
        const auto train_scores =
            capability_scores(weights, parts.train.models, corpus.n_chars, config.threads);
        // Step 2: law fit with the scorer fixed.
        LmFitResult fit;
        try {
            fit = fit_multistart(train_scores, parts.train.observed, task.gamma, lm_config);
        } catch (const FitError& e) {
            if (epoch == 0)
                throw FitError("task " + task.task_id + ": law fit failed at epoch 0: " + e.what());
            result.warnings.push_back("epoch " + std::to_string(epoch) +
                                      ": law fit failed, stopping: " + e.what());
            break;
        }
        const auto val_scores =
            capability_scores(weights, parts.val.models, corpus.n_chars, config.threads);
        const double mse_val = law_mse(fit.params, val_scores, parts.val.observed);
        result.trace.push_back({epoch, fit.mse, mse_val});
        if (mse_val < best.mse_val) best = {mse_val, epoch, scorer, fit};

        if (epoch >= epochs || steps >= config.max_steps ||
            epoch - best.epoch >= config.early_stop_patience)
            break;

        // Step 3: gradient steps on the scorer with the law fixed.
        for (std::size_t k = 0; k < config.sgd_steps_per_epoch && steps < config.max_steps; ++k) {
            const auto g = mse_gradient_theta(scorer, work, parts.train.models, fit.params,
                                              parts.train.observed, config.threads);
            for (std::size_t j = 0; j < scorer.theta.size(); ++j)
                scorer.theta[j] -= config.learning_rate * g.theta[j];
            scorer.bias -= config.learning_rate * g.bias;
            ++steps;
        }
    }

    if (!std::isfinite(best.mse_val))
        throw FitError("task " + task.task_id + ": validation MSE never finite");

    FitReport& report = result.report;
    report.task_id = task.task_id;
    report.method = Method::csv;
    report.best_epoch = best.epoch;
    report.scorer_ref = "scorer.json";
    report.seed = config.seed;
    report.params = best.fit.params;
    report.lm_iterations = best.fit.iterations;
    report.lm_converged = best.fit.converged;

    const SalienceScorer raw_scorer = scaling.to_raw(best.scorer);
    std::vector<ScoredModel> scored;
    for (const auto* split : {&parts.train, &parts.val, &parts.test}) {
        auto s = score_models(raw_scorer, corpus, split->models, config.threads);
        scored.insert(scored.end(), s.begin(), s.end());
    }
    std::sort(scored.begin(), scored.end(),
              [](const ScoredModel& a, const ScoredModel& b) { return a.model_id < b.model_id; });
    fill_report_rows(report, scored, evals);
    result.scorer = raw_scorer;
    return result;
}

inline std::string trace_to_csv(std::span<const EpochRecord> trace) {
    std::string out = "epoch,mse_train,mse_val\n";
    for (const auto& r : trace)
        out += std::to_string(r.epoch) + "," + format_double(r.mse_train) + "," +
               format_double(r.mse_val) + "\n";
    return out;
}

}  // namespace csvscale

#endif  // CSVSCALE_OPTIMIZER_HPP
