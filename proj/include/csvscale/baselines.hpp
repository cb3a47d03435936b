#ifndef CSVSCALE_BASELINES_HPP
#define CSVSCALE_BASELINES_HPP

#include <span>
#include <string>
#include <vector>

#include "csvscale/fit_report.hpp"
#include "csvscale/lawfit.hpp"
#include "csvscale/lossmap.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

/// Mean loss per character: the capability score under constant weight 1.
inline double all_token_score(const MappedModel& model, std::size_t n_chars) {
    if (n_chars == 0) throw ValidationError("all_token_score: zero characters");
    double acc = 0.0;
    for (const auto& sample : model.target_losses)
        for (double l : sample) acc += l;
    return acc / static_cast<double>(n_chars);
}

inline std::vector<ScoredModel> all_token_scores(std::span<const MappedModel> models,
                                                 std::size_t n_chars) {
    std::vector<ScoredModel> out;
    for (const auto& m : models) out.push_back({m.model_id, all_token_score(m, n_chars)});
    return out;
}

struct LabelTokenScore {
    double score = 0.0;
    std::size_t samples_used = 0;
    std::vector<std::string> excluded;  // samples without answer spans
};

/// Mean over annotated samples of the mean character loss inside their answer spans.
inline LabelTokenScore label_token_score(std::span<const CharLossVector> char_losses,
                                         std::span<const ValidationSample> samples) {
    if (char_losses.size() != samples.size())
        throw ValidationError("label_token_score: " + std::to_string(char_losses.size()) +
                              " char-loss vectors for " + std::to_string(samples.size()) +
                              " samples");
    LabelTokenScore out;
    double acc = 0.0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& spans = samples[s].answer_spans;
        if (!spans || spans->empty()) {
            out.excluded.push_back(samples[s].sample_id);
            continue;
        }
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& sp : *spans) {
            if (sp.end > char_losses[s].size())
                throw ValidationError("label_token_score: answer span beyond sample " +
                                      samples[s].sample_id);
            for (std::size_t j = sp.start; j < sp.end; ++j) sum += char_losses[s][j];
            count += sp.length();
        }
        acc += sum / static_cast<double>(count);
        ++out.samples_used;
    }
    if (out.samples_used == 0)
        throw ValidationError("label_token_score: no sample has answer spans");
    out.score = acc / static_cast<double>(out.samples_used);
    return out;
}

/// Fits the sigmoid law on the train rows of precomputed baseline scores and
/// reports predictions on every split. No scorer is trained.
inline FitReport fit_baseline(std::span<const ScoredModel> scored, std::span<const ModelEval> evals,
                              const TaskConfig& task, Method method,
                              const LmFitConfig& lm_config = {}) {
    std::vector<double> train_scores, train_observed;
    for (const auto& sm : scored) {
        auto e = find_eval(evals, sm.model_id, task.task_id);
        if (e && e->split == Split::train) {
            train_scores.push_back(sm.score);
            train_observed.push_back(e->accuracy);
        }
    }
    const auto fit = fit_multistart(train_scores, train_observed, task.gamma, lm_config);
    FitReport report;
    report.task_id = task.task_id;
    report.method = method;
    report.scorer_ref = "baseline";
    report.params = fit.params;
    report.lm_iterations = fit.iterations;
    report.lm_converged = fit.converged;
    fill_report_rows(report, scored, evals);
    return report;
}

}  // namespace csvscale

#endif  // CSVSCALE_BASELINES_HPP
