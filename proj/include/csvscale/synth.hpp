#ifndef CSVSCALE_SYNTH_HPP
#define CSVSCALE_SYNTH_HPP

// Synthetic model families with a known salience scorer and law.
//
// Target token t of a sample with tag g, for model m, carries the loss
//   base_t * skill_m * shift[series(m)][g]
// spread uniformly over the token's characters; each model then re-tokenizes
// the text with its own random tokenizer. Accuracies follow the sigmoid law of
// the true capability scores, which are computed from the losses exactly as
// the pipeline sees them (after mapping back to the target tokenization), so a
// noise-free family is realizable by the model class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csvscale/data.hpp"
#include "csvscale/fit_report.hpp"
#include "csvscale/lawfit.hpp"
#include "csvscale/lossmap.hpp"
#include "csvscale/salience.hpp"

namespace csvscale {

struct SyntheticFamilySpec {
    std::size_t num_models = 40;
    std::size_t num_samples = 50;
    std::size_t tokens_per_sample = 30;
    std::size_t feature_dim = 16;
    std::size_t num_tags = 4;
    std::optional<std::vector<double>> true_theta;  // default: N(0, 4/d) entries
    double true_bias = 0.0;
    Activation activation = Activation::sigmoid;
    std::optional<double> true_alpha;  // default: -alpha_span / range(true scores)
    double alpha_span = 4.0;
    std::optional<double> true_beta;   // default: median(true scores)
    double gamma = 0.25;
    double base_loss = 2.0;
    double skill_decay = 0.95;
    double noise_std = 0.0;
    double tag_separation = 1.0;
    double feature_noise = 0.2;  // within-tag feature spread
    std::size_t max_source_piece = 4;  // longest source token, in characters
    /// One multiplier map (source_tag -> factor) per model series; models are
    /// assigned to series round-robin. Empty means a single unshifted series.
    std::vector<std::map<std::string, double>> shift_profile;
    std::string task_id = "synth";
    std::uint64_t seed = 0;

    void validate() const {
        if (num_models < 1 || num_samples < 1 || tokens_per_sample < 1 || feature_dim < 1 ||
            num_tags < 1 || max_source_piece < 1)
            throw ValidationError("synth spec: counts must be >= 1");
        if (!(feature_noise >= 0.0) || !(tag_separation >= 0.0))
            throw ValidationError("synth spec: feature scales must be >= 0");
        if (!(noise_std >= 0.0)) throw ValidationError("synth spec: noise_std must be >= 0");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("synth spec: gamma must lie in [0,1)");
        if (!(alpha_span > 0.0)) throw ValidationError("synth spec: alpha_span must be > 0");
        if (!(base_loss > 0.0) || !(skill_decay > 0.0))
            throw ValidationError("synth spec: base_loss and skill_decay must be > 0");
        if (true_theta && true_theta->size() != feature_dim)
            throw ValidationError("synth spec: true_theta length differs from feature_dim");
        for (const auto& series : shift_profile)
            for (const auto& [tag, mult] : series)
                if (!(mult > 0.0)) throw ValidationError("synth spec: multiplier for " + tag + " must be > 0");
    }

    static std::string tag_name(std::size_t g) { return "src" + std::to_string(g); }
};

inline SyntheticFamilySpec synth_spec_from_json(const json& j) {
    SyntheticFamilySpec s;
    s.num_models = j.value("num_models", s.num_models);
    s.num_samples = j.value("num_samples", s.num_samples);
    s.tokens_per_sample = j.value("tokens_per_sample", s.tokens_per_sample);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.num_tags = j.value("num_tags", s.num_tags);
    if (auto it = j.find("true_theta"); it != j.end() && !it->is_null())
        s.true_theta = detail::parse_doubles(*it, "true_theta");
    s.true_bias = j.value("true_bias", s.true_bias);
    s.activation = parse_activation(j.value("activation", std::string("sigmoid")));
    if (auto it = j.find("true_alpha"); it != j.end() && !it->is_null()) s.true_alpha = it->get<double>();
    if (auto it = j.find("true_beta"); it != j.end() && !it->is_null()) s.true_beta = it->get<double>();
    s.alpha_span = j.value("alpha_span", s.alpha_span);
    s.gamma = j.value("gamma", s.gamma);
    s.base_loss = j.value("base_loss", s.base_loss);
    s.skill_decay = j.value("skill_decay", s.skill_decay);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.tag_separation = j.value("tag_separation", s.tag_separation);
    s.feature_noise = j.value("feature_noise", s.feature_noise);
    s.max_source_piece = j.value("max_source_piece", s.max_source_piece);
    if (auto it = j.find("shift_profile"); it != j.end())
        s.shift_profile = it->get<std::vector<std::map<std::string, double>>>();
    s.task_id = j.value("task_id", s.task_id);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

struct GroundTruth {
    SalienceScorer scorer;
    ScalingLawParams params;
    std::uint64_t seed = 0;
    std::vector<ScoredModel> true_scores;          // sorted by model_id
    std::map<std::string, double> tag_loss_totals;  // sum of base target losses per tag
};

struct SyntheticFamily {
    Corpus corpus;
    LossCollection losses;
    std::vector<MappedModel> mapped;  // aligned with losses.complete
    std::vector<ModelEval> evals;
    TaskConfig task;
    GroundTruth truth;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t sub = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(sub),
                      static_cast<std::uint32_t>(sub >> 32)};
    return std::mt19937_64(seq);
}

inline std::vector<TokenSpan> random_partition(std::size_t n_chars, std::size_t max_piece,
                                               std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> piece(1, max_piece);
    std::vector<TokenSpan> spans;
    std::size_t at = 0;
    while (at < n_chars) {
        const std::size_t len = std::min(piece(rng), n_chars - at);
        spans.push_back({at, at + len});
        at += len;
    }
    return spans;
}

inline std::string model_name(std::size_t m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "m%03zu", m);
    return buf;
}

}  // namespace detail

inline GroundTruth true_law_defaults(GroundTruth truth, const SyntheticFamilySpec& spec) {
    std::vector<double> c;
    for (const auto& sm : truth.true_scores) c.push_back(sm.score);
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    const double range = *hi - *lo;
    truth.params.gamma = spec.gamma;
    truth.params.beta = spec.true_beta.value_or(median(c));
    truth.params.alpha = spec.true_alpha.value_or(range > 0 ? -spec.alpha_span / range : -1.0);
    return truth;
}

inline SyntheticFamily generate_family(const SyntheticFamilySpec& spec) {
    spec.validate();
    SyntheticFamily fam;
    fam.task = {spec.task_id, spec.gamma};
    const std::size_t d = spec.feature_dim;
    static const std::vector<std::string> alphabet = {
        "a", "b", "c", "d", "e", "f", "g", "h", "i", "k", "l", "m", "n", "o",
        "p", "r", "s", "t", "u", "v", "w", "y", " ", " ", "\xC3\xA4", "\xC3\xB6", "\xC3\x9F"};

    // Corpus, base losses and features. Independent of the shift profile.
    auto rng = detail::stream(spec.seed, 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    std::uniform_int_distribution<std::size_t> pick_char(0, alphabet.size() - 1);
    std::uniform_int_distribution<std::size_t> token_len(1, 4);

    std::vector<std::vector<double>> tag_centers(spec.num_tags, std::vector<double>(d));
    for (auto& c : tag_centers)
        for (auto& v : c) v = spec.tag_separation * gauss(rng);

    SalienceScorer true_scorer{std::vector<double>(d), spec.true_bias, spec.activation};
    if (spec.true_theta) {
        true_scorer.theta = *spec.true_theta;
    } else {
        const double scale = 2.0 / std::sqrt(static_cast<double>(d));
        for (auto& v : true_scorer.theta) v = scale * gauss(rng);
    }

    std::vector<std::vector<double>> base(spec.num_samples);  // per target token
    std::vector<std::size_t> sample_tag(spec.num_samples);
    for (std::size_t s = 0; s < spec.num_samples; ++s) {
        const std::size_t g = s % spec.num_tags;
        sample_tag[s] = g;
        ValidationSample vs;
        char id[32];
        std::snprintf(id, sizeof(id), "%s-%04zu", SyntheticFamilySpec::tag_name(g).c_str(), s);
        vs.sample_id = id;
        vs.source_tag = SyntheticFamilySpec::tag_name(g);
        std::size_t at = 0;
        FeatureMatrix fm{vs.sample_id, d, {}};
        for (std::size_t t = 0; t < spec.tokens_per_sample; ++t) {
            const std::size_t len = token_len(rng);
            for (std::size_t k = 0; k < len; ++k) vs.text += alphabet[pick_char(rng)];
            vs.target_spans.push_back({at, at + len});
            at += len;
            base[s].push_back(spec.base_loss * unit(rng));
            for (std::size_t k = 0; k < d; ++k) fm.values.push_back(tag_centers[g][k] + spec.feature_noise * gauss(rng));
        }
        vs.answer_spans = std::vector<TokenSpan>{vs.target_spans.back()};
        fam.corpus.samples.push_back(std::move(vs));
        fam.corpus.features.push_back(std::move(fm));
        fam.truth.tag_loss_totals[SyntheticFamilySpec::tag_name(g)] +=
            [&] { double a = 0; for (double x : base[s]) a += x; return a; }();
    }
    finalize_corpus(fam.corpus);

    // Per-model losses under per-model tokenizers.
    const std::size_t n_series = std::max<std::size_t>(1, spec.shift_profile.size());
    std::vector<ModelLossRecord> records;
    std::vector<std::string> model_ids(spec.num_models);
    std::vector<double> flops(spec.num_models);
    for (std::size_t m = 0; m < spec.num_models; ++m) {
        model_ids[m] = detail::model_name(m);
        const std::size_t series = m % n_series;
        const std::size_t size_rank = m / n_series;
        const double skill = std::pow(spec.skill_decay, static_cast<double>(size_rank));
        flops[m] = 1e20 * std::pow(2.0, static_cast<double>(size_rank));
        auto tok_rng = detail::stream(spec.seed, 2, m);
        for (std::size_t s = 0; s < spec.num_samples; ++s) {
            const auto& sample = fam.corpus.samples[s];
            double mult = 1.0;
            if (!spec.shift_profile.empty()) {
                const auto& prof = spec.shift_profile[series];
                if (auto it = prof.find(sample.source_tag); it != prof.end()) mult = it->second;
            }
            CharLossVector chars(sample.n_chars);
            for (std::size_t t = 0; t < sample.target_spans.size(); ++t) {
                const auto& sp = sample.target_spans[t];
                const double per_char = base[s][t] * skill * mult / static_cast<double>(sp.length());
                for (std::size_t j = sp.start; j < sp.end; ++j) chars[j] = per_char;
            }
            ModelLossRecord r{model_ids[m], sample.sample_id, detail::random_partition(sample.n_chars, spec.max_source_piece, tok_rng), {}};
            for (const auto& sp : r.source_spans) {
                double acc = 0.0;
                for (std::size_t j = sp.start; j < sp.end; ++j) acc += chars[j];
                r.token_nll.push_back(acc);
            }
            records.push_back(std::move(r));
        }
    }
    fam.losses = group_losses(std::move(records), fam.corpus);
    fam.mapped = map_all(fam.corpus, fam.losses);

    // True scores and law.
    const auto w = score_weights(true_scorer, fam.corpus);
    const auto c = capability_scores(w, fam.mapped, fam.corpus.n_chars);
    fam.truth.scorer = true_scorer;
    fam.truth.seed = spec.seed;
    for (std::size_t m = 0; m < fam.mapped.size(); ++m)
        fam.truth.true_scores.push_back({fam.mapped[m].model_id, c[m]});
    fam.truth = true_law_defaults(std::move(fam.truth), spec);

    auto noise_rng = detail::stream(spec.seed, 3);
    gauss.reset();
    std::map<std::string, double> true_score_of;
    for (const auto& sm : fam.truth.true_scores) true_score_of[sm.model_id] = sm.score;
    for (std::size_t m = 0; m < spec.num_models; ++m) {
        const ScoredModel sm{model_ids[m], true_score_of.at(model_ids[m])};
        double acc = predict_accuracy(fam.truth.params, sm.score);
        if (spec.noise_std > 0.0) acc = std::clamp(acc + spec.noise_std * gauss(noise_rng), spec.gamma, 1.0);
        ModelEval e;
        e.model_id = sm.model_id;
        e.task_id = spec.task_id;
        e.accuracy = acc;
        e.split = m % 3 == 0 ? Split::train : m % 3 == 1 ? Split::val : Split::test;
        e.flops = flops[m];
        e.series = "series" + std::to_string(m % n_series);
        fam.evals.push_back(std::move(e));
    }
    return fam;
}

/// Two-series shift profile whose all-token totals tie at equal skill: series 0
/// scales `tag_a` by (1 + delta), series 1 scales `tag_b` by (1 + delta * L_a / L_b),
/// where L are the per-tag base loss totals.
inline std::vector<std::map<std::string, double>> tied_mean_shift(
    const std::map<std::string, double>& tag_loss_totals, const std::string& tag_a,
    const std::string& tag_b, double delta) {
    const double la = tag_loss_totals.at(tag_a), lb = tag_loss_totals.at(tag_b);
    return {{{tag_a, 1.0 + delta}}, {{tag_b, 1.0 + delta * la / lb}}};
}

inline ordered_json truth_to_json(const GroundTruth& t) {
    ordered_json obj;
    obj["true_theta"] = t.scorer.theta;
    obj["true_bias"] = t.scorer.bias;
    obj["activation"] = std::string(to_string(t.scorer.activation));
    obj["true_alpha"] = t.params.alpha;
    obj["true_beta"] = t.params.beta;
    obj["gamma"] = t.params.gamma;
    obj["seed"] = t.seed;
    ordered_json scores = ordered_json::object();
    for (const auto& sm : t.true_scores) scores[sm.model_id] = sm.score;
    obj["true_scores"] = std::move(scores);
    return obj;
}

/// Writes corpus, features, losses, evals, task config and ground truth into `dir`.
inline void write_family(const SyntheticFamily& fam, const std::filesystem::path& dir) {
    write_corpus(fam.corpus, dir / "corpus.jsonl");
    write_text_file(dir / "losses.jsonl", losses_to_jsonl(fam.losses));
    write_text_file(dir / "evals.jsonl", evals_to_jsonl(fam.evals));
    write_text_file(dir / "tasks.jsonl", tasks_to_jsonl(std::span<const TaskConfig>(&fam.task, 1)));
    write_text_file(dir / "truth.json", truth_to_json(fam.truth).dump(2) + "\n");
}

struct OracleDiagnostics {
    double max_heldout_error = 0.0;          // max |A_hat - A| over val and test models
    double max_prediction_disagreement = 0.0;  // max |A_hat_fitted - A_hat_true| over all models
};

/// Diagnostics for explicit per-token weights, e.g. a rescaled weight vector.
inline OracleDiagnostics oracle_fit_check(const SyntheticFamily& fam, const ScalingLawParams& params,
                                          const WeightVector& w) {
    OracleDiagnostics out;
    const auto c = capability_scores(w, fam.mapped, fam.corpus.n_chars);
    for (std::size_t m = 0; m < fam.mapped.size(); ++m) {
        const double fitted = predict_accuracy(params, c[m]);
        const double truth = predict_accuracy(fam.truth.params, fam.truth.true_scores[m].score);
        out.max_prediction_disagreement = std::max(out.max_prediction_disagreement, std::abs(fitted - truth));
        auto e = find_eval(fam.evals, fam.mapped[m].model_id, fam.task.task_id);
        if (e && e->split != Split::train)
            out.max_heldout_error = std::max(out.max_heldout_error, std::abs(fitted - e->accuracy));
    }
    return out;
}

inline OracleDiagnostics oracle_fit_check(const SyntheticFamily& fam, const ScalingLawParams& params,
                                          const SalienceScorer& scorer) {
    return oracle_fit_check(fam, params, score_weights(scorer, fam.corpus));
}

}  // namespace csvscale

#endif  // CSVSCALE_SYNTH_HPP
