#ifndef CSVSCALE_LOSSMAP_HPP
#define CSVSCALE_LOSSMAP_HPP

// Cross-tokenizer loss mapping. A source token's loss is divided uniformly
// over the characters it spans; target token losses are the sums of the
// character losses they cover. The total loss of a sample is conserved.

#include <span>
#include <string>
#include <vector>

#include "csvscale/parallel.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

using CharLossVector = std::vector<double>;
using TargetTokenLosses = std::vector<double>;

inline CharLossVector expand_to_char_losses(std::span<const TokenSpan> source_spans,
                                            std::span<const double> token_nll,
                                            std::size_t n_chars) {
    if (source_spans.size() != token_nll.size())
        throw ValidationError("expand_to_char_losses: " + std::to_string(source_spans.size()) +
                              " spans but " + std::to_string(token_nll.size()) + " losses");
    check_coverage(source_spans, n_chars, "source_spans");
    CharLossVector chars(n_chars, 0.0);
    for (std::size_t i = 0; i < source_spans.size(); ++i) {
        const auto& sp = source_spans[i];
        const double per_char = token_nll[i] / static_cast<double>(sp.length());
        for (std::size_t j = sp.start; j < sp.end; ++j) chars[j] = per_char;
    }
    return chars;
}

inline TargetTokenLosses aggregate_to_target(std::span<const double> char_losses,
                                             std::span<const TokenSpan> target_spans) {
    check_coverage(target_spans, char_losses.size(), "target_spans");
    TargetTokenLosses out(target_spans.size(), 0.0);
    for (std::size_t k = 0; k < target_spans.size(); ++k) {
        double acc = 0.0;
        for (std::size_t j = target_spans[k].start; j < target_spans[k].end; ++j)
            acc += char_losses[j];
        out[k] = acc;
    }
    return out;
}

inline TargetTokenLosses map_losses(const ModelLossRecord& record, const ValidationSample& sample) {
    if (record.sample_id != sample.sample_id)
        throw ValidationError("map_losses: record for " + record.sample_id +
                              " applied to sample " + sample.sample_id);
    // Equal tokenizations map to themselves; the character round trip
    // (x / n summed n times) is not exact in floating point.
    if (record.source_spans == sample.target_spans) {
        expand_to_char_losses(record.source_spans, record.token_nll, sample.n_chars);
        return record.token_nll;
    }
    return aggregate_to_target(
        expand_to_char_losses(record.source_spans, record.token_nll, sample.n_chars),
        sample.target_spans);
}

/// Maps every complete model's losses into the corpus target tokenization.
/// Output order follows `losses.complete` (sorted by model_id).
inline std::vector<MappedModel> map_all(const Corpus& corpus, const LossCollection& losses,
                                        std::size_t threads = 1) {
    std::vector<MappedModel> out(losses.complete.size());
    parallel_for(losses.complete.size(), threads, [&](std::size_t m) {
        const auto& ml = losses.complete[m];
        out[m].model_id = ml.model_id;
        out[m].target_losses.resize(corpus.samples.size());
        for (std::size_t s = 0; s < corpus.samples.size(); ++s)
            out[m].target_losses[s] = map_losses(ml.records[s], corpus.samples[s]);
    });
    return out;
}

/// Character-level losses of every complete model, one vector per sample.
inline std::vector<std::vector<CharLossVector>> char_losses_all(const Corpus& corpus,
                                                                const LossCollection& losses,
                                                                std::size_t threads = 1) {
    std::vector<std::vector<CharLossVector>> out(losses.complete.size());
    parallel_for(losses.complete.size(), threads, [&](std::size_t m) {
        const auto& ml = losses.complete[m];
        out[m].resize(corpus.samples.size());
        for (std::size_t s = 0; s < corpus.samples.size(); ++s)
            out[m][s] = expand_to_char_losses(ml.records[s].source_spans,
                                              ml.records[s].token_nll, corpus.samples[s].n_chars);
    });
    return out;
}

}  // namespace csvscale

#endif  // CSVSCALE_LOSSMAP_HPP
