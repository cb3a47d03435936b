#ifndef CSVSCALE_TYPES_HPP
#define CSVSCALE_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csvscale/errors.hpp"

namespace csvscale {

/// Half-open character range [start, end) of one token.
struct TokenSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start; }
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct ValidationSample {
    std::string sample_id;
    std::string source_tag;
    std::string text;  // UTF-8
    std::size_t n_chars = 0;  // code points in text
    std::vector<TokenSpan> target_spans;
    std::optional<std::vector<TokenSpan>> answer_spans;
};

/// Frozen-backbone feature rows, one per target token, stored row-major.
struct FeatureMatrix {
    std::string sample_id;
    std::size_t dim = 0;
    std::vector<double> values;

    std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values).subspan(i * dim, dim);
    }
};

struct ModelLossRecord {
    std::string model_id;
    std::string sample_id;
    std::vector<TokenSpan> source_spans;
    std::vector<double> token_nll;  // nats
};

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

struct ModelEval {
    std::string model_id;
    std::string task_id;
    double accuracy = 0.0;
    Split split = Split::train;
    std::optional<double> flops;
    std::optional<std::string> series;
};

struct TaskConfig {
    std::string task_id;
    double gamma = 0.0;
};

/// Suggested random-guess floors for common benchmarks. bbh has none.
inline std::optional<double> suggested_gamma(std::string_view task_id) {
    if (task_id == "mmlu" || task_id == "cmmlu" || task_id == "ceval" || task_id == "hellaswag")
        return 0.25;
    if (task_id == "gsm8k") return 0.0;
    return std::nullopt;
}

struct Corpus {
    std::vector<ValidationSample> samples;
    std::vector<FeatureMatrix> features;  // aligned with samples
    std::size_t n_chars = 0;
    std::map<std::string, std::size_t, std::less<>> index;  // sample_id -> position

    std::size_t feature_dim() const { return features.empty() ? 0 : features.front().dim; }
    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& s : samples) n += s.target_spans.size();
        return n;
    }
    std::optional<std::size_t> find(std::string_view sample_id) const {
        auto it = index.find(sample_id);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }
};

/// Losses of one model over a corpus, records aligned with Corpus::samples.
struct ModelLosses {
    std::string model_id;
    std::vector<ModelLossRecord> records;
};

struct LossCollection {
    std::vector<ModelLosses> complete;  // sorted by model_id
    std::map<std::string, std::size_t> incomplete;  // model_id -> missing sample count
};

/// Target-token losses of one model, one vector per corpus sample.
struct MappedModel {
    std::string model_id;
    std::vector<std::vector<double>> target_losses;
};

namespace utf8 {

/// Byte offset of every code point plus a final entry equal to text.size().
inline std::vector<std::size_t> char_offsets(std::string_view text) {
    std::vector<std::size_t> offsets;
    offsets.reserve(text.size() + 1);
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 0;
        if (lead < 0x80)
            len = 1;
        else if ((lead >> 5) == 0x6)
            len = 2;
        else if ((lead >> 4) == 0xE)
            len = 3;
        else if ((lead >> 3) == 0x1E)
            len = 4;
        else
            throw ValidationError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        if (i + len > text.size())
            throw ValidationError("truncated UTF-8 sequence at offset " + std::to_string(i));
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2)
                throw ValidationError("invalid UTF-8 continuation byte at offset " +
                                      std::to_string(i + k));
        }
        offsets.push_back(i);
        i += len;
    }
    offsets.push_back(text.size());
    return offsets;
}

inline std::size_t length(std::string_view text) { return char_offsets(text).size() - 1; }

}  // namespace utf8

/// Throws unless spans are contiguous, non-empty and cover [0, n_chars) exactly.
inline void check_coverage(std::span<const TokenSpan> spans, std::size_t n_chars,
                           const std::string& context) {
    if (n_chars == 0) throw ValidationError(context + ": empty text");
    if (spans.empty()) throw ValidationError(context + ": no spans");
    std::size_t expect = 0;
    for (std::size_t k = 0; k < spans.size(); ++k) {
        const auto& sp = spans[k];
        if (sp.start >= sp.end)
            throw ValidationError(context + ": span " + std::to_string(k) + " [" +
                                  std::to_string(sp.start) + "," + std::to_string(sp.end) +
                                  ") is empty or reversed");
        if (sp.start != expect)
            throw ValidationError(context + ": coverage violated at span " + std::to_string(k) +
                                  " (starts at " + std::to_string(sp.start) + ", expected " +
                                  std::to_string(expect) + ")");
        expect = sp.end;
    }
    if (expect != n_chars)
        throw ValidationError(context + ": spans end at " + std::to_string(expect) +
                              " but text has " + std::to_string(n_chars) + " characters");
}

inline bool all_finite(std::span<const double> xs) {
    for (double x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace csvscale

#endif  // CSVSCALE_TYPES_HPP
