#ifndef CSVSCALE_DATA_HPP
#define CSVSCALE_DATA_HPP

// Ingestion and serialization of corpora, feature matrices, loss records,
// evaluations and task configs. Every structural invariant is enforced here,
// so downstream numerics can assume well-formed inputs.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "csvscale/jsonl.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

namespace fs = std::filesystem;

inline constexpr char kFeatureMagic[] = "CSVF1\n";
inline constexpr std::size_t kFeatureMagicSize = 6;

/// `corpus.jsonl` -> `corpus.features.jsonl` (or `.features.bin` when only that exists).
inline fs::path default_features_path(const fs::path& corpus_path) {
    fs::path stem = corpus_path;
    stem.replace_extension();
    fs::path jsonl = stem;
    jsonl += ".features.jsonl";
    fs::path bin = stem;
    bin += ".features.bin";
    if (!fs::exists(jsonl) && fs::exists(bin)) return bin;
    return jsonl;
}

inline bool is_binary_features(const fs::path& p) { return p.extension() == ".bin"; }

inline fs::path features_index_path(const fs::path& bin_path) {
    fs::path idx = bin_path;
    idx += ".idx";
    return idx;
}

/// Checks answer spans: inside [0, n_chars), non-empty, non-overlapping.
inline void check_answer_spans(std::span<const TokenSpan> spans, std::size_t n_chars,
                               const std::string& context) {
    std::vector<TokenSpan> sorted(spans.begin(), spans.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const TokenSpan& a, const TokenSpan& b) { return a.start < b.start; });
    std::size_t prev_end = 0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        const auto& sp = sorted[k];
        if (sp.start >= sp.end)
            throw ValidationError(context + ": answer span [" + std::to_string(sp.start) + "," +
                                  std::to_string(sp.end) + ") is empty or reversed");
        if (sp.end > n_chars)
            throw ValidationError(context + ": answer span ends at " + std::to_string(sp.end) +
                                  " beyond " + std::to_string(n_chars) + " characters");
        if (k > 0 && sp.start < prev_end)
            throw ValidationError(context + ": answer spans overlap");
        prev_end = sp.end;
    }
}

/// Validates every invariant of an assembled corpus and rebuilds its index and n_chars.
inline void finalize_corpus(Corpus& corpus) {
    if (corpus.features.size() != corpus.samples.size())
        throw ValidationError("corpus has " + std::to_string(corpus.samples.size()) +
                              " samples but " + std::to_string(corpus.features.size()) +
                              " feature matrices");
    corpus.index.clear();
    corpus.n_chars = 0;
    std::size_t dim = 0;
    for (std::size_t k = 0; k < corpus.samples.size(); ++k) {
        auto& s = corpus.samples[k];
        const std::string ctx = "sample " + s.sample_id;
        if (!corpus.index.emplace(s.sample_id, k).second)
            throw ValidationError(ctx + ": duplicate sample_id");
        s.n_chars = utf8::length(s.text);
        check_coverage(s.target_spans, s.n_chars, ctx + " target_spans");
        if (s.answer_spans) check_answer_spans(*s.answer_spans, s.n_chars, ctx);
        corpus.n_chars += s.n_chars;

        const auto& f = corpus.features[k];
        if (f.sample_id != s.sample_id)
            throw ValidationError(ctx + ": feature matrix belongs to " + f.sample_id);
        if (f.dim == 0) throw ValidationError(ctx + ": feature dimension is zero");
        if (k == 0)
            dim = f.dim;
        else if (f.dim != dim)
            throw ValidationError(ctx + ": feature dimension " + std::to_string(f.dim) +
                                  " differs from corpus dimension " + std::to_string(dim));
        if (f.values.size() != f.dim * s.target_spans.size())
            throw ValidationError(ctx + ": " + std::to_string(f.rows()) +
                                  " feature rows for " + std::to_string(s.target_spans.size()) +
                                  " target tokens");
        if (!all_finite(f.values)) throw ValidationError(ctx + ": non-finite feature value");
    }
}

namespace detail {

inline std::map<std::string, FeatureMatrix> read_features_jsonl(const fs::path& path) {
    std::map<std::string, FeatureMatrix> out;
    for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
        FeatureMatrix fm;
        fm.sample_id = require(obj, "sample_id").get<std::string>();
        const auto& rows = require(obj, "features");
        if (!rows.is_array()) throw ValidationError("features must be an array of rows");
        for (const auto& row : rows) {
            auto vals = parse_doubles(row, "features row");
            if (fm.dim == 0)
                fm.dim = vals.size();
            else if (vals.size() != fm.dim)
                throw ValidationError("sample " + fm.sample_id + ": ragged feature rows");
            fm.values.insert(fm.values.end(), vals.begin(), vals.end());
        }
        std::string id = fm.sample_id;
        if (!out.emplace(id, std::move(fm)).second)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": duplicate features for sample " + id);
    });
    return out;
}

inline std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u32_le(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

static_assert(std::endian::native == std::endian::little,
              "binary feature I/O assumes a little-endian host");

inline std::map<std::string, FeatureMatrix> read_features_binary(const fs::path& path) {
    const std::string blob = read_text_file(path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    std::map<std::string, FeatureMatrix> out;
    for_each_jsonl(features_index_path(path), [&](const json& obj, std::size_t lineno) {
        FeatureMatrix fm;
        fm.sample_id = require(obj, "sample_id").get<std::string>();
        const auto offset = require(obj, "offset").get<std::size_t>();
        const std::string where = path.string() + " block for " + fm.sample_id;
        if (offset + kFeatureMagicSize + 8 > blob.size())
            throw ValidationError(where + ": offset beyond end of file");
        if (std::memcmp(blob.data() + offset, kFeatureMagic, kFeatureMagicSize) != 0)
            throw ValidationError(where + ": bad magic");
        const std::size_t dim = read_u32_le(bytes + offset + kFeatureMagicSize);
        const std::size_t rows = read_u32_le(bytes + offset + kFeatureMagicSize + 4);
        const std::size_t data_at = offset + kFeatureMagicSize + 8;
        if (data_at + rows * dim * sizeof(double) > blob.size())
            throw ValidationError(where + ": truncated block");
        fm.dim = dim;
        fm.values.resize(rows * dim);
        std::memcpy(fm.values.data(), blob.data() + data_at, rows * dim * sizeof(double));
        std::string id = fm.sample_id;
        if (!out.emplace(id, std::move(fm)).second)
            throw ValidationError(features_index_path(path).string() + ":" +
                                  std::to_string(lineno) + ": duplicate sample " + id);
    });
    return out;
}

}  // namespace detail

/// Loads a corpus file and its features file (default: the sibling features file).
inline Corpus load_corpus(const fs::path& path, std::optional<fs::path> features_path = {}) {
    Corpus corpus;
    std::map<std::string, std::size_t> first_line;
    for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
        ValidationSample s;
        s.sample_id = detail::require(obj, "sample_id").get<std::string>();
        s.source_tag = obj.value("source_tag", std::string{});
        s.text = detail::require(obj, "text").get<std::string>();
        s.target_spans = detail::parse_spans(detail::require(obj, "target_spans"), "target_spans");
        if (auto it = obj.find("answer_spans"); it != obj.end() && !it->is_null())
            s.answer_spans = detail::parse_spans(*it, "answer_spans");
        if (auto [it, fresh] = first_line.emplace(s.sample_id, lineno); !fresh)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": duplicate sample_id " + s.sample_id + " (first on line " +
                                  std::to_string(it->second) + ")");
        try {
            s.n_chars = utf8::length(s.text);
            check_coverage(s.target_spans, s.n_chars, "sample " + s.sample_id + " target_spans");
            if (s.answer_spans) check_answer_spans(*s.answer_spans, s.n_chars, "sample " + s.sample_id);
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        corpus.samples.push_back(std::move(s));
    });

    const fs::path fpath = features_path.value_or(default_features_path(path));
    auto features = is_binary_features(fpath) ? detail::read_features_binary(fpath)
                                              : detail::read_features_jsonl(fpath);
    for (const auto& s : corpus.samples) {
        auto it = features.find(s.sample_id);
        if (it == features.end())
            throw ValidationError("sample " + s.sample_id + ": no feature matrix in " +
                                  fpath.string());
        corpus.features.push_back(std::move(it->second));
        features.erase(it);
    }
    if (!features.empty())
        throw ValidationError("features file has rows for unknown sample " +
                              features.begin()->first);
    finalize_corpus(corpus);
    return corpus;
}

/// Validates one loss record against its sample.
inline void check_loss_record(const ModelLossRecord& r, const ValidationSample& s) {
    const std::string ctx = "model " + r.model_id + " sample " + r.sample_id;
    if (r.source_spans.size() != r.token_nll.size())
        throw ValidationError(ctx + ": " + std::to_string(r.source_spans.size()) + " spans but " +
                              std::to_string(r.token_nll.size()) + " token_nll values");
    check_coverage(r.source_spans, s.n_chars, ctx + " source_spans");
    for (std::size_t k = 0; k < r.token_nll.size(); ++k) {
        const double v = r.token_nll[k];
        if (!std::isfinite(v) || v < 0.0)
            throw ValidationError(ctx + ": token_nll[" + std::to_string(k) +
                                  "] must be finite and >= 0");
    }
}

/// Groups records by model. Models missing any sample are reported as incomplete.
inline LossCollection group_losses(std::vector<ModelLossRecord> records, const Corpus& corpus) {
    std::map<std::string, std::vector<std::optional<ModelLossRecord>>> by_model;
    for (auto& r : records) {
        auto pos = corpus.find(r.sample_id);
        if (!pos)
            throw ValidationError("model " + r.model_id + ": unknown sample_id " + r.sample_id);
        check_loss_record(r, corpus.samples[*pos]);
        auto& slots = by_model[r.model_id];
        slots.resize(corpus.samples.size());
        if (slots[*pos])
            throw ValidationError("model " + r.model_id + ": duplicate record for sample " +
                                  r.sample_id);
        slots[*pos] = std::move(r);
    }
    LossCollection out;
    for (auto& [model_id, slots] : by_model) {
        const auto missing = static_cast<std::size_t>(
            std::count_if(slots.begin(), slots.end(), [](const auto& o) { return !o; }));
        if (missing > 0) {
            out.incomplete[model_id] = missing;
            continue;
        }
        ModelLosses ml{model_id, {}};
        ml.records.reserve(slots.size());
        for (auto& o : slots) ml.records.push_back(std::move(*o));
        out.complete.push_back(std::move(ml));
    }
    return out;
}

inline LossCollection load_losses(const fs::path& path, const Corpus& corpus) {
    std::vector<ModelLossRecord> records;
    for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
        ModelLossRecord r;
        r.model_id = detail::require(obj, "model_id").get<std::string>();
        r.sample_id = detail::require(obj, "sample_id").get<std::string>();
        r.source_spans = detail::parse_spans(detail::require(obj, "source_spans"), "source_spans");
        r.token_nll = detail::parse_doubles(detail::require(obj, "token_nll"), "token_nll");
        auto pos = corpus.find(r.sample_id);
        try {
            if (!pos) throw ValidationError("unknown sample_id " + r.sample_id);
            check_loss_record(r, corpus.samples[*pos]);
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        records.push_back(std::move(r));
    });
    return group_losses(std::move(records), corpus);
}

/// x / 100 taken on the shortest decimal form of x, so 89.54 becomes 0.8954
/// rather than the binary quotient 0.8954000000000001.
inline double percent_to_fraction(double x) {
    if (!std::isfinite(x)) return x / 100.0;
    std::string s = format_double(x);
    long exponent = -2;
    if (auto e = s.find_first_of("eE"); e != std::string::npos) {
        exponent += std::stol(s.substr(e + 1));
        s.erase(e);
    }
    s += "e" + std::to_string(exponent);
    double out = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

/// Parses one evaluation row; percent rows are rescaled by a decimal shift.
inline ModelEval parse_eval(const json& obj) {
    ModelEval e;
    e.model_id = detail::require(obj, "model_id").get<std::string>();
    e.task_id = detail::require(obj, "task_id").get<std::string>();
    e.accuracy = detail::require(obj, "accuracy").get<double>();
    if (obj.value("percent", false)) e.accuracy = percent_to_fraction(e.accuracy);
    if (!std::isfinite(e.accuracy) || e.accuracy < 0.0 || e.accuracy > 1.0)
        throw ValidationError("model " + e.model_id + " task " + e.task_id + ": accuracy " +
                              format_double(e.accuracy) + " outside [0,1]");
    const auto split = obj.value("split", std::string("train"));
    auto sp = parse_split(split);
    if (!sp) throw ValidationError("unknown split \"" + split + "\"");
    e.split = *sp;
    if (auto it = obj.find("flops"); it != obj.end() && !it->is_null()) {
        const double f = it->get<double>();
        if (!std::isfinite(f) || f <= 0.0)
            throw ValidationError("model " + e.model_id + ": flops must be > 0");
        e.flops = f;
    }
    if (auto it = obj.find("series"); it != obj.end() && !it->is_null())
        e.series = it->get<std::string>();
    return e;
}

inline std::vector<ModelEval> load_evals(const fs::path& path) {
    std::vector<ModelEval> evals;
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
        ModelEval e;
        try {
            e = parse_eval(obj);
        } catch (const ValidationError& err) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + err.what());
        }
        auto [it, fresh] = seen.emplace(std::make_pair(e.model_id, e.task_id), lineno);
        if (!fresh)
            throw ValidationError(path.string() + ": duplicate eval (" + e.model_id + ", " +
                                  e.task_id + ") on lines " + std::to_string(it->second) +
                                  " and " + std::to_string(lineno));
        evals.push_back(std::move(e));
    });
    return evals;
}

inline std::vector<TaskConfig> load_task_configs(const fs::path& path) {
    std::vector<TaskConfig> tasks;
    std::map<std::string, std::size_t> seen;
    for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
        TaskConfig t;
        t.task_id = detail::require(obj, "task_id").get<std::string>();
        t.gamma = detail::require(obj, "gamma").get<double>();
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (!std::isfinite(t.gamma) || t.gamma < 0.0 || t.gamma >= 1.0)
            throw ValidationError(where + ": gamma must lie in [0,1)");
        if (auto [it, fresh] = seen.emplace(t.task_id, lineno); !fresh)
            throw ValidationError(where + ": duplicate task " + t.task_id + " (first on line " +
                                  std::to_string(it->second) + ")");
        tasks.push_back(std::move(t));
    });
    return tasks;
}

inline const TaskConfig& find_task(std::span<const TaskConfig> tasks, std::string_view task_id) {
    for (const auto& t : tasks)
        if (t.task_id == task_id) return t;
    throw ValidationError("no task config for " + std::string(task_id));
}

/// Draws `counts[name]` samples from each named source and shuffles the mix.
/// Sources absent from `counts` contribute nothing.
inline Corpus assemble_validation_mix(const std::vector<std::pair<std::string, Corpus>>& sources,
                                      const std::map<std::string, std::size_t>& counts,
                                      std::uint64_t seed) {
    for (const auto& [name, n] : counts) {
        if (std::none_of(sources.begin(), sources.end(),
                         [&](const auto& s) { return s.first == name; }))
            throw ValidationError("mix count given for unknown source " + name);
    }
    std::mt19937_64 rng(seed);
    Corpus out;
    for (const auto& [name, src] : sources) {
        auto it = counts.find(name);
        const std::size_t want = it == counts.end() ? 0 : it->second;
        if (want > src.samples.size())
            throw ValidationError("source " + name + " has " + std::to_string(src.samples.size()) +
                                  " samples, " + std::to_string(want) + " requested");
        std::vector<std::size_t> idx(src.samples.size());
        for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(want);
        std::sort(idx.begin(), idx.end());
        for (auto k : idx) {
            out.samples.push_back(src.samples[k]);
            out.features.push_back(src.features[k]);
        }
    }
    std::vector<std::size_t> order(out.samples.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    Corpus mixed;
    for (auto k : order) {
        mixed.samples.push_back(std::move(out.samples[k]));
        mixed.features.push_back(std::move(out.features[k]));
    }
    std::set<std::string> ids;
    for (const auto& s : mixed.samples)
        if (!ids.insert(s.sample_id).second)
            throw ValidationError("duplicate sample_id after mixing: " + s.sample_id);
    finalize_corpus(mixed);
    return mixed;
}

// ---- writers ----

inline std::string corpus_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& s : corpus.samples) {
        ordered_json obj;
        obj["sample_id"] = s.sample_id;
        obj["source_tag"] = s.source_tag;
        obj["text"] = s.text;
        obj["target_spans"] = detail::spans_to_json(s.target_spans);
        if (s.answer_spans) obj["answer_spans"] = detail::spans_to_json(*s.answer_spans);
        out += obj.dump() + "\n";
    }
    return out;
}

inline std::string features_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& f : corpus.features) {
        ordered_json obj;
        obj["sample_id"] = f.sample_id;
        ordered_json rows = ordered_json::array();
        for (std::size_t i = 0; i < f.rows(); ++i) {
            auto r = f.row(i);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        obj["features"] = std::move(rows);
        out += obj.dump() + "\n";
    }
    return out;
}

/// Binary feature blocks plus the JSONL index sidecar content.
inline std::pair<std::string, std::string> features_to_binary(const Corpus& corpus) {
    std::string blob, index;
    for (const auto& f : corpus.features) {
        ordered_json entry;
        entry["sample_id"] = f.sample_id;
        entry["offset"] = blob.size();
        index += entry.dump() + "\n";
        blob.append(kFeatureMagic, kFeatureMagicSize);
        detail::write_u32_le(blob, static_cast<std::uint32_t>(f.dim));
        detail::write_u32_le(blob, static_cast<std::uint32_t>(f.rows()));
        blob.append(reinterpret_cast<const char*>(f.values.data()), f.values.size() * sizeof(double));
    }
    return {blob, index};
}

inline void write_corpus(const Corpus& corpus, const fs::path& corpus_path,
                         std::optional<fs::path> features_path = {}) {
    write_text_file(corpus_path, corpus_to_jsonl(corpus));
    const fs::path fpath = features_path.value_or([&] {
        fs::path p = corpus_path;
        p.replace_extension();
        p += ".features.jsonl";
        return p;
    }());
    if (is_binary_features(fpath)) {
        auto [blob, index] = features_to_binary(corpus);
        write_text_file(fpath, blob);
        write_text_file(features_index_path(fpath), index);
    } else {
        write_text_file(fpath, features_to_jsonl(corpus));
    }
}

inline ordered_json loss_record_to_json(const ModelLossRecord& r) {
    ordered_json obj;
    obj["model_id"] = r.model_id;
    obj["sample_id"] = r.sample_id;
    obj["source_spans"] = detail::spans_to_json(r.source_spans);
    obj["token_nll"] = r.token_nll;
    return obj;
}

inline std::string losses_to_jsonl(std::span<const ModelLossRecord> records) {
    std::string out;
    for (const auto& r : records) out += loss_record_to_json(r).dump() + "\n";
    return out;
}

inline std::string losses_to_jsonl(const LossCollection& losses) {
    std::string out;
    for (const auto& m : losses.complete) out += losses_to_jsonl(m.records);
    return out;
}

inline ordered_json eval_to_json(const ModelEval& e) {
    ordered_json obj;
    obj["model_id"] = e.model_id;
    obj["task_id"] = e.task_id;
    obj["accuracy"] = e.accuracy;
    obj["split"] = std::string(to_string(e.split));
    if (e.flops) obj["flops"] = *e.flops;
    if (e.series) obj["series"] = *e.series;
    return obj;
}

inline std::string evals_to_jsonl(std::span<const ModelEval> evals) {
    std::string out;
    for (const auto& e : evals) out += eval_to_json(e).dump() + "\n";
    return out;
}

inline std::string tasks_to_jsonl(std::span<const TaskConfig> tasks) {
    std::string out;
    for (const auto& t : tasks) {
        ordered_json obj;
        obj["task_id"] = t.task_id;
        obj["gamma"] = t.gamma;
        out += obj.dump() + "\n";
    }
    return out;
}

}  // namespace csvscale

#endif  // CSVSCALE_DATA_HPP
