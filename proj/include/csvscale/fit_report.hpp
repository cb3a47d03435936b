#ifndef CSVSCALE_FIT_REPORT_HPP
#define CSVSCALE_FIT_REPORT_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csvscale/jsonl.hpp"
#include "csvscale/lawfit.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

enum class Method { csv, all_token, label_token };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::csv: return "csv";
        case Method::all_token: return "all_token";
        case Method::label_token: return "label_token";
    }
    return "csv";
}

inline Method parse_method(std::string_view s) {
    if (s == "csv") return Method::csv;
    if (s == "all_token") return Method::all_token;
    if (s == "label_token") return Method::label_token;
    throw ValidationError("unknown method \"" + std::string(s) + "\"");
}

struct ScoredModel {
    std::string model_id;
    double score = 0.0;
};

struct ModelPrediction {
    std::string model_id;
    Split split = Split::train;
    double score = 0.0;
    double predicted = 0.0;
    double observed = 0.0;
};

struct SplitEvaluation {
    std::vector<ModelPrediction> rows;
    double mse = 0.0;
};

struct FitReport {
    std::string task_id;
    Method method = Method::csv;
    std::string corpus_id;
    std::string selection_split = "val";
    std::size_t best_epoch = 0;
    std::string scorer_ref = "baseline";
    std::uint64_t seed = 0;
    ScalingLawParams params;
    std::size_t lm_iterations = 0;
    bool lm_converged = false;
    std::vector<ModelPrediction> rows;
    std::optional<double> mse_train, mse_val, mse_test;
};

inline std::optional<ModelEval> find_eval(std::span<const ModelEval> evals, std::string_view model_id,
                                          std::string_view task_id) {
    for (const auto& e : evals)
        if (e.model_id == model_id && e.task_id == task_id) return e;
    return std::nullopt;
}

inline double mean_squared_residual(std::span<const ModelPrediction> rows) {
    if (rows.empty()) return 0.0;
    double sse = 0.0;
    for (const auto& r : rows) {
        const double d = r.predicted - r.observed;
        sse += d * d;
    }
    return sse / static_cast<double>(rows.size());
}

/// Predicts every scored model that has an eval for `task_id` (models without one are skipped).
inline std::vector<ModelPrediction> predict_rows(const ScalingLawParams& params,
                                                 std::span<const ScoredModel> scored,
                                                 std::span<const ModelEval> evals,
                                                 std::string_view task_id) {
    std::vector<ModelPrediction> rows;
    for (const auto& sm : scored) {
        auto e = find_eval(evals, sm.model_id, task_id);
        if (!e) continue;
        rows.push_back({sm.model_id, e->split, sm.score, predict_accuracy(params, sm.score),
                        e->accuracy});
    }
    return rows;
}

/// Held-out evaluation on one split; no parameters change.
inline SplitEvaluation evaluate_on_split(const ScalingLawParams& params,
                                         std::span<const ScoredModel> scored,
                                         std::span<const ModelEval> evals, std::string_view task_id,
                                         Split split) {
    SplitEvaluation out;
    for (auto& row : predict_rows(params, scored, evals, task_id))
        if (row.split == split) out.rows.push_back(std::move(row));
    if (out.rows.empty())
        throw ValidationError("split " + std::string(to_string(split)) + " has no models for task " +
                              std::string(task_id));
    out.mse = mean_squared_residual(out.rows);
    return out;
}

/// Fills report rows and the per-split MSEs (absent for empty splits).
inline void fill_report_rows(FitReport& report, std::span<const ScoredModel> scored,
                             std::span<const ModelEval> evals) {
    report.rows = predict_rows(report.params, scored, evals, report.task_id);
    auto split_mse = [&](Split s) -> std::optional<double> {
        std::vector<ModelPrediction> sel;
        for (const auto& r : report.rows)
            if (r.split == s) sel.push_back(r);
        if (sel.empty()) return std::nullopt;
        return mean_squared_residual(sel);
    };
    report.mse_train = split_mse(Split::train);
    report.mse_val = split_mse(Split::val);
    report.mse_test = split_mse(Split::test);
}

// ---- serialization ----

inline ordered_json report_to_json(const FitReport& r) {
    ordered_json obj;
    obj["task_id"] = r.task_id;
    obj["method"] = std::string(to_string(r.method));
    obj["corpus"] = r.corpus_id;
    obj["selection_split"] = r.selection_split;
    obj["best_epoch"] = r.best_epoch;
    obj["scorer"] = r.scorer_ref;
    obj["seed"] = r.seed;
    obj["params"] = {{"alpha", r.params.alpha}, {"beta", r.params.beta}, {"gamma", r.params.gamma}};
    obj["lm"] = {{"iters", r.lm_iterations}, {"converged", r.lm_converged}};
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    obj["mse_train"] = opt(r.mse_train);
    obj["mse_val"] = opt(r.mse_val);
    obj["mse_test"] = opt(r.mse_test);
    ordered_json rows = ordered_json::array();
    for (const auto& p : r.rows) {
        ordered_json row;
        row["model_id"] = p.model_id;
        row["split"] = std::string(to_string(p.split));
        row["score"] = p.score;
        row["predicted"] = p.predicted;
        row["observed"] = p.observed;
        rows.push_back(std::move(row));
    }
    obj["models"] = std::move(rows);
    return obj;
}

inline FitReport report_from_json(const json& obj) {
    FitReport r;
    r.task_id = detail::require(obj, "task_id").get<std::string>();
    r.method = parse_method(detail::require(obj, "method").get<std::string>());
    r.corpus_id = obj.value("corpus", std::string{});
    r.selection_split = obj.value("selection_split", std::string("val"));
    r.best_epoch = obj.value("best_epoch", std::size_t{0});
    r.scorer_ref = obj.value("scorer", std::string("baseline"));
    r.seed = obj.value("seed", std::uint64_t{0});
    const auto& p = detail::require(obj, "params");
    r.params = {detail::require(p, "alpha").get<double>(), detail::require(p, "beta").get<double>(),
                detail::require(p, "gamma").get<double>()};
    if (auto it = obj.find("lm"); it != obj.end()) {
        r.lm_iterations = it->value("iters", std::size_t{0});
        r.lm_converged = it->value("converged", false);
    }
    auto opt = [&](const char* key) -> std::optional<double> {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return std::nullopt;
        return it->get<double>();
    };
    r.mse_train = opt("mse_train");
    r.mse_val = opt("mse_val");
    r.mse_test = opt("mse_test");
    if (auto it = obj.find("models"); it != obj.end()) {
        for (const auto& row : *it) {
            auto sp = parse_split(detail::require(row, "split").get<std::string>());
            if (!sp) throw ValidationError("report: bad split");
            r.rows.push_back({detail::require(row, "model_id").get<std::string>(), *sp,
                              detail::require(row, "score").get<double>(),
                              detail::require(row, "predicted").get<double>(),
                              detail::require(row, "observed").get<double>()});
        }
    }
    return r;
}

inline void save_report(const FitReport& r, const std::filesystem::path& path) {
    write_text_file(path, report_to_json(r).dump(2) + "\n");
}

inline FitReport load_report(const std::filesystem::path& path) {
    try {
        return report_from_json(json::parse(read_text_file(path)));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

/// Compact fitted-parameter record for one task.
inline ordered_json params_to_json(const FitReport& r) {
    ordered_json obj;
    obj["task_id"] = r.task_id;
    obj["alpha"] = r.params.alpha;
    obj["beta"] = r.params.beta;
    obj["gamma"] = r.params.gamma;
    obj["mse_train"] = r.mse_train ? ordered_json(*r.mse_train) : ordered_json(nullptr);
    obj["iters"] = r.lm_iterations;
    obj["converged"] = r.lm_converged;
    return obj;
}

}  // namespace csvscale

#endif  // CSVSCALE_FIT_REPORT_HPP
