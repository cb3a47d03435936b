#ifndef CSVSCALE_REPORT_HPP
#define CSVSCALE_REPORT_HPP

// Plot-ready CSV scatter data, salience heatmaps as standalone HTML, and the
// task x method test-MSE summary table.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "csvscale/fit_report.hpp"
#include "csvscale/lawfit.hpp"
#include "csvscale/salience.hpp"
#include "csvscale/types.hpp"

namespace csvscale {

enum class ScatterAxis { flops, all_token, csv_score };

inline ScatterAxis parse_axis(std::string_view s) {
    if (s == "flops") return ScatterAxis::flops;
    if (s == "all_token") return ScatterAxis::all_token;
    if (s == "csv_score") return ScatterAxis::csv_score;
    throw ValidationError("unknown scatter axis \"" + std::string(s) + "\"");
}

inline constexpr std::size_t kCurvePoints = 200;

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// Leading alphabetic run of a model id ("Qwen1.5-7B" -> "Qwen").
inline std::string default_series(const std::string& model_id) {
    std::size_t n = 0;
    while (n < model_id.size() && std::isalpha(static_cast<unsigned char>(model_id[n]))) ++n;
    return n == 0 ? model_id : model_id.substr(0, n);
}

struct ScatterOutput {
    std::string data_csv;
    std::string curve_csv;  // empty unless params were given
};

/// One row per model with an eval for `task_id`. `scores` supplies x for the
/// score axes; the flops axis reads the evals.
inline ScatterOutput emit_scatter(std::span<const ModelEval> evals, std::string_view task_id,
                                  ScatterAxis axis, const std::map<std::string, double>& scores = {},
                                  std::optional<ScalingLawParams> params = {}) {
    struct Row {
        const ModelEval* eval;
        double x;
    };
    std::vector<Row> rows;
    std::vector<std::string> missing;
    for (const auto& e : evals) {
        if (e.task_id != task_id) continue;
        std::optional<double> x;
        if (axis == ScatterAxis::flops) {
            x = e.flops;
        } else if (auto it = scores.find(e.model_id); it != scores.end()) {
            x = it->second;
        }
        if (!x)
            missing.push_back(e.model_id);
        else
            rows.push_back({&e, *x});
    }
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
        throw ValidationError(std::string("scatter: no ") +
                              (axis == ScatterAxis::flops ? "flops" : "score") + " for " + names);
    }
    ScatterOutput out;
    out.data_csv = "model_id,x,accuracy,split,series_tag\n";
    for (const auto& r : rows) {
        out.data_csv += csv_field(r.eval->model_id) + "," + format_double(r.x) + "," +
                        format_double(r.eval->accuracy) + "," + std::string(to_string(r.eval->split)) +
                        "," + csv_field(r.eval->series.value_or(default_series(r.eval->model_id))) +
                        "\n";
    }
    if (params && !rows.empty()) {
        const auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                                  [](const Row& a, const Row& b) { return a.x < b.x; });
        const double x0 = lo->x, x1 = hi->x;
        out.curve_csv = "x,predicted\n";
        for (std::size_t k = 0; k < kCurvePoints; ++k) {
            const double x = x0 + (x1 - x0) * static_cast<double>(k) / static_cast<double>(kCurvePoints - 1);
            out.curve_csv += format_double(x) + "," + format_double(predict_accuracy(*params, x)) + "\n";
        }
    }
    return out;
}

/// 8-level intensity of a weight within [lo, hi]; 4 when the range is degenerate.
inline int salience_level(double w, double lo, double hi) {
    if (!(hi > lo)) return 4;
    const double t = (w - lo) / (hi - lo);
    return std::clamp(static_cast<int>(std::floor(t * 8.0)), 0, 7);
}

inline std::string html_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\n': out += "<br>"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string emit_salience_heatmap(const Corpus& corpus, const SalienceScorer& scorer,
                                         std::span<const std::string> sample_ids) {
    if (sample_ids.empty()) throw ValidationError("heatmap: no samples selected");
    const auto weights = score_weights(scorer, corpus);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& ws : weights)
        for (double w : ws) {
            lo = std::min(lo, w);
            hi = std::max(hi, w);
        }

    std::string doc =
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Salience heatmap</title>\n"
        "<style>\nbody { font-family: monospace; }\n.sample { margin: 1em 0; white-space: pre-wrap; }\n";
    for (int k = 0; k < 8; ++k) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), ".w%d { background: rgba(0, 170, 0, %.3f); }\n", k, k / 7.0);
        doc += buf;
    }
    doc += "</style>\n</head>\n<body>\n";
    doc += "<p>weight range [" + format_double(lo) + ", " + format_double(hi) + "]</p>\n";
    for (const auto& id : sample_ids) {
        auto pos = corpus.find(id);
        if (!pos) throw ValidationError("heatmap: unknown sample " + id);
        const auto& s = corpus.samples[*pos];
        const auto offsets = utf8::char_offsets(s.text);
        doc += "<div class=\"sample\" id=\"" + html_escape(s.sample_id) + "\"><b>" +
               html_escape(s.sample_id) + "</b> (" + html_escape(s.source_tag) + ")<br>";
        for (std::size_t i = 0; i < s.target_spans.size(); ++i) {
            const auto& sp = s.target_spans[i];
            const double w = weights[*pos][i];
            const auto piece = std::string_view(s.text).substr(offsets[sp.start], offsets[sp.end] - offsets[sp.start]);
            doc += "<span class=\"w" + std::to_string(salience_level(w, lo, hi)) + "\" title=\"" +
                   format_double(w) + "\">" + html_escape(piece) + "</span>";
        }
        doc += "</div>\n";
    }
    doc += "</body>\n</html>\n";
    return doc;
}

/// Scientific notation with 3 significant digits and a bare exponent: 1.45e-3.
inline std::string format_sci3(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2e", x);
    std::string s(buf);
    const auto e = s.find('e');
    if (e == std::string::npos) return s;  // inf / nan
    const int exponent = std::stoi(s.substr(e + 1));
    return s.substr(0, e) + "e" + std::to_string(exponent);
}

inline constexpr const char* kMissingCell = "\xE2\x80\x94";  // em dash

/// Tab-separated table: one row per task (first-seen order), columns csv,
/// all_token, label_token, cells = test MSE.
inline std::string emit_fit_summary(std::span<const FitReport> reports) {
    const Method columns[] = {Method::csv, Method::all_token, Method::label_token};
    std::vector<std::string> tasks;
    std::map<std::pair<std::string, Method>, const FitReport*> cells;
    for (const auto& r : reports) {
        if (!cells.emplace(std::make_pair(r.task_id, r.method), &r).second)
            throw ValidationError("summary: duplicate report for task " + r.task_id + " method " +
                                  std::string(to_string(r.method)));
        if (std::find(tasks.begin(), tasks.end(), r.task_id) == tasks.end()) tasks.push_back(r.task_id);
    }
    std::string out = "task";
    for (auto m : columns) out += "\t" + std::string(to_string(m));
    out += "\n";
    for (const auto& t : tasks) {
        out += t;
        for (auto m : columns) {
            auto it = cells.find({t, m});
            out += "\t";
            out += (it != cells.end() && it->second->mse_test) ? format_sci3(*it->second->mse_test)
                                                                : kMissingCell;
        }
        out += "\n";
    }
    return out;
}

}  // namespace csvscale

#endif  // CSVSCALE_REPORT_HPP
