// csvscale command-line front end.
//
// Exit codes: 0 success, 1 validation error, 2 fitting error, 3 I/O error.
// Diagnostics go to stderr; data goes to --out files or stdout.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csvscale/csvscale.hpp"

namespace fs = std::filesystem;
using namespace csvscale;

namespace {

struct Inputs {
    std::string corpus, features, losses, evals, tasks, task_id, method, config, out, split = "test";
    std::string fit_dir, spec, kind, axis, scorer;
    std::vector<std::string> sources, counts, reports, samples;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
};

std::size_t thread_count(const Inputs& in) { return in.threads.value_or(threads_from_env()); }

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

void require(const std::string& value, const char* flag, const char* command) {
    if (value.empty())
        throw ValidationError(std::string(command) + ": missing required flag " + flag);
}

Corpus load_corpus_from(const Inputs& in, const char* command) {
    require(in.corpus, "--corpus", command);
    std::optional<fs::path> features;
    if (!in.features.empty()) features = in.features;
    return load_corpus(in.corpus, features);
}

LossCollection load_losses_from(const Inputs& in, const Corpus& corpus, const char* command) {
    require(in.losses, "--losses", command);
    auto losses = load_losses(in.losses, corpus);
    for (const auto& [model, missing] : losses.incomplete)
        warn("model " + model + " is missing " + std::to_string(missing) +
             " sample(s); excluded from fitting");
    return losses;
}

void emit(const Inputs& in, const std::string& content) {
    if (in.out.empty() || in.out == "-")
        std::cout << content;
    else
        write_text_file(in.out, content);
}

struct Configs {
    OptimizationConfig opt;
    LmFitConfig lm;
};

Configs load_configs(const Inputs& in) {
    Configs c;
    if (!in.config.empty()) {
        json j;
        try {
            j = json::parse(read_text_file(in.config));
        } catch (const json::exception& e) {
            throw ValidationError(in.config + ": " + e.what());
        }
        if (!j.is_object()) throw ValidationError(in.config + ": expected a JSON object");
        for (const auto& [key, v] : j.items()) {
            try {
                if (key == "learning_rate") c.opt.learning_rate = v.get<double>();
                else if (key == "max_steps") c.opt.max_steps = v.get<std::size_t>();
                else if (key == "sgd_steps_per_epoch") c.opt.sgd_steps_per_epoch = v.get<std::size_t>();
                else if (key == "epochs") c.opt.epochs = v.get<std::size_t>();
                else if (key == "seed") c.opt.seed = v.get<std::uint64_t>();
                else if (key == "early_stop_patience") c.opt.early_stop_patience = v.get<std::size_t>();
                else if (key == "activation") c.opt.activation = parse_activation(v.get<std::string>());
                else if (key == "standardize_features") c.opt.standardize_features = v.get<bool>();
                else if (key == "damping_init") c.lm.damping_init = v.get<double>();
                else if (key == "damping_up") c.lm.damping_up = v.get<double>();
                else if (key == "damping_down") c.lm.damping_down = v.get<double>();
                else if (key == "max_iters") c.lm.max_iters = v.get<std::size_t>();
                else if (key == "param_tol") c.lm.param_tol = v.get<double>();
                else if (key == "mse_rel_tol") c.lm.mse_rel_tol = v.get<double>();
                else throw ValidationError(in.config + ": unknown key \"" + key + "\"");
            } catch (const json::exception& e) {
                throw ValidationError(in.config + ": bad value for \"" + key + "\": " + e.what());
            }
        }
    }
    if (in.seed) c.opt.seed = *in.seed;
    c.opt.threads = thread_count(in);
    c.opt.validate();
    c.lm.validate();
    return c;
}

std::vector<ScoredModel> baseline_scores(Method method, const Corpus& corpus,
                                         const LossCollection& losses, std::size_t threads) {
    if (method == Method::all_token) return all_token_scores(map_all(corpus, losses, threads), corpus.n_chars);
    const auto chars = char_losses_all(corpus, losses, threads);
    std::vector<ScoredModel> out;
    bool reported = false;
    for (std::size_t m = 0; m < losses.complete.size(); ++m) {
        auto r = label_token_score(chars[m], corpus.samples);
        if (!reported && !r.excluded.empty()) {
            warn(std::to_string(r.excluded.size()) + " sample(s) without answer spans excluded from "
                 "the label-token score");
            reported = true;
        }
        out.push_back({losses.complete[m].model_id, r.score});
    }
    return out;
}

// ---- commands ----

int cmd_validate(const Inputs& in) {
    const auto corpus = load_corpus_from(in, "validate");
    std::cout << "corpus: " << corpus.samples.size() << " samples, " << corpus.n_chars
              << " characters, " << corpus.token_count() << " target tokens, d = "
              << corpus.feature_dim() << "\n";
    if (!in.losses.empty()) {
        const auto losses = load_losses_from(in, corpus, "validate");
        std::cout << "losses: " << losses.complete.size() << " complete model(s), "
                  << losses.incomplete.size() << " incomplete\n";
    }
    if (!in.evals.empty()) {
        const auto evals = load_evals(in.evals);
        std::cout << "evals: " << evals.size() << " row(s)\n";
    }
    if (!in.tasks.empty()) {
        const auto tasks = load_task_configs(in.tasks);
        std::cout << "tasks: " << tasks.size() << "\n";
    }
    return 0;
}

int cmd_map(const Inputs& in) {
    const auto corpus = load_corpus_from(in, "map");
    const auto losses = load_losses_from(in, corpus, "map");
    const auto mapped = map_all(corpus, losses, thread_count(in));
    std::string out;
    for (std::size_t m = 0; m < mapped.size(); ++m) {
        for (std::size_t s = 0; s < corpus.samples.size(); ++s) {
            ordered_json obj;
            obj["model_id"] = mapped[m].model_id;
            obj["sample_id"] = corpus.samples[s].sample_id;
            obj["target_spans"] = detail::spans_to_json(corpus.samples[s].target_spans);
            obj["token_nll"] = mapped[m].target_losses[s];
            out += obj.dump() + "\n";
        }
    }
    emit(in, out);
    return 0;
}

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* flag) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError(std::string(flag) + " expects NAME=VALUE, got \"" + s + "\"");
    return {s.substr(0, eq), s.substr(eq + 1)};
}

int cmd_mix(const Inputs& in) {
    require(in.out, "--out", "mix");
    if (in.sources.empty()) throw ValidationError("mix: at least one --source NAME=PATH is required");
    std::vector<std::pair<std::string, Corpus>> sources;
    for (const auto& s : in.sources) {
        auto [name, path] = split_assignment(s, "--source");
        sources.emplace_back(name, load_corpus(path));
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& c : in.counts) {
        auto [name, value] = split_assignment(c, "--count");
        try {
            counts[name] = std::stoul(value);
        } catch (const std::exception&) {
            throw ValidationError("--count " + c + ": not a count");
        }
    }
    const auto mixed = assemble_validation_mix(sources, counts, in.seed.value_or(0));
    std::optional<fs::path> features;
    if (!in.features.empty()) features = in.features;
    write_corpus(mixed, in.out, features);
    std::cerr << "mix: wrote " << mixed.samples.size() << " samples\n";
    return 0;
}

void write_fit_outputs(const fs::path& dir, const FitReport& report) {
    save_report(report, dir / "report.json");
    write_text_file(dir / "params.json", params_to_json(report).dump() + "\n");
}

void print_mse_line(const FitReport& r) {
    auto f = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
    std::cout << "task " << r.task_id << " method " << to_string(r.method) << ": alpha "
              << format_double(r.params.alpha) << " beta " << format_double(r.params.beta)
              << " mse_train " << f(r.mse_train) << " mse_val " << f(r.mse_val) << " mse_test "
              << f(r.mse_test) << "\n";
}

int run_fit(const Inputs& in, Method method, const char* command) {
    require(in.out, "--out", command);
    require(in.evals, "--evals", command);
    require(in.tasks, "--tasks", command);
    require(in.task_id, "--task-id", command);
    const auto cfg = load_configs(in);
    const auto corpus = load_corpus_from(in, command);
    const auto losses = load_losses_from(in, corpus, command);
    const auto evals = load_evals(in.evals);
    const auto tasks = load_task_configs(in.tasks);
    const auto& task = find_task(tasks, in.task_id);
    const fs::path dir = in.out;
    const std::string corpus_id = fs::path(in.corpus).filename().string();

    if (method == Method::csv) {
        const auto mapped = map_all(corpus, losses, cfg.opt.threads);
        auto res = run_alternating_optimization(corpus, mapped, evals, task, cfg.opt, cfg.lm);
        for (const auto& w : res.warnings) warn(w);
        res.report.corpus_id = corpus_id;
        write_fit_outputs(dir, res.report);
        save_scorer(res.scorer, dir / "scorer.json");
        write_text_file(dir / "trace.csv", trace_to_csv(res.trace));
        print_mse_line(res.report);
        return 0;
    }
    auto scored = baseline_scores(method, corpus, losses, cfg.opt.threads);
    auto report = fit_baseline(scored, evals, task, method, cfg.lm);
    report.corpus_id = corpus_id;
    report.seed = cfg.opt.seed;
    write_fit_outputs(dir, report);
    print_mse_line(report);
    return 0;
}

int cmd_fit(const Inputs& in) {
    return run_fit(in, in.method.empty() ? Method::csv : parse_method(in.method), "fit");
}

int cmd_baseline(const Inputs& in) {
    const Method m = in.method.empty() ? Method::all_token : parse_method(in.method);
    if (m == Method::csv) throw ValidationError("baseline: --method must be all_token or label_token");
    return run_fit(in, m, "baseline");
}

/// Scores every complete model with the method recorded in a fit directory.
std::vector<ScoredModel> score_with_fit(const fs::path& dir, const FitReport& report,
                                        const Corpus& corpus, const LossCollection& losses,
                                        std::size_t threads) {
    if (report.method != Method::csv) return baseline_scores(report.method, corpus, losses, threads);
    const auto scorer = load_scorer(dir / "scorer.json");
    const auto mapped = map_all(corpus, losses, threads);
    return score_models(scorer, corpus, mapped, threads);
}

int cmd_predict(const Inputs& in) {
    require(in.fit_dir, "--fit", "predict");
    const fs::path dir = in.fit_dir;
    const auto report = load_report(dir / "report.json");
    const auto corpus = load_corpus_from(in, "predict");
    const auto losses = load_losses_from(in, corpus, "predict");
    const auto scored = score_with_fit(dir, report, corpus, losses, thread_count(in));
    std::string out = "model_id,score,predicted\n";
    for (const auto& sm : scored)
        out += csv_field(sm.model_id) + "," + format_double(sm.score) + "," +
               format_double(predict_accuracy(report.params, sm.score)) + "\n";
    emit(in, out);
    return 0;
}

int cmd_evaluate(const Inputs& in) {
    require(in.fit_dir, "--fit", "evaluate");
    require(in.evals, "--evals", "evaluate");
    const fs::path dir = in.fit_dir;
    const auto report = load_report(dir / "report.json");
    const auto split = parse_split(in.split);
    if (!split) throw ValidationError("evaluate: unknown split \"" + in.split + "\"");
    const auto corpus = load_corpus_from(in, "evaluate");
    const auto losses = load_losses_from(in, corpus, "evaluate");
    const auto evals = load_evals(in.evals);
    const auto scored = score_with_fit(dir, report, corpus, losses, thread_count(in));
    const auto res = evaluate_on_split(report.params, scored, evals, report.task_id, *split);
    ordered_json obj;
    obj["task_id"] = report.task_id;
    obj["method"] = std::string(to_string(report.method));
    obj["split"] = in.split;
    obj["mse"] = res.mse;
    ordered_json rows = ordered_json::array();
    for (const auto& r : res.rows)
        rows.push_back({{"model_id", r.model_id}, {"score", r.score}, {"predicted", r.predicted},
                        {"observed", r.observed}});
    obj["models"] = std::move(rows);
    if (!in.out.empty()) write_text_file(in.out, obj.dump(2) + "\n");
    std::cout << "mse " << format_double(res.mse) << "\n";
    return 0;
}

int cmd_synth(const Inputs& in) {
    require(in.spec, "--spec", "synth");
    require(in.out, "--out", "synth");
    json j;
    try {
        j = json::parse(read_text_file(in.spec));
    } catch (const json::exception& e) {
        throw ValidationError(in.spec + ": " + e.what());
    }
    auto spec = synth_spec_from_json(j);
    if (in.seed) spec.seed = *in.seed;
    const auto fam = generate_family(spec);
    write_family(fam, in.out);
    std::cerr << "synth: " << fam.corpus.samples.size() << " samples, " << fam.evals.size()
              << " models written to " << in.out << "\n";
    return 0;
}

int cmd_report(const Inputs& in) {
    if (in.kind == "summary") {
        if (in.reports.empty()) throw ValidationError("report summary: pass --report FILE at least once");
        std::vector<FitReport> reports;
        for (const auto& p : in.reports) reports.push_back(load_report(p));
        emit(in, emit_fit_summary(reports));
        return 0;
    }
    if (in.kind == "heatmap") {
        SalienceScorer scorer;
        if (!in.scorer.empty())
            scorer = load_scorer(in.scorer);
        else if (!in.fit_dir.empty())
            scorer = load_scorer(fs::path(in.fit_dir) / "scorer.json");
        else
            throw ValidationError("report heatmap: pass --scorer or --fit");
        const auto corpus = load_corpus_from(in, "report heatmap");
        emit(in, emit_salience_heatmap(corpus, scorer, in.samples));
        return 0;
    }
    if (in.kind == "scatter") {
        require(in.evals, "--evals", "report scatter");
        require(in.task_id, "--task-id", "report scatter");
        const auto axis = parse_axis(in.axis.empty() ? "csv_score" : in.axis);
        const auto evals = load_evals(in.evals);
        std::map<std::string, double> scores;
        std::optional<ScalingLawParams> params;
        if (!in.fit_dir.empty()) {
            const auto report = load_report(fs::path(in.fit_dir) / "report.json");
            for (const auto& r : report.rows) scores[r.model_id] = r.score;
            if (axis != ScatterAxis::flops) params = report.params;
        } else if (axis != ScatterAxis::flops) {
            throw ValidationError("report scatter: score axes need --fit");
        }
        const auto out = emit_scatter(evals, in.task_id, axis, scores, params);
        emit(in, out.data_csv);
        if (!out.curve_csv.empty() && !in.out.empty() && in.out != "-") {
            fs::path curve = in.out;
            curve.replace_extension(".curve.csv");
            write_text_file(curve, out.curve_csv);
        }
        return 0;
    }
    throw ValidationError("report: --kind must be scatter, heatmap or summary");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"csvscale: capability salience vectors and downstream scaling laws"};
    app.require_subcommand(1);
    Inputs in;

    auto add_data = [&](CLI::App* c) {
        c->add_option("--corpus", in.corpus, "Corpus file (JSONL)");
        c->add_option("--features", in.features, "Features file (default: sibling of --corpus)");
        c->add_option("--losses", in.losses, "Loss records (JSONL)");
        c->add_option("--threads", in.threads, "Worker threads (default: CSVSCALE_THREADS or 1)");
    };
    auto add_out = [&](CLI::App* c, const char* help) { c->add_option("--out", in.out, help); };

    auto* validate = app.add_subcommand("validate", "Check input files against every invariant");
    add_data(validate);
    validate->add_option("--evals", in.evals);
    validate->add_option("--tasks", in.tasks);

    auto* map = app.add_subcommand("map", "Map model losses into the target tokenization");
    add_data(map);
    add_out(map, "Output JSONL (default stdout)");

    auto* mix = app.add_subcommand("mix", "Assemble a mixed validation corpus");
    mix->add_option("--source", in.sources, "NAME=CORPUS_PATH (repeatable)");
    mix->add_option("--count", in.counts, "NAME=N (repeatable)");
    mix->add_option("--seed", in.seed);
    mix->add_option("--features", in.features, "Output features path");
    add_out(mix, "Output corpus path");

    auto add_fit = [&](CLI::App* c) {
        add_data(c);
        c->add_option("--evals", in.evals);
        c->add_option("--tasks", in.tasks);
        c->add_option("--task-id", in.task_id);
        c->add_option("--method", in.method, "csv | all_token | label_token");
        c->add_option("--config", in.config, "JSON file of optimization / LM keys");
        c->add_option("--seed", in.seed);
        add_out(c, "Output directory");
    };
    auto* fit = app.add_subcommand("fit", "Train the salience scorer and fit the law");
    add_fit(fit);
    auto* baseline = app.add_subcommand("baseline", "Fit the law on a baseline score");
    add_fit(baseline);

    auto* predict = app.add_subcommand("predict", "Predict accuracy from new loss records");
    add_data(predict);
    predict->add_option("--fit", in.fit_dir, "Directory written by fit/baseline");
    add_out(predict, "Output CSV (default stdout)");

    auto* evaluate = app.add_subcommand("evaluate", "Held-out MSE of a fitted law");
    add_data(evaluate);
    evaluate->add_option("--fit", in.fit_dir, "Directory written by fit/baseline");
    evaluate->add_option("--evals", in.evals);
    evaluate->add_option("--split", in.split, "train | val | test");
    add_out(evaluate, "Optional JSON with per-model rows");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic model family");
    synth->add_option("--spec", in.spec, "Family spec (JSON)");
    synth->add_option("--seed", in.seed);
    add_out(synth, "Output directory");

    auto* report = app.add_subcommand("report", "Scatter data, salience heatmaps, summary tables");
    add_data(report);
    report->add_option("--kind", in.kind, "scatter | heatmap | summary");
    report->add_option("--evals", in.evals);
    report->add_option("--task-id", in.task_id);
    report->add_option("--axis", in.axis, "flops | all_token | csv_score");
    report->add_option("--fit", in.fit_dir);
    report->add_option("--scorer", in.scorer);
    report->add_option("--report", in.reports, "report.json (repeatable)");
    report->add_option("--sample", in.samples, "sample_id (repeatable)");
    add_out(report, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*validate) return cmd_validate(in);
        if (*map) return cmd_map(in);
        if (*mix) return cmd_mix(in);
        if (*fit) return cmd_fit(in);
        if (*baseline) return cmd_baseline(in);
        if (*predict) return cmd_predict(in);
        if (*evaluate) return cmd_evaluate(in);
        if (*synth) return cmd_synth(in);
        if (*report) return cmd_report(in);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const FitError& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
