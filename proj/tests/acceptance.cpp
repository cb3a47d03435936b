// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "test_support.hpp"

using namespace csvscale;
namespace fs = std::filesystem;
namespace ts = testing_support;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (time_limit_s > 0 && secs > time_limit_s) {
        o.pass = false;
        o.detail += " (over time limit " + format_double(time_limit_s) + " s)";
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-34s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", x);
    return buf;
}

Outcome loss_conservation() {
    std::mt19937_64 rng(777);
    std::uniform_int_distribution<std::size_t> len(1, 300);
    std::uniform_real_distribution<double> loss(0.0, 12.0);
    double worst = 0.0;
    bool identity = true, nonneg = true;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = len(rng);
        auto src = ts::random_spans(n, 1 + rng() % 10, rng);
        auto tgt = ts::random_spans(n, 1 + rng() % 10, rng);
        std::vector<double> nll(src.size());
        for (auto& v : nll) v = loss(rng);
        const auto sample = ts::ascii_sample("s", n, tgt);
        const auto out = map_losses({"m", "s", src, nll}, sample);
        const double diff = std::abs(std::accumulate(out.begin(), out.end(), 0.0) -
                                     std::accumulate(nll.begin(), nll.end(), 0.0));
        worst = std::max(worst, diff);
        for (double v : out) nonneg = nonneg && v >= 0.0;
        std::vector<double> ident(tgt.size());
        for (auto& v : ident) v = loss(rng);
        identity = identity && map_losses({"m", "s", tgt, ident}, sample) == ident;
    }
    return {worst <= 1e-9 && identity && nonneg,
            "max |sum diff| " + sci(worst) + ", identity " + (identity ? "exact" : "BROKEN")};
}

Outcome lm_recovery() {
    double worst = 0.0;
    bool monotone = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto o = ts::lm_recovery_instance(seed);
        worst = std::max({worst, o.rel_error_alpha, o.rel_error_beta});
        monotone = monotone && o.monotone;
    }
    return {worst <= 1e-6 && monotone,
            "20 datasets, max rel err " + sci(worst) + ", MSE " + (monotone ? "non-increasing" : "INCREASED")};
}

Outcome gradient_check() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) worst = std::max(worst, ts::gradient_check_instance(1000 + seed));
    return {worst <= 1e-5, "100 configurations, max rel err " + sci(worst)};
}

Outcome epoch_zero() {
    double worst = 0.0;
    int families = 0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        for (int kind = 0; kind < 3; ++kind) {
            SyntheticFamily fam = kind == 0   ? generate_family(ts::shifted_spec(seed))
                                  : kind == 1 ? generate_family(ts::shifted_spec(seed, 0.01))
                                              : ts::tied_family(seed);
            auto cfg = ts::recovery_config(seed);
            cfg.max_steps = 1;
            auto res = run_alternating_optimization(fam.corpus, fam.mapped, fam.evals, fam.task, cfg);
            auto base = fit_baseline(all_token_scores(fam.mapped, fam.corpus.n_chars), fam.evals, fam.task,
                                     Method::all_token);
            worst = std::max(worst, std::abs(res.trace.front().mse_train - *base.mse_train));
            ++families;
        }
    }
    return {worst <= 1e-12, std::to_string(families) + " families, max |diff| " + sci(worst)};
}

Outcome synth_oracle() {
    double worst_clean = 0.0, worst_noisy = 0.0;
    std::size_t max_epochs = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        for (double noise : {0.0, 0.01}) {
            auto spec = ts::shifted_spec(seed, noise);
            if (spec.num_models != 40 || spec.num_samples != 50 || spec.tokens_per_sample != 30 || spec.feature_dim != 16)
                return {false, "family shape differs from 40 x 50 x 30, d = 16"};
            auto fam = generate_family(spec);
            auto cfg = ts::recovery_config(seed);
            cfg.threads = 1;
            auto res = run_alternating_optimization(fam.corpus, fam.mapped, fam.evals, fam.task, cfg);
            max_epochs = std::max(max_epochs, res.trace.size() - 1);
            double& worst = noise == 0.0 ? worst_clean : worst_noisy;
            worst = std::max(worst, *res.report.mse_test);
        }
    }
    return {worst_clean <= 1e-6 && worst_noisy <= 5e-4 && max_epochs <= 300,
            "5 seeds, test MSE noise-free " + sci(worst_clean) + " (<= 1e-6), sigma 0.01 " + sci(worst_noisy) +
                " (<= 5e-4), <= " + std::to_string(max_epochs) + " epochs"};
}

Outcome shifted_family_ordering() {
    double worst_ratio = 0.0;
    bool ties = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto fam = ts::tied_family(seed);
        auto at = all_token_scores(fam.mapped, fam.corpus.n_chars);
        for (std::size_t m = 0; m + 1 < at.size(); m += 2)
            ties = ties && std::abs(at[m].score - at[m + 1].score) <= 1e-12 * at[m].score;
        auto res = run_alternating_optimization(fam.corpus, fam.mapped, fam.evals, fam.task, ts::recovery_config(seed));
        auto base = fit_baseline(at, fam.evals, fam.task, Method::all_token);
        if (!(*base.mse_test > *res.report.mse_test)) return {false, "seed " + std::to_string(seed) + ": all-token not worse"};
        worst_ratio = std::max(worst_ratio, *res.report.mse_test / *base.mse_test);
    }
    return {ties && worst_ratio <= 0.5,
            std::string("5 seeds, mean losses ") + (ties ? "tie" : "DO NOT tie") + ", max CSV/all-token test MSE " +
                sci(worst_ratio) + " (<= 0.5)"};
}

Outcome reparameterization() {
    auto fam = generate_family(ts::shifted_spec(6, 0.01));
    auto res = run_alternating_optimization(fam.corpus, fam.mapped, fam.evals, fam.task, ts::recovery_config());
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const double a = std::exp(u(rng)), b = u(rng);
        const ScalingLawParams p = res.report.params;
        const ScalingLawParams q{p.alpha / a, a * p.beta + b, p.gamma};
        for (const auto& row : res.report.rows)
            worst = std::max(worst, std::abs(predict_accuracy(q, a * row.score + b) - row.predicted));
    }
    return {worst <= 1e-9, "200 affine maps, max prediction change " + sci(worst)};
}

Outcome rendering_fixture() {
    std::vector<FitReport> reports(3);
    const Method methods[] = {Method::csv, Method::all_token, Method::label_token};
    const double values[] = {1.45e-3, 2.40e-2, 3.31e-2};
    for (int k = 0; k < 3; ++k) {
        reports[k].task_id = "mmlu";
        reports[k].method = methods[k];
        reports[k].mse_test = values[k];
    }
    const auto table = emit_fit_summary(reports);
    const std::string row = table.substr(table.find('\n') + 1);
    const bool row_ok = row == "mmlu\t1.45e-3\t2.40e-2\t3.31e-2\n";

    auto dir = ts::scratch_dir("acceptance_percent");
    write_text_file(dir / "evals.jsonl",
                    R"({"model_id":"Llama-2-7b-hf","task_id":"mmlu","accuracy":46.78,"percent":true,"split":"train"})" "\n"
                    R"({"model_id":"Qwen2-72B","task_id":"gsm8k","accuracy":89.54,"percent":true,"split":"test"})" "\n");
    const auto evals = load_evals(dir / "evals.jsonl");
    write_text_file(dir / "again.jsonl", evals_to_jsonl(evals));
    const auto again = load_evals(dir / "again.jsonl");
    const bool ingest_ok = evals[0].accuracy == 0.4678 && evals[1].accuracy == 0.8954 &&
                           again[0].accuracy == 0.4678 && again[1].accuracy == 0.8954 &&
                           evals_to_jsonl(again) == evals_to_jsonl(evals);
    return {row_ok && ingest_ok, std::string("summary row ") + (row_ok ? "verbatim" : "DIFFERS") +
                                     ", 46.78 -> " + format_double(evals[0].accuracy) + ", 89.54 -> " +
                                     format_double(evals[1].accuracy)};
}

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + CSVSCALE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != "log.txt")
            out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
    return out;
}

Outcome cli_determinism() {
    auto base = ts::scratch_dir("acceptance_cli");
    auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
    write_text_file(base / "spec.json", R"({"num_models": 24, "num_samples": 20, "tokens_per_sample": 12, "feature_dim": 6,
        "noise_std": 0.01, "shift_profile": [{"src0": 1.3, "src1": 0.8}, {"src0": 0.8, "src1": 1.25}]})");
    write_text_file(base / "config.json", R"({"learning_rate": 1.0, "max_steps": 100})");
    std::vector<std::map<std::string, std::string>> runs;
    for (const char* tag : {"run1", "run2"}) {
        const fs::path o = base / tag;
        fs::create_directories(o);
        const fs::path log = o / "log.txt";
        const fs::path s = o / "family";
        const std::string data = "--corpus " + q(s / "corpus.jsonl") + " --losses " + q(s / "losses.jsonl");
        const std::string fit = data + " --evals " + q(s / "evals.jsonl") + " --tasks " + q(s / "tasks.jsonl") + " --task-id synth";
        const std::vector<std::string> steps = {
            "synth --spec " + q(base / "spec.json") + " --seed 11 --out " + q(s),
            "validate " + data + " --evals " + q(s / "evals.jsonl") + " --tasks " + q(s / "tasks.jsonl"),
            "map " + data + " --out " + q(o / "mapped.jsonl"),
            "mix --source src=" + q(s / "corpus.jsonl") + " --count src=10 --seed 4 --out " + q(o / "mix.jsonl"),
            "fit " + fit + " --config " + q(base / "config.json") + " --seed 5 --threads 2 --out " + q(o / "csv"),
            "baseline " + fit + " --method all_token --out " + q(o / "all"),
            "baseline " + fit + " --method label_token --out " + q(o / "label"),
            "predict " + data + " --fit " + q(o / "csv") + " --out " + q(o / "pred.csv"),
            "evaluate " + data + " --evals " + q(s / "evals.jsonl") + " --fit " + q(o / "csv") + " --split test --out " + q(o / "eval.json"),
            "report --kind summary --report " + q(o / "csv" / "report.json") + " --report " + q(o / "all" / "report.json") +
                " --report " + q(o / "label" / "report.json") + " --out " + q(o / "summary.tsv"),
            "report --kind scatter --evals " + q(s / "evals.jsonl") + " --task-id synth --axis csv_score --fit " + q(o / "csv") +
                " --out " + q(o / "scatter.csv"),
            "report --kind heatmap --corpus " + q(s / "corpus.jsonl") + " --fit " + q(o / "csv") + " --sample src0-0000 --out " +
                q(o / "heat.html"),
        };
        for (const auto& step : steps) {
            const int code = cli(step, log);
            if (code != 0) return {false, "exit " + std::to_string(code) + ": " + read_text_file(log)};
        }
        runs.push_back(snapshot(o));
    }
    if (runs[0].size() != runs[1].size()) return {false, "different file sets"};
    for (const auto& [name, bytes] : runs[0])
        if (runs[1].at(name) != bytes) return {false, name + " differs between runs"};
    return {true, std::to_string(runs[0].size()) + " output files byte-identical across reruns"};
}

}  // namespace

int main() {
    criterion("loss-mapping conservation", 5.0, loss_conservation);
    criterion("LM fitter recovery", 5.0, lm_recovery);
    criterion("gradient correctness", 30.0, gradient_check);
    criterion("epoch-0 / baseline equivalence", 0.0, epoch_zero);
    criterion("synthetic oracle recovery", 120.0, synth_oracle);
    criterion("shifted-family ordering", 0.0, shifted_family_ordering);
    criterion("reparameterization invariance", 0.0, reparameterization);
    criterion("rendering fixture", 0.0, rendering_fixture);
    criterion("CLI determinism", 0.0, cli_determinism);
    std::printf("%s: %d failing criteria\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
