// fides command line: `run` executes a method over a JSONL dataset and emits
// reports, the edit audit log, a summary CSV and a run manifest; `score`
// recomputes metrics from saved report JSONs; `dump-prompts` writes the
// built-in templates out for editing.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fides/fides.hpp"

namespace fs = std::filesystem;

namespace {

fides::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fides::IoError("cannot open " + path);
    fides::json j;
    in >> j;
    return j;
}

int cmd_run(const std::string& dataset_path, const std::string& config_path, const std::string& out_dir,
            const fides::json& overrides) {
    fides::json config_json = config_path.empty() ? fides::json::object() : load_json_file(config_path);
    for (const auto& [k, v] : overrides.items()) config_json[k] = v;
    fides::RunConfig cfg = fides::RunConfig::from_json(config_json);
    cfg.validate();

    std::vector<fides::DatasetRecord> records = fides::load_dataset(dataset_path);
    fides::PipelineContext ctx(std::move(cfg));
    std::vector<fides::RecordOutcome> outcomes = fides::run_batch(ctx, records);
    fides::RunSummary summary = fides::emit_outputs(outcomes, ctx, dataset_path, out_dir);

    std::cout << "records: " << summary.records_ok << " ok, " << summary.records_failed << " failed\n";
    for (const auto& o : outcomes)
        if (!o.ok) std::cout << "  [failed] " << o.record.id << ": " << o.error << "\n";
    std::cout << "AR " << summary.avg_before.ar << " -> " << summary.avg_after.ar << "\n"
              << "AP " << summary.avg_before.ap << " -> " << summary.avg_after.ap << "\n"
              << "AF1 (after) " << summary.avg_af1_after << "\n"
              << "AutoAIS " << summary.auto_ais << "\n"
              << "abnormal edit rate " << summary.abnormal_edit_rate << "\n"
              << "outputs in " << out_dir << "\n";
    return summary.records_failed == 0 ? 0 : 1;
}

int cmd_score(const std::string& report_path, const std::string& config_path, double tau,
              const std::string& ap_variant) {
    fides::json config_json = config_path.empty() ? fides::json::object() : load_json_file(config_path);
    if (!config_json.contains("backends"))
        config_json["backends"] = {{"default", {{"kind", "mock"}}}};
    fides::RunConfig cfg = fides::RunConfig::from_json(config_json);
    fides::PipelineContext ctx(std::move(cfg));
    fides::CachingNli& nli = ctx.nli();
    fides::ApVariant variant = fides::ap_variant_from_string(ap_variant);

    std::vector<fs::path> paths;
    if (fs::is_directory(report_path)) {
        for (const auto& e : fs::directory_iterator(report_path))
            if (e.path().extension() == ".json") paths.push_back(e.path());
        std::sort(paths.begin(), paths.end());
    } else {
        paths.push_back(report_path);
    }
    if (paths.empty()) {
        std::cerr << "no report files under " << report_path << "\n";
        return 1;
    }
    double ar = 0, ap = 0, af1 = 0;
    for (const auto& p : paths) {
        fides::ScoredReport scored = fides::score_report(load_json_file(p.string()), tau, variant, nli);
        std::cout << p.filename().string() << ": AR " << scored.recomputed.ar << " AP " << scored.recomputed.ap
                  << " AF1 " << scored.recomputed.af1 << " (stored after: AR " << scored.stored.ar_after
                  << " AP " << scored.stored.ap_after << " AF1 " << scored.stored.af1_after << ")\n";
        ar += scored.recomputed.ar;
        ap += scored.recomputed.ap;
        af1 += scored.recomputed.af1;
    }
    double n = static_cast<double>(paths.size());
    std::cout << "mean over " << paths.size() << " report(s): AR " << ar / n << " AP " << ap / n << " AF1 "
              << af1 / n << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FIDES: post-hoc attribution for long-form answers"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run a method over a dataset");
    std::string method = "fides", dataset, config_path, out_dir = "out";
    bool offline = false, disable_ss = false, disable_cd = false, disable_ecr = false;
    int m_pages = -1, j_snippets = -1, window = -1, stride = -1;
    double tau = -1.0;
    std::string ap_variant, prompts_dir, cache_dir;
    long long seed = -1;
    run->add_option("--method", method, "fides | drqa | dra");
    run->add_option("--dataset", dataset, "dataset JSONL path")->required();
    run->add_option("--config", config_path, "run config JSON");
    run->add_option("--out", out_dir, "output directory");
    run->add_flag("--offline", offline, "forbid network; error on page-cache miss");
    run->add_flag("--disable-ss", disable_ss, "skip sentence segmentation");
    run->add_flag("--disable-cd", disable_cd, "skip claim decomposition");
    run->add_flag("--disable-ecr", disable_ecr, "heuristic segmentation without coreference prompt");
    run->add_option("--m", m_pages, "webpages per fact (M)");
    run->add_option("--j", j_snippets, "snippets per fact (J)");
    run->add_option("--window", window, "chunk window in sentences (W)");
    run->add_option("--stride", stride, "chunk stride in sentences");
    run->add_option("--tau", tau, "NLI binarization threshold");
    run->add_option("--ap-variant", ap_variant, "count_any | token_any | count_all");
    run->add_option("--prompts-dir", prompts_dir, "prompt template directory");
    run->add_option("--cache-dir", cache_dir, "page cache directory");
    run->add_option("--seed", seed, "run seed recorded in the manifest");

    // score
    auto* score = app.add_subcommand("score", "recompute metrics from saved reports");
    std::string report_path, score_config;
    double score_tau = 0.5;
    std::string score_variant = "count_any";
    score->add_option("--report", report_path, "report JSON file or directory")->required();
    score->add_option("--config", score_config, "config JSON naming the NLI backend");
    score->add_option("--tau", score_tau, "NLI binarization threshold");
    score->add_option("--ap-variant", score_variant, "count_any | token_any | count_all");

    // sample
    auto* sample = app.add_subcommand("sample", "draw a seeded sample from a dataset");
    std::string sample_in, sample_out;
    size_t sample_n = 150;
    unsigned long long sample_seed = 0;
    sample->add_option("--in", sample_in, "source dataset JSONL")->required();
    sample->add_option("--out", sample_out, "sampled dataset JSONL")->required();
    sample->add_option("--n", sample_n, "number of records to keep");
    sample->add_option("--seed", sample_seed, "sampling seed");

    // dump-prompts
    auto* dump = app.add_subcommand("dump-prompts", "write the built-in prompt templates to a directory");
    std::string dump_dir = "prompts";
    dump->add_option("--dir", dump_dir, "target directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(run)) {
            fides::json overrides = fides::json::object();
            overrides["method"] = method;
            if (offline) overrides["offline"] = true;
            if (disable_ss) overrides["disable_ss"] = true;
            if (disable_cd) overrides["disable_cd"] = true;
            if (disable_ecr) overrides["disable_ecr"] = true;
            fides::json retrieval = fides::json::object();
            if (m_pages > 0) retrieval["m_pages"] = m_pages;
            if (j_snippets > 0) retrieval["j_snippets"] = j_snippets;
            if (window > 0) retrieval["window"] = window;
            if (stride > 0) retrieval["stride"] = stride;
            if (!retrieval.empty()) {
                // merge over config-file values, preserving unspecified fields
                fides::json base = fides::json::object();
                if (!config_path.empty()) {
                    fides::json file = load_json_file(config_path);
                    if (file.contains("retrieval")) base = file["retrieval"];
                }
                for (const auto& [k, v] : retrieval.items()) base[k] = v;
                overrides["retrieval"] = base;
            }
            if (tau > 0) overrides["tau"] = tau;
            if (!ap_variant.empty()) overrides["ap_variant"] = ap_variant;
            if (!prompts_dir.empty()) overrides["prompts_dir"] = prompts_dir;
            if (!cache_dir.empty()) overrides["cache_dir"] = cache_dir;
            if (seed >= 0) overrides["seed"] = seed;
            return cmd_run(dataset, config_path, out_dir, overrides);
        }
        if (app.got_subcommand(score)) return cmd_score(report_path, score_config, score_tau, score_variant);
        if (app.got_subcommand(sample)) {
            fides::sample_dataset(sample_in, sample_out, sample_n, sample_seed);
            std::cout << "wrote " << sample_n << " records to " << sample_out << "\n";
            return 0;
        }
        if (app.got_subcommand(dump)) {
            fides::PromptLibrary().write_defaults(dump_dir);
            std::cout << "templates written to " << dump_dir << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
