#pragma once
// Run orchestration: dataset ingestion, per-record pipeline and baseline
// execution with failure isolation, bounded parallelism, and output emission
// (report JSONs, edit audit log, summary CSV, run manifest).

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "fides/aggregation.hpp"
#include "fides/backends.hpp"
#include "fides/core.hpp"
#include "fides/decomposition.hpp"
#include "fides/errors.hpp"
#include "fides/metrics.hpp"
#include "fides/prompts.hpp"
#include "fides/retrieval.hpp"
#include "fides/text.hpp"
#include "fides/verify_edit.hpp"

namespace fides {

enum class Method { Fides, Drqa, Dra };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::Fides: return "fides";
        case Method::Drqa: return "drqa";
        case Method::Dra: return "dra";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "fides") return Method::Fides;
    if (s == "drqa") return Method::Drqa;
    if (s == "dra") return Method::Dra;
    throw ConfigError("unsupported method: " + s + " (expected fides, drqa or dra)");
}

enum class AutoAisHypothesis { QuestionAnswer, AnswerOnly };

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct StageBackend {
    std::string kind = "mock";             // "mock" or "http"
    std::vector<std::string> fixtures;     // fixture JSONL paths (mock)
    BackendConfig http;                    // endpoint etc. (http)
    int max_tokens = -1;                   // -1 inherits the run-level value
    double temperature = -1.0;             // likewise
};

struct RunConfig {
    Method method = Method::Fides;
    bool disable_ss = false;
    bool disable_cd = false;
    bool disable_ecr = false;
    RetrievalParams retrieval;
    double tau = 0.5;
    ApVariant ap_variant = ApVariant::CountAny;
    AutoAisHypothesis auto_ais_hypothesis = AutoAisHypothesis::QuestionAnswer;
    std::string prompts_dir;               // empty = built-in templates
    std::string cache_dir = "page_cache";
    uint64_t seed = 0;
    bool offline = false;
    int parallelism = 4;
    int max_tokens = 512;
    double temperature = 0.0;
    size_t prompt_token_budget = 4096;
    std::map<std::string, StageBackend> backends;  // keys: default + stage names

    void validate() const {
        if (method != Method::Fides && (disable_ss || disable_cd || disable_ecr))
            throw ConfigError("ablation flags are only valid with method=fides");
        retrieval.validate();
        if (tau <= 0.0 || tau >= 1.0) throw ConfigError("tau must be in (0,1)");
        if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
        if (backends.empty()) throw ConfigError("at least one backend (key \"default\") must be configured");
    }

    static RunConfig from_json(const json& j);
    json to_json() const;
};

inline RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    if (j.contains("method")) cfg.method = method_from_string(j.at("method").get<std::string>());
    cfg.disable_ss = j.value("disable_ss", false);
    cfg.disable_cd = j.value("disable_cd", false);
    cfg.disable_ecr = j.value("disable_ecr", false);
    if (j.contains("retrieval")) {
        const json& r = j.at("retrieval");
        cfg.retrieval.m_pages = r.value("m_pages", 5);
        cfg.retrieval.j_snippets = r.value("j_snippets", 1);
        cfg.retrieval.window = r.value("window", 4);
        cfg.retrieval.stride = r.value("stride", 2);
    }
    cfg.tau = j.value("tau", 0.5);
    if (j.contains("ap_variant")) cfg.ap_variant = ap_variant_from_string(j.at("ap_variant").get<std::string>());
    if (j.contains("auto_ais_hypothesis")) {
        std::string h = j.at("auto_ais_hypothesis").get<std::string>();
        if (h == "question_answer") cfg.auto_ais_hypothesis = AutoAisHypothesis::QuestionAnswer;
        else if (h == "answer_only") cfg.auto_ais_hypothesis = AutoAisHypothesis::AnswerOnly;
        else throw ConfigError("unknown auto_ais_hypothesis: " + h);
    }
    cfg.prompts_dir = j.value("prompts_dir", std::string());
    cfg.cache_dir = j.value("cache_dir", std::string("page_cache"));
    cfg.seed = j.value("seed", 0ULL);
    cfg.offline = j.value("offline", false);
    cfg.parallelism = j.value("parallelism", 4);
    cfg.max_tokens = j.value("max_tokens", 512);
    cfg.temperature = j.value("temperature", 0.0);
    cfg.prompt_token_budget = j.value("prompt_token_budget", 4096ULL);
    if (j.contains("backends")) {
        for (const auto& [name, b] : j.at("backends").items()) {
            StageBackend sb;
            sb.kind = b.value("kind", std::string("mock"));
            if (sb.kind != "mock" && sb.kind != "http")
                throw ConfigError("backend kind must be mock or http, got " + sb.kind);
            if (b.contains("fixtures")) {
                if (b.at("fixtures").is_string())
                    sb.fixtures.push_back(b.at("fixtures").get<std::string>());
                else
                    for (const auto& f : b.at("fixtures")) sb.fixtures.push_back(f.get<std::string>());
            }
            sb.http.endpoint = b.value("endpoint", std::string());
            sb.http.auth_env_var = b.value("auth_env_var", std::string());
            sb.http.timeout_s = b.value("timeout", 30.0);
            sb.http.max_retries = b.value("max_retries", 2);
            sb.http.rate_limit_rps = b.value("rate_limit", 5.0);
            sb.max_tokens = b.value("max_tokens", -1);
            sb.temperature = b.value("temperature", -1.0);
            cfg.backends[name] = std::move(sb);
        }
    }
    return cfg;
}

inline json RunConfig::to_json() const {
    json backends_json = json::object();
    for (const auto& [name, b] : backends) {
        json bj{{"kind", b.kind}};
        if (!b.fixtures.empty()) bj["fixtures"] = b.fixtures;
        if (!b.http.endpoint.empty()) {
            bj["endpoint"] = b.http.endpoint;
            bj["auth_env_var"] = b.http.auth_env_var;
            bj["timeout"] = b.http.timeout_s;
            bj["max_retries"] = b.http.max_retries;
            bj["rate_limit"] = b.http.rate_limit_rps;
        }
        if (b.max_tokens >= 0) bj["max_tokens"] = b.max_tokens;
        if (b.temperature >= 0) bj["temperature"] = b.temperature;
        backends_json[name] = std::move(bj);
    }
    return json{{"method", to_string(method)},
                {"disable_ss", disable_ss},
                {"disable_cd", disable_cd},
                {"disable_ecr", disable_ecr},
                {"retrieval",
                 json{{"m_pages", retrieval.m_pages},
                      {"j_snippets", retrieval.j_snippets},
                      {"window", retrieval.window},
                      {"stride", retrieval.stride}}},
                {"tau", tau},
                {"ap_variant", to_string(ap_variant)},
                {"auto_ais_hypothesis",
                 auto_ais_hypothesis == AutoAisHypothesis::QuestionAnswer ? "question_answer" : "answer_only"},
                {"prompts_dir", prompts_dir},
                {"cache_dir", cache_dir},
                {"seed", seed},
                {"offline", offline},
                {"parallelism", parallelism},
                {"max_tokens", max_tokens},
                {"temperature", temperature},
                {"prompt_token_budget", prompt_token_budget},
                {"backends", std::move(backends_json)}};
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct DatasetRecord {
    std::string id;
    std::string question;
    std::optional<std::string> gold_answer;
};

// JSONL, one {id, question[, gold_answer]} per line; order preserved,
// duplicate ids rejected.
inline std::vector<DatasetRecord> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::vector<DatasetRecord> records;
    std::unordered_set<std::string> ids;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ": invalid JSON on line " + std::to_string(lineno) + ": " + e.what(), lineno);
        }
        DatasetRecord r;
        if (!j.contains("id") || !j.at("id").is_string())
            throw SchemaError(path + ": missing id on line " + std::to_string(lineno), lineno);
        r.id = j.at("id").get<std::string>();
        if (!j.contains("question") || !j.at("question").is_string() ||
            text::trim(j.at("question").get<std::string>()).empty())
            throw SchemaError(path + ": missing question on line " + std::to_string(lineno), lineno);
        r.question = j.at("question").get<std::string>();
        if (j.contains("gold_answer") && j.at("gold_answer").is_string())
            r.gold_answer = j.at("gold_answer").get<std::string>();
        if (!ids.insert(r.id).second)
            throw SchemaError(path + ": duplicate id '" + r.id + "' on line " + std::to_string(lineno), lineno);
        records.push_back(std::move(r));
    }
    if (records.empty()) throw ParseError(path + ": dataset is empty");
    return records;
}

// Offline preprocessing: pick n records from a dataset with a seeded,
// platform-independent Fisher-Yates draw. Emits the chosen raw lines in
// their original order so runs are pinned to an explicit file.
inline void sample_dataset(const std::string& in_path, const std::string& out_path, size_t n, uint64_t seed) {
    load_dataset(in_path);  // validates ids and questions before sampling
    std::ifstream in(in_path);
    if (!in) throw IoError("cannot open dataset: " + in_path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!text::trim(line).empty()) lines.push_back(line);
    if (n > lines.size())
        throw PreconditionError("sample size " + std::to_string(n) + " exceeds dataset size " +
                                std::to_string(lines.size()));
    std::vector<size_t> idx(lines.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng() % (i + 1)]);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot write sampled dataset: " + out_path);
    for (size_t i : idx) out << lines[i] << '\n';
}

// ---------------------------------------------------------------------------
// Backend wiring
// ---------------------------------------------------------------------------

struct CallCounts {
    int generate = 0;
    int search = 0;
    int rerank = 0;
};

namespace detail {

class CountingLlm : public LlmBackend {
public:
    CountingLlm(std::shared_ptr<LlmBackend> inner, int* counter) : inner_(std::move(inner)), counter_(counter) {}
    std::string generate(const std::string& prompt, int max_tokens, double temperature) override {
        ++*counter_;
        return inner_->generate(prompt, max_tokens, temperature);
    }

private:
    std::shared_ptr<LlmBackend> inner_;
    int* counter_;
};

class CountingSearch : public SearchBackend {
public:
    CountingSearch(std::shared_ptr<SearchBackend> inner, int* counter) : inner_(std::move(inner)), counter_(counter) {}
    std::vector<SearchResult> search(const std::string& query, int count) override {
        ++*counter_;
        return inner_->search(query, count);
    }

private:
    std::shared_ptr<SearchBackend> inner_;
    int* counter_;
};

class CountingRerank : public RerankBackend {
public:
    CountingRerank(std::shared_ptr<RerankBackend> inner, int* counter) : inner_(std::move(inner)), counter_(counter) {}
    std::vector<double> rerank(const std::string& query, const std::vector<std::string>& passages) override {
        ++*counter_;
        return inner_->rerank(query, passages);
    }

private:
    std::shared_ptr<RerankBackend> inner_;
    int* counter_;
};

}  // namespace detail

// Shared, concurrency-safe run state: resolved backends, prompt library,
// page fetcher, and the run-wide NLI cache.
class PipelineContext {
public:
    explicit PipelineContext(RunConfig cfg) : cfg_(std::move(cfg)), prompts_(make_prompts(cfg_)) {
        cfg_.validate();
        answer_llm_ = make_llm("answer_gen");
        ss_llm_ = make_llm("ss");
        cd_llm_ = make_llm("cd");
        ev_llm_ = make_llm("ev");
        fe_llm_ = make_llm("fe");
        search_ = make_search();
        rerank_ = make_rerank();
        nli_ = std::make_shared<CachingNli>(make_nli());
        pages_ = std::make_shared<PageFetcher>(cfg_.cache_dir, cfg_.offline, stage("search").http);
    }

    const RunConfig& config() const { return cfg_; }
    const PromptLibrary& prompts() const { return prompts_; }
    CachingNli& nli() { return *nli_; }
    PageFetcher& pages() { return *pages_; }
    std::shared_ptr<LlmBackend> answer_llm() const { return answer_llm_; }
    std::shared_ptr<LlmBackend> ss_llm() const { return ss_llm_; }
    std::shared_ptr<LlmBackend> cd_llm() const { return cd_llm_; }
    std::shared_ptr<LlmBackend> ev_llm() const { return ev_llm_; }
    std::shared_ptr<LlmBackend> fe_llm() const { return fe_llm_; }
    std::shared_ptr<SearchBackend> search_backend() const { return search_; }
    std::shared_ptr<RerankBackend> rerank_backend() const { return rerank_; }

    // Decoding parameters for a stage: the stage's own override when set,
    // otherwise the run-level defaults.
    GenParams gen_params(const std::string& name) const {
        GenParams p;
        p.max_tokens = cfg_.max_tokens;
        p.temperature = cfg_.temperature;
        auto it = cfg_.backends.find(name);
        if (it != cfg_.backends.end()) {
            if (it->second.max_tokens >= 0) p.max_tokens = it->second.max_tokens;
            if (it->second.temperature >= 0) p.temperature = it->second.temperature;
        }
        return p;
    }

    // Content hashes of every external input for the run manifest.
    json input_hashes(const std::string& dataset_path) const {
        json fixtures = json::object();
        for (const auto& [name, b] : cfg_.backends)
            for (const auto& f : b.fixtures) fixtures[f] = file_hash(f);
        return json{{"dataset", file_hash(dataset_path)},
                    {"fixtures", std::move(fixtures)},
                    {"page_cache", dir_hash(cfg_.cache_dir)},
                    {"prompts", cfg_.prompts_dir.empty() ? json("builtin") : json(dir_hash(cfg_.prompts_dir))}};
    }

    static std::string file_hash(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) return "missing";
        std::stringstream buf;
        buf << in.rdbuf();
        return text::stable_hash(buf.str());
    }

    static std::string dir_hash(const std::string& dir) {
        namespace fs = std::filesystem;
        if (!fs::exists(dir)) return "missing";
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        std::string acc;
        for (const auto& n : names) acc += n + ":" + file_hash((fs::path(dir) / n).string()) + ";";
        return text::stable_hash(acc);
    }

private:
    static PromptLibrary make_prompts(const RunConfig& cfg) {
        return cfg.prompts_dir.empty() ? PromptLibrary(cfg.prompt_token_budget)
                                       : PromptLibrary::from_directory(cfg.prompts_dir, cfg.prompt_token_budget);
    }

    const StageBackend& stage(const std::string& name) const {
        auto it = cfg_.backends.find(name);
        if (it != cfg_.backends.end()) return it->second;
        it = cfg_.backends.find("default");
        if (it != cfg_.backends.end()) return it->second;
        throw ConfigError("no backend configured for stage " + name + " and no default");
    }

    std::shared_ptr<const FixtureSet> fixtures_for(const StageBackend& sb) {
        std::string key;
        for (const auto& f : sb.fixtures) key += f + ";";
        auto it = fixture_cache_.find(key);
        if (it != fixture_cache_.end()) return it->second;
        auto set = std::make_shared<FixtureSet>();
        for (const auto& f : sb.fixtures) set->load_jsonl(f);
        fixture_cache_[key] = set;
        return set;
    }

    std::shared_ptr<LlmBackend> make_llm(const std::string& name) {
        const StageBackend& sb = stage(name);
        if (sb.kind == "http") return std::make_shared<HttpLlm>(sb.http);
        return std::make_shared<MockLlm>(fixtures_for(sb));
    }
    std::shared_ptr<SearchBackend> make_search() {
        const StageBackend& sb = stage("search");
        if (sb.kind == "http") return std::make_shared<HttpSearch>(sb.http);
        return std::make_shared<MockSearch>(fixtures_for(sb));
    }
    std::shared_ptr<RerankBackend> make_rerank() {
        const StageBackend& sb = stage("rerank");
        if (sb.kind == "http") return std::make_shared<HttpRerank>(sb.http);
        return std::make_shared<MockRerank>(fixtures_for(sb));
    }
    std::shared_ptr<NliBackend> make_nli() {
        const StageBackend& sb = stage("nli");
        if (sb.kind == "http") return std::make_shared<HttpNli>(sb.http);
        return std::make_shared<MockNli>(fixtures_for(sb));
    }

    RunConfig cfg_;
    PromptLibrary prompts_;
    std::shared_ptr<LlmBackend> answer_llm_, ss_llm_, cd_llm_, ev_llm_, fe_llm_;
    std::shared_ptr<SearchBackend> search_;
    std::shared_ptr<RerankBackend> rerank_;
    std::shared_ptr<CachingNli> nli_;
    std::shared_ptr<PageFetcher> pages_;
    std::unordered_map<std::string, std::shared_ptr<const FixtureSet>> fixture_cache_;
};

// ---------------------------------------------------------------------------
// Per-record execution
// ---------------------------------------------------------------------------

struct RecordRun {
    DatasetRecord record;
    LongFormAnswer answer_before;
    LongFormAnswer answer_after;
    std::vector<SentenceUnit> sentences_before;
    AttributionReport report;  // entries carry post-edit sentences
    MetricBundle before;
    MetricBundle after;
    int auto_ais = 0;
    std::vector<EditRecord> edits;
    CallCounts calls;
    std::vector<std::string> warnings;
};

namespace detail {

// Evidence set A consumed by Eq. 1 / Eq. 2: the report's snippets,
// first-occurrence unique under normalize_text across entries.
inline std::vector<std::string> report_evidence_texts(const AttributionReport& report) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& e : report.entries)
        for (const auto& s : e.evidence)
            if (seen.insert(normalize_text(s.text)).second) out.push_back(s.text);
    return out;
}

inline std::vector<std::string> sentence_texts(const std::vector<SentenceUnit>& units) {
    std::vector<std::string> out;
    out.reserve(units.size());
    for (const auto& u : units) out.push_back(u.text);
    return out;
}

inline int auto_ais_verdict(const PipelineContext& ctx_const, CachingNli& nli, const RunConfig& cfg,
                            const std::string& question, const std::string& answer,
                            const std::vector<std::string>& evidence) {
    (void)ctx_const;
    if (evidence.empty()) return 0;
    std::string premise;
    for (const auto& e : evidence) {
        if (!premise.empty()) premise.push_back(' ');
        premise += e;
    }
    std::string hypothesis = cfg.auto_ais_hypothesis == AutoAisHypothesis::QuestionAnswer
                                 ? question + " " + answer
                                 : answer;
    return nli.entail(premise, hypothesis) >= cfg.tau ? 1 : 0;
}

}  // namespace detail

// FIDES: generate -> SS(+ECR) -> CD -> per-fact retrieval -> EV -> FE
// (single pass) -> evidence aggregation -> before/after metrics.
inline RecordRun run_pipeline(PipelineContext& ctx, const DatasetRecord& record) {
    const RunConfig& cfg = ctx.config();
    if (cfg.method != Method::Fides) throw PreconditionError("run_pipeline requires method=fides");

    RecordRun run;
    run.record = record;

    auto answer_llm = std::make_shared<detail::CountingLlm>(ctx.answer_llm(), &run.calls.generate);
    auto ss_llm = std::make_shared<detail::CountingLlm>(ctx.ss_llm(), &run.calls.generate);
    auto cd_llm = std::make_shared<detail::CountingLlm>(ctx.cd_llm(), &run.calls.generate);
    auto ev_llm = std::make_shared<detail::CountingLlm>(ctx.ev_llm(), &run.calls.generate);
    auto fe_llm = std::make_shared<detail::CountingLlm>(ctx.fe_llm(), &run.calls.generate);
    detail::CountingSearch search(ctx.search_backend(), &run.calls.search);
    detail::CountingRerank rerank(ctx.rerank_backend(), &run.calls.rerank);

    DecomposerOptions dopts;
    dopts.disable_ecr = cfg.disable_ecr;
    dopts.answer_gen = ctx.gen_params("answer_gen");
    dopts.ss = ctx.gen_params("ss");
    dopts.cd = ctx.gen_params("cd");
    Decomposer decomposer(answer_llm, ss_llm, cd_llm, ctx.prompts(), dopts);

    run.answer_before = decomposer.generate_long_form_answer(record.question);

    std::vector<SentenceUnit> sentences;
    if (cfg.disable_ss) {
        SentenceUnit whole;
        whole.index = 0;
        whole.text = normalize_text(run.answer_before.answer_text);
        whole.subject_surface = text::first_word_chunk(whole.text);
        sentences.push_back(std::move(whole));
    } else {
        sentences = decomposer.segment_sentences(run.answer_before);
    }
    run.sentences_before = sentences;

    std::vector<AtomicFact> facts;
    for (const auto& sentence : sentences) {
        if (cfg.disable_cd) {
            AtomicFact f;
            f.sentence_index = sentence.index;
            f.fact_index = 0;
            f.text = sentence.text;
            facts.push_back(std::move(f));
        } else {
            for (auto& f : decomposer.decompose_claims(sentence)) facts.push_back(std::move(f));
        }
    }

    std::unordered_map<FactKey, std::vector<EvidenceSnippet>, FactKeyHash> evidence;
    for (const auto& fact : facts)
        evidence[fact.key()] =
            retrieve_evidence_for_fact(fact, cfg.retrieval, search, ctx.pages(), rerank, &run.warnings);

    VerifyEditOptions vopts;
    vopts.ev = ctx.gen_params("ev");
    vopts.fe = ctx.gen_params("fe");
    VerifierEditor verifier(ev_llm, fe_llm, ctx.prompts(), vopts);
    for (auto& fact : facts) {
        const auto& snippets = evidence[fact.key()];
        if (snippets.empty()) continue;  // unattributed: nothing to verify against
        const EvidenceSnippet& top = snippets.front();
        VerdictState verdict = verifier.verify_evidence(fact, top);
        if (verdict.state != Verdict::Conflict) continue;
        EditRecord edit;
        edit.fact_key = fact.key();
        edit.original = fact.text;
        edit.evidence_used = top;
        edit.verdict = verdict;
        try {
            edit.revised = verifier.edit_fact(fact, top, verdict);
            fact.revised_text = edit.revised;
        } catch (const EditError& e) {
            run.warnings.push_back(std::string("edit failed, fact left unedited: ") + e.what());
            edit.revised = fact.text;
        }
        run.edits.push_back(std::move(edit));
    }
    for (auto& w : decomposer.take_warnings()) run.warnings.push_back(std::move(w));
    for (auto& w : verifier.take_warnings()) run.warnings.push_back(std::move(w));

    ApplyEditsResult folded = apply_edits(sentences, facts, run.edits, run.answer_before, &run.warnings);
    run.answer_after = folded.answer;

    run.report = build_attribution_report(folded.sentences, evidence, run.edits);

    std::vector<std::string> evidence_texts = detail::report_evidence_texts(run.report);
    std::vector<std::string> before_texts = detail::sentence_texts(sentences);
    std::vector<std::string> after_texts = detail::sentence_texts(folded.sentences);
    NliMatrix before_mat = build_nli_matrix(before_texts, evidence_texts, cfg.tau, ctx.nli());
    NliMatrix after_mat = build_nli_matrix(after_texts, evidence_texts, cfg.tau, ctx.nli());
    run.before = compute_metrics(before_mat, cfg.ap_variant);
    run.after = compute_metrics(after_mat, cfg.ap_variant);
    run.auto_ais = detail::auto_ais_verdict(ctx, ctx.nli(), cfg, record.question,
                                            run.answer_after.answer_text, evidence_texts);
    return run;
}

// DRQA / DRA: one retrieval query per record (question+answer / answer),
// shared snippet pool attached to every sentence entry, verify/edit on the
// whole answer as a single unit.
inline RecordRun run_baseline(PipelineContext& ctx, const DatasetRecord& record) {
    const RunConfig& cfg = ctx.config();
    if (cfg.method == Method::Fides) throw PreconditionError("run_baseline requires method=drqa or dra");

    RecordRun run;
    run.record = record;

    auto answer_llm = std::make_shared<detail::CountingLlm>(ctx.answer_llm(), &run.calls.generate);
    auto ev_llm = std::make_shared<detail::CountingLlm>(ctx.ev_llm(), &run.calls.generate);
    auto fe_llm = std::make_shared<detail::CountingLlm>(ctx.fe_llm(), &run.calls.generate);
    detail::CountingSearch search(ctx.search_backend(), &run.calls.search);
    detail::CountingRerank rerank(ctx.rerank_backend(), &run.calls.rerank);

    DecomposerOptions dopts;
    dopts.answer_gen = ctx.gen_params("answer_gen");
    Decomposer decomposer(answer_llm, answer_llm, answer_llm, ctx.prompts(), dopts);
    run.answer_before = decomposer.generate_long_form_answer(record.question);

    std::vector<SentenceUnit> sentences = heuristic_segment(run.answer_before.answer_text);
    run.sentences_before = sentences;

    // one retrieval for the whole record
    std::string query = cfg.method == Method::Drqa ? record.question + " " + run.answer_before.answer_text
                                                   : run.answer_before.answer_text;
    AtomicFact whole;
    whole.sentence_index = 0;
    whole.fact_index = 0;
    whole.text = run.answer_before.answer_text;

    std::vector<EvidenceSnippet> pool;
    std::vector<SearchResult> results = search.search(query, cfg.retrieval.m_pages);
    if (!results.empty()) {
        std::vector<ChunkRef> chunks;
        for (const auto& r : results) {
            PageText page;
            try {
                page = ctx.pages().fetch(r.url);
            } catch (const PageError& e) {
                run.warnings.push_back(e.what());
                continue;
            }
            for (std::string& chunk : chunk_sliding_window(page.sentences, cfg.retrieval))
                chunks.push_back(ChunkRef{std::move(chunk), r.url, r.rank});
        }
        // rerank against the full answer
        if (!chunks.empty()) pool = rerank_and_select(whole, chunks, cfg.retrieval, rerank);
    }

    // verify/edit the answer as one unit against the top snippet
    run.answer_after = run.answer_before;
    std::vector<SentenceUnit> post_sentences = sentences;
    if (!pool.empty()) {
        VerifyEditOptions vopts;
        vopts.ev = ctx.gen_params("ev");
        vopts.fe = ctx.gen_params("fe");
        VerifierEditor verifier(ev_llm, fe_llm, ctx.prompts(), vopts);
        VerdictState verdict = verifier.verify_evidence(whole, pool.front());
        if (verdict.state == Verdict::Conflict) {
            EditRecord edit;
            edit.fact_key = {0, 0};
            edit.original = whole.text;
            edit.evidence_used = pool.front();
            edit.verdict = verdict;
            try {
                edit.revised = verifier.edit_fact(whole, pool.front(), verdict);
            } catch (const EditError& e) {
                run.warnings.push_back(std::string("edit failed, answer left unedited: ") + e.what());
                edit.revised = whole.text;
            }
            if (edit.revised != whole.text) {
                run.answer_after.answer_text = edit.revised;
                run.answer_after.edited = true;
                post_sentences = heuristic_segment(edit.revised);
            }
            run.edits.push_back(std::move(edit));
        }
        for (auto& w : verifier.take_warnings()) run.warnings.push_back(std::move(w));
    }

    // shared pool on every entry, deduplicated under normalization
    AttributionReport report;
    for (const auto& sentence : post_sentences) {
        AttributionReport::Entry entry;
        entry.sentence = sentence;
        std::unordered_set<std::string> seen;
        for (const auto& s : pool) {
            if (!seen.insert(normalize_text(s.text)).second) continue;
            EvidenceSnippet copy = s;
            copy.fact_key = {sentence.index, 0};
            entry.evidence.push_back(std::move(copy));
        }
        report.entries.push_back(std::move(entry));
    }
    ValidationResult check = validate_report(report, post_sentences);
    if (!check) throw ContractError("baseline report invalid: " + check.violation);
    run.report = std::move(report);

    std::vector<std::string> evidence_texts = detail::report_evidence_texts(run.report);
    NliMatrix before_mat =
        build_nli_matrix(detail::sentence_texts(sentences), evidence_texts, cfg.tau, ctx.nli());
    NliMatrix after_mat =
        build_nli_matrix(detail::sentence_texts(post_sentences), evidence_texts, cfg.tau, ctx.nli());
    run.before = compute_metrics(before_mat, cfg.ap_variant);
    run.after = compute_metrics(after_mat, cfg.ap_variant);
    run.auto_ais = detail::auto_ais_verdict(ctx, ctx.nli(), cfg, record.question,
                                            run.answer_after.answer_text, evidence_texts);
    return run;
}

inline RecordRun run_record(PipelineContext& ctx, const DatasetRecord& record) {
    return ctx.config().method == Method::Fides ? run_pipeline(ctx, record) : run_baseline(ctx, record);
}

// ---------------------------------------------------------------------------
// Batch execution with per-record failure isolation
// ---------------------------------------------------------------------------

struct RecordOutcome {
    DatasetRecord record;
    bool ok = false;
    std::string error;
    std::optional<RecordRun> run;
};

inline std::vector<RecordOutcome> run_batch(PipelineContext& ctx, const std::vector<DatasetRecord>& records) {
    std::vector<RecordOutcome> outcomes(records.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= records.size()) return;
            RecordOutcome& out = outcomes[i];
            out.record = records[i];
            try {
                out.run = run_record(ctx, records[i]);
                out.ok = true;
            } catch (const std::exception& e) {
                out.ok = false;
                out.error = e.what();
            }
        }
    };
    size_t n_threads = std::min<size_t>(static_cast<size_t>(ctx.config().parallelism), records.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return outcomes;
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

struct RunSummary {
    MetricBundle avg_before;
    MetricBundle avg_after;
    double avg_af1_after = 0.0;
    double auto_ais = 0.0;
    double abnormal_edit_rate = 0.0;
    size_t records_ok = 0;
    size_t records_failed = 0;
};

namespace detail {

inline std::string sanitize_id(const std::string& id) {
    std::string out;
    for (char c : id)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_' ? c : '_');
    return out.empty() ? "record" : out;
}

inline std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace detail

inline json record_report_json(const RecordRun& run) {
    ReportMetrics m;
    m.ar_before = run.before.ar;
    m.ar_after = run.after.ar;
    m.ap_before = run.before.ap;
    m.ap_after = run.after.ap;
    m.af1_after = run.after.af1;
    m.auto_ais = run.auto_ais;
    return report_to_json(run.record.question, run.answer_before.answer_text, run.answer_after.answer_text,
                          run.report, m, run.edits);
}

// Writes per-record reports, the edit audit JSONL, the summary CSV, and the
// run manifest; aborts with partial-output cleanup on I/O failure.
inline RunSummary emit_outputs(const std::vector<RecordOutcome>& outcomes, const PipelineContext& ctx,
                               const std::string& dataset_path, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const RunConfig& cfg = ctx.config();
    std::vector<fs::path> created;
    auto cleanup = [&]() {
        for (auto it = created.rbegin(); it != created.rend(); ++it) {
            std::error_code ec;
            fs::remove(*it, ec);
        }
    };
    try {
        fs::create_directories(fs::path(out_dir) / "reports");
        RunSummary summary;
        std::vector<int> ais_verdicts;
        size_t abnormal = 0;

        std::ofstream edits_out(fs::path(out_dir) / "edits.jsonl", std::ios::trunc);
        if (!edits_out) throw IoError("cannot write edit audit log");
        created.push_back(fs::path(out_dir) / "edits.jsonl");

        for (const auto& outcome : outcomes) {
            if (!outcome.ok) {
                ++summary.records_failed;
                continue;
            }
            const RecordRun& run = *outcome.run;
            fs::path report_path =
                fs::path(out_dir) / "reports" / (detail::sanitize_id(run.record.id) + ".json");
            {
                std::ofstream out(report_path, std::ios::trunc);
                if (!out) throw IoError("cannot write report " + report_path.string());
                out << record_report_json(run).dump(2) << '\n';
            }
            created.push_back(report_path);
            for (const auto& e : run.edits) {
                json line = edit_to_json(e);
                line["record_id"] = run.record.id;
                edits_out << line.dump() << '\n';
            }
            ++summary.records_ok;
            summary.avg_before.ar += run.before.ar;
            summary.avg_before.ap += run.before.ap;
            summary.avg_after.ar += run.after.ar;
            summary.avg_after.ap += run.after.ap;
            summary.avg_af1_after += run.after.af1;
            ais_verdicts.push_back(run.auto_ais);
            if (run.after.ar < run.before.ar || run.after.ap < run.before.ap) ++abnormal;
        }
        if (summary.records_ok > 0) {
            double n = static_cast<double>(summary.records_ok);
            summary.avg_before.ar /= n;
            summary.avg_before.ap /= n;
            summary.avg_after.ar /= n;
            summary.avg_after.ap /= n;
            summary.avg_af1_after /= n;
            summary.auto_ais = auto_ais_accuracy(ais_verdicts);
            summary.abnormal_edit_rate = static_cast<double>(abnormal) / n;
        }
        summary.avg_before.af1 = attr_f1(summary.avg_before.ar, summary.avg_before.ap);
        summary.avg_after.af1 = attr_f1(summary.avg_after.ar, summary.avg_after.ap);

        std::string dataset_name = fs::path(dataset_path).stem().string();
        {
            fs::path csv_path = fs::path(out_dir) / "summary.csv";
            std::ofstream csv(csv_path, std::ios::trunc);
            if (!csv) throw IoError("cannot write summary CSV");
            created.push_back(csv_path);
            csv << "dataset,method,ar_before,ar_after,ap_before,ap_after,af1_after,auto_ais\n";
            csv << dataset_name << ',' << to_string(cfg.method) << ','
                << detail::format_metric(summary.avg_before.ar) << ','
                << detail::format_metric(summary.avg_after.ar) << ','
                << detail::format_metric(summary.avg_before.ap) << ','
                << detail::format_metric(summary.avg_after.ap) << ','
                << detail::format_metric(summary.avg_af1_after) << ','
                << detail::format_metric(summary.auto_ais) << '\n';
        }
        {
            json records = json::array();
            for (const auto& outcome : outcomes) {
                json r{{"id", outcome.record.id}, {"ok", outcome.ok}};
                if (!outcome.ok) r["error"] = outcome.error;
                if (outcome.ok) {
                    r["search_calls"] = outcome.run->calls.search;
                    r["generate_calls"] = outcome.run->calls.generate;
                    r["rerank_calls"] = outcome.run->calls.rerank;
                    if (!outcome.run->warnings.empty()) r["warnings"] = outcome.run->warnings;
                }
                records.push_back(std::move(r));
            }
            json manifest{{"config", cfg.to_json()},
                          {"dataset_path", dataset_path},
                          {"inputs", ctx.input_hashes(dataset_path)},
                          {"records", std::move(records)},
                          {"aggregate",
                           json{{"records_ok", summary.records_ok},
                                {"records_failed", summary.records_failed},
                                {"ar_before", summary.avg_before.ar},
                                {"ar_after", summary.avg_after.ar},
                                {"ap_before", summary.avg_before.ap},
                                {"ap_after", summary.avg_after.ap},
                                {"af1_after", summary.avg_af1_after},
                                {"auto_ais", summary.auto_ais},
                                {"abnormal_edit_rate", summary.abnormal_edit_rate}}}};
            fs::path manifest_path = fs::path(out_dir) / "manifest.json";
            std::ofstream out(manifest_path, std::ios::trunc);
            if (!out) throw IoError("cannot write manifest");
            created.push_back(manifest_path);
            out << manifest.dump(2) << '\n';
        }
        return summary;
    } catch (...) {
        cleanup();
        throw;
    }
}

}  // namespace fides
