#include <doctest.h>

#include "fides/harness.hpp"
#include "fides/scoring.hpp"
#include "test_support.hpp"

using namespace fides;

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

TEST_CASE("load_dataset parses JSONL in order") {
    testsup::TempDir tmp("ds");
    std::string path = tmp.sub("d.jsonl");
    std::string content;
    for (int i = 0; i < 150; ++i)
        content += "{\"id\":\"q" + std::to_string(i) + "\",\"question\":\"Question " + std::to_string(i) +
                   "?\",\"gold_answer\":\"a\"}\n";
    testsup::write_file(path, content);
    auto records = load_dataset(path);
    REQUIRE(records.size() == 150);
    CHECK(records[0].id == "q0");
    CHECK(records[149].id == "q149");
    CHECK(records[0].gold_answer.has_value());
}

TEST_CASE("load_dataset rejects bad inputs with line numbers") {
    testsup::TempDir tmp("ds");
    std::string path = tmp.sub("d.jsonl");

    testsup::write_file(path, "");
    CHECK_THROWS_AS(load_dataset(path), ParseError);

    testsup::write_file(path, "{\"id\":\"a\",\"question\":\"ok?\"}\nnot json\n");
    try {
        load_dataset(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 2);
    }

    testsup::write_file(path, "{\"id\":\"a\",\"question\":\"ok?\"}\n{\"id\":\"b\"}\n");
    try {
        load_dataset(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.line_number == 2);
        CHECK(std::string(e.what()).find("question") != std::string::npos);
    }

    testsup::write_file(path, "{\"id\":\"a\",\"question\":\"ok?\"}\n{\"id\":\"a\",\"question\":\"dup?\"}\n");
    CHECK_THROWS_AS(load_dataset(path), SchemaError);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST_CASE("run config round trips through json and validates") {
    json j{{"method", "fides"},
           {"disable_cd", true},
           {"retrieval", {{"m_pages", 3}, {"j_snippets", 2}, {"window", 5}, {"stride", 3}}},
           {"tau", 0.6},
           {"ap_variant", "token_any"},
           {"backends", {{"default", {{"kind", "mock"}, {"fixtures", "f.jsonl"}}}}}};
    RunConfig cfg = RunConfig::from_json(j);
    CHECK(cfg.method == Method::Fides);
    CHECK(cfg.disable_cd);
    CHECK(cfg.retrieval.m_pages == 3);
    CHECK(cfg.tau == doctest::Approx(0.6));
    CHECK(cfg.ap_variant == ApVariant::TokenAny);
    CHECK_NOTHROW(cfg.validate());

    RunConfig back = RunConfig::from_json(cfg.to_json());
    CHECK(back.retrieval.j_snippets == 2);
    CHECK(back.backends.at("default").fixtures == std::vector<std::string>{"f.jsonl"});
}

TEST_CASE("stage decoding parameters override the run-level defaults") {
    json j{{"max_tokens", 256},
           {"temperature", 0.2},
           {"backends",
            {{"default", {{"kind", "mock"}}},
             {"fe", {{"kind", "mock"}, {"max_tokens", 1024}, {"temperature", 0.7}}}}}};
    RunConfig cfg = RunConfig::from_json(j);
    PipelineContext ctx(std::move(cfg));
    CHECK(ctx.gen_params("ss").max_tokens == 256);
    CHECK(ctx.gen_params("ss").temperature == doctest::Approx(0.2));
    CHECK(ctx.gen_params("fe").max_tokens == 1024);
    CHECK(ctx.gen_params("fe").temperature == doctest::Approx(0.7));
}

TEST_CASE("sample_dataset draws a deterministic seeded subset") {
    testsup::TempDir tmp("sample");
    std::string src = tmp.sub("big.jsonl");
    std::string content;
    for (int i = 0; i < 300; ++i)
        content += "{\"id\":\"r" + std::to_string(i) + "\",\"question\":\"Q" + std::to_string(i) + "?\"}\n";
    testsup::write_file(src, content);

    std::string out1 = tmp.sub("s1.jsonl"), out2 = tmp.sub("s2.jsonl"), out3 = tmp.sub("s3.jsonl");
    sample_dataset(src, out1, 150, 42);
    sample_dataset(src, out2, 150, 42);
    sample_dataset(src, out3, 150, 43);
    CHECK(testsup::read_file(out1) == testsup::read_file(out2));
    CHECK(testsup::read_file(out1) != testsup::read_file(out3));

    auto sampled = load_dataset(out1);
    REQUIRE(sampled.size() == 150);
    // original order is preserved
    auto all = load_dataset(src);
    size_t cursor = 0;
    for (const auto& r : sampled) {
        while (cursor < all.size() && all[cursor].id != r.id) ++cursor;
        CHECK(cursor < all.size());
    }

    CHECK_THROWS_AS(sample_dataset(src, out1, 500, 0), PreconditionError);
}

TEST_CASE("ablations are rejected for baselines and unknown methods fail") {
    RunConfig cfg;
    cfg.method = Method::Drqa;
    cfg.disable_cd = true;
    cfg.backends["default"] = StageBackend{};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    CHECK_THROWS_AS(method_from_string("rarr"), ConfigError);
}

// ---------------------------------------------------------------------------
// Full pipeline on the Mount Rainier fixture
// ---------------------------------------------------------------------------

TEST_CASE("fides pipeline decomposes, retrieves, revises and reports") {
    testsup::RainierFixture fx;
    PipelineContext ctx(fx.config());
    RecordRun run = run_pipeline(ctx, fx.record());

    // SS: two sentences, explicit subject on the second
    REQUIRE(run.sentences_before.size() == 2);
    CHECK(run.sentences_before[1].subject_surface == "Mount Rainier");

    // SS+CD: four atomic facts, one search call each
    CHECK(run.calls.search == 4);

    // report shape
    REQUIRE(run.report.entries.size() == 2);
    CHECK(run.report.entries[0].evidence.size() == 2);
    CHECK(run.report.entries[1].evidence.size() == 2);

    // the conflicting fact was revised
    REQUIRE(run.edits.size() == 1);
    CHECK(run.edits[0].fact_key == FactKey{0, 1});
    CHECK(run.edits[0].verdict.state == Verdict::Conflict);
    CHECK(run.answer_after.answer_text.find("Washington") != std::string::npos);
    CHECK(run.answer_after.answer_text.find("Oregon") == std::string::npos);
    CHECK(run.answer_after.edited);
    CHECK(run.answer_after.answer_text == fx.answer_after);
    // the report sentence carries the revised fact text
    CHECK(run.report.entries[0].sentence.text == fx.s1_after);

    // single pass: 1 answer + 1 SS + 2 CD + 4 EV + 1 FE prompts, no re-verification
    CHECK(run.calls.generate == 9);

    // metrics pinned by the NLI fixtures
    CHECK(run.before.ar == doctest::Approx(0.575));   // avg(0.3, 0.85)
    CHECK(run.after.ar == doctest::Approx(0.9));      // avg(0.95, 0.85)
    CHECK(run.before.ap == doctest::Approx(0.5));     // location+volcano noisy before
    CHECK(run.after.ap == doctest::Approx(0.75));     // location becomes valid
    CHECK(run.after.ar >= run.before.ar);
    CHECK(run.auto_ais == 1);

    // the report validates against its own sentences
    std::vector<SentenceUnit> post;
    for (const auto& e : run.report.entries) post.push_back(e.sentence);
    CHECK(validate_report(run.report, post).ok);
}

TEST_CASE("pipeline runs are deterministic") {
    testsup::RainierFixture fx;
    PipelineContext ctx(fx.config());
    RecordRun a = run_pipeline(ctx, fx.record());
    RecordRun b = run_pipeline(ctx, fx.record());
    CHECK(record_report_json(a).dump() == record_report_json(b).dump());

    PipelineContext ctx2(fx.config());
    RecordRun c = run_pipeline(ctx2, fx.record());
    CHECK(record_report_json(a).dump() == record_report_json(c).dump());
}

TEST_CASE("disable_cd retrieves once per sentence") {
    testsup::RainierFixture fx;
    RunConfig cfg = fx.config();
    cfg.disable_cd = true;
    PipelineContext ctx(std::move(cfg));
    RecordRun run = run_pipeline(ctx, fx.record());
    CHECK(run.sentences_before.size() == 2);
    CHECK(run.calls.search == 2);  // one query per sentence
    CHECK(run.edits.empty());      // no EV fixtures for sentence-level facts
}

TEST_CASE("disable_ss treats the whole answer as one sentence") {
    testsup::RainierFixture fx;
    RunConfig cfg = fx.config();
    cfg.disable_ss = true;
    cfg.disable_cd = true;  // answer text has no CD fixture either
    PipelineContext ctx(std::move(cfg));
    RecordRun run = run_pipeline(ctx, fx.record());
    CHECK(run.sentences_before.size() == 1);
    CHECK(run.calls.search == 1);
    CHECK(run.report.entries.size() == 1);
}

TEST_CASE("dra issues exactly one search keyed by the answer") {
    testsup::RainierFixture fx;
    PipelineContext ctx(fx.config(Method::Dra));
    RecordRun run = run_baseline(ctx, fx.record());
    CHECK(run.calls.search == 1);
    // the query hit the fixture keyed by the raw answer, so evidence exists
    REQUIRE(run.report.entries.size() == 2);
    REQUIRE_FALSE(run.report.entries[0].evidence.empty());
    CHECK(run.report.entries[0].evidence[0].source_url == fx.url_location);
    // every entry shares the pool
    CHECK(run.report.entries[1].evidence[0].text == run.report.entries[0].evidence[0].text);
    CHECK(run.edits.empty());  // no EV fixture for the whole answer: no conflict
}

TEST_CASE("drqa prepends the question to the query") {
    testsup::RainierFixture fx;
    PipelineContext ctx(fx.config(Method::Drqa));
    RecordRun run = run_baseline(ctx, fx.record());
    CHECK(run.calls.search == 1);
    REQUIRE_FALSE(run.report.entries.empty());
    REQUIRE_FALSE(run.report.entries[0].evidence.empty());
    CHECK(run.report.entries[0].evidence[0].source_url == fx.url_location);
}

TEST_CASE("run_record dispatches on method") {
    testsup::RainierFixture fx;
    PipelineContext fides_ctx(fx.config());
    CHECK_THROWS_AS(run_baseline(fides_ctx, fx.record()), PreconditionError);
    PipelineContext dra_ctx(fx.config(Method::Dra));
    CHECK_THROWS_AS(run_pipeline(dra_ctx, fx.record()), PreconditionError);
}

// ---------------------------------------------------------------------------
// Batch execution and emission
// ---------------------------------------------------------------------------

TEST_CASE("batch run isolates per-record failures") {
    testsup::RainierFixture fx;
    PipelineContext ctx(fx.config());
    std::vector<DatasetRecord> records{fx.record(), {"broken", "question with no fixtures?", std::nullopt}};
    auto outcomes = run_batch(ctx, records);
    REQUIRE(outcomes.size() == 2);
    CHECK(outcomes[0].ok);
    CHECK_FALSE(outcomes[1].ok);
    CHECK(!outcomes[1].error.empty());
    // the failing record did not disturb the good one
    CHECK(outcomes[0].run->answer_after.answer_text.find("Washington") != std::string::npos);
}

TEST_CASE("emit_outputs writes reports, audit log, csv and manifest") {
    testsup::BatchFixture fx;
    PipelineContext ctx(fx.config());
    auto records = load_dataset(fx.dataset_path);
    auto outcomes = run_batch(ctx, records);
    testsup::TempDir out("emit");
    RunSummary summary = emit_outputs(outcomes, ctx, fx.dataset_path, out.str());

    CHECK(summary.records_ok == 10);
    CHECK(summary.records_failed == 0);
    // record q7 carries the harmful edit
    CHECK(summary.abnormal_edit_rate == doctest::Approx(0.1));

    int n_reports = 0;
    for (const auto& e : std::filesystem::directory_iterator(out.sub("reports"))) {
        ++n_reports;
        (void)e;
    }
    CHECK(n_reports == 10);

    std::string csv = testsup::read_file(out.sub("summary.csv"));
    CHECK(csv.find("dataset,method,ar_before,ar_after,ap_before,ap_after,af1_after,auto_ais\n") == 0);
    CHECK(csv.find("dataset,fides,") != std::string::npos);
    // exactly one data row
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

    std::string edits = testsup::read_file(out.sub("edits.jsonl"));
    CHECK(edits.find("\"record_id\":\"q7\"") != std::string::npos);

    json manifest = json::parse(testsup::read_file(out.sub("manifest.json")));
    CHECK(manifest.at("records").size() == 10);
    CHECK(manifest.at("aggregate").at("records_ok") == 10);
    CHECK(manifest.at("config").at("method") == "fides");
    // call accounting is persisted: 2 facts per record
    for (const auto& r : manifest.at("records")) CHECK(r.at("search_calls") == 2);
}

TEST_CASE("emit_outputs cleans up partial outputs on I/O failure") {
    testsup::RainierFixture fx;
    PipelineContext ctx(fx.config());
    auto outcomes = run_batch(ctx, {fx.record()});
    testsup::TempDir out("cleanup");
    // occupy the report path with a directory so the write fails
    std::filesystem::create_directories(out.sub("reports/rainier-1.json"));
    CHECK_THROWS(emit_outputs(outcomes, ctx, fx.dataset_path, out.str()));
    // the already-written audit log was removed again
    CHECK_FALSE(std::filesystem::exists(out.sub("edits.jsonl")));
    CHECK_FALSE(std::filesystem::exists(out.sub("summary.csv")));
}

TEST_CASE("rerunning the batch reproduces the outputs byte for byte") {
    testsup::BatchFixture fx;
    auto records = load_dataset(fx.dataset_path);

    testsup::TempDir out1("rerun1"), out2("rerun2");
    {
        PipelineContext ctx(fx.config());
        emit_outputs(run_batch(ctx, records), ctx, fx.dataset_path, out1.str());
    }
    {
        PipelineContext ctx(fx.config());
        emit_outputs(run_batch(ctx, records), ctx, fx.dataset_path, out2.str());
    }
    CHECK(testsup::read_file(out1.sub("summary.csv")) == testsup::read_file(out2.sub("summary.csv")));
    CHECK(testsup::read_file(out1.sub("edits.jsonl")) == testsup::read_file(out2.sub("edits.jsonl")));
    for (int i = 1; i <= 10; ++i) {
        std::string name = "reports/q" + std::to_string(i) + ".json";
        std::string a = testsup::read_file(out1.sub(name));
        CHECK(!a.empty());
        CHECK(a == testsup::read_file(out2.sub(name)));
    }
}

TEST_CASE("batch outputs do not depend on the parallelism level") {
    testsup::BatchFixture fx;
    auto records = load_dataset(fx.dataset_path);

    auto run_with_parallelism = [&](int n, const std::string& out_dir) {
        RunConfig cfg = fx.config();
        cfg.parallelism = n;
        PipelineContext ctx(std::move(cfg));
        emit_outputs(run_batch(ctx, records), ctx, fx.dataset_path, out_dir);
    };
    testsup::TempDir out("par");
    run_with_parallelism(1, out.sub("p1"));
    run_with_parallelism(8, out.sub("p8"));
    CHECK(testsup::read_file(out.sub("p1/summary.csv")) == testsup::read_file(out.sub("p8/summary.csv")));
    for (int i = 1; i <= 10; ++i) {
        std::string name = "reports/q" + std::to_string(i) + ".json";
        CHECK(testsup::read_file(out.sub("p1/" + name)) == testsup::read_file(out.sub("p8/" + name)));
    }
}

TEST_CASE("a baseline with no search results yields an unattributed report") {
    testsup::RainierFixture fx;
    // a question whose generated answer has no search fixture
    PromptLibrary prompts;
    FixtureSet extra;
    std::string q = "What has no evidence anywhere?";
    extra.add_generate(prompts.get(Stage::AnswerGen).render(q, q),
                       "Nothing can be found about this. It stays unattributed.");
    std::string extra_path = fx.tmp.sub("extra.jsonl");
    extra.save_jsonl(extra_path);
    RunConfig cfg2 = fx.config(fides::Method::Dra);
    cfg2.backends["default"].fixtures.push_back(extra_path);
    PipelineContext ctx2(std::move(cfg2));
    RecordRun run = run_baseline(ctx2, {"noev", q, std::nullopt});
    CHECK(run.calls.search == 1);
    REQUIRE(run.report.entries.size() == 2);
    CHECK(run.report.entries[0].evidence.empty());
    CHECK(run.before.ar == doctest::Approx(0.0));
    CHECK(run.before.ap == doctest::Approx(0.0));
    CHECK(run.auto_ais == 0);
    CHECK_FALSE(run.answer_after.edited);
}

TEST_CASE("score recomputes metrics from a saved report") {
    testsup::RainierFixture fx;
    PipelineContext ctx(fx.config());
    RecordRun run = run_pipeline(ctx, fx.record());
    json report = record_report_json(run);

    CachingNli nli(std::make_shared<MockNli>([&] {
        auto set = std::make_shared<FixtureSet>();
        set->load_jsonl(fx.fixtures_path);
        return set;
    }()));
    ScoredReport scored = score_report(report, 0.5, ApVariant::CountAny, nli);
    // the report stores post-edit sentences, so recomputation matches "after"
    CHECK(scored.recomputed.ar == doctest::Approx(run.after.ar));
    CHECK(scored.recomputed.ap == doctest::Approx(run.after.ap));
    CHECK(scored.stored.af1_after == doctest::Approx(run.after.af1));
}

TEST_CASE("stages resolve their own backends before the default") {
    // split the rainier fixtures: CD entries live in a stage-specific file,
    // everything else stays under "default"
    testsup::RainierFixture fx;
    PromptLibrary prompts;
    FixtureSet cd_only;
    cd_only.add_generate(prompts.get(Stage::CD).render(fx.s1_before), "1. " + fx.f00 + "\n2. " + fx.f01);
    cd_only.add_generate(prompts.get(Stage::CD).render(fx.s2), "1. " + fx.f10 + "\n2. " + fx.f11);
    std::string cd_path = fx.tmp.sub("cd_fixtures.jsonl");
    cd_only.save_jsonl(cd_path);

    RunConfig cfg = fx.config();
    StageBackend cd_backend;
    cd_backend.kind = "mock";
    cd_backend.fixtures = {cd_path};
    cfg.backends["cd"] = cd_backend;
    PipelineContext ctx(std::move(cfg));
    RecordRun run = run_pipeline(ctx, fx.record());
    CHECK(run.calls.search == 4);  // CD prompts were answered by the stage backend

    // with an empty CD stage backend the pipeline cannot decompose
    RunConfig broken = fx.config();
    StageBackend empty_backend;
    empty_backend.kind = "mock";
    broken.backends["cd"] = empty_backend;
    PipelineContext broken_ctx(std::move(broken));
    CHECK_THROWS_AS(run_pipeline(broken_ctx, fx.record()), BackendError);
}

TEST_CASE("pipeline warnings flow into the run record") {
    // a record whose SS output is malformed falls back with a warning
    testsup::TempDir tmp("warn");
    PromptLibrary prompts;
    FixtureSet fx;
    std::string q = "What about fallbacks?";
    std::string answer = "First thing here. Second thing there.";
    fx.add_generate(prompts.get(Stage::AnswerGen).render(q, q), answer);
    fx.add_generate(prompts.get(Stage::SS).render(answer, q), "unparseable");
    fx.add_generate(prompts.get(Stage::CD).render("First thing here."), "1. First thing here.");
    fx.add_generate(prompts.get(Stage::CD).render("Second thing there."), "1. Second thing there.");
    std::string fixtures = tmp.sub("f.jsonl");
    fx.save_jsonl(fixtures);

    RunConfig cfg;
    cfg.offline = true;
    cfg.cache_dir = tmp.sub("cache");
    cfg.parallelism = 1;
    StageBackend mock;
    mock.fixtures = {fixtures};
    cfg.backends["default"] = mock;
    PipelineContext ctx(std::move(cfg));
    RecordRun run = run_pipeline(ctx, {"w1", q, std::nullopt});
    CHECK(run.sentences_before.size() == 2);
    bool saw_fallback = false;
    for (const auto& w : run.warnings)
        if (w.find("heuristic") != std::string::npos) saw_fallback = true;
    CHECK(saw_fallback);
}
