#include <doctest.h>

#include <cstdlib>

#include "fides/fides.hpp"
#include "test_support.hpp"

using namespace fides;

namespace {

int run_cli(const std::string& args, const std::string& log_path) {
    std::string cmd = std::string(FIDES_CLI_PATH) + " " + args + " > " + log_path + " 2>&1";
    return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("cli run produces the full output layout") {
    testsup::RainierFixture fx;
    testsup::TempDir out("cli");
    fides::json cfg{{"method", "fides"},
                    {"offline", true},
                    {"cache_dir", fx.cache_dir},
                    {"parallelism", 1},
                    {"backends", {{"default", {{"kind", "mock"}, {"fixtures", fx.fixtures_path}}}}}};
    std::string cfg_path = out.sub("config.json");
    testsup::write_file(cfg_path, cfg.dump());

    int rc = run_cli("run --method fides --dataset " + fx.dataset_path + " --config " + cfg_path +
                         " --offline --out " + out.sub("run"),
                     out.sub("run.log"));
    CHECK(rc == 0);
    CHECK(std::filesystem::exists(out.sub("run/reports/rainier-1.json")));
    CHECK(std::filesystem::exists(out.sub("run/edits.jsonl")));
    CHECK(std::filesystem::exists(out.sub("run/summary.csv")));
    CHECK(std::filesystem::exists(out.sub("run/manifest.json")));

    json report = json::parse(testsup::read_file(out.sub("run/reports/rainier-1.json")));
    CHECK(report.at("answer_after").get<std::string>().find("Washington") != std::string::npos);

    // score over the emitted reports agrees with the stored values
    int src = run_cli("score --report " + out.sub("run/reports") + " --config " + cfg_path,
                      out.sub("score.log"));
    CHECK(src == 0);
    std::string score_log = testsup::read_file(out.sub("score.log"));
    CHECK(score_log.find("rainier-1.json") != std::string::npos);
    CHECK(score_log.find("mean over 1 report(s)") != std::string::npos);
}

TEST_CASE("cli flags override the config file") {
    testsup::RainierFixture fx;
    testsup::TempDir out("cliflags");
    fides::json cfg{{"method", "fides"},
                    {"offline", true},
                    {"cache_dir", fx.cache_dir},
                    {"retrieval", {{"m_pages", 5}, {"window", 4}}},
                    {"backends", {{"default", {{"kind", "mock"}, {"fixtures", fx.fixtures_path}}}}}};
    std::string cfg_path = out.sub("config.json");
    testsup::write_file(cfg_path, cfg.dump());

    // --m overrides m_pages while window comes from the file
    int rc = run_cli("run --method fides --dataset " + fx.dataset_path + " --config " + cfg_path +
                         " --m 3 --tau 0.6 --out " + out.sub("run"),
                     out.sub("run.log"));
    CHECK(rc == 0);
    json manifest = json::parse(testsup::read_file(out.sub("run/manifest.json")));
    CHECK(manifest.at("config").at("retrieval").at("m_pages") == 3);
    CHECK(manifest.at("config").at("retrieval").at("window") == 4);
    CHECK(manifest.at("config").at("tau") == doctest::Approx(0.6));
}

TEST_CASE("cli run with an explicit prompts directory reproduces the default run") {
    testsup::RainierFixture fx;
    testsup::TempDir out("cliprompts");
    // dump the built-ins and point the run at them: outputs must be identical
    REQUIRE(run_cli("dump-prompts --dir " + out.sub("prompts"), out.sub("dump.log")) == 0);
    fides::json cfg{{"method", "fides"},
                    {"offline", true},
                    {"cache_dir", fx.cache_dir},
                    {"backends", {{"default", {{"kind", "mock"}, {"fixtures", fx.fixtures_path}}}}}};
    std::string cfg_path = out.sub("config.json");
    testsup::write_file(cfg_path, cfg.dump());

    REQUIRE(run_cli("run --dataset " + fx.dataset_path + " --config " + cfg_path + " --out " + out.sub("a"),
                    out.sub("a.log")) == 0);
    REQUIRE(run_cli("run --dataset " + fx.dataset_path + " --config " + cfg_path + " --prompts-dir " +
                        out.sub("prompts") + " --out " + out.sub("b"),
                    out.sub("b.log")) == 0);
    CHECK(testsup::read_file(out.sub("a/reports/rainier-1.json")) ==
          testsup::read_file(out.sub("b/reports/rainier-1.json")));
}

TEST_CASE("cli sample subcommand writes a seeded subset") {
    testsup::TempDir out("clisample");
    std::string src = out.sub("big.jsonl");
    std::string content;
    for (int i = 0; i < 40; ++i)
        content += "{\"id\":\"r" + std::to_string(i) + "\",\"question\":\"Q" + std::to_string(i) + "?\"}\n";
    testsup::write_file(src, content);
    int rc = run_cli("sample --in " + src + " --out " + out.sub("s.jsonl") + " --n 10 --seed 7",
                     out.sub("sample.log"));
    CHECK(rc == 0);
    CHECK(load_dataset(out.sub("s.jsonl")).size() == 10);
}

TEST_CASE("cli reports failures with nonzero exit codes") {
    testsup::RainierFixture fx;
    testsup::TempDir out("clifail");
    // unsupported method
    int rc = run_cli("run --method rarr --dataset " + fx.dataset_path + " --out " + out.sub("x"),
                     out.sub("x.log"));
    CHECK(rc != 0);
    CHECK(testsup::read_file(out.sub("x.log")).find("unsupported method") != std::string::npos);

    // a record with no fixtures fails the run (exit 1) but still writes outputs
    fides::json cfg{{"method", "fides"},
                    {"offline", true},
                    {"cache_dir", fx.cache_dir},
                    {"backends", {{"default", {{"kind", "mock"}, {"fixtures", fx.fixtures_path}}}}}};
    std::string cfg_path = out.sub("config.json");
    testsup::write_file(cfg_path, cfg.dump());
    std::string ds = out.sub("ds.jsonl");
    testsup::write_file(ds, "{\"id\":\"rainier-1\",\"question\":\"" + fx.question +
                                "\"}\n{\"id\":\"nofix\",\"question\":\"Where is nothing known?\"}\n");
    int rc2 = run_cli("run --dataset " + ds + " --config " + cfg_path + " --out " + out.sub("y"),
                      out.sub("y.log"));
    CHECK(rc2 != 0);
    CHECK(std::filesystem::exists(out.sub("y/reports/rainier-1.json")));
    CHECK_FALSE(std::filesystem::exists(out.sub("y/reports/nofix.json")));
    json manifest = json::parse(testsup::read_file(out.sub("y/manifest.json")));
    CHECK(manifest.at("aggregate").at("records_failed") == 1);
}
