#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "diamond/cli.hpp"
#include "test_support.hpp"

using namespace diamond;
using diamond::testkit::TempDir;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string fixture_path()
{
    return testkit::fixture("fixture20.jsonl").string();
}

std::size_t count_lines(const std::string& s)
{
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string unused_endpoint()
{
    return "http://127.0.0.1:9";
}

} // namespace

TEST(Cli, AttackWritesSixLinesPerSample)
{
    TempDir dir("cli-attack");
    const auto out = (dir / "v.jsonl").string();
    const auto r = run({"attack", "--input", fixture_path(), "--output", out, "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines(read_file(out)), 120u);
    EXPECT_TRUE(std::filesystem::exists(dir / "config.resolved.json"));
    EXPECT_TRUE(r.out.empty());
}

TEST(Cli, AttackIsDeterministicAndMatchesGolden)
{
    TempDir dir("cli-attack2");
    const auto a = (dir / "a.jsonl").string();
    const auto b = (dir / "b.jsonl").string();
    ASSERT_EQ(run({"--seed", "7", "attack", "--input", fixture_path(), "--output", a}).code, 0);
    ASSERT_EQ(run({"attack", "--input", fixture_path(), "--output", b, "--seed", "7"}).code, 0);
    EXPECT_EQ(read_file(a), read_file(b));
    EXPECT_EQ(read_file(a), read_file(testkit::golden("fixture20_variants.jsonl")));
}

TEST(Cli, AttackEmitStreamsToStdout)
{
    const auto r = run({"attack", "--input", fixture_path(), "--emit", "-", "--seed", "7"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out, read_file(testkit::golden("fixture20_variants.jsonl")));
}

TEST(Cli, UnreadableInputExitsOneWithPath)
{
    TempDir dir("cli-missing");
    const auto r = run({"attack", "--input", "/no/such/file.jsonl", "--output",
                        (dir / "v.jsonl").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("/no/such/file.jsonl"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo)
{
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"attack", "--bogus-flag"}).code, 2);
    EXPECT_EQ(run({"attack", "--input", fixture_path()}).code, 2);
}

TEST(Cli, ScoreWithToyBackendSupportsAioec)
{
    TempDir dir("cli-score");
    const auto out = (dir / "s.jsonl").string();
    const auto r = run({"score", "--input", fixture_path(), "--variants",
                        testkit::golden("fixture20_variants.jsonl").string(), "--metrics", "aioec",
                        "--output", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto records = parse_scores(read_file(out));
    ASSERT_EQ(records.size(), 20u);
    for (const auto& rec : records) {
        EXPECT_TRUE(rec.aioec.has_value());
        EXPECT_FALSE(rec.ifd.has_value());
    }
}

TEST(Cli, ScoreMatchesGoldenDemoScores)
{
    // The demo config scores aifd with seed 7 and 32 new tokens.
    TempDir dir("cli-score2");
    const auto out = (dir / "s.jsonl").string();
    const auto r = run({"--seed", "7", "score", "--input", fixture_path(), "--metrics", "aifd",
                        "--output", out});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_file(out), read_file(testkit::golden("demo/scores.jsonl")));
}

TEST(Cli, RemoteBackendDownNamesEndpoint)
{
    TempDir dir("cli-remote");
    const auto r = run({"score", "--input", fixture_path(), "--backend", "remote", "--endpoint",
                        unused_endpoint(), "--timeout-ms", "300", "--metrics", "ifd", "--output",
                        (dir / "s.jsonl").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find(unused_endpoint()), std::string::npos) << r.err;
}

TEST(Cli, RemoteEndpointFromEnvironment)
{
    TempDir dir("cli-env");
    ::setenv("DIAMOND_BACKEND_URL", unused_endpoint().c_str(), 1);
    const auto r = run({"score", "--input", fixture_path(), "--backend", "remote", "--timeout-ms",
                        "300", "--metrics", "ifd", "--output", (dir / "s.jsonl").string()});
    ::unsetenv("DIAMOND_BACKEND_URL");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find(unused_endpoint()), std::string::npos);
    const auto no_env = run({"score", "--input", fixture_path(), "--backend", "remote",
                             "--metrics", "ifd", "--output", (dir / "s.jsonl").string()});
    EXPECT_EQ(no_env.code, 2);
}

TEST(Cli, SelectProportionZeroIsUsageError)
{
    TempDir dir("cli-select0");
    const auto r = run({"select", "--scores", testkit::golden("demo/scores.jsonl").string(),
                        "--corpus", fixture_path(), "--proportion", "0", "--output-dir",
                        (dir / "out").string()});
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, SelectWithoutReferenceKeepsOnlineResponses)
{
    TempDir dir("cli-select");
    const auto out = dir / "out";
    const auto r = run({"select", "--scores", testkit::golden("demo/scores.jsonl").string(),
                        "--corpus", fixture_path(), "--metric", "aifd", "--proportion", "0.05",
                        "--output-dir", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = parse_selection(read_file(out / "selection.json"));
    EXPECT_EQ(rep.selected_ids.size(), 1u);
    const auto diamond = load_corpus(out / "diamond.json", CorpusFormat::alpaca_json);
    const auto online = load_corpus(fixture_path(), CorpusFormat::jsonl);
    ASSERT_EQ(diamond.size(), 1u);
    for (const auto& s : online.samples)
        if (s.id == rep.selected_ids[0])
            EXPECT_EQ(diamond.samples[0], s);
    EXPECT_TRUE(std::filesystem::exists(out / "config.resolved.json"));
}

TEST(Cli, SelectWithReferenceCalibrates)
{
    TempDir dir("cli-select-ref");
    const auto out = dir / "out";
    const auto r = run({"select", "--scores", testkit::golden("demo/scores.jsonl").string(),
                        "--corpus", fixture_path(), "--proportion", "0.25", "--reference",
                        (testkit::source_dir() / "data/demo/reference.json").string(),
                        "--output-dir", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_file(out / "diamond.json"), read_file(testkit::golden("demo/diamond.json")));
}

TEST(Cli, PipelineRefusesNonEmptyOutputWithoutForce)
{
    TempDir dir("cli-pipe");
    const auto config = (testkit::source_dir() / "data/demo/config.json").string();
    const auto out = (dir / "out").string();
    ASSERT_EQ(run({"pipeline", "--config", config, "--output-dir", out}).code, 0);
    for (const char* f : {"variants.jsonl", "scores.jsonl", "selection.json", "diamond.json",
                          "config.resolved.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
    const auto again = run({"pipeline", "--config", config, "--output-dir", out});
    EXPECT_EQ(again.code, 1);
    EXPECT_NE(again.err.find("--force"), std::string::npos);
    EXPECT_EQ(run({"--force", "pipeline", "--config", config, "--output-dir", out}).code, 0);
}

TEST(Cli, FlagsOverrideConfigInResolvedConfig)
{
    TempDir dir("cli-override");
    const auto config = (testkit::source_dir() / "data/demo/config.json").string();
    const auto out = dir / "out";
    ASSERT_EQ(run({"pipeline", "--config", config, "--seed", "11", "--proportion", "0.1",
                   "--output-dir", out.string()})
                  .code,
              0);
    const auto resolved = testkit::load_json(out / "config.resolved.json");
    EXPECT_EQ(resolved["seed"], 11);
    EXPECT_DOUBLE_EQ(resolved["proportion"].get<double>(), 0.1);
    EXPECT_EQ(resolved["metric"], "aifd");
    EXPECT_EQ(resolved["max_perturbed_words"], 1);
    EXPECT_EQ(parse_selection(read_file(out / "selection.json")).selected_ids.size(), 2u);
}

TEST(Cli, UnknownConfigKeyIsUsageError)
{
    TempDir dir("cli-badconfig");
    write_file(dir / "c.json", R"({"seed": 1, "colour": "blue"})");
    EXPECT_EQ(run({"pipeline", "--config", (dir / "c.json").string(), "--output-dir",
                   (dir / "o").string()})
                  .code,
              2);
}

TEST(Cli, BootstrapWritesSample)
{
    TempDir dir("cli-boot");
    const auto out = dir / "boot.jsonl";
    const auto r = run({"bootstrap", "--input", fixture_path(), "--k", "4", "--per-cluster", "2",
                        "--output", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto sample = load_corpus(out, CorpusFormat::jsonl);
    EXPECT_GT(sample.size(), 0u);
    EXPECT_LE(sample.size(), 8u);
    EXPECT_TRUE(std::filesystem::exists(dir / "config.resolved.json"));
}

TEST(RunConfig, JsonRoundTrip)
{
    RunConfig c;
    c.seed = 9;
    c.metric = Metric::aioec;
    c.attack.stresstest_suffix = " and true is true";
    const auto back = RunConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
}
