#include <cmath>
#include <algorithm>
#include <mutex>
#include <random>

#include <gtest/gtest.h>

#include "diamond/scoring.hpp"
#include "diamond/toy_backend.hpp"
#include "test_support.hpp"

using namespace diamond;
using diamond::testkit::FunctionBackend;

namespace {

const InstructionSample kSample{"s1", "Give three tips for staying healthy.", "",
                                "Eat well and sleep enough"};

FunctionBackend fixed_backend(double cond, double direct)
{
    FunctionBackend b;
    b.score = [cond, direct](std::string_view ctx, std::string_view) {
        return testkit::logprobs({ctx.empty() ? -direct : -cond});
    };
    return b;
}

} // namespace

TEST(AnswerScores, MeanNegativeLogprob)
{
    FunctionBackend b;
    b.score = [](std::string_view, std::string_view) { return testkit::logprobs({-1, -2, -3}); };
    EXPECT_DOUBLE_EQ(conditioned_answer_score(b, "q", "a b c").value, 2.0);
}

TEST(AnswerScores, UniformBackendGivesLogV)
{
    UniformBackend u(40);
    EXPECT_NEAR(conditioned_answer_score(u, "any question", "one two three four").value,
                std::log(40.0), 1e-12);
    EXPECT_NEAR(direct_answer_score(u, "one two three four").value, std::log(40.0), 1e-12);
}

TEST(AnswerScores, DirectScoreIsDeterministic)
{
    const auto& b = BigramBackend::builtin();
    EXPECT_EQ(direct_answer_score(b, "eat well").value, direct_answer_score(b, "eat well").value);
}

TEST(Ifd, Ratio)
{
    EXPECT_DOUBLE_EQ(ifd(fixed_backend(1.2, 1.5), kSample), 0.8);
    EXPECT_DOUBLE_EQ(ifd(UniformBackend(30), kSample), 1.0);
}

TEST(Ifd, DegenerateDirectScoreCarriesBothScores)
{
    try {
        ifd(fixed_backend(1.0, 1e-10), kSample);
        FAIL();
    } catch (const DegenerateDirectScore& e) {
        EXPECT_DOUBLE_EQ(e.s_cond(), 1.0);
        EXPECT_DOUBLE_EQ(e.s_direct(), 1e-10);
    }
}

TEST(Ifd, QuestionIncludesInputAfterNewline)
{
    std::string seen;
    FunctionBackend b;
    b.score = [&seen](std::string_view ctx, std::string_view) {
        if (!ctx.empty())
            seen = ctx;
        return testkit::logprobs({-1});
    };
    InstructionSample s = kSample;
    s.input = "for adults";
    ifd(b, s);
    EXPECT_EQ(seen, kSample.prompt + "\nfor adults");
}

TEST(Aifd, UniformGivesSeven)
{
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    EXPECT_NEAR(aifd(UniformBackend(30), kSample, v), 7.0, 1e-12);
}

TEST(Aifd, CleanPointEightPlusSixOnes)
{
    FunctionBackend b;
    b.score = [](std::string_view ctx, std::string_view) {
        if (ctx.empty())
            return testkit::logprobs({-1.5});
        return testkit::logprobs({ctx == kSample.prompt ? -1.2 : -1.5});
    };
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    EXPECT_NEAR(aifd(b, kSample, v), 6.8, 1e-12);
}

TEST(Aifd, VariantSetMustMatchSample)
{
    const auto v = testkit::distinct_variants("other", kSample.prompt);
    EXPECT_THROW(aifd(UniformBackend(30), kSample, v), ValidationError);
}

TEST(Aifd, DecompositionOnRandomMocks)
{
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto b = testkit::hashed_score_backend(rng());
        const auto v = testkit::distinct_variants("s1", kSample.prompt);
        const auto t = aifd_terms(b, kSample, v);
        double adv = 0;
        for (double s : t.s_cond_adv)
            adv += s / t.clean.s_direct;
        ASSERT_NEAR(t.value - t.clean.ratio, adv, 1e-9);
    }
}

TEST(Aifd, DegenerateVariantsReuseCleanScore)
{
    const auto b = testkit::hashed_score_backend(5);
    std::array<std::string, kAttackCount> attacked;
    attacked.fill(kSample.prompt);
    attacked[2] = "Give three pointers for staying healthy.";
    const auto v = testkit::make_variants("s1", kSample.prompt, attacked);
    const auto t = aifd_terms(b, kSample, v);
    for (std::size_t i = 0; i < kAttackCount; ++i) {
        if (v.variants[i].degenerate)
            EXPECT_NEAR(t.s_cond_adv[i], t.clean.s_cond, 1e-9);
        else
            EXPECT_NE(t.s_cond_adv[i], t.clean.s_cond);
    }
}

TEST(Aifd, AllDegenerateIsSevenTimesIfd)
{
    std::array<std::string, kAttackCount> attacked;
    attacked.fill(kSample.prompt);
    const auto v = testkit::make_variants("s1", kSample.prompt, attacked);
    const auto b = testkit::hashed_score_backend(77);
    const auto t = aifd_terms(b, kSample, v);
    EXPECT_NEAR(t.value, 7.0 * t.clean.ratio, 1e-9);
}

TEST(Aifd, ScaleInvariance)
{
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    const auto base = testkit::hashed_score_backend(9, 1.0);
    const double i0 = ifd(base, kSample), a0 = aifd(base, kSample, v);
    for (double k : {0.5, 2.0, 10.0}) {
        const auto scaled = testkit::hashed_score_backend(9, k);
        EXPECT_NEAR(ifd(scaled, kSample), i0, 1e-9);
        EXPECT_NEAR(aifd(scaled, kSample, v), a0, 1e-9);
    }
}

TEST(Aioec, IdenticalGenerationsGiveSix)
{
    FunctionBackend b;
    b.score = [](std::string_view, std::string_view) { return testkit::logprobs({-1}); };
    b.gen = [](std::string_view, std::size_t) { return std::string("same output"); };
    b.emb = [](std::string_view t) {
        EmbeddingPair p;
        p.e_first = Eigen::Vector3d(static_cast<double>(t.size()), 1, 2);
        p.e_last = Eigen::Vector3d(0, 3, -1);
        return p;
    };
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    EXPECT_NEAR(aioec(b, kSample, v, 8), 6.0, 1e-12);
}

TEST(Aioec, OrthogonalGenerationsGiveZero)
{
    FunctionBackend b;
    b.gen = [](std::string_view prompt, std::size_t) { return std::string(prompt); };
    b.emb = [](std::string_view t) {
        EmbeddingPair p;
        const bool clean = t == kSample.prompt;
        p.e_first = clean ? Eigen::Vector2d(1, 0) : Eigen::Vector2d(0, 2);
        p.e_last = clean ? Eigen::Vector2d(1, 0) : Eigen::Vector2d(0, 1);
        return p;
    };
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    EXPECT_NEAR(aioec(b, kSample, v, 8), 0.0, 1e-12);
}

TEST(Aioec, ZeroEmbeddingNamesVariant)
{
    FunctionBackend b;
    b.gen = [](std::string_view prompt, std::size_t) { return std::string(prompt); };
    b.emb = [](std::string_view t) {
        EmbeddingPair p;
        const bool zero = t.find(" v3") != std::string_view::npos;
        p.e_first = zero ? Eigen::Vector2d(0, 0) : Eigen::Vector2d(1, 1);
        p.e_last = Eigen::Vector2d(0, 0);
        return p;
    };
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    try {
        aioec(b, kSample, v, 8);
        FAIL();
    } catch (const ZeroEmbedding& e) {
        EXPECT_EQ(e.variant(), "bertattack_style");
    }
}

TEST(Aioec, EmptyGenerationFallsBackToCondition)
{
    std::vector<std::string> embedded;
    std::mutex m;
    FunctionBackend b;
    b.gen = [](std::string_view prompt, std::size_t) {
        return prompt.find(" v0") != std::string_view::npos ? std::string() : std::string("out");
    };
    b.emb = [&](std::string_view t) {
        std::lock_guard lock(m);
        embedded.emplace_back(t);
        EmbeddingPair p;
        p.e_first = Eigen::Vector2d(1, 0.5);
        p.e_last = Eigen::Vector2d(0.5, 1);
        return p;
    };
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    const auto t = aioec_terms(b, kSample, v, 8);
    EXPECT_EQ(t.empty_generations, std::vector<std::string>{"textbugger_style"});
    EXPECT_NE(std::find(embedded.begin(), embedded.end(), kSample.prompt + " v0"), embedded.end());
}

TEST(Aioec, BoundsOnToyBackend)
{
    const auto corpus = load_corpus(testkit::fixture("fixture20.jsonl"), CorpusFormat::jsonl);
    AttackSuite suite(AttackConfig{}, 7);
    const auto& b = BigramBackend::builtin();
    for (const auto& s : corpus.samples) {
        const double a = aioec(b, s, suite.generate(s), 32);
        EXPECT_GE(a, -6.0 - 1e-12);
        EXPECT_LE(a, 6.0 + 1e-12);
    }
}

TEST(Aioec, CapabilityErrorWithoutEmbeddings)
{
    const auto v = testkit::distinct_variants("s1", kSample.prompt);
    UniformBackend u(10);
    EXPECT_THROW(aioec(u, kSample, v, 4), CapabilityError);
}

TEST(ScoreCorpus, MetricSelection)
{
    Corpus c;
    for (int i = 0; i < 3; ++i)
        c.samples.push_back({positional_id(i), "Prompt " + std::to_string(i), "", "answer text"});
    const auto records = score_corpus(BigramBackend::builtin(), c, {}, MetricSet::only(Metric::ifd),
                                      ScoringOptions{});
    ASSERT_EQ(records.size(), 3u);
    for (const auto& r : records) {
        EXPECT_TRUE(r.ifd.has_value());
        EXPECT_FALSE(r.aifd.has_value());
        EXPECT_FALSE(r.aioec.has_value());
        EXPECT_FALSE(r.s_cond_adv.has_value());
        EXPECT_FALSE(r.error.has_value());
    }
}

TEST(ScoreCorpus, EmptyResponseIsIsolated)
{
    Corpus c;
    c.samples = {{"a", "Prompt a", "", "fine answer"},
                 {"b", "Prompt b", "", ""},
                 {"c", "Prompt c", "", "another answer"}};
    const auto records = score_corpus(BigramBackend::builtin(), c, {}, MetricSet::only(Metric::ifd),
                                      ScoringOptions{});
    EXPECT_FALSE(records[0].error);
    ASSERT_TRUE(records[1].error);
    EXPECT_NE(records[1].error->find("empty response"), std::string::npos);
    EXPECT_FALSE(records[1].ifd);
    EXPECT_FALSE(records[2].error);
}

TEST(ScoreCorpus, AioecWithoutEmbeddingsIsFatal)
{
    Corpus c;
    c.samples = {{"a", "Prompt a", "", "x"}};
    AttackSuite suite(AttackConfig{}, 1);
    EXPECT_THROW(score_corpus(UniformBackend(5), c, suite, MetricSet::only(Metric::aioec),
                              ScoringOptions{}),
                 CapabilityError);
}

TEST(ScoreCorpus, DeterministicAndWorkerIndependent)
{
    const auto corpus = load_corpus(testkit::fixture("fixture20.jsonl"), CorpusFormat::jsonl);
    AttackSuite suite(AttackConfig{}, 7);
    ScoringOptions one;
    ScoringOptions four;
    four.workers = 4;
    const auto& b = BigramBackend::builtin();
    const auto a = serialize_scores(score_corpus(b, corpus, suite, MetricSet::all(), one));
    EXPECT_EQ(a, serialize_scores(score_corpus(b, corpus, suite, MetricSet::all(), one)));
    EXPECT_EQ(a, serialize_scores(score_corpus(b, corpus, suite, MetricSet::all(), four)));
}

TEST(ScoreCorpus, MatchesOracleRecords)
{
    const auto corpus = load_corpus(testkit::fixture("fixture20.jsonl"), CorpusFormat::jsonl);
    const auto variants = parse_variants(read_file(testkit::golden("fixture20_variants.jsonl")));
    const auto oracle = testkit::load_json(testkit::golden("fixture20_oracle.json"));
    ScoringOptions opts;
    opts.max_new_tokens = oracle["max_new_tokens"].get<std::size_t>();
    const auto records =
        score_corpus(BigramBackend::builtin(), corpus, variants, MetricSet::all(), opts);
    ASSERT_EQ(records.size(), oracle["records"].size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const auto& o = oracle["records"][i];
        EXPECT_EQ(r.sample_id, o["id"].get<std::string>());
        EXPECT_NEAR(*r.s_cond, o["s_cond"].get<double>(), 1e-9);
        EXPECT_NEAR(*r.s_direct, o["s_direct"].get<double>(), 1e-9);
        for (std::size_t k = 0; k < kAttackCount; ++k)
            EXPECT_NEAR((*r.s_cond_adv)[k], o["s_cond_adv"][k].get<double>(), 1e-9);
        EXPECT_NEAR(*r.ifd, o["ifd"].get<double>(), 1e-9);
        EXPECT_NEAR(*r.aifd, o["aifd"].get<double>(), 1e-9);
        EXPECT_NEAR(*r.aioec, o["aioec"].get<double>(), 1e-9);
        EXPECT_EQ(r.empty_generations, o["empty_generations"].get<std::vector<std::string>>());
    }
}

TEST(ScoreRecords, SerialisationRoundTrip)
{
    ScoreRecord r;
    r.sample_id = "x";
    r.s_cond = 1.25;
    r.s_direct = 2.5;
    r.s_cond_adv = std::array<double, kAttackCount>{1, 2, 3, 4, 5, 6};
    r.ifd = 0.5;
    r.aifd = 8.9;
    r.degenerate_variants = {AttackKind::checklist_style};
    r.empty_generations = {"clean"};
    ScoreRecord e;
    e.sample_id = "y";
    e.error = "boom";
    const auto text = serialize_scores({r, e});
    const auto back = parse_scores(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(serialize_scores(back), text);
    EXPECT_EQ(back[0].metric(Metric::aifd), 8.9);
    EXPECT_FALSE(back[0].aioec);
    EXPECT_EQ(back[1].error, "boom");
    EXPECT_EQ(text.substr(0, text.find('\n')),
              R"({"id":"x","s_cond":1.25,"s_direct":2.5,"s_cond_adv":[1.0,2.0,3.0,4.0,5.0,6.0],"ifd":0.5,"aifd":8.9,"truncated":false,"degenerate_variants":["checklist_style"],"empty_generations":["clean"]})");
}

TEST(MetricSet, Parsing)
{
    const auto m = MetricSet::parse("aifd");
    EXPECT_TRUE(m.ifd);
    EXPECT_TRUE(m.aifd);
    EXPECT_FALSE(m.aioec);
    EXPECT_TRUE(MetricSet::parse("ifd,aioec").aioec);
    EXPECT_THROW(MetricSet::parse("ifd,bogus"), ValidationError);
    EXPECT_EQ(parse_metric("aioec"), Metric::aioec);
}
