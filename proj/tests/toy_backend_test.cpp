#include <cmath>

#include <gtest/gtest.h>

#include "diamond/error.hpp"
#include "diamond/toy_backend.hpp"
#include "test_support.hpp"

using namespace diamond;

namespace {

const nlohmann::json& lookups()
{
    static const auto j = testkit::load_json(testkit::golden("fixture20_oracle.json"))["lookups"];
    return j;
}

void expect_vector(const Eigen::VectorXd& v, const nlohmann::json& expected, double tol)
{
    ASSERT_EQ(static_cast<std::size_t>(v.size()), expected.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        EXPECT_NEAR(v[i], expected[static_cast<std::size_t>(i)].get<double>(), tol) << i;
}

} // namespace

TEST(Tokenizer, LowercasesAndSplitsPunctuation)
{
    const std::vector<std::string> expected = {"give", "three", "tips", ",", "now", "!"};
    EXPECT_EQ(toy_tokenize("Give  three tips, NOW!"), expected);
    EXPECT_TRUE(toy_tokenize("   ").empty());
    EXPECT_EQ(toy_tokenize("café"), std::vector<std::string>{"café"});
}

TEST(HashedVector, UnitNormAndDeterministic)
{
    const auto a = hashed_unit_vector("give", 16);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
    EXPECT_EQ(a, hashed_unit_vector("give", 16));
    EXPECT_NE(a, hashed_unit_vector("take", 16));
}

TEST(UniformBackend, LogprobsAreLogOneOverV)
{
    UniformBackend b(50);
    const auto lp = b.score_continuation("anything here", "one two three");
    ASSERT_EQ(lp.logprobs.size(), 3u);
    for (double x : lp.logprobs)
        EXPECT_DOUBLE_EQ(x, std::log(1.0 / 50));
    EXPECT_EQ(b.generate("prompt", 10), "");
    EXPECT_THROW(b.embed("x"), CapabilityError);
}

TEST(UniformBackend, ConstantVectorEmbedding)
{
    Eigen::VectorXd v(3);
    v << 1, -2, 0.5;
    UniformBackend b(10, v);
    for (const char* t : {"a", "a b c d e f", "one, two."}) {
        const auto e = b.embed(t);
        EXPECT_EQ(e.e_first, v);
        EXPECT_EQ(e.e_last, v);
    }
}

TEST(BigramBackend, CountTableMatchesOracle)
{
    const auto& b = BigramBackend::builtin();
    const auto& l = lookups();
    EXPECT_EQ(b.vocab_size(), l["vocab_size"].get<std::size_t>());
    const int the = b.token_id("the"), cat = b.token_id("cat"), eats = b.token_id("eats");
    EXPECT_EQ(b.bigram_count(the, cat), l["count_the_cat"].get<std::size_t>());
    EXPECT_EQ(b.bigram_count(cat, eats), l["count_cat_eats"].get<std::size_t>());
    EXPECT_EQ(b.context_count(cat), l["count_cat_context"].get<std::size_t>());
    const auto lp = b.score_continuation("the cat", "eats");
    ASSERT_EQ(lp.logprobs.size(), 1u);
    EXPECT_NEAR(lp.logprobs[0], l["logprob_the_cat__eats"].get<double>(), 1e-12);
    // Laplace-smoothed count ratio.
    const double expected = std::log((b.bigram_count(cat, eats) + 1.0) /
                                     (b.context_count(cat) + static_cast<double>(b.vocab_size())));
    EXPECT_NEAR(lp.logprobs[0], expected, 1e-12);
}

TEST(BigramBackend, DirectScoreOfMostFrequentStartToken)
{
    const auto& b = BigramBackend::builtin();
    const auto& l = lookups();
    const auto tok = l["most_frequent_start"].get<std::string>();
    const auto lp = b.score_continuation("", tok);
    ASSERT_EQ(lp.logprobs.size(), 1u);
    const double p = (l["count_start_token"].get<double>() + 1.0) /
                     (l["count_start_context"].get<double>() + static_cast<double>(b.vocab_size()));
    EXPECT_NEAR(-lp.logprobs[0], -std::log(p), 1e-12);
    EXPECT_NEAR(-lp.logprobs[0], l["direct_score_start"].get<double>(), 1e-12);
}

TEST(BigramBackend, DistributionsSumToOne)
{
    const auto& b = BigramBackend::builtin();
    for (int prev = BigramBackend::kStart; prev < static_cast<int>(b.vocab_size()); ++prev) {
        double total = 0;
        for (int next = 0; next < static_cast<int>(b.vocab_size()); ++next) {
            const double p = std::exp(b.logprob(prev, next));
            EXPECT_GT(p, 0.0);
            EXPECT_LE(p, 1.0);
            total += p;
        }
        EXPECT_NEAR(total, 1.0, 1e-9) << "context " << prev;
    }
}

TEST(BigramBackend, ChainRuleComposes)
{
    const auto& b = BigramBackend::builtin();
    const auto whole = b.score_continuation("give", "three tips for");
    const auto head = b.score_continuation("give", "three");
    const auto tail = b.score_continuation("give three", "tips for");
    ASSERT_EQ(whole.logprobs.size(), 3u);
    EXPECT_DOUBLE_EQ(whole.logprobs[0], head.logprobs[0]);
    EXPECT_DOUBLE_EQ(whole.logprobs[1], tail.logprobs[0]);
    EXPECT_DOUBLE_EQ(whole.logprobs[2], tail.logprobs[1]);
}

TEST(BigramBackend, TrailingWhitespaceIsIrrelevant)
{
    const auto& b = BigramBackend::builtin();
    EXPECT_EQ(b.score_continuation("give three ", "tips").logprobs,
              b.score_continuation("give three", "tips").logprobs);
}

TEST(BigramBackend, EmptyContinuationRejected)
{
    EXPECT_THROW(BigramBackend::builtin().score_continuation("x", "   "), ValidationError);
}

TEST(BigramBackend, UnknownTokensScoreAsUnk)
{
    const auto& b = BigramBackend::builtin();
    const auto lp = b.score_continuation("the", "zzzqqq");
    EXPECT_DOUBLE_EQ(lp.logprobs[0], b.logprob(b.token_id("the"), BigramBackend::kUnknown));
}

TEST(BigramBackend, GreedyGenerationMatchesOracle)
{
    const auto& b = BigramBackend::builtin();
    const auto& l = lookups();
    EXPECT_EQ(b.generate("Give three tips for", 12), l["generate_give_three_tips"].get<std::string>());
    EXPECT_EQ(b.generate("to stay healthy ,", 8), l["generate_to_stay_healthy"].get<std::string>());
    EXPECT_EQ(b.generate("Give three tips for", 12), b.generate("Give three tips for", 12));
    EXPECT_EQ(b.generate("Give three tips for", 0), "");
}

TEST(BigramBackend, EmbeddingsMatchOracle)
{
    const auto& b = BigramBackend::builtin();
    const auto& l = lookups();
    const auto e = b.embed("Give three tips for staying healthy.");
    expect_vector(e.e_first, l["embed_fixture_text"][0], 1e-12);
    expect_vector(e.e_last, l["embed_fixture_text"][1], 1e-12);
    const int give = b.token_id("give");
    expect_vector(b.first_layer().row(give).transpose(), l["first_row_give"], 1e-12);
    expect_vector(b.last_layer().row(give).transpose(), l["last_row_give"], 1e-12);
}

TEST(BigramBackend, SingleTokenEmbeddingIsItsRow)
{
    const auto& b = BigramBackend::builtin();
    const auto e = b.embed("healthy");
    const int id = b.token_id("healthy");
    EXPECT_EQ(e.e_first, Eigen::VectorXd(b.first_layer().row(id).transpose()));
    EXPECT_EQ(e.e_last, Eigen::VectorXd(b.last_layer().row(id).transpose()));
}

TEST(BigramBackend, TruncatesLongContinuation)
{
    BigramBackend::Options o;
    o.max_sequence_tokens = 8;
    BigramBackend b("the cat sat .\n", o);
    const auto lp = b.score_continuation("the cat", "sat . the cat sat . the cat");
    EXPECT_TRUE(lp.truncated);
    EXPECT_EQ(lp.logprobs.size(), 6u);
    EXPECT_FALSE(b.score_continuation("the", "cat").truncated);
    EXPECT_THROW(b.score_continuation("the cat sat . the cat sat .", "cat"), ValidationError);
}

TEST(BigramBackend, Descriptor)
{
    const auto d = BigramBackend::builtin().descriptor();
    EXPECT_EQ(d.name, "toy-bigram");
    EXPECT_EQ(d.embedding_dim, 16u);
    EXPECT_TRUE(d.supports_embeddings);
}

TEST(TokenLogprobs, Validation)
{
    TokenLogprobs ok = testkit::logprobs({-1, -2, -3});
    EXPECT_NO_THROW(ok.validate());
    EXPECT_DOUBLE_EQ(ok.mean_negative(), 2.0);
    TokenLogprobs bad = ok;
    bad.tokens.pop_back();
    EXPECT_THROW(bad.validate(), ValidationError);
    TokenLogprobs positive = testkit::logprobs({0.5});
    EXPECT_THROW(positive.validate(), ValidationError);
}
