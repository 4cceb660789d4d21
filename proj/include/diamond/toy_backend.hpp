#ifndef DIAMOND_TOY_BACKEND_HPP
#define DIAMOND_TOY_BACKEND_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <map>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "diamond/lm_backend.hpp"

namespace diamond {

/// Lowercases ASCII, splits on whitespace, and emits each ASCII punctuation
/// character as its own token. Runs of letters, digits and non-ASCII bytes
/// form word tokens.
std::vector<std::string> toy_tokenize(std::string_view text);

/// Unit vector of `dim` components derived from the token string alone:
/// splitmix64 draws seeded with FNV-1a of the token, mapped to [-1, 1) and
/// normalised.
Eigen::VectorXd hashed_unit_vector(std::string_view token, std::size_t dim);

/// Laplace-smoothed bigram language model with two fixed embedding "layers".
///
/// Vocabulary: id 0 is "</s>", id 1 is "<unk>", then every distinct training
/// token in byte order. "<s>" only ever appears as context. For a previous
/// token p and next token w,
///
///     P(w | p) = (count(p, w) + 1) / (count(p) + V)
///
/// where V is the vocabulary size and each training line is framed as
/// <s> tokens... </s>.
///
/// First layer: hashed_unit_vector(token). Last layer:
///     0.5 * first(t) + 0.5 * sum_w P(w | t) * first(w)
/// Unknown tokens use the "<unk>" rows.
class BigramBackend final : public LmBackend {
  public:
    struct Options {
        std::size_t embedding_dim = 16;
        std::size_t max_sequence_tokens = 512;
        std::string name = "toy-bigram";
    };

    /// One training sequence per line of `training_text`.
    BigramBackend(std::string_view training_text, Options options);
    explicit BigramBackend(std::string_view training_text);

    /// Trained on the bundled mini-corpus (data/minicorpus.txt).
    static const BigramBackend& builtin();

    BackendDescriptor descriptor() const override;
    TokenLogprobs score_continuation(std::string_view context,
                                     std::string_view continuation) const override;
    std::string generate(std::string_view prompt, std::size_t max_new_tokens) const override;
    EmbeddingPair embed(std::string_view text) const override;

    static constexpr int kEnd = 0;
    static constexpr int kUnknown = 1;
    /// Context id of "<s>"; not part of the predictive vocabulary.
    static constexpr int kStart = -1;

    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const std::string& token(int id) const { return vocab_.at(static_cast<std::size_t>(id)); }
    int token_id(std::string_view token) const;
    double logprob(int prev, int next) const;
    std::size_t bigram_count(int prev, int next) const;
    std::size_t context_count(int prev) const;
    const Eigen::MatrixXd& first_layer() const noexcept { return first_; }
    const Eigen::MatrixXd& last_layer() const noexcept { return last_; }

  private:
    const std::map<int, std::size_t>* row(int prev) const;

    Options options_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> ids_;
    std::map<int, std::map<int, std::size_t>> bigrams_;
    std::map<int, std::size_t> totals_;
    std::map<int, int> greedy_next_;
    Eigen::MatrixXd first_; // one row per vocabulary id
    Eigen::MatrixXd last_;
};

/// Every next-token probability is 1/V. Generation emits nothing. When an
/// embedding vector is supplied, every token maps to it.
class UniformBackend final : public LmBackend {
  public:
    explicit UniformBackend(std::size_t vocab_size, Eigen::VectorXd token_vector = {},
                            std::size_t max_sequence_tokens = 512);

    BackendDescriptor descriptor() const override;
    TokenLogprobs score_continuation(std::string_view context,
                                     std::string_view continuation) const override;
    std::string generate(std::string_view prompt, std::size_t max_new_tokens) const override;
    EmbeddingPair embed(std::string_view text) const override;

  private:
    std::size_t vocab_size_;
    Eigen::VectorXd token_vector_;
    std::size_t max_sequence_tokens_;
};

} // namespace diamond

#endif // DIAMOND_TOY_BACKEND_HPP
