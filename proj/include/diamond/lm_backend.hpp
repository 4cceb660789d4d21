#ifndef DIAMOND_LM_BACKEND_HPP
#define DIAMOND_LM_BACKEND_HPP

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace diamond {

/// Natural-log probabilities of each continuation token.
struct TokenLogprobs {
    std::vector<std::string> tokens;
    std::vector<double> logprobs;
    /// The continuation was cut from the right to fit the sequence limit.
    bool truncated = false;

    /// Throws ValidationError unless lengths match and every value is a finite
    /// number <= 0.
    void validate() const;
    double mean_negative() const;
};

/// Mean first-layer and mean last-layer hidden state of a text.
template <typename Scalar>
struct EmbeddingPairT {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Vector e_first;
    Vector e_last;

    /// E = e_first + e_last
    Vector combined() const { return e_first + e_last; }
};

using EmbeddingPair = EmbeddingPairT<double>;

struct BackendDescriptor {
    std::string name;
    std::size_t max_sequence_tokens = 512;
    std::size_t embedding_dim = 0;
    bool supports_embeddings = false;
};

/// Scoring, greedy generation and embedding provider. Implementations are
/// safe to call from several threads at once.
class LmBackend {
  public:
    virtual ~LmBackend() = default;

    virtual BackendDescriptor descriptor() const = 0;

    /// Log-probability of every continuation token given the context and the
    /// preceding continuation tokens. An empty context scores the
    /// continuation unconditionally.
    virtual TokenLogprobs score_continuation(std::string_view context,
                                             std::string_view continuation) const = 0;

    /// Greedy decoding; stops at end-of-sequence or after max_new_tokens.
    virtual std::string generate(std::string_view prompt, std::size_t max_new_tokens) const = 0;

    /// Throws CapabilityError when hidden states are unavailable.
    virtual EmbeddingPair embed(std::string_view text) const = 0;
};

} // namespace diamond

#endif // DIAMOND_LM_BACKEND_HPP
