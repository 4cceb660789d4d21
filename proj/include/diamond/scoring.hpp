#ifndef DIAMOND_SCORING_HPP
#define DIAMOND_SCORING_HPP

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "diamond/attacks.hpp"
#include "diamond/corpus.hpp"
#include "diamond/error.hpp"
#include "diamond/lm_backend.hpp"

namespace diamond {

enum class Metric { ifd, aifd, aioec };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

/// Requested metrics. Requesting aifd implies ifd.
struct MetricSet {
    bool ifd = false;
    bool aifd = false;
    bool aioec = false;

    static MetricSet all() { return {true, true, true}; }
    static MetricSet only(Metric m);
    /// Comma-separated list, e.g. "ifd,aioec".
    static MetricSet parse(std::string_view list);
    bool needs_response() const { return ifd || aifd; }
    bool empty() const { return !ifd && !aifd && !aioec; }
};

/// Per-sample results. Metrics that were not requested, or that failed, are
/// left empty; `error` says why a requested metric is missing.
struct ScoreRecord {
    std::string sample_id;
    std::optional<double> s_cond;
    std::optional<double> s_direct;
    std::optional<std::array<double, kAttackCount>> s_cond_adv;
    std::optional<double> ifd;
    std::optional<double> aifd;
    std::optional<double> aioec;
    bool truncated = false;
    std::vector<AttackKind> degenerate_variants;
    /// Conditions ("clean" or an attack name) whose greedy output was empty,
    /// so their conditioning prompt was embedded instead.
    std::vector<std::string> empty_generations;
    std::optional<std::string> error;

    std::optional<double> metric(Metric m) const;
};

struct ScoringOptions {
    std::size_t workers = 1;
    std::size_t max_new_tokens = 32;
    std::string separator = "\n";
};

/// Floor below which s(A) is treated as zero.
inline constexpr double kDirectScoreFloor = 1e-8;

struct AnswerScore {
    double value = 0.0;
    bool truncated = false;
};

/// s(A|Q): mean negative log-likelihood of the answer tokens given Q.
AnswerScore conditioned_answer_score(const LmBackend& backend, std::string_view instruction,
                                     std::string_view answer);
/// s(A): the same quantity with an empty context.
AnswerScore direct_answer_score(const LmBackend& backend, std::string_view answer);

struct IfdTerms {
    double s_cond = 0.0;
    double s_direct = 0.0;
    double ratio = 0.0;
    bool truncated = false;
};

/// r(Q, A) = s(A|Q) / s(A). Throws DegenerateDirectScore when s(A) is below
/// kDirectScoreFloor.
IfdTerms ifd_terms(const LmBackend& backend, const InstructionSample& sample,
                   std::string_view separator = "\n");
double ifd(const LmBackend& backend, const InstructionSample& sample);

struct AifdTerms {
    IfdTerms clean;
    std::array<double, kAttackCount> s_cond_adv{};
    double value = 0.0;
    bool truncated = false;
};

/// r(Q, A) plus s(A | Q_i) / s(A) over the six attacked instructions. Each
/// attacked instruction is the attacked prompt joined with the original input.
AifdTerms aifd_terms(const LmBackend& backend, const InstructionSample& sample,
                     const AdversarialVariantSet& variants, std::string_view separator = "\n");
double aifd(const LmBackend& backend, const InstructionSample& sample,
            const AdversarialVariantSet& variants);

/// Cosine similarity clamped to [-1, 1]; throws ZeroEmbedding naming `label` for a zero vector.
template <typename Derived1, typename Derived2>
typename Derived1::Scalar cosine(const Eigen::MatrixBase<Derived1>& a,
                                 const Eigen::MatrixBase<Derived2>& b, const std::string& label);

struct AioecTerms {
    double value = 0.0;
    std::array<double, kAttackCount> cosines{};
    std::vector<std::string> empty_generations;
};

/// Sum over the six variants of cos(E_clean, E_variant), where E is the sum
/// of the mean first- and last-layer embeddings of the greedy output.
AioecTerms aioec_terms(const LmBackend& backend, const InstructionSample& sample,
                       const AdversarialVariantSet& variants, std::size_t max_new_tokens,
                       std::string_view separator = "\n");
double aioec(const LmBackend& backend, const InstructionSample& sample,
             const AdversarialVariantSet& variants, std::size_t max_new_tokens);

/// Scores a single sample, capturing failures in the record.
ScoreRecord score_sample(const LmBackend& backend, const InstructionSample& sample,
                         const AdversarialVariantSet* variants, const MetricSet& metrics,
                         const ScoringOptions& options);

/// One record per sample, in corpus order. `variants` must be aligned with the
/// corpus when aifd or aioec is requested. Only a failing descriptor fetch or
/// a missing embedding capability aborts the batch.
std::vector<ScoreRecord> score_corpus(const LmBackend& backend, const Corpus& corpus,
                                      const std::vector<AdversarialVariantSet>& variants,
                                      const MetricSet& metrics, const ScoringOptions& options);

/// Generates the variants with `suite` first.
std::vector<ScoreRecord> score_corpus(const LmBackend& backend, const Corpus& corpus,
                                      const AttackSuite& suite, const MetricSet& metrics,
                                      const ScoringOptions& options);

// Scored JSONL: {id, s_cond, s_direct, s_cond_adv, ifd, aifd, aioec, truncated,
// degenerate_variants, empty_generations?, error?}. Absent values are omitted.
std::string serialize_score_record(const ScoreRecord& record);
std::string serialize_scores(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> parse_scores(std::string_view content);

// ---------------------------------------------------------------------------

template <typename Derived1, typename Derived2>
typename Derived1::Scalar cosine(const Eigen::MatrixBase<Derived1>& a,
                                 const Eigen::MatrixBase<Derived2>& b, const std::string& label)
{
    using Scalar = typename Derived1::Scalar;
    const Scalar na = a.norm();
    const Scalar nb = b.norm();
    if (na == Scalar(0))
        throw ZeroEmbedding("clean");
    if (nb == Scalar(0))
        throw ZeroEmbedding(label);
    // Rounding can push |cos| a few ulps past 1.
    return std::clamp(a.dot(b) / (na * nb), Scalar(-1), Scalar(1));
}

} // namespace diamond

#endif // DIAMOND_SCORING_HPP
