#ifndef DIAMOND_SELECTION_HPP
#define DIAMOND_SELECTION_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diamond/attacks.hpp"
#include "diamond/corpus.hpp"
#include "diamond/lm_backend.hpp"
#include "diamond/scoring.hpp"

namespace diamond {

enum class SortOrder { descending, ascending };

/// The chosen core subset, in rank order.
struct SelectionReport {
    Metric metric = Metric::aifd;
    double proportion = 1.0;
    std::vector<std::string> selected_ids;
    double cutoff_score = 0.0;
    std::size_t excluded_errors = 0;
    SortOrder order = SortOrder::descending;
};

/// Number of samples kept from `valid` records: ceil(proportion * valid).
std::size_t selection_size(double proportion, std::size_t valid);

/// Stable sort by the metric (descending unless asked otherwise) and keep the
/// top ceil(proportion * valid) ids. Records with an error or without the
/// metric are excluded and counted.
SelectionReport rank_and_select(std::span<const ScoreRecord> records, Metric metric,
                                double proportion, SortOrder order = SortOrder::descending);

struct CalibrationResult {
    Corpus corpus;
    std::size_t unmatched = 0;
    std::vector<std::string> unmatched_ids;
};

/// Selected samples, in selection order, with responses replaced by the
/// reference response for the same prompt (falling back to the same id).
CalibrationResult calibrate(const SelectionReport& selected, const Corpus& online,
                            const Corpus& reference);

/// Selected samples in selection order with their own responses.
Corpus selected_subset(const SelectionReport& selected, const Corpus& online);

struct BootstrapOptions {
    int k_clusters = 100;
    std::size_t per_cluster = 10;
    std::uint64_t seed = 0;
    int max_iterations = 100;
};

/// Embedding matrix of the prompts, one row per sample, E = e_first + e_last.
Eigen::MatrixXd prompt_embeddings(const LmBackend& backend, const Corpus& corpus);

/// Clusters the prompt embeddings and draws up to `per_cluster` members of
/// each cluster. Output keeps corpus order.
Corpus bootstrap_sample(const LmBackend& backend, const Corpus& corpus,
                        const BootstrapOptions& options);
/// Same, over precomputed embeddings (rows aligned with the corpus).
Corpus bootstrap_sample(const Eigen::MatrixXd& embeddings, const Corpus& corpus,
                        const BootstrapOptions& options);

struct PipelineOptions {
    std::uint64_t seed = 0;
    AttackConfig attack;
    Metric metric = Metric::aifd;
    double proportion = 0.05;
    SortOrder order = SortOrder::descending;
    ScoringOptions scoring;
};

struct PipelineResult {
    Corpus scored_corpus; // online corpus after response generation
    std::vector<AdversarialVariantSet> variants;
    std::vector<ScoreRecord> scores;
    SelectionReport report;
    Corpus diamond;
    std::size_t unmatched = 0;
};

/// A failure inside one pipeline stage.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string& what)
        : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

  private:
    std::string stage_;
};

/// generate-if-needed -> attack -> score -> rank/select -> calibrate.
PipelineResult run_pipeline(const LmBackend& backend, const Corpus& online,
                            const std::optional<Corpus>& reference, const PipelineOptions& options);

std::string serialize_selection(const SelectionReport& report);
SelectionReport parse_selection(std::string_view content);

/// Writes variants.jsonl, scores.jsonl, selection.json and diamond.json.
void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineResult& result);

} // namespace diamond

#endif // DIAMOND_SELECTION_HPP
