#include "diamond/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "diamond/error.hpp"
#include "diamond/kmeans.hpp"
#include "diamond/text.hpp"

namespace diamond {

std::size_t selection_size(double proportion, std::size_t valid)
{
    if (!(proportion > 0.0 && proportion <= 1.0))
        throw ValidationError("proportion must lie in (0, 1], got " + std::to_string(proportion));
    if (valid == 0)
        return 0;
    // Absorb representation error such as 0.15 * 20 = 3.0000000000000004.
    const double x = proportion * static_cast<double>(valid);
    const double k = std::ceil(x - 1e-9 * std::max(1.0, x));
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, valid);
}

SelectionReport rank_and_select(std::span<const ScoreRecord> records, Metric metric,
                                double proportion, SortOrder order)
{
    SelectionReport report;
    report.metric = metric;
    report.proportion = proportion;
    report.order = order;

    struct Entry {
        std::size_t index;
        double score;
    };
    std::vector<Entry> valid;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto value = records[i].metric(metric);
        if (records[i].error || !value || std::isnan(*value))
            continue;
        valid.push_back({i, *value});
    }
    report.excluded_errors = records.size() - valid.size();
    const std::size_t keep = selection_size(proportion, valid.size());
    if (valid.empty())
        throw ValidationError("no record carries a valid " + std::string(to_string(metric)) +
                              " score");

    std::stable_sort(valid.begin(), valid.end(), [order](const Entry& a, const Entry& b) {
        return order == SortOrder::descending ? a.score > b.score : a.score < b.score;
    });
    for (std::size_t i = 0; i < keep; ++i)
        report.selected_ids.push_back(records[valid[i].index].sample_id);
    report.cutoff_score = valid[keep - 1].score;
    return report;
}

namespace {

std::unordered_map<std::string, const InstructionSample*> index_by_id(const Corpus& corpus)
{
    std::unordered_map<std::string, const InstructionSample*> out;
    for (const auto& s : corpus.samples)
        out.emplace(s.id, &s);
    return out;
}

const InstructionSample& lookup(const std::unordered_map<std::string, const InstructionSample*>& ids,
                                const std::string& id)
{
    auto it = ids.find(id);
    if (it == ids.end())
        throw ValidationError("selected id '" + id + "' is not in the online corpus");
    return *it->second;
}

} // namespace

Corpus selected_subset(const SelectionReport& selected, const Corpus& online)
{
    const auto ids = index_by_id(online);
    Corpus out;
    out.source_path = online.source_path;
    for (const auto& id : selected.selected_ids)
        out.samples.push_back(lookup(ids, id));
    return out;
}

CalibrationResult calibrate(const SelectionReport& selected, const Corpus& online,
                            const Corpus& reference)
{
    std::unordered_map<std::string, const std::string*> by_prompt;
    std::unordered_map<std::string, const std::string*> by_id;
    for (const auto& r : reference.samples) {
        by_prompt.emplace(r.prompt, &r.response);
        by_id.emplace(r.id, &r.response);
    }

    CalibrationResult result;
    result.corpus = selected_subset(selected, online);
    for (auto& s : result.corpus.samples) {
        if (auto it = by_prompt.find(s.prompt); it != by_prompt.end()) {
            s.response = *it->second;
        } else if (auto jt = by_id.find(s.id); jt != by_id.end()) {
            s.response = *jt->second;
        } else {
            ++result.unmatched;
            result.unmatched_ids.push_back(s.id);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd prompt_embeddings(const LmBackend& backend, const Corpus& corpus)
{
    const auto d = backend.descriptor();
    if (!d.supports_embeddings)
        throw CapabilityError("backend " + d.name + " does not expose hidden states");
    Eigen::MatrixXd out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Eigen::VectorXd e = backend.embed(corpus.samples[i].prompt).combined();
        if (i == 0)
            out.resize(static_cast<Eigen::Index>(corpus.size()), e.size());
        out.row(static_cast<Eigen::Index>(i)) = e.transpose();
    }
    return out;
}

Corpus bootstrap_sample(const Eigen::MatrixXd& embeddings, const Corpus& corpus,
                        const BootstrapOptions& options)
{
    if (options.k_clusters <= 0 || options.per_cluster == 0)
        throw ValidationError("k_clusters and per_cluster must be positive");
    if (static_cast<std::size_t>(options.k_clusters) > corpus.size())
        throw ValidationError("k_clusters (" + std::to_string(options.k_clusters) +
                              ") exceeds corpus size (" + std::to_string(corpus.size()) + ")");
    if (static_cast<std::size_t>(embeddings.rows()) != corpus.size())
        throw ValidationError("embedding rows do not match corpus size");

    const auto clusters = kmeans(embeddings, options.k_clusters,
                                 derive_seed(options.seed, "#bootstrap-kmeans", 0),
                                 options.max_iterations);

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(options.k_clusters));
    for (std::size_t i = 0; i < corpus.size(); ++i)
        members[static_cast<std::size_t>(clusters.assignment[i])].push_back(i);

    std::mt19937_64 rng(derive_seed(options.seed, "#bootstrap-draw", 1));
    std::vector<bool> keep(corpus.size(), false);
    for (auto& m : members) {
        const std::size_t take = std::min(options.per_cluster, m.size());
        for (std::size_t i = 0; i < take; ++i) {
            std::swap(m[i], m[i + detail::uniform_index(rng, m.size() - i)]);
            keep[m[i]] = true;
        }
    }

    Corpus out;
    out.source_path = corpus.source_path;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (keep[i])
            out.samples.push_back(corpus.samples[i]);
    return out;
}

Corpus bootstrap_sample(const LmBackend& backend, const Corpus& corpus,
                        const BootstrapOptions& options)
{
    if (options.k_clusters <= 0 || static_cast<std::size_t>(options.k_clusters) > corpus.size())
        throw ValidationError("k_clusters (" + std::to_string(options.k_clusters) +
                              ") must lie in [1, corpus size " + std::to_string(corpus.size()) + "]");
    return bootstrap_sample(prompt_embeddings(backend, corpus), corpus, options);
}

// ---------------------------------------------------------------------------

PipelineResult run_pipeline(const LmBackend& backend, const Corpus& online,
                            const std::optional<Corpus>& reference, const PipelineOptions& options)
{
    auto stage = [](const char* name, auto&& fn) {
        try {
            return fn();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
    };

    PipelineResult result;
    const MetricSet metrics = MetricSet::only(options.metric);

    result.scored_corpus = stage("generate", [&] {
        Corpus c = online;
        if (metrics.needs_response()) {
            for (auto& s : c.samples)
                if (text::trim(s.response).empty())
                    s.response = backend.generate(
                        instruction_text(s.prompt, s.input, options.scoring.separator),
                        options.scoring.max_new_tokens);
        }
        return c;
    });

    result.variants = stage("attack", [&] {
        const AttackSuite suite(options.attack, options.seed);
        return generate_adversarial_sets(result.scored_corpus, suite);
    });

    result.scores = stage("score", [&] {
        return score_corpus(backend, result.scored_corpus, result.variants, metrics,
                            options.scoring);
    });

    result.report = stage("select", [&] {
        return rank_and_select(result.scores, options.metric, options.proportion, options.order);
    });

    stage("calibrate", [&] {
        if (reference) {
            auto cal = calibrate(result.report, result.scored_corpus, *reference);
            result.diamond = std::move(cal.corpus);
            result.unmatched = cal.unmatched;
        } else {
            result.diamond = selected_subset(result.report, result.scored_corpus);
        }
        return 0;
    });
    return result;
}

std::string serialize_selection(const SelectionReport& report)
{
    nlohmann::ordered_json obj;
    obj["metric"] = std::string(to_string(report.metric));
    obj["proportion"] = report.proportion;
    obj["cutoff_score"] = report.cutoff_score;
    obj["selected_ids"] = report.selected_ids;
    obj["excluded_errors"] = report.excluded_errors;
    if (report.order == SortOrder::ascending)
        obj["order"] = "ascending";
    return obj.dump(2) + "\n";
}

SelectionReport parse_selection(std::string_view content)
{
    try {
        const auto j = nlohmann::json::parse(content);
        SelectionReport r;
        r.metric = parse_metric(j.at("metric").get<std::string>());
        r.proportion = j.at("proportion").get<double>();
        r.cutoff_score = j.at("cutoff_score").get<double>();
        r.selected_ids = j.at("selected_ids").get<std::vector<std::string>>();
        r.excluded_errors = j.at("excluded_errors").get<std::size_t>();
        r.order = j.value("order", std::string("descending")) == "ascending"
                      ? SortOrder::ascending
                      : SortOrder::descending;
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("selection report: ") + e.what());
    }
}

void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineResult& result)
{
    std::filesystem::create_directories(dir);
    write_file(dir / "variants.jsonl", serialize_variants(result.variants));
    write_file(dir / "scores.jsonl", serialize_scores(result.scores));
    write_file(dir / "selection.json", serialize_selection(result.report));
    write_corpus(result.diamond, dir / "diamond.json", CorpusFormat::alpaca_json);
}

} // namespace diamond
