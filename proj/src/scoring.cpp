#include "diamond/scoring.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "diamond/text.hpp"

namespace diamond {

std::string_view to_string(Metric metric)
{
    switch (metric) {
    case Metric::ifd:
        return "ifd";
    case Metric::aifd:
        return "aifd";
    case Metric::aioec:
        return "aioec";
    }
    return "?";
}

Metric parse_metric(std::string_view name)
{
    if (name == "ifd")
        return Metric::ifd;
    if (name == "aifd")
        return Metric::aifd;
    if (name == "aioec")
        return Metric::aioec;
    throw ValidationError("unknown metric '" + std::string(name) + "'");
}

MetricSet MetricSet::only(Metric m)
{
    MetricSet s;
    switch (m) {
    case Metric::ifd:
        s.ifd = true;
        break;
    case Metric::aifd:
        s.ifd = s.aifd = true;
        break;
    case Metric::aioec:
        s.aioec = true;
        break;
    }
    return s;
}

MetricSet MetricSet::parse(std::string_view list)
{
    MetricSet s;
    std::size_t b = 0;
    while (b <= list.size()) {
        std::size_t e = list.find(',', b);
        if (e == std::string_view::npos)
            e = list.size();
        const auto name = text::trim(list.substr(b, e - b));
        b = e + 1;
        if (name.empty())
            continue;
        const auto one = only(parse_metric(name));
        s.ifd |= one.ifd;
        s.aifd |= one.aifd;
        s.aioec |= one.aioec;
    }
    if (s.empty())
        throw ValidationError("no metrics requested");
    return s;
}

std::optional<double> ScoreRecord::metric(Metric m) const
{
    switch (m) {
    case Metric::ifd:
        return ifd;
    case Metric::aifd:
        return aifd;
    case Metric::aioec:
        return aioec;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

AnswerScore conditioned_answer_score(const LmBackend& backend, std::string_view instruction,
                                     std::string_view answer)
{
    const auto lp = backend.score_continuation(instruction, answer);
    lp.validate();
    return {lp.mean_negative(), lp.truncated};
}

AnswerScore direct_answer_score(const LmBackend& backend, std::string_view answer)
{
    return conditioned_answer_score(backend, "", answer);
}

IfdTerms ifd_terms(const LmBackend& backend, const InstructionSample& sample,
                   std::string_view separator)
{
    if (text::trim(sample.response).empty())
        throw ValidationError("sample " + sample.id + " has an empty response");
    const auto q = instruction_text(sample.prompt, sample.input, separator);
    const auto cond = conditioned_answer_score(backend, q, sample.response);
    const auto direct = direct_answer_score(backend, sample.response);
    if (direct.value < kDirectScoreFloor)
        throw DegenerateDirectScore(cond.value, direct.value);
    return {cond.value, direct.value, cond.value / direct.value, cond.truncated || direct.truncated};
}

double ifd(const LmBackend& backend, const InstructionSample& sample)
{
    return ifd_terms(backend, sample).ratio;
}

namespace {

void check_alignment(const InstructionSample& sample, const AdversarialVariantSet& variants)
{
    if (variants.sample_id != sample.id)
        throw ValidationError("variant set for '" + variants.sample_id +
                              "' does not belong to sample '" + sample.id + "'");
}

} // namespace

AifdTerms aifd_terms(const LmBackend& backend, const InstructionSample& sample,
                     const AdversarialVariantSet& variants, std::string_view separator)
{
    check_alignment(sample, variants);
    AifdTerms out;
    out.clean = ifd_terms(backend, sample, separator);
    out.truncated = out.clean.truncated;
    double adversarial = 0.0;
    for (std::size_t i = 0; i < kAttackCount; ++i) {
        const auto& v = variants.variants[i];
        if (v.prompt == sample.prompt) {
            out.s_cond_adv[i] = out.clean.s_cond;
        } else {
            const auto q = instruction_text(v.prompt, sample.input, separator);
            const auto s = conditioned_answer_score(backend, q, sample.response);
            out.s_cond_adv[i] = s.value;
            out.truncated = out.truncated || s.truncated;
        }
        adversarial += out.s_cond_adv[i] / out.clean.s_direct;
    }
    out.value = out.clean.ratio + adversarial;
    return out;
}

double aifd(const LmBackend& backend, const InstructionSample& sample,
            const AdversarialVariantSet& variants)
{
    return aifd_terms(backend, sample, variants).value;
}

AioecTerms aioec_terms(const LmBackend& backend, const InstructionSample& sample,
                       const AdversarialVariantSet& variants, std::size_t max_new_tokens,
                       std::string_view separator)
{
    check_alignment(sample, variants);
    AioecTerms out;

    auto output_embedding = [&](const std::string& prompt, const std::string& label) {
        const auto condition = instruction_text(prompt, sample.input, separator);
        std::string generated = backend.generate(condition, max_new_tokens);
        if (text::trim(generated).empty()) {
            out.empty_generations.push_back(label);
            generated = condition;
        }
        return backend.embed(generated).combined();
    };

    const Eigen::VectorXd clean = output_embedding(sample.prompt, "clean");
    const bool clean_fallback = !out.empty_generations.empty();
    for (std::size_t i = 0; i < kAttackCount; ++i) {
        const auto& v = variants.variants[i];
        const std::string label(to_string(v.kind));
        Eigen::VectorXd e;
        if (v.prompt == sample.prompt) {
            // Greedy decoding is deterministic, so the clean output is reused.
            e = clean;
            if (clean_fallback)
                out.empty_generations.push_back(label);
        } else {
            e = output_embedding(v.prompt, label);
        }
        out.cosines[i] = cosine(clean, e, label);
        out.value += out.cosines[i];
    }
    return out;
}

double aioec(const LmBackend& backend, const InstructionSample& sample,
             const AdversarialVariantSet& variants, std::size_t max_new_tokens)
{
    return aioec_terms(backend, sample, variants, max_new_tokens).value;
}

// ---------------------------------------------------------------------------

ScoreRecord score_sample(const LmBackend& backend, const InstructionSample& sample,
                         const AdversarialVariantSet* variants, const MetricSet& metrics,
                         const ScoringOptions& options)
{
    ScoreRecord rec;
    rec.sample_id = sample.id;
    std::vector<std::string> errors;
    if (variants != nullptr)
        for (const auto& v : variants->variants)
            if (v.degenerate)
                rec.degenerate_variants.push_back(v.kind);

    if (metrics.aifd) {
        try {
            if (variants == nullptr)
                throw ValidationError("aifd requires adversarial variants");
            const auto t = aifd_terms(backend, sample, *variants, options.separator);
            rec.s_cond = t.clean.s_cond;
            rec.s_direct = t.clean.s_direct;
            rec.ifd = t.clean.ratio;
            rec.s_cond_adv = t.s_cond_adv;
            rec.aifd = t.value;
            rec.truncated = t.truncated;
        } catch (const CapabilityError&) {
            throw;
        } catch (const std::exception& e) {
            errors.emplace_back(e.what());
        }
    } else if (metrics.ifd) {
        try {
            const auto t = ifd_terms(backend, sample, options.separator);
            rec.s_cond = t.s_cond;
            rec.s_direct = t.s_direct;
            rec.ifd = t.ratio;
            rec.truncated = t.truncated;
        } catch (const CapabilityError&) {
            throw;
        } catch (const std::exception& e) {
            errors.emplace_back(e.what());
        }
    }

    if (metrics.aioec) {
        try {
            if (variants == nullptr)
                throw ValidationError("aioec requires adversarial variants");
            auto t = aioec_terms(backend, sample, *variants, options.max_new_tokens,
                                 options.separator);
            rec.aioec = t.value;
            rec.empty_generations = std::move(t.empty_generations);
        } catch (const CapabilityError&) {
            throw;
        } catch (const std::exception& e) {
            errors.emplace_back(e.what());
        }
    }

    if (!errors.empty()) {
        std::string msg = errors.front();
        for (std::size_t i = 1; i < errors.size(); ++i)
            msg += "; " + errors[i];
        rec.error = std::move(msg);
    }
    return rec;
}

std::vector<ScoreRecord> score_corpus(const LmBackend& backend, const Corpus& corpus,
                                      const std::vector<AdversarialVariantSet>& variants,
                                      const MetricSet& metrics, const ScoringOptions& options)
{
    if (metrics.empty())
        throw ValidationError("no metrics requested");
    const auto descriptor = backend.descriptor();
    if (metrics.aioec && !descriptor.supports_embeddings)
        throw CapabilityError("backend " + descriptor.name +
                              " does not expose hidden states; aioec unavailable");
    const bool need_variants = metrics.aifd || metrics.aioec;
    if (need_variants && variants.size() != corpus.size())
        throw ValidationError("expected " + std::to_string(corpus.size()) +
                              " variant sets, got " + std::to_string(variants.size()));

    std::vector<ScoreRecord> records(corpus.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= corpus.size())
                return;
            {
                std::lock_guard lock(fatal_mutex);
                if (fatal)
                    return;
            }
            try {
                records[i] = score_sample(backend, corpus.samples[i],
                                          need_variants ? &variants[i] : nullptr, metrics, options);
            } catch (...) {
                std::lock_guard lock(fatal_mutex);
                if (!fatal)
                    fatal = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, corpus.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w)
            pool.emplace_back(worker);
    }
    if (fatal)
        std::rethrow_exception(fatal);
    return records;
}

std::vector<ScoreRecord> score_corpus(const LmBackend& backend, const Corpus& corpus,
                                      const AttackSuite& suite, const MetricSet& metrics,
                                      const ScoringOptions& options)
{
    std::vector<AdversarialVariantSet> variants;
    if (metrics.aifd || metrics.aioec)
        variants = generate_adversarial_sets(corpus, suite);
    return score_corpus(backend, corpus, variants, metrics, options);
}

// ---------------------------------------------------------------------------

std::string serialize_score_record(const ScoreRecord& r)
{
    nlohmann::ordered_json obj;
    obj["id"] = r.sample_id;
    if (r.s_cond)
        obj["s_cond"] = *r.s_cond;
    if (r.s_direct)
        obj["s_direct"] = *r.s_direct;
    if (r.s_cond_adv)
        obj["s_cond_adv"] = *r.s_cond_adv;
    if (r.ifd)
        obj["ifd"] = *r.ifd;
    if (r.aifd)
        obj["aifd"] = *r.aifd;
    if (r.aioec)
        obj["aioec"] = *r.aioec;
    obj["truncated"] = r.truncated;
    auto degenerate = nlohmann::ordered_json::array();
    for (auto k : r.degenerate_variants)
        degenerate.push_back(std::string(to_string(k)));
    obj["degenerate_variants"] = std::move(degenerate);
    if (!r.empty_generations.empty())
        obj["empty_generations"] = r.empty_generations;
    if (r.error)
        obj["error"] = *r.error;
    return obj.dump();
}

std::string serialize_scores(const std::vector<ScoreRecord>& records)
{
    std::string out;
    for (const auto& r : records) {
        out += serialize_score_record(r);
        out += '\n';
    }
    return out;
}

std::vector<ScoreRecord> parse_scores(std::string_view content)
{
    std::vector<ScoreRecord> out;
    std::size_t pos = 0;
    long record = 0;
    auto opt = [](const nlohmann::json& j, const char* key) -> std::optional<double> {
        auto it = j.find(key);
        if (it == j.end() || it->is_null())
            return std::nullopt;
        return it->get<double>();
    };
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string_view::npos)
            end = content.size();
        const auto line = content.substr(pos, end - pos);
        pos = end + 1;
        if (text::trim(line).empty())
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ScoreRecord r;
            r.sample_id = j.at("id").get<std::string>();
            r.s_cond = opt(j, "s_cond");
            r.s_direct = opt(j, "s_direct");
            if (j.contains("s_cond_adv")) {
                const auto v = j["s_cond_adv"].get<std::vector<double>>();
                if (v.size() != kAttackCount)
                    throw ParseError("s_cond_adv must hold 6 values", record);
                std::array<double, kAttackCount> a{};
                std::copy(v.begin(), v.end(), a.begin());
                r.s_cond_adv = a;
            }
            r.ifd = opt(j, "ifd");
            r.aifd = opt(j, "aifd");
            r.aioec = opt(j, "aioec");
            r.truncated = j.value("truncated", false);
            for (const auto& k : j.value("degenerate_variants", std::vector<std::string>{}))
                r.degenerate_variants.push_back(parse_attack_kind(k));
            r.empty_generations = j.value("empty_generations", std::vector<std::string>{});
            if (j.contains("error") && j["error"].is_string())
                r.error = j["error"].get<std::string>();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("score record " + std::to_string(record) + ": " + e.what(), record);
        }
        ++record;
    }
    return out;
}

} // namespace diamond
