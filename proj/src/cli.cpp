#include "diamond/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "diamond/corpus.hpp"
#include "diamond/remote_backend.hpp"
#include "diamond/toy_backend.hpp"

namespace diamond {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// RunConfig

ordered_json RunConfig::to_json() const
{
    ordered_json j;
    j["seed"] = seed;
    j["backend"] = backend;
    j["endpoint"] = endpoint;
    j["timeout_ms"] = timeout_ms;
    j["max_in_flight"] = max_in_flight;
    j["metric"] = std::string(to_string(metric));
    j["metrics"] = metrics;
    j["proportion"] = proportion;
    j["ascending"] = ascending;
    j["workers"] = workers;
    j["max_new_tokens"] = max_new_tokens;
    j["max_perturbed_words"] = attack.max_perturbed_words;
    j["checklist_suffix_length"] = attack.checklist_suffix_length;
    j["checklist_pool_size"] = attack.checklist_pool_size;
    j["stresstest_suffix"] = attack.stresstest_suffix;
    j["synonym_lexicon_path"] =
        attack.synonym_lexicon_path ? attack.synonym_lexicon_path->string() : std::string();
    j["input"] = input;
    j["input_format"] = input_format;
    j["reference"] = reference;
    j["reference_format"] = reference_format;
    j["k_clusters"] = k_clusters;
    j["per_cluster"] = per_cluster;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, fs::path base_dir)
{
    if (!j.is_object())
        throw UsageError("config must be a JSON object");
    RunConfig c;
    c.base_dir = std::move(base_dir);
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "seed")
                c.seed = value.get<std::uint64_t>();
            else if (key == "backend")
                c.backend = value.get<std::string>();
            else if (key == "endpoint")
                c.endpoint = value.get<std::string>();
            else if (key == "timeout_ms")
                c.timeout_ms = value.get<std::uint64_t>();
            else if (key == "max_in_flight")
                c.max_in_flight = value.get<std::size_t>();
            else if (key == "metric")
                c.metric = parse_metric(value.get<std::string>());
            else if (key == "metrics")
                c.metrics = value.get<std::string>();
            else if (key == "proportion")
                c.proportion = value.get<double>();
            else if (key == "ascending")
                c.ascending = value.get<bool>();
            else if (key == "workers")
                c.workers = value.get<std::size_t>();
            else if (key == "max_new_tokens")
                c.max_new_tokens = value.get<std::size_t>();
            else if (key == "max_perturbed_words")
                c.attack.max_perturbed_words = value.get<std::size_t>();
            else if (key == "checklist_suffix_length")
                c.attack.checklist_suffix_length = value.get<std::size_t>();
            else if (key == "checklist_pool_size")
                c.attack.checklist_pool_size = value.get<std::size_t>();
            else if (key == "stresstest_suffix")
                c.attack.stresstest_suffix = value.get<std::string>();
            else if (key == "synonym_lexicon_path") {
                const auto p = value.get<std::string>();
                if (p.empty())
                    c.attack.synonym_lexicon_path.reset();
                else
                    c.attack.synonym_lexicon_path = p;
            } else if (key == "input")
                c.input = value.get<std::string>();
            else if (key == "input_format")
                c.input_format = value.get<std::string>();
            else if (key == "reference")
                c.reference = value.get<std::string>();
            else if (key == "reference_format")
                c.reference_format = value.get<std::string>();
            else if (key == "k_clusters")
                c.k_clusters = value.get<int>();
            else if (key == "per_cluster")
                c.per_cluster = value.get<std::size_t>();
            else if (key == "output_dir")
                c.output_dir = value.get<std::string>();
            else
                throw UsageError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad config value: ") + e.what());
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

fs::path RunConfig::resolve(const std::string& path) const
{
    const fs::path p(path);
    if (p.is_absolute() || base_dir.empty())
        return p;
    return base_dir / p;
}

ScoringOptions RunConfig::scoring_options() const
{
    ScoringOptions o;
    o.workers = workers;
    o.max_new_tokens = max_new_tokens;
    return o;
}

PipelineOptions RunConfig::pipeline_options() const
{
    PipelineOptions o;
    o.seed = seed;
    o.attack = attack;
    if (o.attack.synonym_lexicon_path)
        o.attack.synonym_lexicon_path = resolve(o.attack.synonym_lexicon_path->string());
    o.metric = metric;
    o.proportion = proportion;
    o.order = ascending ? SortOrder::ascending : SortOrder::descending;
    o.scoring = scoring_options();
    return o;
}

std::shared_ptr<const LmBackend> make_backend(const RunConfig& config)
{
    if (config.backend == "toy")
        return {&BigramBackend::builtin(), [](const LmBackend*) {}};
    if (config.backend == "uniform")
        return std::make_shared<UniformBackend>(1024);
    if (config.backend == "remote") {
        std::string url = config.endpoint;
        if (url.empty())
            if (const char* env = std::getenv("DIAMOND_BACKEND_URL"))
                url = env;
        if (url.empty())
            throw UsageError("remote backend needs --endpoint or DIAMOND_BACKEND_URL");
        return std::make_shared<RemoteBackend>(url, std::chrono::milliseconds(config.timeout_ms),
                                               config.max_in_flight);
    }
    throw UsageError("unknown backend '" + config.backend + "'");
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Context {
    std::ostream& out;
    std::ostream& err;
    RunConfig config;
    bool force = false;
};

void log(const Context& ctx, const std::string& msg)
{
    ctx.err << "[diamond] " << msg << '\n';
}

void write_resolved_config(const fs::path& dir, const RunConfig& config)
{
    write_file(dir / "config.resolved.json", config.to_json().dump(2) + "\n");
}

fs::path parent_or_cwd(const fs::path& file)
{
    return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

Corpus load_input(const RunConfig& c)
{
    if (c.input.empty())
        throw UsageError("no input corpus given");
    CorpusFormat format;
    try {
        format = parse_corpus_format(c.input_format);
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
    return load_corpus(c.resolve(c.input), format);
}

void validate_proportion(double p)
{
    if (!(p > 0.0 && p <= 1.0))
        throw UsageError("--proportion must lie in (0, 1], got " + std::to_string(p));
}

int cmd_attack(Context& ctx, const std::string& output, const std::string& emit)
{
    if (output.empty() && emit != "-")
        throw UsageError("attack needs --output or --emit -");
    const Corpus corpus = load_input(ctx.config);
    const AttackSuite suite(ctx.config.pipeline_options().attack, ctx.config.seed);
    std::vector<AdversarialVariantSet> sets;
    sets.reserve(corpus.size());
    std::size_t degenerate = 0;
    for (const auto& s : corpus.samples) {
        try {
            sets.push_back(suite.generate(s));
        } catch (const std::exception& e) {
            throw Error("sample " + s.id + ": " + e.what());
        }
        for (const auto& v : sets.back().variants)
            degenerate += v.degenerate ? 1 : 0;
    }
    const std::string jsonl = serialize_variants(sets);
    if (emit == "-")
        ctx.out << jsonl;
    if (!output.empty()) {
        write_file(output, jsonl);
        write_resolved_config(parent_or_cwd(output), ctx.config);
    }
    log(ctx, "attacked " + std::to_string(corpus.size()) + " samples (" +
                 std::to_string(degenerate) + " degenerate variants)");
    return 0;
}

int cmd_score(Context& ctx, const std::string& variants_path, const std::string& output,
              const std::string& emit)
{
    if (output.empty() && emit != "-")
        throw UsageError("score needs --output or --emit -");
    MetricSet metrics;
    try {
        metrics = MetricSet::parse(ctx.config.metrics);
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
    const Corpus corpus = load_input(ctx.config);
    std::vector<AdversarialVariantSet> variants;
    if (metrics.aifd || metrics.aioec) {
        if (!variants_path.empty()) {
            variants = parse_variants(read_file(variants_path));
        } else {
            const AttackSuite suite(ctx.config.pipeline_options().attack, ctx.config.seed);
            variants = generate_adversarial_sets(corpus, suite);
        }
    }
    const auto backend = make_backend(ctx.config);
    log(ctx, "scoring " + std::to_string(corpus.size()) + " samples with " +
                 backend->descriptor().name);
    const auto records =
        score_corpus(*backend, corpus, variants, metrics, ctx.config.scoring_options());
    std::size_t errors = 0;
    for (const auto& r : records)
        if (r.error) {
            ++errors;
            log(ctx, "sample " + r.sample_id + ": " + *r.error);
        }
    const std::string jsonl = serialize_scores(records);
    if (emit == "-")
        ctx.out << jsonl;
    if (!output.empty()) {
        write_file(output, jsonl);
        write_resolved_config(parent_or_cwd(output), ctx.config);
    }
    log(ctx, "scored " + std::to_string(records.size()) + " samples (" + std::to_string(errors) +
                 " with errors)");
    return 0;
}

int cmd_select(Context& ctx, const std::string& scores_path, const fs::path& output_dir)
{
    validate_proportion(ctx.config.proportion);
    if (output_dir.empty())
        throw UsageError("select needs --output-dir");
    const auto records = parse_scores(read_file(scores_path));
    const Corpus online = load_input(ctx.config);
    const auto report =
        rank_and_select(records, ctx.config.metric, ctx.config.proportion,
                        ctx.config.ascending ? SortOrder::ascending : SortOrder::descending);
    Corpus diamond;
    if (!ctx.config.reference.empty()) {
        const auto reference = load_corpus(ctx.config.resolve(ctx.config.reference),
                                           parse_corpus_format(ctx.config.reference_format));
        auto cal = calibrate(report, online, reference);
        if (cal.unmatched > 0)
            log(ctx, std::to_string(cal.unmatched) + " selected samples had no reference response");
        diamond = std::move(cal.corpus);
    } else {
        diamond = selected_subset(report, online);
    }
    fs::create_directories(output_dir);
    write_file(output_dir / "selection.json", serialize_selection(report));
    write_corpus(diamond, output_dir / "diamond.json", CorpusFormat::alpaca_json);
    write_resolved_config(output_dir, ctx.config);
    log(ctx, "selected " + std::to_string(report.selected_ids.size()) + " of " +
                 std::to_string(records.size()) + " samples");
    return 0;
}

int cmd_pipeline(Context& ctx, fs::path output_dir)
{
    validate_proportion(ctx.config.proportion);
    if (output_dir.empty())
        throw UsageError("pipeline needs --output-dir");
    if (fs::exists(output_dir) && !fs::is_empty(output_dir) && !ctx.force)
        throw Error("output directory " + output_dir.string() + " is not empty; pass --force");

    const Corpus online = load_input(ctx.config);
    std::optional<Corpus> reference;
    if (!ctx.config.reference.empty())
        reference = load_corpus(ctx.config.resolve(ctx.config.reference),
                                parse_corpus_format(ctx.config.reference_format));
    const auto backend = make_backend(ctx.config);
    log(ctx, "pipeline: " + std::to_string(online.size()) + " samples, metric " +
                 std::string(to_string(ctx.config.metric)));
    const auto result = run_pipeline(*backend, online, reference, ctx.config.pipeline_options());
    write_pipeline_outputs(output_dir, result);
    write_resolved_config(output_dir, ctx.config);
    log(ctx, "selected " + std::to_string(result.report.selected_ids.size()) + " samples (" +
                 std::to_string(result.report.excluded_errors) + " excluded, " +
                 std::to_string(result.unmatched) + " uncalibrated)");
    return 0;
}

int cmd_bootstrap(Context& ctx, const std::string& output, const std::string& output_format)
{
    if (output.empty())
        throw UsageError("bootstrap needs --output");
    const Corpus corpus = load_input(ctx.config);
    const auto backend = make_backend(ctx.config);
    BootstrapOptions opts;
    opts.k_clusters = ctx.config.k_clusters;
    opts.per_cluster = ctx.config.per_cluster;
    opts.seed = ctx.config.seed;
    const Corpus sample = bootstrap_sample(*backend, corpus, opts);
    write_corpus(sample, output, parse_corpus_format(output_format));
    write_resolved_config(parent_or_cwd(output), ctx.config);
    log(ctx, "bootstrap kept " + std::to_string(sample.size()) + " of " +
                 std::to_string(corpus.size()) + " samples");
    return 0;
}

int cmd_serve(Context& ctx, const std::string& host, int port)
{
    const auto backend = make_backend(ctx.config);
    BackendServer server(*backend, host, port);
    log(ctx, "serving " + backend->descriptor().name + " on " + server.url());
    server.wait();
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Mine high-quality instruction data by adversarial prompt robustness", "diamond"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 0;
    std::string config_path;
    bool force = false;
    auto* seed_opt = app.add_option("--seed", seed, "Run seed");
    app.add_option("--config", config_path, "JSON config file (flat keys)");
    app.add_flag("--force", force, "Overwrite an existing output directory");

    // Flags shared by several subcommands; each binds into a staging value and
    // only overrides the config when given.
    std::vector<std::function<void(RunConfig&)>> overrides;
    auto opt = [&]<typename T>(CLI::App* sub, const std::string& name, T& target,
                               std::function<void(RunConfig&, const T&)> apply,
                               const std::string& help) {
        auto* o = sub->add_option(name, target, help);
        overrides.push_back([o, &target, apply](RunConfig& c) {
            if (o->count() > 0)
                apply(c, target);
        });
    };

    struct Staging {
        std::string input, format, reference, reference_format, backend, endpoint, metric,
            metrics, stress, lexicon;
        std::size_t max_words = 0, suffix_len = 0, pool = 0, workers = 0, max_new = 0,
                    in_flight = 0, per_cluster = 0;
        std::uint64_t timeout = 0;
        double proportion = 0;
        int k = 0;
    };
    // One staging block per subcommand so CLI11 never binds a variable twice.
    std::map<std::string, Staging> staging;

    auto add_input = [&](CLI::App* sub) {
        auto& s = staging[sub->get_name()];
        opt(sub, "--input", s.input, std::function<void(RunConfig&, const std::string&)>(
                                          [](RunConfig& c, const std::string& v) { c.input = v; }),
            "Input corpus");
        opt(sub, "--format", s.format,
            std::function<void(RunConfig&, const std::string&)>(
                [](RunConfig& c, const std::string& v) { c.input_format = v; }),
            "Input format: jsonl | alpaca_json");
    };
    auto add_attack = [&](CLI::App* sub) {
        auto& s = staging[sub->get_name()];
        opt(sub, "--max-perturbed-words", s.max_words,
            std::function<void(RunConfig&, const std::size_t&)>(
                [](RunConfig& c, const std::size_t& v) { c.attack.max_perturbed_words = v; }),
            "Words perturbed by character/word attacks");
        opt(sub, "--checklist-suffix-length", s.suffix_len,
            std::function<void(RunConfig&, const std::size_t&)>(
                [](RunConfig& c, const std::size_t& v) { c.attack.checklist_suffix_length = v; }),
            "Length of CheckList suffixes");
        opt(sub, "--checklist-pool-size", s.pool,
            std::function<void(RunConfig&, const std::size_t&)>(
                [](RunConfig& c, const std::size_t& v) { c.attack.checklist_pool_size = v; }),
            "Number of CheckList suffixes");
        opt(sub, "--stresstest-suffix", s.stress,
            std::function<void(RunConfig&, const std::string&)>(
                [](RunConfig& c, const std::string& v) { c.attack.stresstest_suffix = v; }),
            "StressTest distractor");
        opt(sub, "--lexicon", s.lexicon,
            std::function<void(RunConfig&, const std::string&)>([](RunConfig& c, const std::string& v) {
                if (v.empty())
                    c.attack.synonym_lexicon_path.reset();
                else
                    c.attack.synonym_lexicon_path = v;
            }),
            "Synonym lexicon (word<TAB>synonyms<TAB>contextual)");
    };
    auto add_backend = [&](CLI::App* sub) {
        auto& s = staging[sub->get_name()];
        opt(sub, "--backend", s.backend,
            std::function<void(RunConfig&, const std::string&)>(
                [](RunConfig& c, const std::string& v) { c.backend = v; }),
            "toy | uniform | remote");
        opt(sub, "--endpoint", s.endpoint,
            std::function<void(RunConfig&, const std::string&)>(
                [](RunConfig& c, const std::string& v) { c.endpoint = v; }),
            "Remote backend URL");
        opt(sub, "--timeout-ms", s.timeout,
            std::function<void(RunConfig&, const std::uint64_t&)>(
                [](RunConfig& c, const std::uint64_t& v) { c.timeout_ms = v; }),
            "Remote request timeout");
        opt(sub, "--max-in-flight", s.in_flight,
            std::function<void(RunConfig&, const std::size_t&)>(
                [](RunConfig& c, const std::size_t& v) { c.max_in_flight = v; }),
            "Concurrent remote requests");
        opt(sub, "--workers", s.workers,
            std::function<void(RunConfig&, const std::size_t&)>(
                [](RunConfig& c, const std::size_t& v) { c.workers = v; }),
            "Scoring threads");
        opt(sub, "--max-new-tokens", s.max_new,
            std::function<void(RunConfig&, const std::size_t&)>(
                [](RunConfig& c, const std::size_t& v) { c.max_new_tokens = v; }),
            "Greedy generation budget");
    };
    auto add_selection = [&](CLI::App* sub) {
        auto& s = staging[sub->get_name()];
        opt(sub, "--metric", s.metric,
            std::function<void(RunConfig&, const std::string&)>(
                [](RunConfig& c, const std::string& v) { c.metric = parse_metric(v); }),
            "Ranking metric: ifd | aifd | aioec");
        opt(sub, "--proportion", s.proportion,
            std::function<void(RunConfig&, const double&)>(
                [](RunConfig& c, const double& v) { c.proportion = v; }),
            "Fraction of valid samples to keep, in (0, 1]");
        opt(sub, "--reference", s.reference,
            std::function<void(RunConfig&, const std::string&)>(
                [](RunConfig& c, const std::string& v) { c.reference = v; }),
            "Reference corpus used to calibrate responses");
        opt(sub, "--reference-format", s.reference_format,
            std::function<void(RunConfig&, const std::string&)>(
                [](RunConfig& c, const std::string& v) { c.reference_format = v; }),
            "Reference format: alpaca_json | jsonl");
    };

    bool ascending = false;
    std::string output, emit, variants_path, scores_path, output_dir, output_format = "jsonl",
                                                                   host = "127.0.0.1";
    int port = 8080;

    auto* attack = app.add_subcommand("attack", "Generate the six adversarial variants per sample");
    add_input(attack);
    add_attack(attack);
    attack->add_option("--output", output, "Variants JSONL");
    attack->add_option("--emit", emit, "'-' streams JSONL to standard output");

    auto* score = app.add_subcommand("score", "Compute IFD / AIFD / AIOEC per sample");
    add_input(score);
    add_attack(score);
    add_backend(score);
    score->add_option("--variants", variants_path, "Variants JSONL from `attack`");
    score->add_option("--output", output, "Scores JSONL");
    score->add_option("--emit", emit, "'-' streams JSONL to standard output");
    opt(score, "--metrics", staging["score"].metrics,
        std::function<void(RunConfig&, const std::string&)>(
            [](RunConfig& c, const std::string& v) { c.metrics = v; }),
        "Comma-separated subset of ifd,aifd,aioec");

    auto* select = app.add_subcommand("select", "Rank scored samples and write the diamond subset");
    select->add_option("--scores", scores_path, "Scores JSONL")->required();
    opt(select, "--corpus", staging["select"].input,
        std::function<void(RunConfig&, const std::string&)>(
            [](RunConfig& c, const std::string& v) { c.input = v; }),
        "Online corpus the scores refer to");
    opt(select, "--format", staging["select"].format,
        std::function<void(RunConfig&, const std::string&)>(
            [](RunConfig& c, const std::string& v) { c.input_format = v; }),
        "Corpus format");
    add_selection(select);
    auto* select_asc = select->add_flag("--ascending", ascending, "Rank lowest scores first");
    select->add_option("--output-dir", output_dir, "Output directory");

    auto* pipeline = app.add_subcommand("pipeline", "Run generate, attack, score, select, calibrate");
    add_input(pipeline);
    add_attack(pipeline);
    add_backend(pipeline);
    add_selection(pipeline);
    auto* pipeline_asc = pipeline->add_flag("--ascending", ascending, "Rank lowest scores first");
    pipeline->add_option("--output-dir", output_dir, "Output directory");

    auto* bootstrap = app.add_subcommand("bootstrap", "k-means bootstrap sample of a corpus");
    add_input(bootstrap);
    add_backend(bootstrap);
    opt(bootstrap, "--k", staging["bootstrap"].k,
        std::function<void(RunConfig&, const int&)>([](RunConfig& c, const int& v) { c.k_clusters = v; }),
        "Number of clusters");
    opt(bootstrap, "--per-cluster", staging["bootstrap"].per_cluster,
        std::function<void(RunConfig&, const std::size_t&)>(
            [](RunConfig& c, const std::size_t& v) { c.per_cluster = v; }),
        "Samples drawn per cluster");
    bootstrap->add_option("--output", output, "Output corpus");
    bootstrap->add_option("--output-format", output_format, "jsonl | alpaca_json");

    auto* serve = app.add_subcommand("serve", "Serve a local backend over the HTTP wire protocol");
    add_backend(serve);
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "diamond: " << e.what() << '\n';
        return 2;
    }

    Context ctx{out, err, {}, force};
    try {
        if (!config_path.empty())
            ctx.config = RunConfig::load(config_path);
        if (seed_opt->count() > 0)
            ctx.config.seed = seed;
        for (auto& apply : overrides)
            apply(ctx.config);
        if (select_asc->count() > 0 || pipeline_asc->count() > 0)
            ctx.config.ascending = ascending;

        if (attack->parsed())
            return cmd_attack(ctx, output, emit);
        if (score->parsed())
            return cmd_score(ctx, variants_path, output, emit);
        if (select->parsed())
            return cmd_select(ctx, scores_path, output_dir);
        if (pipeline->parsed()) {
            fs::path dir = output_dir;
            if (dir.empty() && !ctx.config.output_dir.empty())
                dir = ctx.config.resolve(ctx.config.output_dir);
            return cmd_pipeline(ctx, dir);
        }
        if (bootstrap->parsed())
            return cmd_bootstrap(ctx, output, output_format);
        if (serve->parsed())
            return cmd_serve(ctx, host, port);
    } catch (const UsageError& e) {
        err << "diamond: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "diamond: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace diamond
