#include "diamond/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "diamond/embedded_data.hpp"
#include "diamond/error.hpp"
#include "diamond/text.hpp"

namespace diamond {

namespace {

using text::Segment;

constexpr std::array<std::string_view, kAttackCount> kAttackNames = {
    "textbugger_style", "deepwordbug_style", "textfooler_style",
    "bertattack_style", "checklist_style",   "stresstest_style",
};

// Unbiased enough for our n (< 2^32) and, unlike std::uniform_int_distribution,
// identical on every standard library.
std::size_t pick(std::mt19937_64& rng, std::size_t n)
{
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

std::vector<std::size_t> choose_distinct(std::mt19937_64& rng, std::vector<std::size_t> pool,
                                         std::size_t count)
{
    count = std::min(count, pool.size());
    for (std::size_t i = 0; i < count; ++i)
        std::swap(pool[i], pool[i + pick(rng, pool.size() - i)]);
    pool.resize(count);
    return pool;
}

bool is_upper(char32_t c) { return c >= U'A' && c <= U'Z'; }
char32_t to_lower(char32_t c) { return is_upper(c) ? c - U'A' + U'a' : c; }
char32_t to_upper(char32_t c) { return (c >= U'a' && c <= U'z') ? c - U'a' + U'A' : c; }

bool char_attack_eligible(const std::u32string& core)
{
    return core.size() >= 3 && std::all_of(core.begin(), core.end(), text::is_ascii_alpha);
}

std::u32string rejoin(const text::WordParts& parts)
{
    return parts.lead + parts.core + parts.tail;
}

AttackOutcome finish(std::string_view prompt, const std::vector<Segment>& segments)
{
    std::string out = text::encode_utf8(text::join(segments));
    const bool same = out == prompt;
    return {std::move(out), same};
}

// One TextBugger-style edit: delete an interior character, swap two adjacent
// interior characters, repeat a character, or substitute a keyboard neighbour.
std::u32string bug_word(std::u32string word, std::mt19937_64& rng)
{
    const std::size_t first_op = pick(rng, 4);
    for (std::size_t attempt = 0; attempt < 4; ++attempt) {
        switch ((first_op + attempt) % 4) {
        case 0: {
            const std::size_t pos = 1 + pick(rng, word.size() - 2);
            word.erase(pos, 1);
            return word;
        }
        case 1: {
            std::vector<std::size_t> spots;
            for (std::size_t i = 1; i + 2 < word.size(); ++i)
                if (word[i] != word[i + 1])
                    spots.push_back(i);
            if (spots.empty())
                break;
            const std::size_t i = spots[pick(rng, spots.size())];
            std::swap(word[i], word[i + 1]);
            return word;
        }
        case 2: {
            const std::size_t pos = pick(rng, word.size());
            word.insert(word.begin() + static_cast<std::ptrdiff_t>(pos), word[pos]);
            return word;
        }
        case 3: {
            const std::size_t pos = pick(rng, word.size());
            const auto neighbours = keyboard_neighbours(to_lower(word[pos]));
            if (neighbours.empty())
                break;
            char32_t c = neighbours[pick(rng, neighbours.size())];
            word[pos] = is_upper(word[pos]) ? to_upper(c) : c;
            return word;
        }
        }
    }
    return word;
}

std::vector<std::size_t> homoglyph_positions(const std::u32string& word)
{
    std::vector<std::size_t> out;
    const auto& table = homoglyph_table();
    for (std::size_t i = 0; i < word.size(); ++i)
        if (table.count(word[i]))
            out.push_back(i);
    return out;
}

AttackOutcome word_attack(std::string_view prompt, std::uint64_t seed,
                          const AttackConfig& config, const Lexicon& lexicon,
                          Lexicon::Tier tier)
{
    auto segments = text::split_words(text::decode_utf8(prompt));

    struct Candidate {
        std::vector<std::string> alternatives;
    };
    std::vector<std::size_t> positions;
    std::unordered_map<std::size_t, Candidate> candidates;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (!segments[i].is_word)
            continue;
        const auto core = text::encode_utf8(text::split_word(segments[i].text).core);
        const auto lower = text::ascii_lower(core);
        if (lower.empty() || is_stopword(lower))
            continue;
        const auto* alts = lexicon.lookup(lower, tier);
        if (alts == nullptr)
            continue;
        Candidate c;
        for (const auto& a : *alts)
            if (text::ascii_lower(a) != lower)
                c.alternatives.push_back(a);
        if (c.alternatives.empty())
            continue;
        positions.push_back(i);
        candidates.emplace(i, std::move(c));
    }
    if (positions.empty())
        return {std::string(prompt), true};

    std::mt19937_64 rng(seed);
    for (std::size_t idx : choose_distinct(rng, positions, config.max_perturbed_words)) {
        auto parts = text::split_word(segments[idx].text);
        const auto& alts = candidates.at(idx).alternatives;
        auto replacement = text::decode_utf8(alts[pick(rng, alts.size())]);
        if (!parts.core.empty() && is_upper(parts.core.front()) && !replacement.empty())
            replacement.front() = to_upper(replacement.front());
        parts.core = std::move(replacement);
        segments[idx].text = rejoin(parts);
    }
    return finish(prompt, segments);
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

} // namespace

std::string_view to_string(AttackKind kind)
{
    return kAttackNames.at(static_cast<std::size_t>(kind));
}

AttackKind parse_attack_kind(std::string_view name)
{
    for (std::size_t i = 0; i < kAttackNames.size(); ++i)
        if (kAttackNames[i] == name)
            return kAttackKinds[i];
    throw ParseError("unknown attack kind '" + std::string(name) + "'");
}

void AttackConfig::validate() const
{
    if (max_perturbed_words == 0)
        throw ValidationError("max_perturbed_words must be positive");
    if (checklist_suffix_length == 0)
        throw ValidationError("checklist_suffix_length must be positive");
    if (checklist_pool_size == 0)
        throw ValidationError("checklist_pool_size must be positive");
    // 62^length distinct strings must exist.
    if (checklist_suffix_length < 8 &&
        static_cast<double>(checklist_pool_size) >
            std::pow(62.0, static_cast<double>(checklist_suffix_length)))
        throw ValidationError("checklist_pool_size exceeds the number of distinct suffixes");
}

// ---------------------------------------------------------------------------
// Lexicon

Lexicon Lexicon::parse(std::string_view content)
{
    Lexicon lex;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    auto split = [](std::string_view s, char sep) {
        std::vector<std::string> out;
        std::size_t b = 0;
        while (b <= s.size()) {
            std::size_t e = s.find(sep, b);
            if (e == std::string_view::npos)
                e = s.size();
            out.emplace_back(s.substr(b, e - b));
            b = e + 1;
        }
        return out;
    };
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string_view::npos)
            end = content.size();
        std::string line(content.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (text::trim(line).empty() || line.front() == '#')
            continue;

        const auto fields = split(line, '\t');
        const auto key = text::ascii_lower(text::trim(fields[0]));
        if (key.empty() || fields.size() > 3)
            throw ParseError("lexicon line " + std::to_string(line_no) + ": malformed entry",
                             static_cast<long>(line_no));
        auto parse_tier = [&](std::size_t field) {
            std::vector<std::string> alts;
            if (field >= fields.size())
                return alts;
            for (auto& a : split(fields[field], ',')) {
                auto t = text::trim(a);
                if (t.empty())
                    continue;
                if (text::word_count(t) != 1)
                    throw ParseError("lexicon line " + std::to_string(line_no) +
                                         ": alternative '" + t + "' is not a single word",
                                     static_cast<long>(line_no));
                alts.push_back(std::move(t));
            }
            return alts;
        };
        Entry entry{parse_tier(1), parse_tier(2)};
        if (!lex.entries_.emplace(key, std::move(entry)).second)
            throw ParseError("lexicon line " + std::to_string(line_no) + ": duplicate word '" +
                                 key + "'",
                             static_cast<long>(line_no));
    }
    return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path)
{
    return parse(read_file(path));
}

const Lexicon& Lexicon::builtin()
{
    static const Lexicon lex = parse(embedded::lexicon_tsv());
    return lex;
}

const std::vector<std::string>* Lexicon::lookup(std::string_view word, Tier tier) const
{
    auto it = entries_.find(std::string(word));
    if (it == entries_.end())
        return nullptr;
    const auto& list = tier == Tier::synonym ? it->second.synonyms : it->second.contextual;
    return list.empty() ? nullptr : &list;
}

bool Lexicon::contains_pair(std::string_view from, std::string_view to, Tier tier) const
{
    const auto* alts = lookup(text::ascii_lower(from), tier);
    if (alts == nullptr)
        return false;
    const auto target = text::ascii_lower(to);
    return std::any_of(alts->begin(), alts->end(),
                       [&](const std::string& a) { return text::ascii_lower(a) == target; });
}

// ---------------------------------------------------------------------------
// Tables

const std::map<char32_t, char32_t>& homoglyph_table()
{
    static const std::map<char32_t, char32_t> table = {
        {U'a', U'а'}, {U'c', U'с'}, {U'e', U'е'}, {U'i', U'і'},
        {U'j', U'ј'}, {U'o', U'о'}, {U'p', U'р'}, {U's', U'ѕ'},
        {U'x', U'х'}, {U'y', U'у'}, {U'h', U'һ'}, {U'v', U'ν'},
        {U'A', U'А'}, {U'B', U'В'}, {U'C', U'С'}, {U'E', U'Е'},
        {U'H', U'Н'}, {U'I', U'І'}, {U'K', U'К'}, {U'M', U'М'},
        {U'O', U'О'}, {U'P', U'Р'}, {U'S', U'Ѕ'}, {U'T', U'Т'},
        {U'X', U'Х'}, {U'Y', U'У'},
    };
    return table;
}

std::u32string_view keyboard_neighbours(char32_t lower)
{
    static const std::array<std::u32string_view, 26> rows = {
        U"qwsz",  U"vghn",  U"xdfv",   U"serfcx", U"wsdr",  U"drtgvc", U"ftyhbv",
        U"gyujnb", U"ujko", U"huikmn", U"jiolm",  U"kop",   U"njk",    U"bhjm",
        U"iklp",  U"ol",    U"wa",     U"edft",   U"awedxz", U"rfgy",  U"yhji",
        U"cfgb",  U"qase",  U"zsdc",   U"tghu",   U"asx",
    };
    if (lower < U'a' || lower > U'z')
        return {};
    return rows[lower - U'a'];
}

bool is_stopword(std::string_view lower_word)
{
    static const std::unordered_set<std::string_view> words = {
        "a",     "an",    "the",   "and",   "or",    "but",   "if",    "of",    "to",
        "in",    "on",    "at",    "by",    "for",   "with",  "from",  "as",    "is",
        "are",   "was",   "were",  "be",    "been",  "it",    "its",   "this",  "that",
        "these", "those", "i",     "you",   "he",    "she",   "we",    "they",  "me",
        "my",    "your",  "our",   "their", "his",   "her",   "them",  "us",    "do",
        "does",  "did",   "not",   "no",    "so",    "than",  "then",  "there", "what",
        "which", "who",   "how",   "when",  "where", "why",   "can",   "will",  "would",
        "should", "could", "about", "into", "up",    "out",   "some",  "any",   "all",
    };
    return words.count(lower_word) > 0;
}

std::vector<std::string> make_checklist_pool(std::uint64_t run_seed, std::size_t count,
                                             std::size_t length)
{
    static constexpr std::string_view alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    std::mt19937_64 rng(derive_seed(run_seed, "#checklist-pool", kAttackCount));
    std::vector<std::string> pool;
    std::set<std::string> seen;
    while (pool.size() < count) {
        std::string s(length, ' ');
        for (char& c : s)
            c = alphabet[pick(rng, alphabet.size())];
        if (seen.insert(s).second)
            pool.push_back(std::move(s));
    }
    return pool;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view sample_id,
                          std::size_t attack_index)
{
    auto le_bytes = [](std::uint64_t v) {
        std::string b(8, '\0');
        for (int i = 0; i < 8; ++i)
            b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        return b;
    };
    std::uint64_t h = text::fnv1a64(le_bytes(seed));
    h = text::fnv1a64(sample_id, h);
    h = text::fnv1a64(std::string_view("\xff", 1), h);
    h = text::fnv1a64(le_bytes(attack_index), h);
    return text::splitmix64(h);
}

// ---------------------------------------------------------------------------
// Attacks

AttackOutcome char_attack_textbugger(std::string_view prompt, std::uint64_t seed,
                                     const AttackConfig& config)
{
    auto segments = text::split_words(text::decode_utf8(prompt));
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < segments.size(); ++i)
        if (segments[i].is_word && char_attack_eligible(text::split_word(segments[i].text).core))
            eligible.push_back(i);
    if (eligible.empty())
        return {std::string(prompt), true};

    std::mt19937_64 rng(seed);
    for (std::size_t idx : choose_distinct(rng, eligible, config.max_perturbed_words)) {
        auto parts = text::split_word(segments[idx].text);
        parts.core = bug_word(std::move(parts.core), rng);
        segments[idx].text = rejoin(parts);
    }
    return finish(prompt, segments);
}

AttackOutcome char_attack_deepwordbug(std::string_view prompt, std::uint64_t seed,
                                      const AttackConfig& config)
{
    auto segments = text::split_words(text::decode_utf8(prompt));
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (!segments[i].is_word)
            continue;
        const auto core = text::split_word(segments[i].text).core;
        if (char_attack_eligible(core) && (is_upper(core.front()) || !homoglyph_positions(core).empty()))
            eligible.push_back(i);
    }
    if (eligible.empty())
        return {std::string(prompt), true};

    std::mt19937_64 rng(seed);
    for (std::size_t idx : choose_distinct(rng, eligible, config.max_perturbed_words + 2)) {
        auto parts = text::split_word(segments[idx].text);
        auto& core = parts.core;
        const auto glyphs = homoglyph_positions(core);
        const bool can_flip = is_upper(core.front());
        const bool flip = can_flip && (glyphs.empty() || pick(rng, 2) == 0);
        if (flip) {
            core.front() = to_lower(core.front());
        } else {
            const std::size_t pos = glyphs[pick(rng, glyphs.size())];
            core[pos] = homoglyph_table().at(core[pos]);
        }
        segments[idx].text = rejoin(parts);
    }
    return finish(prompt, segments);
}

AttackOutcome word_attack_textfooler(std::string_view prompt, std::uint64_t seed,
                                     const AttackConfig& config, const Lexicon& lexicon)
{
    return word_attack(prompt, seed, config, lexicon, Lexicon::Tier::synonym);
}

AttackOutcome word_attack_bertattack(std::string_view prompt, std::uint64_t seed,
                                     const AttackConfig& config, const Lexicon& lexicon)
{
    return word_attack(prompt, seed, config, lexicon, Lexicon::Tier::contextual);
}

std::string strip_terminal(std::string_view prompt)
{
    std::string s = text::rtrim(prompt);
    std::size_t e = s.size();
    while (e > 0 && is_terminal(s[e - 1]))
        --e;
    s.resize(e);
    return s;
}

std::string insert_before_terminal(std::string_view prompt, std::string_view addition)
{
    const std::string trimmed = text::rtrim(prompt);
    const std::string stem = strip_terminal(trimmed);
    return stem + std::string(addition) + trimmed.substr(stem.size());
}

AttackOutcome sentence_attack_checklist(std::string_view prompt, std::uint64_t seed,
                                        const std::vector<std::string>& pool)
{
    if (pool.empty())
        throw ValidationError("empty CheckList pool");
    std::mt19937_64 rng(seed);
    const auto& suffix = pool[pick(rng, pool.size())];
    return {insert_before_terminal(prompt, " " + suffix), false};
}

AttackOutcome sentence_attack_stresstest(std::string_view prompt, const AttackConfig& config)
{
    std::string out = insert_before_terminal(prompt, config.stresstest_suffix);
    const bool same = out == prompt;
    return {std::move(out), same};
}

// ---------------------------------------------------------------------------
// Suite

AttackSuite::AttackSuite(AttackConfig config, std::uint64_t run_seed)
    : config_(std::move(config)), run_seed_(run_seed)
{
    config_.validate();
    if (config_.synonym_lexicon_path)
        lexicon_ = std::make_shared<const Lexicon>(Lexicon::load(*config_.synonym_lexicon_path));
    else
        lexicon_ = std::shared_ptr<const Lexicon>(&Lexicon::builtin(), [](const Lexicon*) {});
    pool_ = make_checklist_pool(run_seed_, config_.checklist_pool_size,
                                config_.checklist_suffix_length);
}

AttackOutcome AttackSuite::apply(AttackKind kind, std::string_view prompt,
                                 std::uint64_t seed) const
{
    switch (kind) {
    case AttackKind::textbugger_style:
        return char_attack_textbugger(prompt, seed, config_);
    case AttackKind::deepwordbug_style:
        return char_attack_deepwordbug(prompt, seed, config_);
    case AttackKind::textfooler_style:
        return word_attack_textfooler(prompt, seed, config_, *lexicon_);
    case AttackKind::bertattack_style:
        return word_attack_bertattack(prompt, seed, config_, *lexicon_);
    case AttackKind::checklist_style:
        return sentence_attack_checklist(prompt, seed, pool_);
    case AttackKind::stresstest_style:
        return sentence_attack_stresstest(prompt, config_);
    }
    throw ValidationError("unknown attack kind");
}

AdversarialVariantSet AttackSuite::generate(const InstructionSample& sample) const
{
    if (text::trim(sample.prompt).empty())
        throw ValidationError("sample " + sample.id + ": empty prompt");
    AdversarialVariantSet set;
    set.sample_id = sample.id;
    set.seed = run_seed_;
    for (std::size_t i = 0; i < kAttackCount; ++i) {
        auto outcome = apply(kAttackKinds[i], sample.prompt, derive_seed(run_seed_, sample.id, i));
        set.variants[i] = {kAttackKinds[i], std::move(outcome.text), outcome.degenerate};
    }
    return set;
}

AdversarialVariantSet generate_adversarial_set(const InstructionSample& sample,
                                               std::uint64_t seed, const AttackConfig& config)
{
    return AttackSuite(config, seed).generate(sample);
}

std::vector<AdversarialVariantSet> generate_adversarial_sets(const Corpus& corpus,
                                                             const AttackSuite& suite)
{
    std::vector<AdversarialVariantSet> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus.samples)
        out.push_back(suite.generate(s));
    return out;
}

std::string serialize_variants(const std::vector<AdversarialVariantSet>& sets)
{
    std::string out;
    for (const auto& set : sets) {
        for (const auto& v : set.variants) {
            nlohmann::ordered_json obj;
            obj["sample_id"] = set.sample_id;
            obj["attack_kind"] = std::string(to_string(v.kind));
            obj["attacked_prompt"] = v.prompt;
            obj["degenerate"] = v.degenerate;
            obj["seed"] = set.seed;
            out += obj.dump();
            out += '\n';
        }
    }
    return out;
}

std::vector<AdversarialVariantSet> parse_variants(std::string_view content)
{
    std::vector<AdversarialVariantSet> sets;
    std::size_t pos = 0;
    long record = 0;
    std::size_t filled = kAttackCount;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string_view::npos)
            end = content.size();
        const auto line = content.substr(pos, end - pos);
        pos = end + 1;
        if (text::trim(line).empty())
            continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
            const auto id = obj.at("sample_id").get<std::string>();
            const auto kind = parse_attack_kind(obj.at("attack_kind").get<std::string>());
            if (filled == kAttackCount) {
                sets.emplace_back();
                sets.back().sample_id = id;
                sets.back().seed = obj.value("seed", std::uint64_t{0});
                filled = 0;
            }
            auto& set = sets.back();
            if (set.sample_id != id || kind != kAttackKinds[filled])
                throw ParseError("variant record " + std::to_string(record) +
                                     ": expected " + std::string(to_string(kAttackKinds[filled])) +
                                     " for sample " + set.sample_id,
                                 record);
            set.variants[filled] = {kind, obj.at("attacked_prompt").get<std::string>(),
                                    obj.at("degenerate").get<bool>()};
            ++filled;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("variant record " + std::to_string(record) + ": " + e.what(), record);
        }
        ++record;
    }
    if (filled != kAttackCount)
        throw ParseError("variant file ends with an incomplete set", record);
    return sets;
}

} // namespace diamond
