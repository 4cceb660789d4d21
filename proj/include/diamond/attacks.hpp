#ifndef DIAMOND_ATTACKS_HPP
#define DIAMOND_ATTACKS_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "diamond/corpus.hpp"

namespace diamond {

/// The six perturbation families: two character-level, two word-level and
/// two sentence-level. Enum order is the canonical variant order.
enum class AttackKind : std::uint8_t {
    textbugger_style,
    deepwordbug_style,
    textfooler_style,
    bertattack_style,
    checklist_style,
    stresstest_style,
};

inline constexpr std::size_t kAttackCount = 6;

inline constexpr std::array<AttackKind, kAttackCount> kAttackKinds = {
    AttackKind::textbugger_style, AttackKind::deepwordbug_style,
    AttackKind::textfooler_style, AttackKind::bertattack_style,
    AttackKind::checklist_style,  AttackKind::stresstest_style,
};

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

struct AttackConfig {
    std::size_t max_perturbed_words = 1;
    std::size_t checklist_suffix_length = 10;
    std::size_t checklist_pool_size = 50;
    std::string stresstest_suffix = " and false is not true";
    std::optional<std::filesystem::path> synonym_lexicon_path;

    void validate() const;
};

/// Result of one attack. A degenerate outcome carries the unchanged prompt.
struct AttackOutcome {
    std::string text;
    bool degenerate = false;
};

struct AdversarialVariant {
    AttackKind kind{};
    std::string prompt;
    bool degenerate = false;

    bool operator==(const AdversarialVariant&) const = default;
};

struct AdversarialVariantSet {
    std::string sample_id;
    std::array<AdversarialVariant, kAttackCount> variants;
    std::uint64_t seed = 0;

    bool operator==(const AdversarialVariantSet&) const = default;
};

/// Synonym table for the word-level attacks. Text format, one entry per line:
///   word<TAB>synonym1,synonym2<TAB>contextual1,contextual2
/// Blank lines and lines starting with '#' are ignored. Keys are matched
/// case-insensitively; every alternative must be a single word.
class Lexicon {
  public:
    enum class Tier { synonym, contextual };

    static Lexicon parse(std::string_view content);
    static Lexicon load(const std::filesystem::path& path);
    /// The table bundled with the library (data/lexicon.tsv).
    static const Lexicon& builtin();

    /// Alternatives for a lowercase word, or nullptr when absent or empty.
    const std::vector<std::string>* lookup(std::string_view word, Tier tier) const;
    bool contains_pair(std::string_view from, std::string_view to, Tier tier) const;
    std::size_t size() const noexcept { return entries_.size(); }

  private:
    struct Entry {
        std::vector<std::string> synonyms;
        std::vector<std::string> contextual;
    };
    std::unordered_map<std::string, Entry> entries_;
};

/// Latin letters with a visually identical Cyrillic or Greek counterpart.
const std::map<char32_t, char32_t>& homoglyph_table();

/// QWERTY neighbours of a lowercase ASCII letter.
std::u32string_view keyboard_neighbours(char32_t lower);

/// Words considered function words by the word-level attacks.
bool is_stopword(std::string_view lower_word);

/// `count` distinct alphanumeric strings of `length` characters, drawn from a
/// generator seeded by the run seed only.
std::vector<std::string> make_checklist_pool(std::uint64_t run_seed, std::size_t count,
                                             std::size_t length);

/// hash64(seed, sample_id, attack_index): the sub-seed of one attack on one sample.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view sample_id,
                          std::size_t attack_index);

AttackOutcome char_attack_textbugger(std::string_view prompt, std::uint64_t seed,
                                     const AttackConfig& config);
AttackOutcome char_attack_deepwordbug(std::string_view prompt, std::uint64_t seed,
                                      const AttackConfig& config);
AttackOutcome word_attack_textfooler(std::string_view prompt, std::uint64_t seed,
                                     const AttackConfig& config, const Lexicon& lexicon);
AttackOutcome word_attack_bertattack(std::string_view prompt, std::uint64_t seed,
                                     const AttackConfig& config, const Lexicon& lexicon);
AttackOutcome sentence_attack_checklist(std::string_view prompt, std::uint64_t seed,
                                        const std::vector<std::string>& pool);
AttackOutcome sentence_attack_stresstest(std::string_view prompt, const AttackConfig& config);

/// Inserts `addition` before the trailing run of terminal punctuation
/// (".", "!", "?"), or at the end when there is none. Trailing whitespace
/// is dropped first.
std::string insert_before_terminal(std::string_view prompt, std::string_view addition);

/// `prompt` without trailing whitespace and terminal punctuation.
std::string strip_terminal(std::string_view prompt);

/// Everything needed to attack a corpus under one run seed: the config, the
/// resolved lexicon and the run-wide CheckList pool. Immutable once built.
class AttackSuite {
  public:
    AttackSuite(AttackConfig config, std::uint64_t run_seed);

    const AttackConfig& config() const noexcept { return config_; }
    std::uint64_t run_seed() const noexcept { return run_seed_; }
    const Lexicon& lexicon() const noexcept { return *lexicon_; }
    const std::vector<std::string>& checklist_pool() const noexcept { return pool_; }

    AttackOutcome apply(AttackKind kind, std::string_view prompt, std::uint64_t seed) const;
    AdversarialVariantSet generate(const InstructionSample& sample) const;

  private:
    AttackConfig config_;
    std::uint64_t run_seed_;
    std::shared_ptr<const Lexicon> lexicon_;
    std::vector<std::string> pool_;
};

AdversarialVariantSet generate_adversarial_set(const InstructionSample& sample,
                                               std::uint64_t seed, const AttackConfig& config);

std::vector<AdversarialVariantSet> generate_adversarial_sets(const Corpus& corpus,
                                                             const AttackSuite& suite);

// JSONL, one line per variant:
// {sample_id, attack_kind, attacked_prompt, degenerate, seed}
std::string serialize_variants(const std::vector<AdversarialVariantSet>& sets);
std::vector<AdversarialVariantSet> parse_variants(std::string_view content);

} // namespace diamond

#endif // DIAMOND_ATTACKS_HPP
