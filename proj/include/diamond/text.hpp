#ifndef DIAMOND_TEXT_HPP
#define DIAMOND_TEXT_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace diamond::text {

/// Decodes UTF-8 into scalar values. Invalid sequences decode to U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

bool is_ascii_alpha(char32_t c);
bool is_ascii_alnum(char32_t c);
bool is_space(char32_t c);

std::string trim(std::string_view s);
std::string rtrim(std::string_view s);
std::string ascii_lower(std::string_view s);

/// A prompt split into alternating whitespace and word runs. Concatenating
/// every piece reproduces the input exactly.
struct Segment {
    std::u32string text;
    bool is_word = false;
};

std::vector<Segment> split_words(std::u32string_view s);
std::u32string join(const std::vector<Segment>& segments);
std::size_t word_count(std::string_view s);

/// Word with leading and trailing non-alphanumeric characters peeled off.
struct WordParts {
    std::u32string lead;
    std::u32string core;
    std::u32string tail;
};

WordParts split_word(std::u32string_view word);

std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

// 64-bit mixing used for seed derivation and the toy embedding tables.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t& state);

} // namespace diamond::text

#endif // DIAMOND_TEXT_HPP
