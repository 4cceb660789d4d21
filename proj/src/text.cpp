#include "diamond/text.hpp"

#include <algorithm>
#include <numeric>

namespace diamond::text {

std::u32string decode_utf8(std::string_view s)
{
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        int len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        if (i + len > s.size()) {
            out.push_back(0xFFFD);
            break;
        }
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::string encode_utf8(std::u32string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

bool is_ascii_alpha(char32_t c)
{
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
}

bool is_ascii_alnum(char32_t c)
{
    return is_ascii_alpha(c) || (c >= U'0' && c <= U'9');
}

bool is_space(char32_t c)
{
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' ||
           c == U'\v';
}

namespace {
bool is_space_byte(char c) { return is_space(static_cast<unsigned char>(c)); }
} // namespace

std::string trim(std::string_view s)
{
    auto b = std::find_if_not(s.begin(), s.end(), is_space_byte);
    auto e = std::find_if_not(s.rbegin(), s.rend(), is_space_byte).base();
    return b < e ? std::string(b, e) : std::string();
}

std::string rtrim(std::string_view s)
{
    auto e = std::find_if_not(s.rbegin(), s.rend(), is_space_byte).base();
    return std::string(s.begin(), e);
}

std::string ascii_lower(std::string_view s)
{
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z')
            c = static_cast<char>(c - 'A' + 'a');
    return out;
}

std::vector<Segment> split_words(std::u32string_view s)
{
    std::vector<Segment> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const bool word = !is_space(s[i]);
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j]) == word)
            ++j;
        out.push_back({std::u32string(s.substr(i, j - i)), word});
        i = j;
    }
    return out;
}

std::u32string join(const std::vector<Segment>& segments)
{
    std::u32string out;
    for (const auto& seg : segments)
        out += seg.text;
    return out;
}

std::size_t word_count(std::string_view s)
{
    const auto segs = split_words(decode_utf8(s));
    return static_cast<std::size_t>(
        std::count_if(segs.begin(), segs.end(), [](const Segment& g) { return g.is_word; }));
}

WordParts split_word(std::u32string_view word)
{
    // Non-ASCII characters count as word material so homoglyphs stay in the core.
    auto is_core = [](char32_t c) { return is_ascii_alnum(c) || c >= 0x80; };
    std::size_t b = 0;
    while (b < word.size() && !is_core(word[b]))
        ++b;
    std::size_t e = word.size();
    while (e > b && !is_core(word[e - 1]))
        --e;
    return {std::u32string(word.substr(0, b)), std::u32string(word.substr(b, e - b)),
            std::u32string(word.substr(e))};
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b)
{
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace diamond::text
