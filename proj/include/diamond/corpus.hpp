#ifndef DIAMOND_CORPUS_HPP
#define DIAMOND_CORPUS_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace diamond {

/// One instruction-tuning record. `prompt` is the attackable instruction;
/// `input` is carried along verbatim and never perturbed.
struct InstructionSample {
    std::string id;
    std::string prompt;
    std::string input;
    std::string response;

    bool operator==(const InstructionSample&) const = default;
};

struct Corpus {
    std::vector<InstructionSample> samples;
    std::string source_path;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
};

/// `alpaca_json`: one JSON array of {instruction, input, output} objects.
/// `jsonl`: one {id, prompt, input, response} object per line.
enum class CorpusFormat { alpaca_json, jsonl };

CorpusFormat parse_corpus_format(std::string_view name);
std::string_view to_string(CorpusFormat format);

/// Id given to records that carry none.
std::string positional_id(std::size_t index);

Corpus parse_corpus(std::string_view content, CorpusFormat format, std::string source_path = {});
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

std::string serialize_corpus(const Corpus& corpus, CorpusFormat format);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);

/// The instruction Q: prompt, then `separator` and the input when there is one.
std::string instruction_text(std::string_view prompt, std::string_view input,
                             std::string_view separator = "\n");

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

} // namespace diamond

#endif // DIAMOND_CORPUS_HPP
