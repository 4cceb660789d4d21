#include "diamond/corpus.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "diamond/error.hpp"
#include "diamond/text.hpp"

namespace diamond {

using ordered_json = nlohmann::ordered_json;

CorpusFormat parse_corpus_format(std::string_view name)
{
    if (name == "alpaca_json" || name == "alpaca")
        return CorpusFormat::alpaca_json;
    if (name == "jsonl")
        return CorpusFormat::jsonl;
    throw ValidationError("unknown corpus format '" + std::string(name) + "'");
}

std::string_view to_string(CorpusFormat format)
{
    return format == CorpusFormat::alpaca_json ? "alpaca_json" : "jsonl";
}

std::string positional_id(std::size_t index)
{
    std::string digits = std::to_string(index);
    if (digits.size() < 6)
        digits.insert(0, 6 - digits.size(), '0');
    return digits;
}

namespace {

std::string string_field(const nlohmann::json& obj, const char* key, bool required, long record)
{
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required)
            throw ParseError("record " + std::to_string(record) + ": missing \"" + key + "\"",
                             record);
        return {};
    }
    if (!it->is_string())
        throw ParseError("record " + std::to_string(record) + ": \"" + key +
                             "\" must be a string",
                         record);
    return it->get<std::string>();
}

InstructionSample sample_from_object(const nlohmann::json& obj, CorpusFormat format,
                                     std::size_t index)
{
    const long rec = static_cast<long>(index);
    if (!obj.is_object())
        throw ParseError("record " + std::to_string(rec) + ": expected a JSON object", rec);

    InstructionSample s;
    if (format == CorpusFormat::alpaca_json) {
        s.prompt = string_field(obj, "instruction", true, rec);
        s.input = string_field(obj, "input", false, rec);
        s.response = string_field(obj, "output", false, rec);
    } else {
        s.prompt = string_field(obj, "prompt", true, rec);
        s.input = string_field(obj, "input", false, rec);
        s.response = string_field(obj, "response", false, rec);
    }
    if (obj.contains("id") && !obj["id"].is_null()) {
        if (!obj["id"].is_string())
            throw ParseError("record " + std::to_string(rec) + ": \"id\" must be a string", rec);
        s.id = obj["id"].get<std::string>();
    } else {
        s.id = positional_id(index);
    }
    if (text::trim(s.prompt).empty())
        throw ParseError("record " + std::to_string(rec) + ": empty prompt", rec);
    return s;
}

} // namespace

Corpus parse_corpus(std::string_view content, CorpusFormat format, std::string source_path)
{
    Corpus corpus;
    corpus.source_path = std::move(source_path);

    if (format == CorpusFormat::alpaca_json) {
        if (text::trim(content).empty())
            return corpus;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(content);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what());
        }
        if (!doc.is_array())
            throw ParseError("alpaca corpus must be a JSON array");
        for (std::size_t i = 0; i < doc.size(); ++i)
            corpus.samples.push_back(sample_from_object(doc[i], format, i));
    } else {
        std::size_t line_no = 0;
        std::size_t index = 0;
        std::size_t pos = 0;
        while (pos < content.size()) {
            std::size_t end = content.find('\n', pos);
            if (end == std::string_view::npos)
                end = content.size();
            const std::string_view line = content.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;
            if (text::trim(line).empty())
                continue;
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError("line " + std::to_string(line_no) + " (record " +
                                     std::to_string(index) + "): " + e.what(),
                                 static_cast<long>(index));
            }
            corpus.samples.push_back(sample_from_object(obj, format, index));
            ++index;
        }
    }

    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        if (!seen.insert(corpus.samples[i].id).second)
            throw ParseError("record " + std::to_string(i) + ": duplicate id \"" +
                                 corpus.samples[i].id + "\"",
                             static_cast<long>(i));
    }
    return corpus;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw IoError("write failed for " + path.string());
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format)
{
    return parse_corpus(read_file(path), format, path.string());
}

std::string serialize_corpus(const Corpus& corpus, CorpusFormat format)
{
    if (format == CorpusFormat::alpaca_json) {
        auto arr = ordered_json::array();
        for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
            const auto& s = corpus.samples[i];
            ordered_json obj;
            obj["instruction"] = s.prompt;
            obj["input"] = s.input;
            obj["output"] = s.response;
            // Positional ids are implied by the array; anything else must be kept.
            if (s.id != positional_id(i))
                obj["id"] = s.id;
            arr.push_back(std::move(obj));
        }
        return arr.dump(2) + "\n";
    }
    std::string out;
    for (const auto& s : corpus.samples) {
        ordered_json obj;
        obj["id"] = s.id;
        obj["prompt"] = s.prompt;
        obj["input"] = s.input;
        obj["response"] = s.response;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format)
{
    write_file(path, serialize_corpus(corpus, format));
}

std::string instruction_text(std::string_view prompt, std::string_view input,
                             std::string_view separator)
{
    std::string q(prompt);
    if (!input.empty()) {
        q += separator;
        q += input;
    }
    return q;
}

} // namespace diamond
