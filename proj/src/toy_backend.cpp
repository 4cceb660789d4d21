#include "diamond/toy_backend.hpp"

#include <cmath>
#include <set>

#include "diamond/embedded_data.hpp"
#include "diamond/error.hpp"
#include "diamond/text.hpp"

namespace diamond {

std::vector<std::string> toy_tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty())
            out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (text::is_space(c)) {
            flush();
        } else if (c < 0x80 && !text::is_ascii_alnum(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
        }
    }
    flush();
    return out;
}

Eigen::VectorXd hashed_unit_vector(std::string_view token, std::size_t dim)
{
    std::uint64_t state = text::fnv1a64(token);
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        const std::uint64_t x = text::splitmix64(state);
        const double u = static_cast<double>(x >> 11) * 0x1.0p-53;
        v(k) = 2.0 * u - 1.0;
    }
    return v / v.norm();
}

namespace {

void check_room(std::size_t context_tokens, std::size_t max_tokens)
{
    if (context_tokens >= max_tokens)
        throw ValidationError("context of " + std::to_string(context_tokens) +
                              " tokens leaves no room within " + std::to_string(max_tokens));
}

} // namespace

// ---------------------------------------------------------------------------

BigramBackend::BigramBackend(std::string_view training_text)
    : BigramBackend(training_text, Options{})
{
}

BigramBackend::BigramBackend(std::string_view training_text, Options options)
    : options_(std::move(options))
{
    if (options_.embedding_dim == 0)
        throw ValidationError("embedding_dim must be positive");
    if (options_.max_sequence_tokens < 8)
        throw ValidationError("max_sequence_tokens must be at least 8");

    std::vector<std::vector<std::string>> lines;
    std::set<std::string> distinct;
    std::size_t pos = 0;
    while (pos < training_text.size()) {
        std::size_t end = training_text.find('\n', pos);
        if (end == std::string_view::npos)
            end = training_text.size();
        auto toks = toy_tokenize(training_text.substr(pos, end - pos));
        pos = end + 1;
        if (toks.empty())
            continue;
        distinct.insert(toks.begin(), toks.end());
        lines.push_back(std::move(toks));
    }

    vocab_ = {"</s>", "<unk>"};
    vocab_.insert(vocab_.end(), distinct.begin(), distinct.end());
    for (std::size_t i = 0; i < vocab_.size(); ++i)
        ids_.emplace(vocab_[i], static_cast<int>(i));

    for (const auto& toks : lines) {
        int prev = kStart;
        for (const auto& t : toks) {
            const int id = ids_.at(t);
            ++bigrams_[prev][id];
            ++totals_[prev];
            prev = id;
        }
        ++bigrams_[prev][kEnd];
        ++totals_[prev];
    }

    // Greedy successor per observed context; "<unk>" is never emitted, ties
    // go to the lowest id, and unseen contexts end the sequence.
    for (const auto& [prev, nexts] : bigrams_) {
        int best = kEnd;
        std::size_t best_count = 0;
        for (const auto& [next, count] : nexts) {
            if (next == kUnknown)
                continue;
            if (count > best_count || (count == best_count && next < best)) {
                best = next;
                best_count = count;
            }
        }
        greedy_next_[prev] = best;
    }

    const auto V = static_cast<Eigen::Index>(vocab_.size());
    const auto D = static_cast<Eigen::Index>(options_.embedding_dim);
    first_.resize(V, D);
    for (Eigen::Index i = 0; i < V; ++i)
        first_.row(i) = hashed_unit_vector(vocab_[static_cast<std::size_t>(i)], options_.embedding_dim).transpose();

    const Eigen::RowVectorXd column_sum = first_.colwise().sum();
    last_.resize(V, D);
    for (Eigen::Index i = 0; i < V; ++i) {
        Eigen::RowVectorXd mix = column_sum;
        const int id = static_cast<int>(i);
        if (const auto* r = row(id))
            for (const auto& [next, count] : *r)
                mix += static_cast<double>(count) * first_.row(next);
        mix /= static_cast<double>(context_count(id)) + static_cast<double>(V);
        last_.row(i) = 0.5 * first_.row(i) + 0.5 * mix;
    }
}

const BigramBackend& BigramBackend::builtin()
{
    static const BigramBackend backend(embedded::minicorpus_txt());
    return backend;
}

const std::map<int, std::size_t>* BigramBackend::row(int prev) const
{
    auto it = bigrams_.find(prev);
    return it == bigrams_.end() ? nullptr : &it->second;
}

int BigramBackend::token_id(std::string_view token) const
{
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnknown : it->second;
}

std::size_t BigramBackend::bigram_count(int prev, int next) const
{
    const auto* r = row(prev);
    if (r == nullptr)
        return 0;
    auto it = r->find(next);
    return it == r->end() ? 0 : it->second;
}

std::size_t BigramBackend::context_count(int prev) const
{
    auto it = totals_.find(prev);
    return it == totals_.end() ? 0 : it->second;
}

double BigramBackend::logprob(int prev, int next) const
{
    const double num = static_cast<double>(bigram_count(prev, next)) + 1.0;
    const double den = static_cast<double>(context_count(prev)) + static_cast<double>(vocab_.size());
    return std::log(num / den);
}

BackendDescriptor BigramBackend::descriptor() const
{
    return {options_.name, options_.max_sequence_tokens, options_.embedding_dim, true};
}

TokenLogprobs BigramBackend::score_continuation(std::string_view context,
                                                std::string_view continuation) const
{
    const auto ctx = toy_tokenize(context);
    auto cont = toy_tokenize(continuation);
    if (cont.empty())
        throw ValidationError("continuation has zero tokens");
    check_room(ctx.size(), options_.max_sequence_tokens);

    TokenLogprobs out;
    const std::size_t room = options_.max_sequence_tokens - ctx.size();
    if (cont.size() > room) {
        cont.resize(room);
        out.truncated = true;
    }
    int prev = ctx.empty() ? kStart : token_id(ctx.back());
    out.logprobs.reserve(cont.size());
    for (auto& t : cont) {
        const int id = token_id(t);
        out.logprobs.push_back(logprob(prev, id));
        prev = id;
    }
    out.tokens = std::move(cont);
    return out;
}

std::string BigramBackend::generate(std::string_view prompt, std::size_t max_new_tokens) const
{
    const auto toks = toy_tokenize(prompt);
    int prev = toks.empty() ? kStart : token_id(toks.back());
    std::string out;
    for (std::size_t n = 0; n < max_new_tokens; ++n) {
        auto it = greedy_next_.find(prev);
        const int next = it == greedy_next_.end() ? kEnd : it->second;
        if (next == kEnd)
            break;
        if (!out.empty())
            out += ' ';
        out += vocab_[static_cast<std::size_t>(next)];
        prev = next;
    }
    return out;
}

EmbeddingPair BigramBackend::embed(std::string_view text) const
{
    const auto toks = toy_tokenize(text);
    if (toks.empty())
        throw ValidationError("cannot embed text with zero tokens");
    EmbeddingPair pair{Eigen::VectorXd::Zero(first_.cols()), Eigen::VectorXd::Zero(last_.cols())};
    for (const auto& t : toks) {
        const int id = token_id(t);
        pair.e_first += first_.row(id).transpose();
        pair.e_last += last_.row(id).transpose();
    }
    pair.e_first /= static_cast<double>(toks.size());
    pair.e_last /= static_cast<double>(toks.size());
    return pair;
}

// ---------------------------------------------------------------------------

UniformBackend::UniformBackend(std::size_t vocab_size, Eigen::VectorXd token_vector,
                               std::size_t max_sequence_tokens)
    : vocab_size_(vocab_size), token_vector_(std::move(token_vector)),
      max_sequence_tokens_(max_sequence_tokens)
{
    if (vocab_size_ < 2)
        throw ValidationError("uniform backend needs at least two symbols");
    if (max_sequence_tokens_ < 8)
        throw ValidationError("max_sequence_tokens must be at least 8");
}

BackendDescriptor UniformBackend::descriptor() const
{
    return {"toy-uniform", max_sequence_tokens_, static_cast<std::size_t>(token_vector_.size()),
            token_vector_.size() > 0};
}

TokenLogprobs UniformBackend::score_continuation(std::string_view context,
                                                 std::string_view continuation) const
{
    const auto ctx = toy_tokenize(context);
    auto cont = toy_tokenize(continuation);
    if (cont.empty())
        throw ValidationError("continuation has zero tokens");
    check_room(ctx.size(), max_sequence_tokens_);
    TokenLogprobs out;
    const std::size_t room = max_sequence_tokens_ - ctx.size();
    if (cont.size() > room) {
        cont.resize(room);
        out.truncated = true;
    }
    out.logprobs.assign(cont.size(), -std::log(static_cast<double>(vocab_size_)));
    out.tokens = std::move(cont);
    return out;
}

std::string UniformBackend::generate(std::string_view, std::size_t) const
{
    return {};
}

EmbeddingPair UniformBackend::embed(std::string_view text) const
{
    if (token_vector_.size() == 0)
        throw CapabilityError("uniform backend was built without embeddings");
    if (toy_tokenize(text).empty())
        throw ValidationError("cannot embed text with zero tokens");
    return {token_vector_, token_vector_};
}

} // namespace diamond
