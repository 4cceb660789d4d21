#include "diamond/lm_backend.hpp"

#include <cmath>

#include "diamond/error.hpp"

namespace diamond {

void TokenLogprobs::validate() const
{
    if (tokens.size() != logprobs.size())
        throw ValidationError("token/logprob length mismatch: " + std::to_string(tokens.size()) +
                              " tokens, " + std::to_string(logprobs.size()) + " logprobs");
    for (double lp : logprobs)
        if (!std::isfinite(lp) || lp > 0.0)
            throw ValidationError("logprob out of range: " + std::to_string(lp));
}

double TokenLogprobs::mean_negative() const
{
    if (logprobs.empty())
        throw ValidationError("zero-token continuation");
    double sum = 0.0;
    for (double lp : logprobs)
        sum += lp;
    return -sum / static_cast<double>(logprobs.size());
}

} // namespace diamond
