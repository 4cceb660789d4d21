#ifndef DIAMOND_CLI_HPP
#define DIAMOND_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diamond/attacks.hpp"
#include "diamond/error.hpp"
#include "diamond/lm_backend.hpp"
#include "diamond/scoring.hpp"
#include "diamond/selection.hpp"

namespace diamond {

/// Bad flags or config values; maps to exit code 2.
class UsageError : public Error {
  public:
    using Error::Error;
};

/// Effective settings of a run. Serialised as a flat JSON object; relative
/// paths are resolved against `base_dir` (the config file's directory) but
/// are written back verbatim.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string backend = "toy"; // toy | uniform | remote
    std::string endpoint;
    std::uint64_t timeout_ms = 30000;
    std::size_t max_in_flight = 8;
    Metric metric = Metric::aifd;
    std::string metrics = "ifd,aifd,aioec"; // score subcommand
    double proportion = 0.05;
    bool ascending = false;
    std::size_t workers = 1;
    std::size_t max_new_tokens = 32;
    AttackConfig attack;
    std::string input;
    std::string input_format = "jsonl";
    std::string reference;
    std::string reference_format = "alpaca_json";
    int k_clusters = 100;
    std::size_t per_cluster = 10;
    /// Pipeline output directory. Not written to config.resolved.json, which
    /// lives inside it.
    std::string output_dir;

    std::filesystem::path base_dir;

    nlohmann::ordered_json to_json() const;
    /// Unknown keys and ill-typed values raise UsageError.
    static RunConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});
    static RunConfig load(const std::filesystem::path& path);

    std::filesystem::path resolve(const std::string& path) const;
    ScoringOptions scoring_options() const;
    PipelineOptions pipeline_options() const;
};

/// Builds the configured backend. The endpoint falls back to the
/// DIAMOND_BACKEND_URL environment variable.
std::shared_ptr<const LmBackend> make_backend(const RunConfig& config);

/// Entry point of the `diamond` tool; `args` excludes the program name.
/// Returns 0 on success, 1 on runtime failure, 2 on usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace diamond

#endif // DIAMOND_CLI_HPP
