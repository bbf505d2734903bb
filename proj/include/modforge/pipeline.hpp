#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modforge/curation.hpp"
#include "modforge/emission.hpp"
#include "modforge/gateway.hpp"

namespace modforge {

struct EvalSplitConfig {
    std::string name;
    std::filesystem::path path;
};

struct PipelineConfig {
    std::filesystem::path source;  // file the config was read from

    std::filesystem::path raw;
    DatasetFormat raw_format = DatasetFormat::Jsonl;
    std::filesystem::path workdir;
    std::optional<std::filesystem::path> cache;
    std::optional<std::filesystem::path> templates;

    GatewayOptions gateway;
    std::map<std::string, ProviderHandle> providers;
    std::map<std::string, std::filesystem::path> mock_scripts;

    struct {
        std::size_t target = 1450;
        std::string encoder = "hash";
        std::uint64_t seed = 0;
    } dedup;

    struct {
        std::string provider;
        CurationStrategy strategy = CurationStrategy::SettingD;
        MatchRule match = MatchRule::Equality;
    } curation;

    struct {
        bool with_cot = true;
        SftShape shape = SftShape::Messages;
    } emission;

    struct {
        std::string provider;
        bool with_cot = false;
        std::vector<EvalSplitConfig> splits;
    } eval;

    struct {
        bool enabled = false;
        std::string model_provider;
        std::string judge_provider;
        std::string gen_provider;
        std::filesystem::path val;
        std::size_t per_category = 10;
        std::optional<CurationStrategy> strategy;  // defaults to curation.strategy
        std::string salt;
    } augment;
};

/// Reads a TOML document (or JSON when the extension is .json) into JSON.
/// Throws ParseError with the offending line.
nlohmann::json read_config_document(const std::filesystem::path& path);

/// Structural and referential checks; never touches the network. Relative
/// paths resolve against `base_dir`. Returns every problem found.
std::vector<std::string> validate_config_document(const nlohmann::json& doc,
                                                  const std::filesystem::path& base_dir,
                                                  PipelineConfig* out = nullptr);

/// Empty when valid. Throws ParseError for unreadable documents.
std::vector<std::string> validate_config(const std::filesystem::path& path);

/// Throws ParseError, or ConfigError listing all problems.
PipelineConfig load_config(const std::filesystem::path& path);

/// Gateway with every configured provider registered. Mock providers load
/// their script file (or use the default script when none is given).
std::unique_ptr<Gateway> make_gateway(const PipelineConfig& config);

enum class Stage { Dedup, Curate, Emit, Eval, Augment };

const char* to_string(Stage stage);
/// Comma-separated stage names, or "all".
std::set<Stage> parse_stages(std::string_view list);

struct RunOptions {
    bool dry_run = false;
    std::optional<std::filesystem::path> cache_dir;  // overrides paths.cache
};

/// Fixed artifact names inside the workdir.
namespace artifacts {
inline constexpr const char* kDedup = "dedup.jsonl";
inline constexpr const char* kCurated = "curated.jsonl";
inline constexpr const char* kSft = "sft.jsonl";
inline constexpr const char* kEvalDir = "eval";
inline constexpr const char* kAugmented = "augmented.jsonl";
inline constexpr const char* kShortcuts = "shortcuts.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kDryRunDir = "dry_run";
}  // namespace artifacts

/// Runs the requested stages in canonical order, each reading the previous
/// stage's artifact from the workdir, and writes manifest.json. Throws
/// StageInputMissing, and a provider error code when every call of a stage
/// failed at the provider.
nlohmann::ordered_json run_pipeline(const PipelineConfig& config, const std::set<Stage>& stages,
                            const RunOptions& options = {});

/// "sha256:<hex>" of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace modforge
