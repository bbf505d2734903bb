#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modforge/curation.hpp"
#include "modforge/dedup.hpp"
#include "modforge/evaluation.hpp"

namespace modforge {

struct FailureCase {
    std::string sample_id;
    std::string text;
    LabelSet gold;
    LabelSet predicted;
    std::optional<std::string> reason;
};

struct ShortcutHypothesis {
    std::string text;  // verbatim line from the analysing model
    std::vector<std::string> failure_ids;
};

struct ShortcutReport {
    std::vector<ShortcutHypothesis> hypotheses;
    std::vector<std::string> failure_ids;
    std::vector<std::string> prompts;  // one per analysis batch
    std::vector<std::string> raw_replies;
    std::string provider;
};

struct SyntheticBatch {
    Category harm_type{};
    std::vector<RawSample> samples;
    std::string template_version;
    std::string provider;
    std::size_t calls = 0;
    std::size_t refusals = 0;
};

/// Evaluates `provider` on `val` and keeps the mismatches. Reasons are
/// attached when `with_cot`.
std::vector<FailureCase> collect_failures(const Dataset& val, Gateway& gateway,
                                          const ProviderHandle& provider, bool with_cot,
                                          const PromptTemplates& templates);

/// Sends the failures (in batches of `batch_size`) to the analysing model.
/// Each non-empty reply line becomes a hypothesis linked to its batch; lines
/// starting with "pattern" are preferred when present. Throws EmptyFailures,
/// ProviderFiltered on refusal.
ShortcutReport analyze_shortcuts(const std::vector<FailureCase>& failures, Gateway& gateway,
                                 const ProviderHandle& provider, const PromptTemplates& templates,
                                 std::size_t batch_size = 40);

/// Splits a numbered-list reply ("1. ...", "2) ...") into items. Falls back
/// to non-empty lines when nothing is numbered.
std::vector<std::string> split_numbered_list(const std::string& reply);

/// ceil(count / 10) augment calls; ids are `syn:<first_index + i>`. Throws
/// InvalidArgument for count 0 or Harmless, AllCallsRefused.
SyntheticBatch generate_synthetic(Category harm_type, std::size_t count, Gateway& gateway,
                                  const ProviderHandle& provider, const PromptTemplates& templates,
                                  std::size_t first_index = 0, const std::string& salt = {});

struct AugmentProviders {
    ProviderHandle model;  // the model being evaluated on val
    ProviderHandle judge;  // shortcut analysis and curation of new samples
    ProviderHandle gen;    // synthetic generation
};

struct AugmentOptions {
    std::size_t per_category = 10;
    std::size_t dedup_target = 0;  // 0: same as per_category
    bool with_cot = true;
    MatchRule match = MatchRule::Equality;
    std::uint64_t seed = 0;
    std::string encoder = "hash";
    std::string salt;  // distinguishes generation requests across rounds
};

struct AugmentResult {
    Dataset dataset;
    std::vector<FailureCase> failures;
    std::optional<ShortcutReport> report;
    std::vector<SyntheticBatch> batches;
    std::optional<CuratedDataset> curated;
    std::size_t added = 0;
};

/// Harmful categories in which gold and prediction disagree, in taxonomy order.
std::vector<Category> implicated_categories(const std::vector<FailureCase>& failures);

/// One augmentation round. The input samples are carried over unchanged and
/// synthetic survivors are appended with fresh `syn:<n>` ids.
AugmentResult augment_round(const Dataset& train, const Dataset& val, Gateway& gateway,
                            const AugmentProviders& providers, CurationStrategy strategy,
                            const PromptTemplates& templates, const AugmentOptions& options = {});

nlohmann::json to_json(const ShortcutReport& report);
nlohmann::json to_json(const AugmentResult& result, const Taxonomy& taxonomy);

}  // namespace modforge
