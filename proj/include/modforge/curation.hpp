#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modforge/corpus.hpp"
#include "modforge/gateway.hpp"
#include "modforge/prompts.hpp"

namespace modforge {

/// A: keep everything. B: reject label mismatches. C: one self-check turn on
/// mismatch, keep the revised answer regardless. D: one self-check turn, then
/// reject what is still wrong.
enum class CurationStrategy { SettingA, SettingB, SettingC, SettingD };

const char* to_string(CurationStrategy s);
/// Accepts "A".."D" or "SettingA".."SettingD".
CurationStrategy strategy_from_string(std::string_view name);

enum class RecordStatus { Kept, Rejected, RecheckRecovered, RecheckFailed, InconsistentReason };

const char* to_string(RecordStatus s);
RecordStatus status_from_string(std::string_view name);

/// Equality: predicted == weak. Containment: every weak label was predicted.
enum class MatchRule { Equality, Containment };

MatchRule match_rule_from_string(std::string_view name);

struct CotRecord {
    std::string sample_id;
    std::string text;
    std::string reason;
    std::string harmful_info;
    LabelSet predicted;
    LabelSet weak_labels;
    int attempts = 1;
    RecordStatus status = RecordStatus::Kept;
    std::string provider;
    bool filtered = false;
    std::string provenance = "generate";
    std::vector<std::string> warnings;

    friend bool operator==(const CotRecord&, const CotRecord&) = default;
};

/// Every processed sample lands in exactly one of the five outcome buckets;
/// `rechecked` counts self-check turns and is outside the partition.
struct CurationLedger {
    std::size_t total = 0;
    std::size_t correct_first_try = 0;
    std::size_t rejected = 0;
    std::size_t rechecked = 0;
    std::size_t recovered = 0;
    std::size_t persistent_wrong = 0;
    std::size_t reason_inconsistent = 0;

    bool partitions() const {
        return total ==
               correct_first_try + rejected + recovered + persistent_wrong + reason_inconsistent;
    }
    friend bool operator==(const CurationLedger&, const CurationLedger&) = default;
};

nlohmann::json to_json(const CurationLedger& ledger);
CurationLedger ledger_from_json(const nlohmann::json& j);

struct CuratedDataset {
    CurationStrategy strategy = CurationStrategy::SettingD;
    std::vector<CotRecord> records;   // the emitted training set, input order
    std::vector<CotRecord> excluded;  // rejected / filtered-out records, input order
    CurationLedger ledger;
    std::size_t provider_failures = 0;  // first-pass calls lost to transport/exhaustion
};

struct CurationOptions {
    MatchRule match = MatchRule::Equality;
    std::size_t workers = 0;  // 0: use the gateway's pool size
};

bool label_consistent(const LabelSet& predicted, const LabelSet& weak,
                      MatchRule rule = MatchRule::Equality);

/// False when the harmful-information field and the classification disagree:
/// "none"/empty with a harmful label, or real content with Harmless.
bool reason_consistent(const CotRecord& record);

/// Runs reasoning generation over `samples` through `provider` and applies
/// `strategy`. Per-sample failures become rejected records; the batch never aborts.
CuratedDataset generate_cot(const std::vector<RawSample>& samples, Gateway& gateway,
                            const ProviderHandle& provider, CurationStrategy strategy,
                            const PromptTemplates& templates, const CurationOptions& options = {});

/// Asks the provider to correct a base model's answer and returns the
/// corrected record (provenance "repair", attempts 1).
CotRecord repair_with_base_response(const RawSample& sample, const std::string& base_answer,
                                    Gateway& gateway, const ProviderHandle& provider,
                                    const PromptTemplates& templates,
                                    MatchRule match = MatchRule::Equality);

/// The first-pass prompts generate_cot would send, without sending them.
std::vector<ChatExchange> first_pass_prompts(const std::vector<RawSample>& samples,
                                             const PromptTemplates& templates);

/// Curated JSONL: sample_id, text, reason, harmful_info, predicted,
/// weak_labels, attempts, status, then strategy, provider, filtered, provenance.
std::string curated_to_jsonl(const CuratedDataset& curated,
                             const Taxonomy& taxonomy = Taxonomy::standard());
void save_curated(const CuratedDataset& curated, const std::filesystem::path& path,
                  const Taxonomy& taxonomy = Taxonomy::standard());
/// Loads records written by save_curated (the emitted set). The ledger is
/// read from `<path>.ledger.json` when present.
CuratedDataset load_curated(const std::filesystem::path& path,
                            const Taxonomy& taxonomy = Taxonomy::standard());

}  // namespace modforge
