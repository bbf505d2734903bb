#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "modforge/curation.hpp"

namespace modforge {

enum class SftShape { Messages, Flat };

SftShape shape_from_string(std::string_view name);

struct SftRecord {
    std::string query;
    std::string response;
    std::string sample_id;
    CurationStrategy strategy = CurationStrategy::SettingD;
    bool with_cot = true;
    LabelSet labels;
};

struct EmissionReport {
    std::size_t records = 0;
    std::size_t bytes = 0;
};

/// One SFT record per curated record, sorted by sample_id. With CoT the
/// response carries all three sections; without it only the classification line.
std::vector<SftRecord> build_sft(const CuratedDataset& curated, bool with_cot,
                                 const PromptTemplates& templates);

/// Serialises records as JSONL in the requested shape. Each line carries a
/// `meta` object {sample_id, strategy, with_cot, labels}.
std::string sft_to_jsonl(const std::vector<SftRecord>& records, SftShape shape,
                         const Taxonomy& taxonomy = Taxonomy::standard());

/// Throws EmptyDataset when there is nothing to emit, IoError on write failure.
EmissionReport emit_sft(const CuratedDataset& curated, bool with_cot, SftShape shape,
                        const std::filesystem::path& out, const PromptTemplates& templates);

struct RoundtripResult {
    bool ok = true;
    std::size_t records = 0;
    std::size_t bad_line = 0;  // 1-based, 0 when ok
    std::string message;
};

/// Re-parses every response and compares the labels against meta.labels.
/// Throws EmptyDataset for a file without records.
RoundtripResult roundtrip_check(const std::filesystem::path& path,
                                const Taxonomy& taxonomy = Taxonomy::standard());

}  // namespace modforge
