#include "modforge/curation.hpp"

#include <algorithm>
#include <array>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/io.hpp"
#include "modforge/log.hpp"
#include "modforge/worker_pool.hpp"

namespace modforge {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(CurationStrategy s) {
    switch (s) {
        case CurationStrategy::SettingA:
            return "A";
        case CurationStrategy::SettingB:
            return "B";
        case CurationStrategy::SettingC:
            return "C";
        case CurationStrategy::SettingD:
            return "D";
    }
    return "D";
}

CurationStrategy strategy_from_string(std::string_view name) {
    if (name.starts_with("Setting")) name.remove_prefix(7);
    if (name == "A" || name == "a") return CurationStrategy::SettingA;
    if (name == "B" || name == "b") return CurationStrategy::SettingB;
    if (name == "C" || name == "c") return CurationStrategy::SettingC;
    if (name == "D" || name == "d") return CurationStrategy::SettingD;
    throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

const char* to_string(RecordStatus s) {
    switch (s) {
        case RecordStatus::Kept:
            return "kept";
        case RecordStatus::Rejected:
            return "rejected";
        case RecordStatus::RecheckRecovered:
            return "recheck_recovered";
        case RecordStatus::RecheckFailed:
            return "recheck_failed";
        case RecordStatus::InconsistentReason:
            return "inconsistent_reason";
    }
    return "kept";
}

RecordStatus status_from_string(std::string_view name) {
    for (auto s : {RecordStatus::Kept, RecordStatus::Rejected, RecordStatus::RecheckRecovered,
                   RecordStatus::RecheckFailed, RecordStatus::InconsistentReason}) {
        if (name == to_string(s)) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown record status '" + std::string(name) + "'");
}

MatchRule match_rule_from_string(std::string_view name) {
    if (name == "equality") return MatchRule::Equality;
    if (name == "containment") return MatchRule::Containment;
    throw Error(ErrorCode::InvalidArgument, "unknown match rule '" + std::string(name) + "'");
}

json to_json(const CurationLedger& l) {
    ordered_json j;
    j["total"] = l.total;
    j["correct_first_try"] = l.correct_first_try;
    j["rejected"] = l.rejected;
    j["rechecked"] = l.rechecked;
    j["recovered"] = l.recovered;
    j["persistent_wrong"] = l.persistent_wrong;
    j["reason_inconsistent"] = l.reason_inconsistent;
    return j;
}

CurationLedger ledger_from_json(const json& j) {
    CurationLedger l;
    l.total = j.at("total");
    l.correct_first_try = j.at("correct_first_try");
    l.rejected = j.at("rejected");
    l.rechecked = j.at("rechecked");
    l.recovered = j.at("recovered");
    l.persistent_wrong = j.at("persistent_wrong");
    l.reason_inconsistent = j.at("reason_inconsistent");
    return l;
}

bool label_consistent(const LabelSet& predicted, const LabelSet& weak, MatchRule rule) {
    if (predicted.empty() || weak.empty()) {
        throw Error(ErrorCode::PreconditionViolated, "label sets must be non-empty");
    }
    return rule == MatchRule::Equality ? predicted == weak : weak.subset_of(predicted);
}

namespace {

bool is_none_marker(const std::string& harmful_info) {
    const auto n = normalize_token(harmful_info);
    static const std::array<std::string_view, 12> kNone{
        "", "none", "null", "n/a", "na", "no", "nothing", "nil", "无", "没有", "空", "暂无"};
    if (std::find(kNone.begin(), kNone.end(), n) != kNone.end()) return true;
    return n.starts_with("none") || n.starts_with("no harmful") || n.starts_with("there is no") ||
           n.starts_with("not applicable") || n.starts_with("无有害");
}

enum class Bucket { CorrectFirstTry, Rejected, Recovered, PersistentWrong, ReasonInconsistent };

struct Outcome {
    CotRecord record;
    Bucket bucket = Bucket::Rejected;
    bool emitted = false;
    bool rechecked = false;
    bool provider_failed = false;
};

Outcome rejected(CotRecord record, std::string warning) {
    record.status = RecordStatus::Rejected;
    record.warnings.push_back(std::move(warning));
    return {std::move(record), Bucket::Rejected, false, false};
}

void fill_from_parse(CotRecord& record, const ParsedResponse& parsed) {
    record.reason = parsed.reason.value_or("");
    record.harmful_info = parsed.harmful_info.value_or("");
    record.predicted = parsed.predicted;
    for (const auto& w : parsed.parse_warnings) record.warnings.push_back(w);
}

bool keeps_mismatches(CurationStrategy s) {
    return s == CurationStrategy::SettingA || s == CurationStrategy::SettingC;
}

// Runs one provider turn and parses it; returns nullopt and a warning on any
// per-sample failure.
std::optional<ParsedResponse> ask(Gateway& gateway, const ProviderHandle& provider,
                                  const ChatExchange& exchange, PromptKind kind,
                                  const Taxonomy& taxonomy, std::string& raw, bool& filtered,
                                  std::string& warning, bool* provider_failed = nullptr) {
    try {
        auto resp = gateway.complete(provider, exchange);
        filtered = resp.filtered;
        if (resp.filtered) {
            warning = "provider filtered the request";
            return std::nullopt;
        }
        raw = resp.raw;
        return parse_response(resp.raw, kind, taxonomy);
    } catch (const Error& e) {
        warning = e.what();
        if (provider_failed) *provider_failed = is_provider_failure(e.code());
        return std::nullopt;
    }
}

Outcome curate_one(const RawSample& sample, Gateway& gateway, const ProviderHandle& provider,
                   CurationStrategy strategy, const PromptTemplates& templates, MatchRule match) {
    const auto& taxonomy = templates.taxonomy();
    CotRecord record;
    record.sample_id = sample.id;
    record.text = sample.text;
    record.weak_labels = sample.weak_labels;
    record.provider = provider.id;

    Outcome out;
    const auto first = templates.render(PromptKind::ClassificationWithCot, sample.text);
    std::string raw, warning;
    bool filtered = false;
    bool provider_failed = false;
    auto parsed = ask(gateway, provider, first, PromptKind::ClassificationWithCot, taxonomy, raw,
                      filtered, warning, &provider_failed);
    record.filtered = filtered;
    if (!parsed) {
        auto r = rejected(std::move(record), warning);
        r.provider_failed = provider_failed;
        return r;
    }
    fill_from_parse(record, *parsed);

    if (label_consistent(record.predicted, record.weak_labels, match)) {
        record.status = RecordStatus::Kept;
        out = {std::move(record), Bucket::CorrectFirstTry, true, false};
    } else if (strategy == CurationStrategy::SettingA) {
        record.status = RecordStatus::Kept;
        out = {std::move(record), Bucket::PersistentWrong, true, false};
    } else if (strategy == CurationStrategy::SettingB) {
        return rejected(std::move(record), "label mismatch");
    } else {
        // Single reflection: one self-check turn continuing the same thread.
        PromptContext ctx;
        ctx.prior_exchange = first;
        ctx.prior_reply = raw;
        const auto recheck = templates.render(PromptKind::SelfCheck, sample.text, ctx);
        std::string raw2, warning2;
        bool filtered2 = false;
        auto parsed2 = ask(gateway, provider, recheck, PromptKind::SelfCheck, taxonomy, raw2,
                           filtered2, warning2);
        record.attempts = 2;
        out.rechecked = true;
        if (parsed2) {
            CotRecord revised = record;
            revised.warnings.clear();
            fill_from_parse(revised, *parsed2);
            revised.filtered = filtered2;
            record = std::move(revised);
        } else {
            record.warnings.push_back("recheck failed: " + warning2);
        }
        const bool fixed =
            parsed2 && label_consistent(record.predicted, record.weak_labels, match);
        if (fixed) {
            record.status = RecordStatus::RecheckRecovered;
            out = {std::move(record), Bucket::Recovered, true, true};
        } else if (strategy == CurationStrategy::SettingC) {
            record.status = RecordStatus::RecheckFailed;
            out = {std::move(record), Bucket::PersistentWrong, true, true};
        } else {
            auto r = rejected(std::move(record), "label mismatch persists after recheck");
            r.rechecked = true;
            return r;
        }
    }

    if (!reason_consistent(out.record)) {
        out.record.status = RecordStatus::InconsistentReason;
        out.record.warnings.push_back("harmful information contradicts classification");
        out.bucket = Bucket::ReasonInconsistent;
        out.emitted = keeps_mismatches(strategy);
    }
    return out;
}

}  // namespace

bool reason_consistent(const CotRecord& record) {
    if (record.predicted.empty()) {
        throw Error(ErrorCode::PreconditionViolated, record.sample_id + ": no prediction");
    }
    const bool none = is_none_marker(record.harmful_info);
    const bool harmless = record.predicted == LabelSet{cat::kHarmless};
    if (none && !harmless) return false;
    if (!none && harmless) return false;
    return true;
}

CuratedDataset generate_cot(const std::vector<RawSample>& samples, Gateway& gateway,
                            const ProviderHandle& provider, CurationStrategy strategy,
                            const PromptTemplates& templates, const CurationOptions& options) {
    const auto workers = options.workers ? options.workers : gateway.workers();
    auto outcomes = parallel_map(samples.size(), workers, [&](std::size_t i) {
        return curate_one(samples[i], gateway, provider, strategy, templates, options.match);
    });

    CuratedDataset out;
    out.strategy = strategy;
    auto& l = out.ledger;
    l.total = outcomes.size();
    for (auto& o : outcomes) {
        if (o.rechecked) ++l.rechecked;
        if (o.provider_failed) ++out.provider_failures;
        switch (o.bucket) {
            case Bucket::CorrectFirstTry:
                ++l.correct_first_try;
                break;
            case Bucket::Rejected:
                ++l.rejected;
                break;
            case Bucket::Recovered:
                ++l.recovered;
                break;
            case Bucket::PersistentWrong:
                ++l.persistent_wrong;
                break;
            case Bucket::ReasonInconsistent:
                ++l.reason_inconsistent;
                break;
        }
        for (const auto& w : o.record.warnings) {
            log::debug(o.record.sample_id + ": " + w);
        }
        (o.emitted ? out.records : out.excluded).push_back(std::move(o.record));
    }
    return out;
}

CotRecord repair_with_base_response(const RawSample& sample, const std::string& base_answer,
                                    Gateway& gateway, const ProviderHandle& provider,
                                    const PromptTemplates& templates, MatchRule match) {
    CotRecord record;
    record.sample_id = sample.id;
    record.text = sample.text;
    record.weak_labels = sample.weak_labels;
    record.provider = provider.id;
    record.provenance = "repair";
    record.attempts = 1;

    PromptContext ctx;
    ctx.assistant_answer = base_answer;
    const auto exchange = templates.render(PromptKind::Repair, sample.text, ctx);
    std::string raw, warning;
    bool filtered = false;
    auto parsed = ask(gateway, provider, exchange, PromptKind::Repair, templates.taxonomy(), raw,
                      filtered, warning);
    record.filtered = filtered;
    if (!parsed) return rejected(std::move(record), warning).record;
    fill_from_parse(record, *parsed);
    if (!label_consistent(record.predicted, record.weak_labels, match)) {
        return rejected(std::move(record), "repaired answer still disagrees with weak label").record;
    }
    record.status = RecordStatus::Kept;
    if (!reason_consistent(record)) {
        record.status = RecordStatus::InconsistentReason;
        record.warnings.push_back("harmful information contradicts classification");
    }
    return record;
}

std::vector<ChatExchange> first_pass_prompts(const std::vector<RawSample>& samples,
                                             const PromptTemplates& templates) {
    std::vector<ChatExchange> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        out.push_back(templates.render(PromptKind::ClassificationWithCot, s.text));
    }
    return out;
}

namespace {

ordered_json labels_json(const LabelSet& labels, const Taxonomy& taxonomy) {
    auto arr = ordered_json::array();
    for (auto c : labels.members()) arr.push_back(taxonomy.canonical_name(c));
    return arr;
}

}  // namespace

std::string curated_to_jsonl(const CuratedDataset& curated, const Taxonomy& taxonomy) {
    std::string out;
    for (const auto& r : curated.records) {
        ordered_json j;
        j["sample_id"] = r.sample_id;
        j["text"] = r.text;
        j["reason"] = r.reason;
        j["harmful_info"] = r.harmful_info;
        j["predicted"] = labels_json(r.predicted, taxonomy);
        j["weak_labels"] = labels_json(r.weak_labels, taxonomy);
        j["attempts"] = r.attempts;
        j["status"] = to_string(r.status);
        j["strategy"] = to_string(curated.strategy);
        j["provider"] = r.provider;
        j["filtered"] = r.filtered;
        j["provenance"] = r.provenance;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void save_curated(const CuratedDataset& curated, const std::filesystem::path& path,
                  const Taxonomy& taxonomy) {
    write_file_atomic(path, curated_to_jsonl(curated, taxonomy));
    auto ledger_path = path;
    ledger_path += ".ledger.json";
    ordered_json j;
    j["strategy"] = to_string(curated.strategy);
    j["ledger"] = to_json(curated.ledger);
    write_file_atomic(ledger_path, j.dump(2) + "\n");
}

CuratedDataset load_curated(const std::filesystem::path& path, const Taxonomy& taxonomy) {
    CuratedDataset out;
    auto lines = split_lines(read_file(path));
    bool have_strategy = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            auto j = json::parse(lines[i]);
            CotRecord r;
            r.sample_id = j.at("sample_id").get<std::string>();
            r.text = j.at("text").get<std::string>();
            r.reason = j.at("reason").get<std::string>();
            r.harmful_info = j.at("harmful_info").get<std::string>();
            r.predicted = taxonomy.parse_canonical_list(j.at("predicted").get<std::vector<std::string>>());
            r.weak_labels = taxonomy.parse_canonical_list(j.at("weak_labels").get<std::vector<std::string>>());
            r.attempts = j.at("attempts").get<int>();
            r.status = status_from_string(j.at("status").get<std::string>());
            r.provider = j.value("provider", std::string{});
            r.filtered = j.value("filtered", false);
            r.provenance = j.value("provenance", std::string("generate"));
            if (j.contains("strategy")) {
                auto s = strategy_from_string(j["strategy"].get<std::string>());
                if (have_strategy && s != out.strategy) {
                    throw ParseError(i + 1, "mixed strategies in one curated file");
                }
                out.strategy = s;
                have_strategy = true;
            }
            out.records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(i + 1, e.what());
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(i + 1, e.what());
        }
    }
    auto ledger_path = path;
    ledger_path += ".ledger.json";
    if (std::filesystem::exists(ledger_path)) {
        out.ledger = ledger_from_json(json::parse(read_file(ledger_path)).at("ledger"));
    } else {
        out.ledger.total = out.records.size();
    }
    return out;
}

}  // namespace modforge
