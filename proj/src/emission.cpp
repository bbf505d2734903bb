#include "modforge/emission.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/io.hpp"

namespace modforge {

using nlohmann::json;
using nlohmann::ordered_json;

SftShape shape_from_string(std::string_view name) {
    if (name == "messages") return SftShape::Messages;
    if (name == "flat") return SftShape::Flat;
    throw Error(ErrorCode::InvalidArgument, "unknown shape '" + std::string(name) + "'");
}

std::vector<SftRecord> build_sft(const CuratedDataset& curated, bool with_cot,
                                 const PromptTemplates& templates) {
    const auto& taxonomy = templates.taxonomy();
    const auto kind = with_cot ? PromptKind::ClassificationWithCot : PromptKind::Classification;
    std::vector<SftRecord> out;
    out.reserve(curated.records.size());
    for (const auto& r : curated.records) {
        SftRecord s;
        s.query = templates.render(kind, r.text).last_user();
        s.response = with_cot ? format_cot_response(r.reason, r.harmful_info, r.predicted, taxonomy)
                              : format_classification(r.predicted, taxonomy);
        s.sample_id = r.sample_id;
        s.strategy = curated.strategy;
        s.with_cot = with_cot;
        s.labels = r.predicted;
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    return out;
}

std::string sft_to_jsonl(const std::vector<SftRecord>& records, SftShape shape,
                         const Taxonomy& taxonomy) {
    std::string out;
    for (const auto& r : records) {
        ordered_json j;
        if (shape == SftShape::Messages) {
            j["messages"] = ordered_json::array({
                ordered_json{{"role", "user"}, {"content", r.query}},
                ordered_json{{"role", "assistant"}, {"content", r.response}},
            });
        } else {
            j["query"] = r.query;
            j["response"] = r.response;
        }
        auto labels = ordered_json::array();
        for (auto c : r.labels.members()) labels.push_back(taxonomy.canonical_name(c));
        j["meta"] = ordered_json{{"sample_id", r.sample_id},
                                 {"strategy", to_string(r.strategy)},
                                 {"with_cot", r.with_cot},
                                 {"labels", std::move(labels)}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

EmissionReport emit_sft(const CuratedDataset& curated, bool with_cot, SftShape shape,
                        const std::filesystem::path& out, const PromptTemplates& templates) {
    if (curated.records.empty()) throw Error(ErrorCode::EmptyDataset, "no curated records to emit");
    auto body = sft_to_jsonl(build_sft(curated, with_cot, templates), shape, templates.taxonomy());
    try {
        write_file_atomic(out, body);
    } catch (const std::filesystem::filesystem_error& e) {
        throw Error(ErrorCode::IoError, e.what());
    }
    return {curated.records.size(), body.size()};
}

RoundtripResult roundtrip_check(const std::filesystem::path& path, const Taxonomy& taxonomy) {
    RoundtripResult result;
    auto lines = split_lines(read_file(path));
    auto fail = [&](std::size_t line, std::string message) {
        result.ok = false;
        result.bad_line = line;
        result.message = std::move(message);
        return result;
    };
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto lineno = i + 1;
        ++result.records;
        try {
            auto j = json::parse(lines[i]);
            std::string response;
            if (j.contains("messages")) {
                const auto& msgs = j.at("messages");
                if (msgs.empty() || msgs.back().at("role") != "assistant") {
                    return fail(lineno, "last message is not from the assistant");
                }
                response = msgs.back().at("content").get<std::string>();
            } else {
                response = j.at("response").get<std::string>();
            }
            const auto& meta = j.at("meta");
            const bool with_cot = meta.at("with_cot").get<bool>();
            auto expected =
                taxonomy.parse_canonical_list(meta.at("labels").get<std::vector<std::string>>());
            auto parsed = parse_response(
                response, with_cot ? PromptKind::ClassificationWithCot : PromptKind::Classification,
                taxonomy);
            if (!(parsed.predicted == expected)) {
                return fail(lineno, "labels differ: parsed '" + taxonomy.join_canonical(parsed.predicted) +
                                        "' stored '" + taxonomy.join_canonical(expected) + "'");
            }
        } catch (const std::exception& e) {
            return fail(lineno, e.what());
        }
    }
    if (result.records == 0) throw Error(ErrorCode::EmptyDataset, path.string() + " has no records");
    return result;
}

}  // namespace modforge
