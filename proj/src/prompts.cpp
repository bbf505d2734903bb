#include "modforge/prompts.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "modforge/default_templates.hpp"
#include "modforge/error.hpp"
#include "modforge/gateway.hpp"
#include "modforge/io.hpp"

namespace modforge {

const char* to_string(PromptKind kind) {
    switch (kind) {
        case PromptKind::Classification:
            return "classification";
        case PromptKind::ClassificationWithCot:
            return "classification_cot";
        case PromptKind::SelfCheck:
            return "self_check";
        case PromptKind::Repair:
            return "repair";
        case PromptKind::Augment:
            return "augment";
    }
    return "classification";
}

// ---------------------------------------------------------------- rendering

PromptTemplates::PromptTemplates(const Taxonomy& taxonomy)
    : taxonomy_(&taxonomy), version_(default_templates::kVersion) {
    texts_["classification"] = default_templates::classification;
    texts_["classification_cot"] = default_templates::classification_cot;
    texts_["self_check"] = default_templates::self_check;
    texts_["repair"] = default_templates::repair;
    texts_["augment"] = default_templates::augment;
    texts_["augment_instruction"] = default_templates::augment_instruction;
    texts_["shortcut_analysis"] = default_templates::shortcut_analysis;
}

void PromptTemplates::load_overrides(const std::filesystem::path& dir) {
    bool any = false;
    for (auto& [name, text] : texts_) {
        auto path = dir / (name + ".txt");
        if (std::filesystem::exists(path)) {
            auto content = read_file(path);
            while (!content.empty() && (content.back() == '\n' || content.back() == '\r')) {
                content.pop_back();
            }
            text = std::move(content);
            any = true;
        }
    }
    if (any) version_ += "+" + dir.filename().string();
}

void PromptTemplates::set(const std::string& name, std::string text) {
    if (!texts_.count(name)) throw Error(ErrorCode::InvalidArgument, "unknown template " + name);
    texts_[name] = std::move(text);
    version_ = std::string(default_templates::kVersion) + "+custom";
}

const std::string& PromptTemplates::get(const std::string& name) const {
    auto it = texts_.find(name);
    if (it == texts_.end()) throw Error(ErrorCode::InvalidArgument, "unknown template " + name);
    return it->second;
}

std::string PromptTemplates::category_list() const {
    std::string out;
    for (auto c : taxonomy_->all()) {
        if (!out.empty()) out += ", ";
        out += taxonomy_->display_name(c);
    }
    return out;
}

std::string PromptTemplates::substitute(std::string text,
                                        const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            auto close = text.find('}', i + 1);
            if (close != std::string::npos) {
                auto key = text.substr(i + 1, close - i - 1);
                if (auto it = values.find(key); it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(text[i++]);
    }
    return out;
}

ChatExchange PromptTemplates::render(PromptKind kind, const std::string& sample_text,
                                     const PromptContext& extra) const {
    std::map<std::string, std::string> values{{"sentence", sample_text},
                                              {"categories", category_list()}};
    switch (kind) {
        case PromptKind::Classification:
            return ChatExchange::single_user(substitute(get("classification"), values));
        case PromptKind::ClassificationWithCot:
            return ChatExchange::single_user(substitute(get("classification_cot"), values));
        case PromptKind::SelfCheck: {
            if (!extra.prior_exchange) {
                throw Error(ErrorCode::MissingContext, "self_check: prior_exchange");
            }
            if (!extra.prior_reply) throw Error(ErrorCode::MissingContext, "self_check: prior_reply");
            ChatExchange ex = *extra.prior_exchange;
            ex.append(Role::Assistant, *extra.prior_reply);
            ex.append(Role::User, substitute(get("self_check"), values));
            return ex;
        }
        case PromptKind::Repair:
            if (!extra.assistant_answer) {
                throw Error(ErrorCode::MissingContext, "repair: assistant_answer");
            }
            values["assistant_answer"] = *extra.assistant_answer;
            return ChatExchange::single_user(substitute(get("repair"), values));
        case PromptKind::Augment: {
            if (!extra.harm_type) throw Error(ErrorCode::MissingContext, "augment: harm_type");
            values["harm_type"] = taxonomy_->display_name(*extra.harm_type);
            values["instruction"] = get("augment_instruction");
            std::vector<ChatTurn> turns;
            if (extra.batch_note) turns.push_back({Role::System, *extra.batch_note});
            turns.push_back({Role::User, substitute(get("augment"), values)});
            return ChatExchange(std::move(turns));
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown prompt kind");
}

// ---------------------------------------------------------------- parsing

namespace {

enum class Section { Reason, Harmful, Classification };

struct HeaderAlias {
    std::string_view text;  // lower-case
    Section section;
    bool allow_without_colon;
};

// Longer aliases first so "classification results" wins over "classification".
constexpr std::array kHeaders{
    HeaderAlias{"classification results", Section::Classification, true},
    HeaderAlias{"classification result", Section::Classification, true},
    HeaderAlias{"classification", Section::Classification, false},
    HeaderAlias{"分类结果", Section::Classification, true},
    HeaderAlias{"harmful information", Section::Harmful, true},
    HeaderAlias{"harmful info", Section::Harmful, false},
    HeaderAlias{"harmful content", Section::Harmful, false},
    HeaderAlias{"有害信息", Section::Harmful, true},
    HeaderAlias{"analysis process", Section::Reason, true},
    HeaderAlias{"analysis", Section::Reason, false},
    HeaderAlias{"reasoning", Section::Reason, false},
    HeaderAlias{"reason", Section::Reason, false},
    HeaderAlias{"分析过程", Section::Reason, true},
};

struct HeaderMatch {
    std::size_t start;
    std::size_t content_start;
    Section section;
};

bool is_word_byte(unsigned char ch) { return std::isalnum(ch) || ch == '_'; }

bool at_line_start(const std::string& s, std::size_t pos) {
    while (pos > 0) {
        const char ch = s[pos - 1];
        if (ch == '\n') return true;
        if (ch == ' ' || ch == '\t' || ch == '*' || ch == '#' || ch == '-' || ch == '>') {
            --pos;
            continue;
        }
        return false;
    }
    return true;
}

std::vector<HeaderMatch> find_headers(const std::string& low) {
    std::vector<HeaderMatch> found;
    for (const auto& h : kHeaders) {
        const bool ascii = static_cast<unsigned char>(h.text.front()) < 0x80;
        std::size_t pos = 0;
        while ((pos = low.find(h.text, pos)) != std::string::npos) {
            const std::size_t start = pos;
            pos += h.text.size();
            if (ascii) {
                if (start > 0 && is_word_byte(static_cast<unsigned char>(low[start - 1]))) continue;
                if (pos < low.size() && is_word_byte(static_cast<unsigned char>(low[pos]))) continue;
            }
            std::size_t cur = pos;
            while (cur < low.size() &&
                   (low[cur] == ' ' || low[cur] == '\t' || low[cur] == '\'' || low[cur] == '"' ||
                    low[cur] == '*')) {
                ++cur;
            }
            if (cur < low.size() && low[cur] == ':') {
                found.push_back({start, cur + 1, h.section});
            } else if (low.compare(cur, 3, "\xEF\xBC\x9A") == 0) {  // full-width colon
                found.push_back({start, cur + 3, h.section});
            } else if (h.allow_without_colon && at_line_start(low, start)) {
                found.push_back({start, cur, h.section});
            }
        }
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        return a.start != b.start ? a.start < b.start : a.content_start > b.content_start;
    });
    std::vector<HeaderMatch> kept;
    for (const auto& m : found) {
        if (!kept.empty() && m.start < kept.back().content_start) continue;
        kept.push_back(m);
    }
    return kept;
}

std::string strip_value(std::string_view s) {
    auto t = trim(s);
    // Drop enclosing markers such as #...#, "...", [...], **...**.
    auto is_marker = [](char ch) {
        return ch == '#' || ch == '"' || ch == '\'' || ch == '*' || ch == '`' || ch == '[' ||
               ch == ']' || ch == '<' || ch == '>';
    };
    std::size_t b = 0, e = t.size();
    while (b < e && (is_marker(t[b]) || std::isspace(static_cast<unsigned char>(t[b])))) ++b;
    while (e > b && (is_marker(t[e - 1]) || std::isspace(static_cast<unsigned char>(t[e - 1])))) --e;
    return t.substr(b, e - b);
}

std::vector<std::string> split_label_tokens(const std::string& value) {
    static const std::array<std::string_view, 9> kSeparators{
        ",", ";", "/", "|", "&", "\xEF\xBC\x8C" /* ， */, "\xE3\x80\x81" /* 、 */,
        "\xEF\xBC\x9B" /* ； */, "\xE5\x92\x8C" /* 和 */};
    std::vector<std::string> tokens;
    std::string cur;
    std::size_t i = 0;
    while (i < value.size()) {
        bool split = false;
        for (auto sep : kSeparators) {
            if (value.compare(i, sep.size(), sep) == 0) {
                tokens.push_back(cur);
                cur.clear();
                i += sep.size();
                split = true;
                break;
            }
        }
        if (split) continue;
        // " and " as a word separator, case-insensitive.
        if (i + 5 <= value.size() && value[i] == ' ' &&
            std::tolower(static_cast<unsigned char>(value[i + 1])) == 'a' &&
            std::tolower(static_cast<unsigned char>(value[i + 2])) == 'n' &&
            std::tolower(static_cast<unsigned char>(value[i + 3])) == 'd' && value[i + 4] == ' ') {
            tokens.push_back(cur);
            cur.clear();
            i += 5;
            continue;
        }
        cur.push_back(value[i++]);
    }
    tokens.push_back(cur);
    std::vector<std::string> out;
    for (auto& t : tokens) {
        if (auto s = strip_value(t); !s.empty()) out.push_back(std::move(s));
    }
    return out;
}

bool requires_reason(PromptKind kind) {
    return kind == PromptKind::ClassificationWithCot || kind == PromptKind::SelfCheck ||
           kind == PromptKind::Repair;
}

}  // namespace

ParsedResponse parse_response(const std::string& raw, PromptKind kind, const Taxonomy& taxonomy) {
    if (trim(raw).empty()) throw Error(ErrorCode::NoClassificationFound, "empty response");
    std::string low = raw;
    for (auto& ch : low) {
        if (static_cast<unsigned char>(ch) < 0x80) {
            ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    const auto headers = find_headers(low);

    ParsedResponse out;
    std::optional<std::string> classification;
    for (std::size_t i = 0; i < headers.size(); ++i) {
        const auto end = i + 1 < headers.size() ? headers[i + 1].start : raw.size();
        auto content = trim(std::string_view(raw).substr(headers[i].content_start,
                                                         end - headers[i].content_start));
        if (content.empty()) continue;
        switch (headers[i].section) {
            case Section::Reason:
                if (!out.reason) out.reason = std::move(content);
                break;
            case Section::Harmful:
                if (!out.harmful_info) out.harmful_info = std::move(content);
                break;
            case Section::Classification:
                classification = std::move(content);  // last one wins
                break;
        }
    }
    if (!classification) throw Error(ErrorCode::NoClassificationFound, "no classification section");

    // The label is on the first line of the section.
    auto nl = classification->find('\n');
    auto value = strip_value(classification->substr(0, nl));
    if (nl != std::string::npos && trim(classification->substr(nl)).size() > 0) {
        out.parse_warnings.push_back("trailing text after classification line ignored");
    }
    std::vector<std::string> unknown;
    for (const auto& token : split_label_tokens(value)) {
        if (auto c = taxonomy.from_alias(token)) {
            out.predicted.insert(*c);
        } else {
            unknown.push_back(token);
        }
    }
    if (out.predicted.empty()) {
        if (unknown.empty()) throw Error(ErrorCode::NoClassificationFound, "empty classification");
        throw Error(ErrorCode::UnknownCategoryToken, unknown.front());
    }
    for (const auto& t : unknown) out.parse_warnings.push_back("unknown category token '" + t + "'");
    if (out.predicted.contains(cat::kHarmless) && out.predicted.size() > 1) {
        out.predicted.erase(cat::kHarmless);
        out.parse_warnings.push_back("Harmless listed alongside harmful categories; dropped");
    }
    if (requires_reason(kind) && !out.reason) {
        throw Error(ErrorCode::MissingSection, std::string(to_string(kind)) + ": analysis process");
    }
    if (requires_reason(kind) && !out.harmful_info) {
        out.parse_warnings.push_back("missing harmful information section");
    }
    return out;
}

ParsedResponse filtered_to_parsed(const ProviderResponse& resp, const LabelSet& weak_labels) {
    if (!resp.filtered) {
        throw Error(ErrorCode::PreconditionViolated, "filtered_to_parsed on unfiltered response");
    }
    ParsedResponse out;
    if (contains_harmful(weak_labels)) {
        out.predicted = weak_labels;
        out.parse_warnings.push_back(kFilteredWarning);
    } else {
        out.predicted = LabelSet{cat::kOffensive};
        out.parse_warnings.push_back(
            "provider-filtered on harmless sample counted as harmful prediction");
    }
    return out;
}

std::string format_classification(const LabelSet& labels, const Taxonomy& taxonomy) {
    return "Classification results: " + taxonomy.join_display(labels);
}

std::string format_cot_response(const std::string& reason, const std::string& harmful_info,
                                const LabelSet& labels, const Taxonomy& taxonomy) {
    return "Analysis process: " + reason + "\nHarmful information: " + harmful_info + "\n" +
           format_classification(labels, taxonomy);
}

}  // namespace modforge
