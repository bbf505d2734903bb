#include "modforge/category.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"

namespace modforge {

std::vector<Category> LabelSet::members() const {
    std::vector<Category> out;
    for (std::size_t i = 0; i < kMaxCategories; ++i) {
        if (bits_.test(i)) out.push_back(Category{static_cast<std::uint8_t>(i)});
    }
    return out;
}

namespace {

bool is_trim_char(unsigned char ch) {
    return std::isspace(ch) || ch == '"' || ch == '\'' || ch == '#' || ch == '[' ||
           ch == ']' || ch == '*' || ch == '`' || ch == '<' || ch == '>' || ch == '(' ||
           ch == ')';
}

std::vector<CategoryInfo> standard_infos() {
    return {
        {"PoliticalHarmful", "Political Harmful",
         {"political harmful", "politicalharmful", "political", "politics", "political harm",
          "政治", "涉政", "政治有害"}},
        {"Pornography", "Pornography",
         {"pornography", "porno", "porn", "pornographic", "色情"}},
        {"Violence", "Violence", {"violence", "violent", "暴力"}},
        {"Offensive", "Discrimination or Insult",
         {"offensive", "offen.", "discrimination or insult", "discrimination", "insult",
          "歧视", "辱骂", "歧视或辱骂", "歧视辱骂"}},
        {"Gambling", "Gambling", {"gambling", "gamb.", "赌博"}},
        {"Harmless", "Harmless", {"harmless", "harml.", "无害", "正常"}},
    };
}

}  // namespace

std::string normalize_token(std::string_view token) {
    std::size_t begin = 0;
    std::size_t end = token.size();
    while (begin < end && is_trim_char(static_cast<unsigned char>(token[begin]))) ++begin;
    while (end > begin) {
        unsigned char ch = static_cast<unsigned char>(token[end - 1]);
        if (is_trim_char(ch) || ch == '.' || ch == '!' || ch == ';' || ch == ':') {
            --end;
            continue;
        }
        // Full-width period / comma / colon (U+3002, U+FF0C, U+FF1A).
        if (end - begin >= 3) {
            std::string_view tail = token.substr(end - 3, 3);
            if (tail == "\xE3\x80\x82" || tail == "\xEF\xBC\x8C" || tail == "\xEF\xBC\x9A") {
                end -= 3;
                continue;
            }
        }
        break;
    }
    std::string out;
    out.reserve(end - begin);
    bool prev_space = false;
    for (std::size_t i = begin; i < end; ++i) {
        unsigned char ch = static_cast<unsigned char>(token[i]);
        if (std::isspace(ch)) {
            if (!prev_space) out.push_back(' ');
            prev_space = true;
            continue;
        }
        prev_space = false;
        out.push_back(static_cast<char>(std::tolower(ch)));
    }
    return out;
}

const Taxonomy& Taxonomy::standard() {
    static const Taxonomy instance(standard_infos());
    return instance;
}

Taxonomy Taxonomy::extended(const std::vector<CategoryInfo>& extra) {
    auto infos = standard_infos();
    infos.insert(infos.end(), extra.begin(), extra.end());
    return Taxonomy(std::move(infos));
}

Taxonomy::Taxonomy(std::vector<CategoryInfo> infos) : infos_(std::move(infos)) {
    if (infos_.empty() || infos_.size() > kMaxCategories) {
        throw Error(ErrorCode::InvalidArgument, "taxonomy size out of range");
    }
    for (std::size_t i = 0; i < infos_.size(); ++i) {
        Category c{static_cast<std::uint8_t>(i)};
        auto& info = infos_[i];
        if (!canonical_index_.emplace(info.canonical, c).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate category name " + info.canonical);
        }
        index_alias(info.canonical, c);
        index_alias(info.display, c);
        for (const auto& alias : info.aliases) index_alias(alias, c);
    }
}

void Taxonomy::index_alias(const std::string& alias, Category c) {
    auto key = normalize_token(alias);
    if (key.empty()) return;
    auto [it, inserted] = alias_index_.emplace(key, c);
    if (!inserted && it->second != c) {
        throw Error(ErrorCode::InvalidArgument,
                    "alias '" + alias + "' maps to both " + infos_[it->second.id].canonical +
                        " and " + infos_[c.id].canonical);
    }
}

const CategoryInfo& Taxonomy::info(Category c) const {
    if (c.id >= infos_.size()) {
        throw Error(ErrorCode::InvalidLabel, "category id " + std::to_string(c.id));
    }
    return infos_[c.id];
}

std::vector<Category> Taxonomy::all() const {
    std::vector<Category> out;
    for (std::size_t i = 0; i < infos_.size(); ++i) {
        out.push_back(Category{static_cast<std::uint8_t>(i)});
    }
    return out;
}

std::optional<Category> Taxonomy::from_canonical(std::string_view name) const {
    auto it = canonical_index_.find(name);
    if (it == canonical_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<Category> Taxonomy::from_alias(std::string_view token) const {
    auto it = alias_index_.find(normalize_token(token));
    if (it == alias_index_.end()) return std::nullopt;
    return it->second;
}

void Taxonomy::merge_aliases(const nlohmann::json& table) {
    if (!table.is_object()) {
        throw Error(ErrorCode::InvalidArgument, "alias table must be a JSON object");
    }
    for (const auto& [name, aliases] : table.items()) {
        auto c = from_canonical(name);
        if (!c) throw Error(ErrorCode::InvalidLabel, name);
        for (const auto& alias : aliases) {
            auto text = alias.get<std::string>();
            index_alias(text, *c);
            infos_[c->id].aliases.push_back(text);
        }
    }
}

std::string Taxonomy::join_canonical(const LabelSet& labels) const {
    std::string out;
    for (auto c : labels.members()) {
        if (!out.empty()) out += ", ";
        out += canonical_name(c);
    }
    return out;
}

std::string Taxonomy::join_display(const LabelSet& labels) const {
    std::string out;
    for (auto c : labels.members()) {
        if (!out.empty()) out += ", ";
        out += display_name(c);
    }
    return out;
}

LabelSet Taxonomy::parse_canonical_list(const std::vector<std::string>& names) const {
    LabelSet out;
    for (const auto& name : names) {
        auto c = from_canonical(name);
        if (!c) throw Error(ErrorCode::InvalidLabel, name);
        out.insert(*c);
    }
    return out;
}

void validate_label_set(const LabelSet& labels, const Taxonomy& taxonomy) {
    if (labels.empty()) throw Error(ErrorCode::InvalidLabel, "empty label set");
    if (labels.contains(cat::kHarmless) && labels.size() > 1) {
        throw Error(ErrorCode::InvalidLabel,
                    "Harmless cannot be combined with harmful labels: " +
                        taxonomy.join_canonical(labels));
    }
}

bool contains_harmful(const LabelSet& labels) {
    return std::ranges::any_of(labels.members(), &Taxonomy::is_harmful);
}

}  // namespace modforge
