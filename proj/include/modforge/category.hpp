#pragma once

#include <bitset>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace modforge {

/// Index of a category inside a Taxonomy. The six moderation categories have
/// fixed ids; extended taxonomies append after them.
struct Category {
    std::uint8_t id = 0;

    friend constexpr bool operator==(Category, Category) = default;
    friend constexpr auto operator<=>(Category, Category) = default;
};

namespace cat {
inline constexpr Category kPolitical{0};
inline constexpr Category kPornography{1};
inline constexpr Category kViolence{2};
inline constexpr Category kOffensive{3};
inline constexpr Category kGambling{4};
inline constexpr Category kHarmless{5};
inline constexpr std::size_t kStandardCount = 6;
}  // namespace cat

inline constexpr std::size_t kMaxCategories = 64;

/// Set of categories. Iteration order is ascending id, which makes every
/// rendering of a LabelSet deterministic.
class LabelSet {
public:
    LabelSet() = default;
    LabelSet(std::initializer_list<Category> cats) {
        for (auto c : cats) insert(c);
    }

    void insert(Category c) { bits_.set(c.id); }
    void erase(Category c) { bits_.reset(c.id); }
    bool contains(Category c) const { return bits_.test(c.id); }
    bool empty() const { return bits_.none(); }
    std::size_t size() const { return bits_.count(); }

    /// True when every member is also in `other`.
    bool subset_of(const LabelSet& other) const { return (bits_ & ~other.bits_).none(); }

    std::vector<Category> members() const;

    friend bool operator==(const LabelSet&, const LabelSet&) = default;

private:
    std::bitset<kMaxCategories> bits_;
};

struct CategoryInfo {
    std::string canonical;  // on-disk name, e.g. "PoliticalHarmful"
    std::string display;    // model-facing name, e.g. "Political Harmful"
    std::vector<std::string> aliases;
};

/// The registry of category names and aliases used for loading data and for
/// mapping free-form model output back to categories.
class Taxonomy {
public:
    /// The six moderation categories with English, abbreviated and Chinese aliases.
    static const Taxonomy& standard();

    /// Extends a copy of the standard taxonomy with extra categories
    /// (zero-shot evaluation).
    static Taxonomy extended(const std::vector<CategoryInfo>& extra);

    explicit Taxonomy(std::vector<CategoryInfo> infos);

    std::size_t size() const { return infos_.size(); }
    const CategoryInfo& info(Category c) const;
    const std::string& canonical_name(Category c) const { return info(c).canonical; }
    const std::string& display_name(Category c) const { return info(c).display; }
    std::vector<Category> all() const;

    /// Canonical name lookup (exact, case-sensitive); used by loaders.
    std::optional<Category> from_canonical(std::string_view name) const;

    /// Alias lookup over normalized tokens (case-folded, trimmed, trailing
    /// period ignored); used by the response parser.
    std::optional<Category> from_alias(std::string_view token) const;

    /// Adds aliases from a JSON object `{"Pornography": ["porno", ...], ...}`.
    /// Throws InvalidLabel for unknown keys and InvalidArgument when an alias
    /// would map to two categories.
    void merge_aliases(const nlohmann::json& table);

    /// Harmless is only meaningful for the standard ids; extended categories
    /// are all treated as harmful.
    static bool is_harmful(Category c) { return c != cat::kHarmless; }

    /// Canonical names joined with ", " in id order.
    std::string join_canonical(const LabelSet& labels) const;
    /// Display names joined with ", " in id order.
    std::string join_display(const LabelSet& labels) const;

    LabelSet parse_canonical_list(const std::vector<std::string>& names) const;

private:
    void index_alias(const std::string& alias, Category c);

    std::vector<CategoryInfo> infos_;
    std::map<std::string, Category, std::less<>> canonical_index_;
    std::map<std::string, Category, std::less<>> alias_index_;
};

/// Lower-cases ASCII, trims whitespace, quotes and trailing punctuation.
std::string normalize_token(std::string_view token);

/// Throws InvalidLabel if the set is empty or mixes Harmless with harmful classes.
void validate_label_set(const LabelSet& labels, const Taxonomy& taxonomy);

bool contains_harmful(const LabelSet& labels);

}  // namespace modforge
