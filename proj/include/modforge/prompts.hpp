#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modforge/category.hpp"
#include "modforge/chat.hpp"

namespace modforge {

struct ProviderResponse;

enum class PromptKind { Classification, ClassificationWithCot, SelfCheck, Repair, Augment };

const char* to_string(PromptKind kind);

/// Extra inputs some prompt kinds need.
struct PromptContext {
    /// SelfCheck: the first-pass exchange and the assistant's reply to it.
    std::optional<ChatExchange> prior_exchange;
    std::optional<std::string> prior_reply;
    /// Repair: the base model's full reply.
    std::optional<std::string> assistant_answer;
    /// Augment: category to generate; optional batch marker sent as a system turn.
    std::optional<Category> harm_type;
    std::optional<std::string> batch_note;
};

/// Template text per kind with `{sentence}`, `{categories}`,
/// `{assistant_answer}`, `{harm_type}` and `{instruction}` placeholders.
class PromptTemplates {
public:
    /// Built-in templates (compiled from resources/templates).
    explicit PromptTemplates(const Taxonomy& taxonomy = Taxonomy::standard());

    /// Overrides any template whose file exists in `dir` (classification.txt,
    /// classification_cot.txt, self_check.txt, repair.txt, augment.txt,
    /// augment_instruction.txt, shortcut_analysis.txt).
    void load_overrides(const std::filesystem::path& dir);

    void set(const std::string& name, std::string text);
    const std::string& get(const std::string& name) const;
    const std::string& version() const { return version_; }
    const Taxonomy& taxonomy() const { return *taxonomy_; }

    /// "Political Harmful, Pornography, ..." in taxonomy order.
    std::string category_list() const;

    /// Builds the exchange for `kind`. The sample text is inserted verbatim.
    /// Throws MissingContext when `extra` lacks a field the kind needs.
    ChatExchange render(PromptKind kind, const std::string& sample_text,
                        const PromptContext& extra = {}) const;

    /// Replaces every `{key}` with its value; unknown placeholders stay.
    static std::string substitute(std::string text,
                                  const std::map<std::string, std::string>& values);

private:
    const Taxonomy* taxonomy_;
    std::string version_;
    std::map<std::string, std::string> texts_;
};

struct ParsedResponse {
    std::optional<std::string> reason;
    std::optional<std::string> harmful_info;
    LabelSet predicted;
    std::vector<std::string> parse_warnings;
};

/// Extracts the analysis / harmful-information / classification sections.
/// Headers are matched case-insensitively in English or Chinese with optional
/// colons. Throws NoClassificationFound, UnknownCategoryToken, or
/// MissingSection (reasoning kinds without an analysis section).
ParsedResponse parse_response(const std::string& raw, PromptKind kind,
                              const Taxonomy& taxonomy = Taxonomy::standard());

/// Accounting for a provider refusal: harmful weak labels are kept as the
/// prediction (counted as a detection); a refusal on a Harmless sample becomes
/// an Offensive prediction. Throws PreconditionViolated if not filtered.
ParsedResponse filtered_to_parsed(const ProviderResponse& resp, const LabelSet& weak_labels);

/// "Analysis process: ...\nHarmful information: ...\nClassification results: ..."
std::string format_cot_response(const std::string& reason, const std::string& harmful_info,
                                const LabelSet& labels,
                                const Taxonomy& taxonomy = Taxonomy::standard());

/// "Classification results: ..."
std::string format_classification(const LabelSet& labels,
                                  const Taxonomy& taxonomy = Taxonomy::standard());

inline constexpr const char* kFilteredWarning = "provider-filtered counted as detection";

}  // namespace modforge
