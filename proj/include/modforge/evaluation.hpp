#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modforge/corpus.hpp"
#include "modforge/gateway.hpp"
#include "modforge/prompts.hpp"

namespace modforge {

struct PredictionPair {
    std::string sample_id;
    LabelSet gold;
    LabelSet predicted;
    bool filtered = false;
    std::string reason;  // model reasoning when evaluated with CoT
};

/// Percentages in [0, 100], rounded half-up to one decimal.
struct CategoryMetrics {
    Category category{};
    std::string name;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;  // (TP + TN) / N, one-vs-rest
};

struct AverageMetrics {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

/// Per-category one-vs-rest scores plus two averages:
///  - `average`: counts pooled over the categories (sum TP / sum gold,
///    sum TP / sum predicted, F1 of those two). This is the table "Average"
///    column; with equal per-category support its recall equals the mean of
///    the per-category recalls.
///  - `unweighted`: plain mean of the per-category percentages.
struct EvalReport {
    std::string split;
    std::size_t samples = 0;
    std::vector<CategoryMetrics> per_category;
    AverageMetrics average;
    AverageMetrics unweighted;
};

struct BinaryOodReport {
    Category positive{};
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    double negative_recall = 0.0;
    double false_negative_rate = 0.0;  // 100 - recall
};

/// Rounds half-up to one decimal place.
double round1(double value);

/// 100 * num / den rounded half-up to one decimal using integer arithmetic;
/// 0 when den == 0.
double percent1(std::size_t num, std::size_t den);

/// Harmonic mean of two percentages; 0 when both are 0.
double f1_from(double precision, double recall);

/// Throws EmptyInput.
EvalReport score_multicategory(const std::vector<PredictionPair>& pairs,
                               const std::vector<Category>& categories,
                               const Taxonomy& taxonomy = Taxonomy::standard(),
                               std::string split = "test");

/// Positive iff the prediction contains any harmful category. Throws
/// InvalidGold when a gold set is neither {positive} nor {Harmless}, and
/// EmptyInput.
BinaryOodReport score_binary_ood(const std::vector<PredictionPair>& pairs, Category positive);

struct EvalRun {
    std::vector<PredictionPair> pairs;
    std::size_t provider_failures = 0;
    std::size_t parse_failures = 0;
    std::size_t filtered = 0;
};

/// Queries the model under test for every sample. Refusals go through
/// filtered_to_parsed; transport or parse failures become an Offensive
/// placeholder prediction.
EvalRun run_model_eval(const Dataset& test, Gateway& gateway, const ProviderHandle& provider,
                       bool with_cot, const PromptTemplates& templates, std::size_t workers = 0);

struct MetricDelta {
    std::string name;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

struct ReportDelta {
    std::vector<MetricDelta> per_category;
    MetricDelta average;
    MetricDelta unweighted;
};

/// Signed deltas b - a, rounded to one decimal. Throws CategoryMismatch.
ReportDelta compare_reports(const EvalReport& a, const EvalReport& b);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const BinaryOodReport& report, const Taxonomy& taxonomy);
nlohmann::json to_json(const ReportDelta& delta);

/// Plain-text table: one column per category plus Average; rows Recall,
/// Precision, F1 Score, and optionally per-category Accuracy.
std::string format_report_table(const EvalReport& report, bool with_accuracy = false);
/// category,tp,fp,fn,tn,recall,precision,f1,accuracy rows plus an average row.
std::string format_report_csv(const EvalReport& report);

}  // namespace modforge
