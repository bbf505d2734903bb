#include "modforge/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/worker_pool.hpp"

namespace modforge {

using nlohmann::ordered_json;

double round1(double value) {
    // The epsilon absorbs binary representation error on exact .x5 ties.
    return std::floor(value * 10.0 + 0.5 + 1e-9) / 10.0;
}

double percent1(std::size_t num, std::size_t den) {
    if (den == 0) return 0.0;
    // tenths = floor((1000 * num + den / 2) / den), computed exactly as
    // floor((2000 * num + den) / (2 * den)).
    const auto tenths = (2000ULL * num + den) / (2ULL * den);
    return static_cast<double>(tenths) / 10.0;
}

double f1_from(double precision, double recall) {
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

EvalReport score_multicategory(const std::vector<PredictionPair>& pairs,
                               const std::vector<Category>& categories, const Taxonomy& taxonomy,
                               std::string split) {
    if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no prediction pairs");
    EvalReport report;
    report.split = std::move(split);
    report.samples = pairs.size();

    std::size_t sum_tp = 0, sum_fp = 0, sum_fn = 0;
    double mean_r = 0.0, mean_p = 0.0, mean_f = 0.0;
    for (auto c : categories) {
        CategoryMetrics m;
        m.category = c;
        m.name = taxonomy.canonical_name(c);
        for (const auto& p : pairs) {
            const bool g = p.gold.contains(c);
            const bool y = p.predicted.contains(c);
            if (g && y) ++m.tp;
            else if (!g && y) ++m.fp;
            else if (g && !y) ++m.fn;
            else ++m.tn;
        }
        m.recall = percent1(m.tp, m.tp + m.fn);
        m.precision = percent1(m.tp, m.tp + m.fp);
        // 2PR/(P+R) with P and R taken from counts is exactly 2TP/(2TP+FP+FN).
        m.f1 = percent1(2 * m.tp, 2 * m.tp + m.fp + m.fn);
        m.accuracy = percent1(m.tp + m.tn, pairs.size());

        const double r_raw = m.tp + m.fn ? 100.0 * m.tp / (m.tp + m.fn) : 0.0;
        const double p_raw = m.tp + m.fp ? 100.0 * m.tp / (m.tp + m.fp) : 0.0;
        mean_r += r_raw;
        mean_p += p_raw;
        mean_f += f1_from(p_raw, r_raw);
        sum_tp += m.tp;
        sum_fp += m.fp;
        sum_fn += m.fn;
        report.per_category.push_back(std::move(m));
    }
    report.average.recall = percent1(sum_tp, sum_tp + sum_fn);
    report.average.precision = percent1(sum_tp, sum_tp + sum_fp);
    report.average.f1 = percent1(2 * sum_tp, 2 * sum_tp + sum_fp + sum_fn);
    if (!categories.empty()) {
        const double n = static_cast<double>(categories.size());
        report.unweighted = {round1(mean_r / n), round1(mean_p / n), round1(mean_f / n)};
    }
    return report;
}

BinaryOodReport score_binary_ood(const std::vector<PredictionPair>& pairs, Category positive) {
    if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no prediction pairs");
    BinaryOodReport r;
    r.positive = positive;
    for (const auto& p : pairs) {
        bool gold_positive;
        if (p.gold == LabelSet{positive}) {
            gold_positive = true;
        } else if (p.gold == LabelSet{cat::kHarmless}) {
            gold_positive = false;
        } else {
            throw Error(ErrorCode::InvalidGold, p.sample_id);
        }
        const bool pred_positive = contains_harmful(p.predicted);
        if (gold_positive && pred_positive) ++r.tp;
        else if (!gold_positive && pred_positive) ++r.fp;
        else if (gold_positive) ++r.fn;
        else ++r.tn;
    }
    r.recall = percent1(r.tp, r.tp + r.fn);
    r.precision = percent1(r.tp, r.tp + r.fp);
    r.f1 = percent1(2 * r.tp, 2 * r.tp + r.fp + r.fn);
    r.negative_recall = percent1(r.tn, r.tn + r.fp);
    r.false_negative_rate = r.tp + r.fn ? round1(100.0 - r.recall) : 0.0;
    return r;
}

EvalRun run_model_eval(const Dataset& test, Gateway& gateway, const ProviderHandle& provider,
                       bool with_cot, const PromptTemplates& templates, std::size_t workers) {
    const auto kind = with_cot ? PromptKind::ClassificationWithCot : PromptKind::Classification;
    enum class Fail { None, Provider, Parse };
    struct One {
        PredictionPair pair;
        Fail fail = Fail::None;
    };
    const auto& samples = test.samples();
    auto results = parallel_map(samples.size(), workers ? workers : gateway.workers(),
                                [&](std::size_t i) {
        const auto& s = samples[i];
        One one;
        one.pair.sample_id = s.id;
        one.pair.gold = s.weak_labels;
        try {
            auto resp = gateway.complete(provider, templates.render(kind, s.text));
            if (resp.filtered) {
                one.pair.predicted = filtered_to_parsed(resp, s.weak_labels).predicted;
                one.pair.filtered = true;
                return one;
            }
            try {
                auto parsed = parse_response(resp.raw, kind, templates.taxonomy());
                one.pair.predicted = parsed.predicted;
                one.pair.reason = parsed.reason.value_or("");
            } catch (const Error&) {
                one.pair.predicted = LabelSet{cat::kOffensive};
                one.fail = Fail::Parse;
            }
        } catch (const Error& e) {
            if (!is_provider_failure(e.code())) throw;
            one.pair.predicted = LabelSet{cat::kOffensive};
            one.fail = Fail::Provider;
        }
        return one;
    });
    EvalRun run;
    for (auto& r : results) {
        if (r.fail == Fail::Provider) ++run.provider_failures;
        if (r.fail == Fail::Parse) ++run.parse_failures;
        if (r.pair.filtered) ++run.filtered;
        run.pairs.push_back(std::move(r.pair));
    }
    return run;
}

ReportDelta compare_reports(const EvalReport& a, const EvalReport& b) {
    if (a.per_category.size() != b.per_category.size()) {
        throw Error(ErrorCode::CategoryMismatch, "reports cover different category counts");
    }
    auto delta = [](double from, double to) {
        const double d = round1(to - from);
        return d == 0.0 ? 0.0 : d;  // no "-0.0" in output
    };
    auto diff = [&](std::string name, double r0, double p0, double f0, double r1, double p1,
                    double f1) {
        return MetricDelta{std::move(name), delta(r0, r1), delta(p0, p1), delta(f0, f1)};
    };
    ReportDelta out;
    for (std::size_t i = 0; i < a.per_category.size(); ++i) {
        const auto& x = a.per_category[i];
        const auto& y = b.per_category[i];
        if (x.category != y.category) {
            throw Error(ErrorCode::CategoryMismatch, x.name + " vs " + y.name);
        }
        out.per_category.push_back(
            diff(x.name, x.recall, x.precision, x.f1, y.recall, y.precision, y.f1));
    }
    out.average = diff("average", a.average.recall, a.average.precision, a.average.f1,
                       b.average.recall, b.average.precision, b.average.f1);
    out.unweighted = diff("unweighted", a.unweighted.recall, a.unweighted.precision,
                          a.unweighted.f1, b.unweighted.recall, b.unweighted.precision,
                          b.unweighted.f1);
    return out;
}

nlohmann::json to_json(const EvalReport& report) {
    ordered_json j;
    j["split"] = report.split;
    j["samples"] = report.samples;
    auto cats = ordered_json::array();
    for (const auto& m : report.per_category) {
        cats.push_back(ordered_json{{"category", m.name},
                                    {"tp", m.tp},
                                    {"fp", m.fp},
                                    {"fn", m.fn},
                                    {"tn", m.tn},
                                    {"recall", m.recall},
                                    {"precision", m.precision},
                                    {"f1", m.f1},
                                    {"accuracy", m.accuracy}});
    }
    j["per_category"] = std::move(cats);
    j["average"] = ordered_json{{"recall", report.average.recall},
                                {"precision", report.average.precision},
                                {"f1", report.average.f1}};
    j["unweighted"] = ordered_json{{"recall", report.unweighted.recall},
                                   {"precision", report.unweighted.precision},
                                   {"f1", report.unweighted.f1}};
    return j;
}

nlohmann::json to_json(const BinaryOodReport& r, const Taxonomy& taxonomy) {
    ordered_json j;
    j["positive"] = taxonomy.canonical_name(r.positive);
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["fn"] = r.fn;
    j["tn"] = r.tn;
    j["recall"] = r.recall;
    j["precision"] = r.precision;
    j["f1"] = r.f1;
    j["negative_recall"] = r.negative_recall;
    return j;
}

nlohmann::json to_json(const ReportDelta& delta) {
    auto row = [](const MetricDelta& d) {
        return ordered_json{{"name", d.name},
                            {"recall", d.recall},
                            {"precision", d.precision},
                            {"f1", d.f1}};
    };
    ordered_json j;
    auto cats = ordered_json::array();
    for (const auto& d : delta.per_category) cats.push_back(row(d));
    j["per_category"] = std::move(cats);
    j["average"] = row(delta.average);
    j["unweighted"] = row(delta.unweighted);
    return j;
}

std::string format_report_table(const EvalReport& report, bool with_accuracy) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    constexpr int kLabel = 10;
    constexpr int kCol = 18;
    out << std::left << std::setw(kLabel) << "Metric";
    for (const auto& m : report.per_category) out << std::right << std::setw(kCol) << m.name;
    out << std::right << std::setw(kCol) << "Average" << '\n';
    auto row = [&](const char* label, auto field, double avg) {
        out << std::left << std::setw(kLabel) << label;
        for (const auto& m : report.per_category) out << std::right << std::setw(kCol) << m.*field;
        out << std::right << std::setw(kCol) << avg << '\n';
    };
    row("Recall", &CategoryMetrics::recall, report.average.recall);
    row("Precision", &CategoryMetrics::precision, report.average.precision);
    row("F1 Score", &CategoryMetrics::f1, report.average.f1);
    if (with_accuracy) {
        out << std::left << std::setw(kLabel) << "Accuracy";
        for (const auto& m : report.per_category) out << std::right << std::setw(kCol) << m.accuracy;
        out << '\n';
    }
    return out.str();
}

std::string format_report_csv(const EvalReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << "category,tp,fp,fn,tn,recall,precision,f1,accuracy\n";
    for (const auto& m : report.per_category) {
        out << m.name << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << m.tn << ','
            << m.recall << ',' << m.precision << ',' << m.f1 << ',' << m.accuracy << '\n';
    }
    out << "average,,,,," << report.average.recall << ',' << report.average.precision << ','
        << report.average.f1 << ",\n";
    return out.str();
}

}  // namespace modforge
