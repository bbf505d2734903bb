#include "modforge/augment.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/io.hpp"
#include "modforge/log.hpp"

namespace modforge {

using nlohmann::ordered_json;

std::vector<FailureCase> collect_failures(const Dataset& val, Gateway& gateway,
                                          const ProviderHandle& provider, bool with_cot,
                                          const PromptTemplates& templates) {
    auto run = run_model_eval(val, gateway, provider, with_cot, templates);
    std::vector<FailureCase> out;
    const auto& samples = val.samples();
    for (std::size_t i = 0; i < run.pairs.size(); ++i) {
        const auto& p = run.pairs[i];
        if (p.gold == p.predicted) continue;
        FailureCase f{p.sample_id, samples[i].text, p.gold, p.predicted, std::nullopt};
        if (with_cot) f.reason = p.reason;
        out.push_back(std::move(f));
    }
    return out;
}

namespace {

std::string strip_bullet(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == '-' || line[i] == '*' || line[i] == ' ')) ++i;
    return line.substr(i);
}

bool starts_with_pattern(const std::string& line) {
    auto s = strip_bullet(line);
    if (s.size() < 7) return false;
    std::string head = s.substr(0, 7);
    std::transform(head.begin(), head.end(), head.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return head == "pattern";
}

std::string describe_failures(const std::vector<FailureCase>& batch, const Taxonomy& taxonomy) {
    std::string out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& f = batch[i];
        out += std::to_string(i + 1) + ". Sentence: " + f.text + "\n";
        out += "   Expected: " + taxonomy.join_display(f.gold) + "\n";
        out += "   Predicted: " + taxonomy.join_display(f.predicted) + "\n";
        if (f.reason && !f.reason->empty()) out += "   Reasoning: " + *f.reason + "\n";
    }
    return out;
}

}  // namespace

ShortcutReport analyze_shortcuts(const std::vector<FailureCase>& failures, Gateway& gateway,
                                 const ProviderHandle& provider, const PromptTemplates& templates,
                                 std::size_t batch_size) {
    if (failures.empty()) throw Error(ErrorCode::EmptyFailures, "no failure cases to analyse");
    if (batch_size == 0) batch_size = failures.size();
    ShortcutReport report;
    report.provider = provider.id;
    for (const auto& f : failures) report.failure_ids.push_back(f.sample_id);

    for (std::size_t start = 0; start < failures.size(); start += batch_size) {
        const auto end = std::min(failures.size(), start + batch_size);
        std::vector<FailureCase> batch(failures.begin() + static_cast<std::ptrdiff_t>(start),
                                       failures.begin() + static_cast<std::ptrdiff_t>(end));
        auto prompt = PromptTemplates::substitute(
            templates.get("shortcut_analysis"),
            {{"failures", describe_failures(batch, templates.taxonomy())}});
        report.prompts.push_back(prompt);
        auto resp = gateway.complete(provider, ChatExchange::single_user(prompt));
        if (resp.filtered) {
            throw Error(ErrorCode::ProviderFiltered, "shortcut analysis refused by " + provider.id);
        }
        report.raw_replies.push_back(resp.raw);

        std::vector<std::string> lines;
        for (const auto& l : split_lines(resp.raw)) {
            auto t = trim(l);
            if (!t.empty()) lines.push_back(std::move(t));
        }
        const bool any_pattern = std::any_of(lines.begin(), lines.end(), starts_with_pattern);
        std::vector<std::string> ids;
        for (const auto& f : batch) ids.push_back(f.sample_id);
        for (auto& l : lines) {
            if (any_pattern && !starts_with_pattern(l)) continue;
            report.hypotheses.push_back({std::move(l), ids});
        }
    }
    return report;
}

std::vector<std::string> split_numbered_list(const std::string& reply) {
    static const std::regex numbered(R"(^\s*\(?\d+\s*(?:[.):]|、|：)\s*(.*)$)");
    std::vector<std::string> numbered_items;
    std::vector<std::string> plain;
    for (const auto& line : split_lines(reply)) {
        std::smatch m;
        if (std::regex_match(line, m, numbered)) {
            auto t = trim(m[1].str());
            if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
            if (!trim(t).empty()) numbered_items.push_back(trim(t));
        } else if (auto t = trim(line); !t.empty()) {
            plain.push_back(std::move(t));
        }
    }
    return numbered_items.empty() ? plain : numbered_items;
}

SyntheticBatch generate_synthetic(Category harm_type, std::size_t count, Gateway& gateway,
                                  const ProviderHandle& provider, const PromptTemplates& templates,
                                  std::size_t first_index, const std::string& salt) {
    if (count == 0) throw Error(ErrorCode::InvalidArgument, "synthetic count must be >= 1");
    if (!Taxonomy::is_harmful(harm_type)) {
        throw Error(ErrorCode::InvalidArgument, "synthetic generation needs a harmful category");
    }
    SyntheticBatch batch;
    batch.harm_type = harm_type;
    batch.template_version = templates.version();
    batch.provider = provider.id;
    const std::size_t calls = (count + 9) / 10;
    const auto& taxonomy = templates.taxonomy();
    for (std::size_t c = 0; c < calls && batch.samples.size() < count; ++c) {
        PromptContext ctx;
        ctx.harm_type = harm_type;
        ctx.batch_note = "Request " + std::to_string(c + 1) + " of " + std::to_string(calls) +
                         (salt.empty() ? "" : " (" + salt + ")") + ".";
        auto resp = gateway.complete(provider, templates.render(PromptKind::Augment, "", ctx));
        ++batch.calls;
        if (resp.filtered) {
            ++batch.refusals;
            continue;
        }
        for (auto& text : split_numbered_list(resp.raw)) {
            if (batch.samples.size() >= count) break;
            RawSample s;
            s.id = "syn:" + std::to_string(first_index + batch.samples.size());
            s.text = std::move(text);
            s.weak_labels = LabelSet{harm_type};
            s.source = "synthetic:" + provider.id + ":" + taxonomy.canonical_name(harm_type);
            s.split = Split::Train;
            batch.samples.push_back(std::move(s));
        }
    }
    if (batch.refusals == batch.calls) {
        throw Error(ErrorCode::AllCallsRefused,
                    std::to_string(batch.refusals) + " of " + std::to_string(batch.calls) +
                        " generation calls refused");
    }
    return batch;
}

std::vector<Category> implicated_categories(const std::vector<FailureCase>& failures) {
    LabelSet all;
    for (const auto& f : failures) {
        for (auto c : f.gold.members()) {
            if (!f.predicted.contains(c)) all.insert(c);
        }
        for (auto c : f.predicted.members()) {
            if (!f.gold.contains(c)) all.insert(c);
        }
    }
    all.erase(cat::kHarmless);
    return all.members();
}

namespace {

std::size_t next_syn_index(const Dataset& d) {
    static const std::regex syn(R"(^syn:(\d+)$)");
    std::size_t next = 0;
    for (const auto& s : d.samples()) {
        std::smatch m;
        if (std::regex_match(s.id, m, syn)) {
            next = std::max<std::size_t>(next, std::stoull(m[1].str()) + 1);
        }
    }
    return next;
}

}  // namespace

AugmentResult augment_round(const Dataset& train, const Dataset& val, Gateway& gateway,
                            const AugmentProviders& providers, CurationStrategy strategy,
                            const PromptTemplates& templates, const AugmentOptions& options) {
    AugmentResult result{train, {}, std::nullopt, {}, std::nullopt, 0};
    result.failures = collect_failures(val, gateway, providers.model, options.with_cot, templates);
    if (result.failures.empty()) {
        log::info("augment: no failures on " + val.name() + ", train set unchanged");
        return result;
    }
    result.report = analyze_shortcuts(result.failures, gateway, providers.judge, templates);

    std::size_t next = next_syn_index(train);
    std::set<std::string> known_texts;
    for (const auto& s : train.samples()) known_texts.insert(s.text);
    std::vector<RawSample> generated;
    for (auto c : implicated_categories(result.failures)) {
        auto batch = generate_synthetic(c, options.per_category, gateway, providers.gen, templates,
                                        next, options.salt);
        next += batch.samples.size();
        for (const auto& s : batch.samples) {
            if (known_texts.insert(s.text).second) generated.push_back(s);
        }
        result.batches.push_back(std::move(batch));
    }
    if (generated.empty()) return result;

    Dataset synthetic(train.name() + ".synthetic", std::move(generated), train.taxonomy());
    auto encoder = make_encoder(options.encoder);
    DedupOptions dopt;
    dopt.per_category_target = options.dedup_target ? options.dedup_target : options.per_category;
    dopt.seed = options.seed;
    auto survivors = dedup_dataset(synthetic, *encoder, dopt);

    CurationOptions copt;
    copt.match = options.match;
    result.curated =
        generate_cot(survivors.samples(), gateway, providers.judge, strategy, templates, copt);

    std::set<std::string> kept;
    for (const auto& r : result.curated->records) kept.insert(r.sample_id);
    auto merged = train.samples();
    for (const auto& s : survivors.samples()) {
        if (kept.count(s.id)) {
            merged.push_back(s);
            ++result.added;
        }
    }
    result.dataset = Dataset(train.name(), std::move(merged), train.taxonomy());
    return result;
}

nlohmann::json to_json(const ShortcutReport& report) {
    ordered_json j;
    j["provider"] = report.provider;
    j["failure_ids"] = report.failure_ids;
    auto hyps = ordered_json::array();
    for (const auto& h : report.hypotheses) {
        hyps.push_back(ordered_json{{"text", h.text}, {"failure_ids", h.failure_ids}});
    }
    j["hypotheses"] = std::move(hyps);
    j["prompts"] = report.prompts;
    j["raw_replies"] = report.raw_replies;
    return j;
}

nlohmann::json to_json(const AugmentResult& result, const Taxonomy& taxonomy) {
    ordered_json j;
    auto failures = ordered_json::array();
    for (const auto& f : result.failures) {
        ordered_json fj{{"sample_id", f.sample_id},
                        {"text", f.text},
                        {"gold", taxonomy.join_canonical(f.gold)},
                        {"predicted", taxonomy.join_canonical(f.predicted)}};
        if (f.reason) fj["reason"] = *f.reason;
        failures.push_back(std::move(fj));
    }
    j["failures"] = std::move(failures);
    j["shortcuts"] = result.report ? ordered_json(to_json(*result.report)) : ordered_json(nullptr);
    auto batches = ordered_json::array();
    for (const auto& b : result.batches) {
        batches.push_back(ordered_json{{"harm_type", taxonomy.canonical_name(b.harm_type)},
                                       {"generated", b.samples.size()},
                                       {"calls", b.calls},
                                       {"refusals", b.refusals},
                                       {"provider", b.provider},
                                       {"template_version", b.template_version}});
    }
    j["batches"] = std::move(batches);
    j["curation"] = result.curated ? ordered_json(to_json(result.curated->ledger))
                                   : ordered_json(nullptr);
    j["added"] = result.added;
    j["total"] = result.dataset.size();
    return j;
}

}  // namespace modforge
