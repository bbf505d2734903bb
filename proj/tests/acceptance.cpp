#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "modforge/curation.hpp"
#include "modforge/dedup.hpp"
#include "modforge/emission.hpp"
#include "modforge/evaluation.hpp"
#include "modforge/io.hpp"
#include "modforge/pipeline.hpp"
#include "support.hpp"

using namespace modforge;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) detail = what;
        ok = ok && cond;
    }
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Check&)>& body) {
    Check c;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_s > 0) c.expect(secs < budget_s, "took " + std::to_string(secs) + " s");
    std::cout << (c.ok ? "PASS" : "FAIL") << "  " << name << "  (" << static_cast<long>(secs * 1000) << " ms)";
    if (!c.ok) std::cout << "  " << c.detail;
    std::cout << '\n';
    if (!c.ok) ++failures;
}

bool near(double a, double b) { return std::abs(a - b) <= 0.1 + 1e-9; }

std::string canonical(Category c) { return Taxonomy::standard().canonical_name(c); }

// Reply per (text, turns) with a recording hook.
MockScript keyed(std::map<std::pair<std::string, std::size_t>, MockReply> replies) {
    MockScript s;
    s.responder = [replies](const ChatExchange& x) -> std::optional<MockReply> {
        for (const auto& [k, r] : replies)
            if (k.second == x.size() && x.turns().front().content.find(k.first) != std::string::npos) return r;
        return std::nullopt;
    };
    return s;
}

void table2(Check& c) {
    const double recall[] = {80.4, 92.0, 98.4, 80.4, 88.4, 67.2};
    const double precision[] = {59.3, 78.0, 75.9, 51.9, 88.8, 54.0};
    const double f1[] = {68.3, 84.4, 85.7, 63.1, 88.6, 59.9};
    const std::size_t support = 250;
    const auto cats = Taxonomy::standard().all();

    for (int k = 0; k < 6; ++k) {
        c.expect(near(round1(f1_from(precision[k], recall[k])), f1[k]), "F1 formula column " + std::to_string(k));
    }

    // Confusion counts implied by the published pairs at 250 test samples per category.
    std::vector<std::size_t> tp(6), fp(6);
    std::vector<PredictionPair> pairs;
    std::vector<std::size_t> misses, hits;
    for (int k = 0; k < 6; ++k) {
        tp[k] = static_cast<std::size_t>(std::llround(support * recall[k] / 100.0));
        fp[k] = static_cast<std::size_t>(std::llround(tp[k] * 100.0 / precision[k] - tp[k]));
        for (std::size_t i = 0; i < support; ++i) {
            PredictionPair p;
            p.sample_id = std::to_string(k) + "-" + std::to_string(i);
            p.gold = {cats[k]};
            if (i < tp[k]) {
                p.predicted = {cats[k]};
                hits.push_back(pairs.size());
            } else {
                misses.push_back(pairs.size());
            }
            pairs.push_back(p);
        }
    }
    // False positives land on other categories' samples, misses first.
    std::vector<std::size_t> order = misses;
    order.insert(order.end(), hits.begin(), hits.end());
    for (int k = 0; k < 6; ++k) {
        std::size_t placed = 0;
        for (auto i : order) {
            if (placed == fp[k]) break;
            if (pairs[i].gold.contains(cats[k]) || pairs[i].predicted.contains(cats[k])) continue;
            pairs[i].predicted.insert(cats[k]);
            ++placed;
        }
        c.expect(placed == fp[k], "could not place false positives");
    }

    auto report = score_multicategory(pairs, cats);
    for (int k = 0; k < 6; ++k) {
        const auto& m = report.per_category[k];
        c.expect(near(m.recall, recall[k]), m.name + " recall " + std::to_string(m.recall));
        c.expect(near(m.precision, precision[k]), m.name + " precision " + std::to_string(m.precision));
        c.expect(near(m.f1, f1[k]), m.name + " F1 " + std::to_string(m.f1));
    }
    c.expect(near(report.average.recall, 84.5), "average recall " + std::to_string(report.average.recall));
    c.expect(near(report.average.precision, 66.5), "average precision " + std::to_string(report.average.precision));
    c.expect(near(report.average.f1, 74.4), "average F1 " + std::to_string(report.average.f1));
}

void curation_sets(Check& c) {
    std::vector<RawSample> samples;
    std::map<std::pair<std::string, std::size_t>, MockReply> replies;
    const std::vector<Category> cycle{cat::kPolitical, cat::kPornography, cat::kViolence, cat::kOffensive,
                                      cat::kGambling, cat::kHarmless};
    for (int i = 0; i < 10; ++i) {
        const auto text = "acceptance sample " + std::to_string(i) + " body";
        const auto gold = cycle[i % 6];
        const auto wrong = cycle[(i + 2) % 6];
        samples.push_back(testing::sample("a" + std::to_string(i), text, {gold}));
        const bool first_wrong = i == 2 || i == 5 || i == 8;
        replies[{text, 1}] = {testing::cot_reply(canonical(first_wrong ? wrong : gold)), false};
        if (first_wrong) replies[{text, 3}] = {testing::cot_reply(canonical(i == 8 ? wrong : gold)), false};
    }
    std::map<CurationStrategy, std::size_t> kept;
    for (auto s : {CurationStrategy::SettingA, CurationStrategy::SettingB, CurationStrategy::SettingC,
                   CurationStrategy::SettingD}) {
        Gateway gw;
        auto h = gw.register_mock(keyed(replies), "m");
        auto out = generate_cot(samples, gw, h, s, PromptTemplates{});
        kept[s] = out.records.size();
        c.expect(out.ledger.partitions(), std::string("ledger partition ") + to_string(s));
        c.expect(out.ledger.total == 10, "ledger total");
    }
    using S = CurationStrategy;
    c.expect(kept[S::SettingA] == 10 && kept[S::SettingB] == 7 && kept[S::SettingC] == 10 && kept[S::SettingD] == 9,
             "kept " + std::to_string(kept[S::SettingA]) + "/" + std::to_string(kept[S::SettingB]) + "/" +
                 std::to_string(kept[S::SettingC]) + "/" + std::to_string(kept[S::SettingD]));
    c.expect(kept[S::SettingB] <= kept[S::SettingD] && kept[S::SettingD] <= kept[S::SettingC] &&
                 kept[S::SettingC] == kept[S::SettingA],
             "cardinality chain");
}

void single_reflection(Check& c) {
    std::mt19937_64 rng(1);
    const std::vector<std::string> answers{"PoliticalHarmful", "Violence", "Harmless", "Gambling, Offensive",
                                           "Pornography", "???"};
    for (int run = 0; run < 1000; ++run) {
        std::vector<RawSample> samples;
        std::map<std::pair<std::string, std::size_t>, MockReply> replies;
        const int n = 1 + static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            const auto text = "run " + std::to_string(run) + " sample " + std::to_string(i) + " ;";
            const Category gold{static_cast<std::uint8_t>(rng() % 6)};
            samples.push_back(testing::sample("x" + std::to_string(i), text, {gold}));
            for (std::size_t turns : {1u, 3u}) {
                const auto& a = answers[rng() % answers.size()];
                replies[{text, turns}] = {a == "???" ? "no idea" : testing::cot_reply(a), rng() % 12 == 0};
            }
        }
        Gateway gw;
        auto h = gw.register_mock(keyed(replies), "m");
        auto out = generate_cot(samples, gw, h, static_cast<CurationStrategy>(rng() % 4), PromptTemplates{},
                                CurationOptions{MatchRule::Equality, 1});
        for (const auto* list : {&out.records, &out.excluded})
            for (const auto& r : *list) {
                c.expect(r.attempts >= 1 && r.attempts <= 2, "attempts " + std::to_string(r.attempts));
            }
        c.expect(out.ledger.partitions(), "partition");
    }
}

void blindness(Check& c) {
    auto d = load_dataset(testing::data_path("fixture60.jsonl"), DatasetFormat::Jsonl);
    auto script = MockScript::from_json(nlohmann::json::parse(testing::slurp(testing::data_path("mock_script.json"))));
    std::mutex mu;
    std::vector<ChatExchange> sent;
    script.responder = [&](const ChatExchange& x) -> std::optional<MockReply> {
        std::lock_guard lock(mu);
        sent.push_back(x);
        return std::nullopt;
    };
    Gateway gw;
    auto h = gw.register_mock(script, "mock");
    PromptTemplates templates;
    generate_cot(d.samples(), gw, h, CurationStrategy::SettingD, templates);

    const auto& tax = Taxonomy::standard();
    const std::string list = "[" + templates.category_list() + "]";
    std::map<std::string, LabelSet> gold_by_text;
    for (const auto& s : d.samples()) gold_by_text[s.text] = s.weak_labels;
    auto lower = [](std::string s) {
        for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        return s;
    };
    std::size_t first_pass = 0;
    for (const auto& x : sent) {
        if (x.size() != 1) continue;
        ++first_pass;
        auto body = x.turns()[0].content;
        if (auto p = body.find(list); p != std::string::npos) body.erase(p, list.size());
        body = lower(body);
        for (const auto& [text, gold] : gold_by_text) {
            if (x.turns()[0].content.find(text) == std::string::npos) continue;
            for (auto cat : gold.members()) {
                for (const auto& token : {tax.canonical_name(cat), tax.display_name(cat)}) {
                    c.expect(body.find(lower(token)) == std::string::npos, "label leaked: " + token);
                }
            }
        }
    }
    // Identical texts share one cached call.
    c.expect(first_pass == gold_by_text.size(), "first-pass prompt count " + std::to_string(first_pass));
}

class TableEncoder final : public Encoder {
public:
    explicit TableEncoder(std::map<std::string, std::vector<double>> t) : t_(std::move(t)) {}
    std::string id() const override { return "table"; }
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override {
        std::vector<EmbeddingVector> out;
        for (const auto& s : texts) out.push_back({t_.at(s), id()});
        return out;
    }

private:
    std::map<std::string, std::vector<double>> t_;
};

void dedup_groups(Check& c) {
    const std::size_t groups = 10, per_group = 10;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> jitter(0.0, 0.05);
    std::vector<RawSample> samples;
    std::map<std::string, std::vector<double>> table;
    std::map<std::string, std::string> group_of;
    for (auto cat : Taxonomy::standard().all()) {
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t i = 0; i < per_group; ++i) {
                const auto id = std::to_string(cat.id) + ":" + std::to_string(g) + ":" + std::to_string(i);
                std::vector<double> v(16, 0.0);
                v[g] = 40.0;
                v[10 + cat.id] = 40.0;
                for (auto& x : v) x += jitter(rng);
                table["t" + id] = v;
                group_of[id] = std::to_string(cat.id) + ":" + std::to_string(g);
                samples.push_back(testing::sample(id, "t" + id, {cat}));
            }
        }
    }
    Dataset d("groups", samples);
    c.expect(d.size() == 600, "fixture size");
    TableEncoder enc(table);
    DedupOptions opt;
    opt.per_category_target = groups;
    opt.seed = 21;
    auto a = dedup_dataset(d, enc, opt);
    auto b = dedup_dataset(d, enc, opt);
    c.expect(a.size() == 60, "kept " + std::to_string(a.size()));
    std::set<std::string> seen;
    for (const auto& s : a.samples()) c.expect(seen.insert(group_of.at(s.id)).second, "two from one group");
    c.expect(seen.size() == 60, "groups covered");
    c.expect(to_jsonl(a) == to_jsonl(b), "rerun differs");
}

void filtered_accounting(Check& c) {
    auto d = load_dataset(testing::data_path("test12.jsonl"), DatasetFormat::Jsonl);
    std::set<std::string> harmful;
    for (const auto& s : d.samples())
        if (contains_harmful(s.weak_labels)) harmful.insert(s.text);
    MockScript script;
    script.responder = [harmful](const ChatExchange& x) -> std::optional<MockReply> {
        for (const auto& t : harmful)
            if (x.last_user().find(t) != std::string::npos) return MockReply{"", true};
        return MockReply{"Classification results: Harmless", false};
    };
    Gateway gw;
    auto h = gw.register_mock(script, "refuser");
    auto run = run_model_eval(d, gw, h, false, PromptTemplates{});
    c.expect(run.filtered == harmful.size(), "filtered count");
    auto report = score_multicategory(run.pairs, Taxonomy::standard().all());
    for (const auto& m : report.per_category) c.expect(m.recall == 100.0, m.name + " recall");
    for (auto cat : Taxonomy::standard().all()) {
        if (cat == cat::kHarmless) continue;
        std::vector<PredictionPair> binary;
        for (const auto& p : run.pairs)
            if (p.gold == LabelSet{cat} || p.gold == LabelSet{cat::kHarmless}) binary.push_back(p);
        auto b = score_binary_ood(binary, cat);
        c.expect(b.recall == 100.0, canonical(cat) + " binary recall");
        c.expect(b.negative_recall == 100.0, canonical(cat) + " negative recall");
    }
}

void ood_poles(Check& c) {
    std::vector<PredictionPair> pos, neg;
    for (int i = 0; i < 40; ++i) {
        const LabelSet gold = i % 2 ? LabelSet{cat::kOffensive} : LabelSet{cat::kHarmless};
        pos.push_back({std::to_string(i), gold, {cat::kOffensive}, false, ""});
        neg.push_back({std::to_string(i), gold, {cat::kHarmless}, false, ""});
    }
    auto a = score_binary_ood(pos, cat::kOffensive);
    auto b = score_binary_ood(neg, cat::kOffensive);
    c.expect(a.negative_recall == 0.0, "always-positive negative recall");
    c.expect(a.recall == 100.0, "always-positive recall");
    c.expect(b.negative_recall == 100.0, "always-negative negative recall");
    c.expect(b.recall == 0.0, "always-negative recall");
}

void emission_roundtrip(Check& c) {
    std::mt19937_64 rng(4);
    CuratedDataset curated;
    const std::vector<std::string> words{"bet", "odds", "rally", "slur", "nice", "photo", "fight", "calm"};
    for (int i = 0; i < 1000; ++i) {
        CotRecord r;
        r.sample_id = "e" + std::to_string(i);
        r.text = "text " + std::to_string(i);
        LabelSet l;
        if (rng() % 6 == 0) {
            l.insert(cat::kHarmless);
        } else {
            for (std::uint8_t k = 0; k < 5; ++k)
                if (rng() % 3 == 0) l.insert(Category{k});
            if (l.empty()) l.insert(Category{static_cast<std::uint8_t>(rng() % 5)});
        }
        for (int w = 0; w < 10; ++w) r.reason += words[rng() % words.size()] + " ";
        r.harmful_info = l == LabelSet{cat::kHarmless} ? "None" : words[rng() % words.size()];
        r.predicted = r.weak_labels = l;
        curated.records.push_back(r);
    }
    auto dir = testing::temp_dir("accept-emit");
    for (bool cot : {true, false}) {
        emit_sft(curated, cot, SftShape::Messages, dir / "sft.jsonl", PromptTemplates{});
        auto rt = roundtrip_check(dir / "sft.jsonl");
        c.expect(rt.ok && rt.records == 1000, "round trip: " + rt.message);
        // Independent re-read of every stored label set.
        std::map<std::string, LabelSet> stored;
        for (const auto& line : split_lines(testing::slurp(dir / "sft.jsonl"))) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line);
            auto parsed = parse_response(j["messages"][1]["content"].get<std::string>(),
                                         cot ? PromptKind::ClassificationWithCot : PromptKind::Classification);
            stored[j["meta"]["sample_id"].get<std::string>()] = parsed.predicted;
        }
        for (const auto& r : curated.records) c.expect(stored.at(r.sample_id) == r.predicted, r.sample_id);
    }
    fs::remove_all(dir);
}

void determinism(Check& c) {
    auto dir = testing::temp_dir("accept-run");
    const std::string data = MODFORGE_DATA_DIR;
    write_file_atomic(dir / "cfg.toml",
                      "[paths]\nraw = \"" + data + "/fixture60.jsonl\"\nworkdir = \"" + (dir / "wd").string() +
                          "\"\ncache = \"" + (dir / "cache").string() + "\"\n"
                          "[providers.mock]\nendpoint = \"mock\"\nscript = \"" + data + "/mock_script.json\"\n"
                          "[dedup]\ntarget = 8\nseed = 7\n[curation]\nprovider = \"mock\"\n"
                          "[eval]\nprovider = \"mock\"\nsplits = { test = \"" + data + "/test12.jsonl\" }\n"
                          "[augment]\nmodel_provider = \"mock\"\njudge_provider = \"mock\"\ngen_provider = \"mock\"\n"
                          "val = \"" + data + "/val6.jsonl\"\n");
    auto cfg = load_config(dir / "cfg.toml");
    const std::vector<std::string> names{"dedup.jsonl", "curated.jsonl", "sft.jsonl", "eval/test.json",
                                         "eval/test.txt", "augmented.jsonl", "shortcuts.json"};
    std::vector<std::map<std::string, std::string>> snapshots;
    for (int i = 0; i < 2; ++i) {
        run_pipeline(cfg, parse_stages("all"));
        std::map<std::string, std::string> snap;
        for (const auto& n : names) snap[n] = testing::slurp(dir / "wd" / n);
        snapshots.push_back(std::move(snap));
    }
    for (const auto& n : names) {
        c.expect(!snapshots[0][n].empty(), n + " empty");
        c.expect(snapshots[0][n] == snapshots[1][n], n + " differs");
    }
    fs::remove_all(dir);
}

}  // namespace

int main() {
    criterion("metric arithmetic reproduces the published F1 row and averages", 1.0, table2);
    criterion("curation settings A/B/C/D keep 10/7/10/9", 1.0, curation_sets);
    criterion("no record exceeds two attempts over 1000 randomized runs", 0, single_reflection);
    criterion("first-pass prompts never contain the gold label", 0, blindness);
    criterion("dedup keeps one sample per synthetic group at 600 samples", 5.0, dedup_groups);
    criterion("filtered responses count as detections", 0, filtered_accounting);
    criterion("binary OOD poles give negative recall 0 and 100", 0, ood_poles);
    criterion("emission round-trips 1000 randomized records", 0, emission_roundtrip);
    criterion("warm-cache pipeline reruns are byte-identical", 10.0, determinism);
    return failures == 0 ? 0 : 1;
}
