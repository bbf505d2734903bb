#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/evaluation.hpp"
#include "support.hpp"

using namespace modforge;
using testing::half_up_decimal;
using testing::half_up_percent;

namespace {

PredictionPair pair(std::string id, LabelSet gold, LabelSet pred) {
    return {std::move(id), gold, pred, false, ""};
}

testing::Counts brute(const std::vector<PredictionPair>& pairs, Category c) {
    testing::Counts k;
    for (const auto& p : pairs) {
        const bool g = p.gold.contains(c), y = p.predicted.contains(c);
        k.tp += g && y;
        k.fp += !g && y;
        k.fn += g && !y;
        k.tn += !g && !y;
    }
    return k;
}

LabelSet random_set(std::mt19937_64& rng) {
    if (rng() % 4 == 0) return {cat::kHarmless};
    LabelSet l;
    l.insert(Category{static_cast<std::uint8_t>(rng() % 5)});
    if (rng() % 5 == 0) l.insert(Category{static_cast<std::uint8_t>(rng() % 5)});
    return l;
}

Dataset test12() { return load_dataset(testing::data_path("test12.jsonl"), DatasetFormat::Jsonl); }

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("percent rounding agrees with the integer oracle") {
    for (std::uint64_t den = 1; den <= 300; ++den)
        for (std::uint64_t num = 0; num <= den; ++num) CHECK(percent1(num, den) == half_up_percent(num, den));
    CHECK(percent1(1, 8) == 12.5);
    CHECK(percent1(1, 16) == 6.3);  // 6.25 rounds up
    CHECK(percent1(0, 0) == 0.0);
}

TEST_CASE("F1 from published recall and precision") {
    // Baichuan2-7B Setting B, Table 2.
    const double r[] = {80.4, 92.0, 98.4, 80.4, 88.4, 67.2};
    const double p[] = {59.3, 78.0, 75.9, 51.9, 88.8, 54.0};
    const double f[] = {68.3, 84.4, 85.7, 63.1, 88.6, 59.9};
    for (int i = 0; i < 6; ++i) {
        const double mine = round1(f1_from(p[i], r[i]));
        CHECK(std::abs(mine - f[i]) <= 0.1 + 1e-9);
        CHECK(mine == half_up_decimal(2 * p[i] * r[i] / (p[i] + r[i])));
    }
    double sum = 0;
    for (double x : r) sum += x;
    CHECK(round1(sum / 6) == 84.5);
    CHECK(f1_from(0, 0) == 0.0);
}

TEST_CASE("perfect classifier scores 100 everywhere") {
    std::vector<PredictionPair> v;
    for (auto c : Taxonomy::standard().all()) v.push_back(pair(std::to_string(c.id), {c}, {c}));
    auto r = score_multicategory(v, Taxonomy::standard().all());
    for (const auto& m : r.per_category) {
        CHECK(m.recall == 100.0);
        CHECK(m.precision == 100.0);
        CHECK(m.f1 == 100.0);
    }
    CHECK(r.average.f1 == 100.0);
    CHECK(r.unweighted.f1 == 100.0);
}

TEST_CASE("four-sample hand confusion") {
    // gold V, pred V+O | gold O, pred O | gold V, pred H | gold H, pred V
    std::vector<PredictionPair> v{pair("1", {cat::kViolence}, {cat::kViolence, cat::kOffensive}),
                                  pair("2", {cat::kOffensive}, {cat::kOffensive}),
                                  pair("3", {cat::kViolence}, {cat::kHarmless}),
                                  pair("4", {cat::kHarmless}, {cat::kViolence})};
    auto r = score_multicategory(v, Taxonomy::standard().all());
    const auto& vio = r.per_category[cat::kViolence.id];
    CHECK(vio.tp == 1);
    CHECK(vio.fp == 1);
    CHECK(vio.fn == 1);
    CHECK(vio.tn == 1);
    CHECK(vio.recall == 50.0);
    CHECK(vio.precision == 50.0);
    const auto& off = r.per_category[cat::kOffensive.id];
    CHECK(off.tp == 1);
    CHECK(off.fp == 1);
    CHECK(off.recall == 100.0);
    CHECK(off.precision == 50.0);
    CHECK(off.f1 == 66.7);
    const auto& gam = r.per_category[cat::kGambling.id];
    CHECK(gam.recall == 0.0);
    CHECK(gam.f1 == 0.0);
    CHECK(gam.tn == 4);
}

TEST_CASE("random pairs: counts, percentages and permutation invariance") {
    std::mt19937_64 rng(99);
    const auto cats = Taxonomy::standard().all();
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<PredictionPair> v;
        const int n = 1 + static_cast<int>(rng() % 120);
        for (int i = 0; i < n; ++i) v.push_back(pair(std::to_string(i), random_set(rng), random_set(rng)));
        auto r = score_multicategory(v, cats);
        std::size_t tp = 0, fp = 0, fn = 0;
        double mean_r = 0;
        for (auto c : cats) {
            auto k = brute(v, c);
            const auto& m = r.per_category[c.id];
            CHECK(m.tp == k.tp);
            CHECK(m.fp == k.fp);
            CHECK(m.fn == k.fn);
            CHECK(m.tn == k.tn);
            CHECK(m.recall == half_up_percent(k.tp, k.tp + k.fn));
            CHECK(m.precision == half_up_percent(k.tp, k.tp + k.fp));
            CHECK(m.f1 == half_up_percent(2 * k.tp, 2 * k.tp + k.fp + k.fn));
            for (double x : {m.recall, m.precision, m.f1}) {
                CHECK(x >= 0.0);
                CHECK(x <= 100.0);
            }
            tp += k.tp, fp += k.fp, fn += k.fn;
            mean_r += k.tp + k.fn ? 100.0 * k.tp / (k.tp + k.fn) : 0.0;
        }
        CHECK(r.average.recall == half_up_percent(tp, tp + fn));
        CHECK(r.average.precision == half_up_percent(tp, tp + fp));
        CHECK(std::abs(r.unweighted.recall - mean_r / 6) <= 0.05 + 1e-9);
        auto shuffled = v;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(nlohmann::json(to_json(score_multicategory(shuffled, cats))) == to_json(r));
    }
}

TEST_CASE("scoring errors") {
    CHECK_THROWS_AS(score_multicategory({}, Taxonomy::standard().all()), Error);
    CHECK_THROWS_AS(score_binary_ood({}, cat::kOffensive), Error);
    try {
        score_binary_ood({pair("x", {cat::kViolence}, {cat::kViolence})}, cat::kOffensive);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidGold);
    }
}

TEST_CASE("binary OOD poles") {
    std::vector<PredictionPair> always_pos, always_neg;
    for (int i = 0; i < 10; ++i) {
        const LabelSet gold = i < 6 ? LabelSet{cat::kOffensive} : LabelSet{cat::kHarmless};
        always_pos.push_back(pair(std::to_string(i), gold, {cat::kViolence}));
        always_neg.push_back(pair(std::to_string(i), gold, {cat::kHarmless}));
    }
    auto p = score_binary_ood(always_pos, cat::kOffensive);
    CHECK(p.recall == 100.0);
    CHECK(p.negative_recall == 0.0);
    auto n = score_binary_ood(always_neg, cat::kOffensive);
    CHECK(n.recall == 0.0);
    CHECK(n.negative_recall == 100.0);
}

TEST_CASE("binary OOD hand table, recall plus FNR is 100") {
    // gold pos: predicted pos, pos, neg, pos ; gold neg: pos, neg, neg, neg, neg, pos
    const bool gold_pos[] = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    const bool pred_pos[] = {1, 1, 0, 1, 1, 0, 0, 0, 0, 1};
    std::vector<PredictionPair> v;
    for (int i = 0; i < 10; ++i)
        v.push_back(pair(std::to_string(i), gold_pos[i] ? LabelSet{cat::kGambling} : LabelSet{cat::kHarmless},
                         pred_pos[i] ? LabelSet{cat::kGambling, cat::kOffensive} : LabelSet{cat::kHarmless}));
    auto r = score_binary_ood(v, cat::kGambling);
    CHECK(r.tp == 3);
    CHECK(r.fn == 1);
    CHECK(r.fp == 2);
    CHECK(r.tn == 4);
    CHECK(r.recall == 75.0);
    CHECK(r.precision == 60.0);
    CHECK(r.f1 == half_up_percent(6, 9));
    CHECK(r.negative_recall == 66.7);
    CHECK(r.recall + r.false_negative_rate == 100.0);
}

TEST_CASE("eval against a mock echoing gold is perfect") {
    auto d = test12();
    Gateway gw;
    MockScript s;
    std::map<std::string, std::string> gold;
    for (const auto& x : d.samples()) gold[x.text] = Taxonomy::standard().join_canonical(x.weak_labels);
    s.responder = [gold](const ChatExchange& x) -> std::optional<MockReply> {
        for (const auto& [text, label] : gold)
            if (x.last_user().find(text) != std::string::npos)
                return MockReply{"Classification results: " + label, false};
        return std::nullopt;
    };
    auto h = gw.register_mock(s, "echo");
    auto run = run_model_eval(d, gw, h, false, PromptTemplates{});
    auto r = score_multicategory(run.pairs, Taxonomy::standard().all());
    CHECK(r.average.f1 == 100.0);
    CHECK(run.parse_failures == 0);
}

TEST_CASE("refusing every harmful sample counts as detection") {
    auto d = test12();
    Gateway gw;
    MockScript s;
    std::set<std::string> harmful;
    for (const auto& x : d.samples())
        if (contains_harmful(x.weak_labels)) harmful.insert(x.text);
    s.responder = [harmful](const ChatExchange& x) -> std::optional<MockReply> {
        for (const auto& t : harmful)
            if (x.last_user().find(t) != std::string::npos) return MockReply{"", true};
        return MockReply{testing::cot_reply("Harmless"), false};
    };
    auto h = gw.register_mock(s, "refuser");
    auto run = run_model_eval(d, gw, h, true, PromptTemplates{});
    CHECK(run.filtered == 10);
    auto r = score_multicategory(run.pairs, Taxonomy::standard().all());
    for (const auto& m : r.per_category) CHECK(m.recall == 100.0);
}

TEST_CASE("a filtered harmless sample lowers precision") {
    std::vector<PredictionPair> v{pair("1", {cat::kOffensive}, {cat::kOffensive}),
                                  pair("2", {cat::kHarmless}, {cat::kHarmless})};
    const auto before = score_multicategory(v, Taxonomy::standard().all()).per_category[cat::kOffensive.id];
    ProviderResponse refused;
    refused.filtered = true;
    v.push_back({"3", {cat::kHarmless}, filtered_to_parsed(refused, {cat::kHarmless}).predicted, true, ""});
    const auto after = score_multicategory(v, Taxonomy::standard().all()).per_category[cat::kOffensive.id];
    CHECK(before.precision == 100.0);
    CHECK(after.precision == 50.0);
}

TEST_CASE("scripted twelve reproduces the hand-enumerated report") {
    auto d = test12();
    Gateway gw;
    auto h = gw.register_mock(MockScript::from_json(nlohmann::json::parse(testing::slurp(testing::data_path("mock_script.json")))),
                              "mock");
    auto run = run_model_eval(d, gw, h, false, PromptTemplates{});
    auto r = score_multicategory(run.pairs, Taxonomy::standard().all(), Taxonomy::standard(), "test12");
    // ev-004 (Pornography) answered Harmless, ev-012 (Harmless) answered Offensive.
    const auto& porn = r.per_category[cat::kPornography.id];
    CHECK(porn.recall == 50.0);
    CHECK(porn.precision == 100.0);
    CHECK(porn.f1 == 66.7);
    const auto& off = r.per_category[cat::kOffensive.id];
    CHECK(off.precision == 66.7);
    CHECK(off.f1 == 80.0);
    const auto& harmless = r.per_category[cat::kHarmless.id];
    CHECK(harmless.recall == 50.0);
    CHECK(harmless.precision == 50.0);
    CHECK(r.average.recall == half_up_percent(10, 12));
    CHECK(r.average.precision == half_up_percent(10, 12));
    CHECK(r.samples == 12);
    CHECK(r.split == "test12");
}

TEST_CASE("unparseable and failed replies become an Offensive placeholder") {
    Dataset d("d", {testing::sample("a", "first", {cat::kOffensive}), testing::sample("b", "second", {cat::kHarmless})});
    Gateway gw;
    MockScript s;
    s.fallback = {"no label here", false};
    auto h = gw.register_mock(s, "m");
    auto run = run_model_eval(d, gw, h, false, PromptTemplates{});
    CHECK(run.parse_failures == 2);
    for (const auto& p : run.pairs) CHECK(p.predicted == LabelSet{cat::kOffensive});
}

TEST_CASE("compare reports") {
    std::vector<PredictionPair> v{pair("1", {cat::kViolence}, {cat::kViolence}),
                                  pair("2", {cat::kHarmless}, {cat::kViolence})};
    auto a = score_multicategory(v, Taxonomy::standard().all());
    auto same = compare_reports(a, a);
    for (const auto& d : same.per_category) {
        CHECK(d.recall == 0.0);
        CHECK(d.f1 == 0.0);
        CHECK_FALSE(std::signbit(d.precision));
    }
    auto original = a, setting_b = a;
    original.average.f1 = 27.0;
    setting_b.average.f1 = 74.4;
    CHECK(compare_reports(original, setting_b).average.f1 == 47.4);

    auto b = score_multicategory({pair("1", {cat::kViolence}, {cat::kViolence}), pair("2", {cat::kHarmless}, {cat::kHarmless})},
                                 Taxonomy::standard().all());
    auto delta = compare_reports(a, b);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(delta.per_category[i].precision == round1(b.per_category[i].precision - a.per_category[i].precision));
    }
    auto fewer = b;
    fewer.per_category.pop_back();
    CHECK_THROWS_AS(compare_reports(a, fewer), Error);
}

TEST_CASE("extended taxonomy for zero-shot categories") {
    auto t = Taxonomy::extended({{"InternetFraud", "Internet Fraud", {"fraud"}},
                                 {"PrivacyDisclosure", "Privacy Disclosure", {"privacy"}}});
    const auto fraud = *t.from_canonical("InternetFraud");
    std::vector<PredictionPair> v{pair("1", {fraud}, {fraud}), pair("2", {fraud}, {cat::kHarmless}),
                                  pair("3", {cat::kHarmless}, {cat::kHarmless})};
    auto r = score_multicategory(v, t.all(), t);
    REQUIRE(r.per_category.size() == 8);
    CHECK(r.per_category[fraud.id].name == "InternetFraud");
    CHECK(r.per_category[fraud.id].recall == 50.0);
    CHECK(r.per_category[fraud.id].accuracy == half_up_percent(2, 3));
    CHECK(parse_response("Classification results: Internet Fraud", PromptKind::Classification, t).predicted ==
          LabelSet{fraud});
}

TEST_CASE("report rendering") {
    std::vector<PredictionPair> v{pair("1", {cat::kViolence}, {cat::kViolence})};
    auto r = score_multicategory(v, Taxonomy::standard().all());
    auto table = format_report_table(r);
    for (const char* row : {"Recall", "Precision", "F1 Score", "Average", "PoliticalHarmful"})
        CHECK(table.find(row) != std::string::npos);
    CHECK(table.find("Accuracy") == std::string::npos);
    CHECK(format_report_table(r, true).find("Accuracy") != std::string::npos);
    auto csv = format_report_csv(r);
    CHECK(csv.rfind("category,tp,fp,fn,tn,recall,precision,f1,accuracy\n", 0) == 0);
    auto j = nlohmann::json(to_json(r));
    CHECK(j["per_category"].size() == 6);
    CHECK(j["average"]["f1"] == 100.0);
}

}
