#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "modforge/emission.hpp"
#include "modforge/error.hpp"
#include "modforge/io.hpp"
#include "support.hpp"

using namespace modforge;
using nlohmann::json;

namespace {

CotRecord record(std::string id, LabelSet labels, std::string reason = "it reads as plain chat",
                 std::string harmful = "None") {
    CotRecord r;
    r.sample_id = std::move(id);
    r.text = "text of " + r.sample_id;
    r.reason = std::move(reason);
    r.harmful_info = std::move(harmful);
    r.predicted = labels;
    r.weak_labels = labels;
    return r;
}

CuratedDataset random_curated(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<std::string> words{"threat", "casino", "vote", "slur", "nice", "weather",
                                         "odds", "riot", "photo", "bet", "said", "because"};
    CuratedDataset c;
    for (std::size_t i = 0; i < n; ++i) {
        LabelSet l;
        if (rng() % 6 == 0) {
            l.insert(cat::kHarmless);
        } else {
            for (std::uint8_t k = 0; k < 5; ++k)
                if (rng() % 3 == 0) l.insert(Category{k});
            if (l.empty()) l.insert(Category{static_cast<std::uint8_t>(rng() % 5)});
        }
        std::string reason;
        for (int w = 0; w < 12; ++w) reason += words[rng() % words.size()] + (rng() % 7 == 0 ? ".\n" : " ");
        c.records.push_back(record("r" + std::to_string(rng() % 100000) + "-" + std::to_string(i), l, reason,
                                   l == LabelSet{cat::kHarmless} ? "None" : words[rng() % words.size()]));
    }
    return c;
}

}  // namespace

TEST_SUITE("emission") {

TEST_CASE("without reasoning the response is the bare classification line") {
    CuratedDataset c;
    c.records.push_back(record("a", {cat::kHarmless}));
    auto sft = build_sft(c, false, PromptTemplates{});
    REQUIRE(sft.size() == 1);
    CHECK(sft[0].response == "Classification results: Harmless");
    CHECK(sft[0].query.find("text of a") != std::string::npos);
}

TEST_CASE("with reasoning the three sections appear in order") {
    CuratedDataset c;
    c.records.push_back(record("a", {cat::kViolence}, "step one", "a threat"));
    auto r = build_sft(c, true, PromptTemplates{})[0].response;
    const auto a = r.find("Analysis process:");
    const auto h = r.find("Harmful information:");
    const auto k = r.find("Classification results:");
    CHECK(a == 0);
    CHECK(a < h);
    CHECK(h < k);
}

TEST_CASE("messages and flat shapes") {
    CuratedDataset c;
    c.strategy = CurationStrategy::SettingB;
    c.records.push_back(record("b", {cat::kGambling}));
    c.records.push_back(record("a", {cat::kHarmless}));
    auto lines = split_lines(sft_to_jsonl(build_sft(c, false, PromptTemplates{}), SftShape::Messages));
    REQUIRE(lines.size() == 2);
    auto j = json::parse(lines[0]);
    CHECK(j["meta"]["sample_id"] == "a");
    CHECK(j["messages"].size() == 2);
    CHECK(j["messages"][0]["role"] == "user");
    CHECK(j["messages"][1] == json{{"role", "assistant"}, {"content", "Classification results: Harmless"}});
    CHECK(j["meta"]["strategy"] == "B");
    CHECK(j["meta"]["with_cot"] == false);
    CHECK(j["meta"]["labels"] == json::array({"Harmless"}));

    auto flat = json::parse(split_lines(sft_to_jsonl(build_sft(c, true, PromptTemplates{}), SftShape::Flat))[1]);
    CHECK(flat.contains("query"));
    CHECK(flat.contains("response"));
    CHECK_FALSE(flat.contains("messages"));
}

TEST_CASE("emit is deterministic and counts lines") {
    auto c = random_curated(9, 1);
    auto dir = testing::temp_dir("emit");
    auto r1 = emit_sft(c, true, SftShape::Messages, dir / "a.jsonl", PromptTemplates{});
    auto r2 = emit_sft(c, true, SftShape::Messages, dir / "b.jsonl", PromptTemplates{});
    CHECK(r1.records == 9);
    CHECK(r1.bytes == std::filesystem::file_size(dir / "a.jsonl"));
    CHECK(r2.bytes == r1.bytes);
    CHECK(testing::slurp(dir / "a.jsonl") == testing::slurp(dir / "b.jsonl"));
    std::size_t lines = 0;
    for (const auto& l : split_lines(testing::slurp(dir / "a.jsonl")))
        if (!l.empty()) ++lines;
    CHECK(lines == 9);
}

TEST_CASE("emit errors") {
    CuratedDataset empty;
    CHECK_THROWS_AS(emit_sft(empty, true, SftShape::Messages, "/tmp/never.jsonl", PromptTemplates{}), Error);
    auto c = random_curated(1, 2);
    try {
        emit_sft(c, true, SftShape::Messages, "/proc/definitely/not/here.jsonl", PromptTemplates{});
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
}

TEST_CASE("round trip over randomized records in both shapes") {
    auto dir = testing::temp_dir("rt");
    for (bool cot : {true, false}) {
        for (auto shape : {SftShape::Messages, SftShape::Flat}) {
            auto c = random_curated(250, cot ? 11 : 12);
            emit_sft(c, cot, shape, dir / "x.jsonl", PromptTemplates{});
            auto r = roundtrip_check(dir / "x.jsonl");
            CHECK(r.ok);
            CHECK(r.records == 250);
        }
    }
}

TEST_CASE("corrupted line is reported by number") {
    auto dir = testing::temp_dir("corrupt");
    auto c = random_curated(5, 3);
    emit_sft(c, false, SftShape::Messages, dir / "x.jsonl", PromptTemplates{});
    auto lines = split_lines(testing::slurp(dir / "x.jsonl"));
    auto j = json::parse(lines[2]);
    j["meta"]["labels"] = json::array({"Gambling", "Violence", "Pornography", "Offensive", "PoliticalHarmful"});
    j["messages"][1]["content"] = "Classification results: Harmless";
    lines[2] = j.dump();
    std::string body;
    for (const auto& l : lines)
        if (!l.empty()) body += l + "\n";
    write_file_atomic(dir / "x.jsonl", body);
    auto r = roundtrip_check(dir / "x.jsonl");
    CHECK_FALSE(r.ok);
    CHECK(r.bad_line == 3);

    write_file_atomic(dir / "empty.jsonl", "");
    try {
        roundtrip_check(dir / "empty.jsonl");
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyDataset);
    }
}

}
