#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "modforge/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result cli(const std::string& args) {
    auto dir = testing::temp_dir("cli");
    const auto out = dir / "out.txt";
    const auto cmd = std::string(MODFORGE_CLI) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = testing::slurp(out);
    return r;
}

std::string data(const std::string& name) { return testing::data_path(name); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("corpus stats") {
    auto r = cli("corpus stats " + data("fixture60.jsonl"));
    CHECK(r.code == 0);
    CHECK(r.out.find("total") != std::string::npos);
    CHECK(r.out.find("60") != std::string::npos);
}

TEST_CASE("corpus split writes both halves") {
    auto dir = testing::temp_dir("split");
    auto r = cli("corpus split " + data("fixture60.jsonl") + " --train-per-cat 6 --test-per-cat 2 --seed 7 --train-out " +
                 (dir / "tr.jsonl").string() + " --test-out " + (dir / "te.jsonl").string());
    CHECK(r.code == 0);
    CHECK(modforge::split_lines(testing::slurp(dir / "tr.jsonl")).size() == 36);
}

TEST_CASE("validate exit codes") {
    CHECK(cli("validate " + data("example.toml")).code == 0);
    CHECK(cli("--config " + data("example.toml") + " validate").code == 0);
    auto dir = testing::temp_dir("bad");
    modforge::write_file_atomic(dir / "bad.toml", "[curation]\nstrategy = \"E\"\n");
    auto r = cli("validate " + (dir / "bad.toml").string());
    CHECK(r.code == 2);
    CHECK(r.out.find("curation.strategy") != std::string::npos);
}

TEST_CASE("usage errors are config errors") {
    CHECK(cli("eval").code == 2);
    CHECK(cli("eval " + data("test12.jsonl") + " --with-cot maybe").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("--log yaml corpus stats " + data("fixture60.jsonl")).code == 2);
    CHECK(cli("eval " + data("test12.jsonl") + " --provider nobody").code == 2);
}

TEST_CASE("help succeeds") { CHECK(cli("--help").code == 0); }

TEST_CASE("dedup, curate, emit and eval chain") {
    auto dir = testing::temp_dir("chain");
    const auto d = (dir / "d.jsonl").string(), c = (dir / "c.jsonl").string(), s = (dir / "s.jsonl").string();
    const auto script = " --mock-script " + data("mock_script.json");
    CHECK(cli("dedup " + data("fixture60.jsonl") + " --target-per-cat 8 --seed 7 -o " + d).code == 0);
    auto cur = cli("--cache-dir " + (dir / "cache").string() + " curate " + d + " --strategy D -o " + c + script);
    CHECK(cur.code == 0);
    CHECK(cur.out.find("\"total\":48") != std::string::npos);
    CHECK(cli("emit " + c + " --with-cot false --shape flat -o " + s).code == 0);
    auto line = nlohmann::json::parse(modforge::split_lines(testing::slurp(s))[0]);
    CHECK(line.contains("query"));
    CHECK(line["meta"]["with_cot"] == false);
    auto ev = cli("eval " + data("test12.jsonl") + " --with-cot false --print json --report " +
                  (dir / "r.json").string() + script);
    CHECK(ev.code == 0);
    auto report = nlohmann::json::parse(testing::slurp(dir / "r.json"));
    CHECK(report["average"]["f1"] == 83.3);
    auto acc = cli("eval " + data("test12.jsonl") + " --accuracy" + script);
    CHECK(acc.out.find("Accuracy") != std::string::npos);
    auto bin = cli("eval " + data("val6.jsonl") + " --binary Offensive" + script);
    CHECK(bin.code == 3);  // val6 has gold outside the binary domain
}

TEST_CASE("stage failure exit code") {
    // A raw corpus is not a curated file.
    CHECK(cli("emit " + data("fixture60.jsonl") + " -o /tmp/modforge-never.jsonl").code == 3);
}

TEST_CASE("provider exhaustion exit code") {
    auto r = cli("eval " + data("test12.jsonl") + " --provider remote:http://127.0.0.1:9/v1 --timeout 1 --retries 1");
    CHECK(r.code == 4);
}

TEST_CASE("dry run prints prompts without calling anything") {
    auto r = cli("--dry-run eval " + data("test12.jsonl") + " --provider remote:http://127.0.0.1:9/v1");
    CHECK(r.code == 0);
    std::size_t n = 0;
    for (const auto& l : modforge::split_lines(r.out))
        if (l.rfind("{", 0) == 0) ++n;
    CHECK(n == 12);
}

TEST_CASE("aliases and extra categories") {
    auto dir = testing::temp_dir("extra");
    modforge::write_file_atomic(dir / "extra.json",
                                R"([{"canonical":"InternetFraud","display":"Internet Fraud","aliases":["fraud"]}])");
    modforge::write_file_atomic(dir / "aliases.json", R"({"Gambling":["wagering"]})");
    modforge::write_file_atomic(dir / "t.jsonl",
                                R"({"id":"f1","text":"send me your bank pin","labels":["InternetFraud"],"source":"u"})"
                                "\n");
    modforge::write_file_atomic(dir / "script.json", R"({"default":"Classification results: Internet Fraud"})");
    auto r = cli("--aliases " + (dir / "aliases.json").string() + " eval " + (dir / "t.jsonl").string() +
                 " --extra-categories " + (dir / "extra.json").string() + " --mock-script " +
                 (dir / "script.json").string() + " --print csv");
    CHECK(r.code == 0);
    CHECK(r.out.find("InternetFraud,1,0,0,0,100.0") != std::string::npos);
}

TEST_CASE("run from a config") {
    auto dir = testing::temp_dir("run");
    const std::string d = MODFORGE_DATA_DIR;
    modforge::write_file_atomic(dir / "c.toml",
                                "[paths]\nraw = \"" + d + "/fixture60.jsonl\"\nworkdir = \"" + (dir / "wd").string() +
                                    "\"\n[providers.mock]\nendpoint = \"mock\"\nscript = \"" + d +
                                    "/mock_script.json\"\n[dedup]\ntarget = 8\n[curation]\nprovider = \"mock\"\n");
    auto r = cli("--config " + (dir / "c.toml").string() + " run --stages dedup,curate,emit");
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "wd" / "sft.jsonl"));
    // No eval splits configured.
    CHECK(cli("--config " + (dir / "c.toml").string() + " run --stages eval").code == 3);
    CHECK(cli("--config " + (dir / "c.toml").string() + " run --stages bogus").code == 2);
}

}
